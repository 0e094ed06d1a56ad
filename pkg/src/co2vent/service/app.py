"""HTTP service wrapping the estimation library.

Endpoints mirror the batch workflows: simulate, infer, ppc, trend,
assess, thresholds.  Domain errors map to structured 4xx responses with a
stable `code` field so thin clients can translate them to exit codes.
"""

from __future__ import annotations

import io

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..assessment import (AssessmentError, AssessmentReport,
                          MitigationScenario, assess_day, fit_threshold_curve,
                          threshold_empirical, threshold_ensemble,
                          thresholds_to_csv)
from ..inference import (DegenerateDataError, InferenceError,
                         sample_posterior, summarize)
from ..ingest import IngestError, parse_csv, resample, segment_occupied
from ..mcmc import PosteriorSamples, PosteriorUnreachableError
from ..model import Co2Series, ModelError, simulate_sde
from ..ppc import PpcError, posterior_predictive, trend_compare
from ..presets import PRESETS, ScenarioPreset, get_preset
from ..priors import PriorError
from .schemas import (AssessRequest, AssessResponse, HealthResponse,
                      InferRequest, InferResponse, PpcRequest, PpcResponse,
                      SimulateRequest, SimulateResponse, ThresholdsRequest,
                      ThresholdsResponse, TrendRequest, TrendResponse,
                      VersionResponse)

_INPUT_ERRORS = (ModelError, PriorError, InferenceError, DegenerateDataError,
                 IngestError, PpcError, AssessmentError, ValueError, KeyError)


def _http_input_error(exc: Exception) -> HTTPException:
    return HTTPException(status_code=422,
                         detail={"code": "input_error", "message": str(exc)})


def _series_from_csv_text(text: str) -> Co2Series:
    try:
        return Co2Series.from_csv(io.StringIO(text))
    except (ModelError, ValueError) as exc:
        raise _http_input_error(exc) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="co2vent", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok")

    @app.get("/version", response_model=VersionResponse)
    def version():
        return VersionResponse(name="co2vent", version=__version__)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        if (req.scenario is None) == (req.custom is None):
            raise _http_input_error(
                ValueError("provide exactly one of scenario or custom"))
        if req.scenario is not None:
            try:
                preset = get_preset(req.scenario)
            except KeyError as exc:
                raise HTTPException(status_code=404, detail={
                    "code": "unknown_scenario",
                    "message": str(exc.args[0]),
                    "available": sorted(PRESETS)}) from exc
        else:
            c = req.custom
            preset = ScenarioPreset(
                name="custom", kind=c.kind, ach=c.ach, e_gen_lps=c.e_gen_lps,
                sigma=c.sigma, c0_ppm=c.c0_ppm, c_out_ppm=c.c_out_ppm,
                horizon_h=c.horizon_h, dt_s=c.dt_s, geometry=c.geometry.build())
        try:
            series = simulate_sde(preset.c0_ppm, preset.params(),
                                  preset.volume_l, preset.horizon_h,
                                  preset.dt_s / 3600.0, seed=req.seed)
        except _INPUT_ERRORS as exc:
            raise _http_input_error(exc) from exc
        buf = io.StringIO()
        series.to_csv(buf)
        manifest = {"command": "simulate", "version": __version__,
                    "seed": req.seed, "scenario": preset.to_dict(),
                    "truth": {"q_ach": preset.ach, "e_lps": preset.e_gen_lps,
                              "sigma": preset.sigma,
                              "c_out_ppm": preset.c_out_ppm},
                    "n_samples": len(series)}
        return SimulateResponse(trace_csv=buf.getvalue(), manifest=manifest)

    @app.post("/infer", response_model=InferResponse)
    def infer(req: InferRequest):
        series = _series_from_csv_text(req.series_csv)
        if (req.volume_l is None) == (req.geometry is None):
            raise _http_input_error(
                ValueError("provide exactly one of volume_l or geometry"))
        volume = req.volume_l if req.volume_l is not None else req.geometry.build().volume_l
        try:
            priors = req.priors.build()
            config = req.sampler.build()
            samples = sample_posterior(priors, series, volume, config=config,
                                       seed=req.seed, fixed=req.fixed)
            summary = summarize(samples, hdi_mass=req.hdi_mass)
        except PosteriorUnreachableError as exc:
            raise HTTPException(status_code=409, detail={
                "code": "posterior_unreachable", "message": str(exc)}) from exc
        except _INPUT_ERRORS as exc:
            raise _http_input_error(exc) from exc
        return InferResponse(posterior=samples.to_dict(),
                             summary=summary.to_dict(),
                             diagnostics=samples.diagnostics,
                             converged=samples.converged)

    @app.post("/ppc", response_model=PpcResponse)
    def ppc(req: PpcRequest):
        series = _series_from_csv_text(req.series_csv)
        try:
            samples = PosteriorSamples.from_dict(req.posterior)
            result = posterior_predictive(samples, series, req.volume_l,
                                          n_sims=req.n_sims,
                                          statistic=req.statistic,
                                          seed=req.seed)
        except _INPUT_ERRORS as exc:
            raise _http_input_error(exc) from exc
        buf = io.StringIO()
        result.envelope_to_csv(buf)
        return PpcResponse(result=result.to_dict(), envelope_csv=buf.getvalue())

    @app.post("/trend", response_model=TrendResponse)
    def trend(req: TrendRequest):
        series = _series_from_csv_text(req.series_csv)
        try:
            samples = PosteriorSamples.from_dict(req.posterior)
            summary = summarize(samples, hdi_mass=req.hdi_mass)
            comparison = trend_compare(summary, series, req.volume_l,
                                       n_sims=req.n_sims, seed=req.seed)
        except _INPUT_ERRORS as exc:
            raise _http_input_error(exc) from exc
        return TrendResponse(comparison=comparison.to_dict())

    @app.post("/assess", response_model=AssessResponse)
    def assess(req: AssessRequest):
        if not req.files:
            raise _http_input_error(ValueError("no data files supplied"))
        ing = req.ingestion
        if ing.school_start is None:
            raise _http_input_error(ValueError(
                "ingestion.school_start is required for assessment "
                "(no default exists; it is a property of the school)"))
        geometry = req.geometry.build()
        policy = req.policy.build()
        scenarios = [s.build() for s in req.scenarios]
        priors = req.priors.build()
        config = req.sampler.build()

        segments = []  # (day_id, Co2Series)
        try:
            for payload in sorted(req.files, key=lambda f: f.name):
                series, _meta = parse_csv(
                    io.StringIO(payload.text),
                    column_map=ing.column_map(), tz=ing.timezone)
                if ing.resample_dt_s:
                    chunks = resample(series, ing.resample_dt_s, ing.max_gap_s)
                else:
                    chunks = [series]
                for chunk in chunks:
                    for seg in segment_occupied(
                            chunk, ing.school_start, ing.timezone,
                            rise_threshold_ppm_per_h=ing.rise_threshold_ppm_per_h,
                            smoothing_window_s=ing.smoothing_window_s,
                            min_prominence_ppm=ing.min_prominence_ppm,
                            sustained_decline_s=ing.sustained_decline_s):
                        segments.append((seg.day, seg.slice(chunk)))
        except _INPUT_ERRORS as exc:
            raise _http_input_error(exc) from exc
        if not segments:
            raise HTTPException(status_code=422, detail={
                "code": "no_segments",
                "message": "no occupied windows found; check school_start, "
                           "timezone and the rise/prominence thresholds"})

        days = []
        all_converged = True
        try:
            for k, (day_id, seg_series) in enumerate(segments):
                samples = sample_posterior(priors, seg_series, geometry.volume_l,
                                           config=config, seed=req.seed + k)
                summary = summarize(samples, hdi_mass=req.assessment.hdi_mass)
                all_converged &= samples.converged
                means = {name: summary[name].mean
                         for name in ("q_ach", "c_out_ppm", "e_lps", "sigma")}
                days.append(assess_day(
                    day_id=day_id, summary_means=means,
                    observed_peak_ppm=float(seg_series.co2_ppm.max()),
                    volume_l=geometry.volume_l, scenarios=scenarios,
                    policy=policy, converged=samples.converged,
                    threshold_runs=req.assessment.threshold_runs,
                    seed=req.seed + k))
        except PosteriorUnreachableError as exc:
            raise HTTPException(status_code=409, detail={
                "code": "posterior_unreachable", "message": str(exc)}) from exc
        except _INPUT_ERRORS as exc:
            raise _http_input_error(exc) from exc

        report = AssessmentReport(days=days, policy=policy,
                                  volume_l=geometry.volume_l)
        return AssessResponse(report=report.to_dict(), n_segments=len(segments),
                              all_converged=all_converged)

    @app.post("/thresholds", response_model=ThresholdsResponse)
    def thresholds(req: ThresholdsRequest):
        if not req.cadr_grid_cfm:
            raise _http_input_error(ValueError("cadr_grid_cfm is empty"))
        policy = req.policy.build()
        rows, ensemble_points = [], []
        try:
            for cadr in req.cadr_grid_cfm:
                scenario = MitigationScenario.single(cadr)
                ens = threshold_ensemble(
                    e_gen=req.e_gen_lps, c_out=req.c_out_ppm, sigma=req.sigma,
                    volume_l=req.volume_l, occupancy=req.occupancy,
                    scenario=scenario, policy=policy, n_runs=req.n_runs,
                    seed=req.seed)
                emp = threshold_empirical(cadr)
                ensemble_points.append((cadr, ens))
                rows.append({"cadr_cfm": cadr, "ensemble": ens.to_dict(),
                             "empirical": emp.to_dict()})
        except _INPUT_ERRORS as exc:
            raise _http_input_error(exc) from exc
        try:
            fits = {name: fit.to_dict() for name, fit in
                    fit_threshold_curve(ensemble_points).items()}
        except AssessmentError as exc:
            fits = {"skipped": str(exc)}
        buf = io.StringIO()
        thresholds_to_csv(ensemble_points, buf)
        return ThresholdsResponse(rows=rows, fits=fits,
                                  thresholds_csv=buf.getvalue())

    return app

"""Command-line front end.

Every command is a thin client of the HTTP service: by default an
in-process application instance handles the request (single process, no
network); pass --server to talk to a running instance instead.  Outputs
are written atomically and each carries a manifest (seed, config hash,
version) sufficient to re-run the command.

Exit codes: 0 ok, 2 sampler did not converge, 3 input error,
4 posterior unreachable.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from pathlib import Path

import click

from . import __version__
from .config import ConfigError, RunConfig, load_config

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INPUT = 3
EXIT_UNREACHABLE = 4


class ClientError(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


class ServiceClient:
    """POST/GET against either an in-process app or a remote server."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx
            self._client = httpx.Client(base_url=server, timeout=3600.0)
        else:
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                from fastapi.testclient import TestClient

            from .service import create_app
            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def call(self, method: str, path: str, payload: dict | None = None) -> dict:
        if method == "GET":
            resp = self._client.get(path)
        else:
            resp = self._client.post(path, json=payload)
        try:
            body = resp.json()
        except ValueError:
            body = {"detail": {"code": "bad_response", "message": resp.text}}
        if resp.status_code >= 400:
            detail = body.get("detail", body)
            if isinstance(detail, dict):
                code = detail.get("code", "")
                message = detail.get("message", str(detail))
            else:
                code, message = "", str(detail)
            if code == "posterior_unreachable":
                raise ClientError(EXIT_UNREACHABLE, message)
            raise ClientError(EXIT_INPUT, f"{code or 'error'}: {message}")
        return body


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2) + "\n")


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ClientError(EXIT_INPUT, f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ClientError(EXIT_INPUT, f"{what} is not valid JSON: {exc}") from exc


def _read_text(path: str, what: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise ClientError(EXIT_INPUT, f"{what} file not found: {path}") from None


def _config(path: str, seed_override: int | None) -> RunConfig:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        raise ClientError(EXIT_INPUT, f"bad config: {exc}") from exc
    if seed_override is not None:
        cfg = cfg.model_copy(update={"seed": seed_override})
    return cfg


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    m = {"command": command, "version": __version__, "seed": cfg.seed,
         "config_sha256": cfg.config_hash()}
    m.update(extra)
    return m


def _summary_table(summary: dict) -> str:
    rows = [("parameter", "mean", "sd", "hdi_low", "hdi_high")]
    for name, s in summary["params"].items():
        rows.append((name, f"{s['mean']:.6g}", f"{s['sd']:.6g}",
                     f"{s['hdi_low']:.6g}", f"{s['hdi_high']:.6g}"))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _run(ctx_params, fn) -> None:
    try:
        code = fn()
    except ClientError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    sys.exit(code)


@click.group()
@click.version_option(__version__, prog_name="co2vent")
def main():
    """Ventilation estimation from CO2 series: simulate, infer, check,
    assess, derive thresholds."""


_common = [
    click.option("--config", "config_path", required=True,
                 type=click.Path(), help="Run-config JSON."),
    click.option("--seed", type=int, default=None,
                 help="Override the config seed."),
    click.option("--out", "out_dir", required=True, type=click.Path(),
                 help="Output directory."),
    click.option("--server", default=None,
                 help="Base URL of a running service (default: in-process)."),
    click.option("--verbose", is_flag=True, default=False),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command()
@common_options
@click.option("--scenario", required=True,
              help="Preset name (test1..test7).")
def simulate(config_path, seed, out_dir, server, verbose, scenario):
    """Generate a synthetic trace for a named chamber scenario."""

    def run():
        cfg = _config(config_path, seed)
        client = ServiceClient(server)
        body = client.call("POST", "/simulate",
                           {"scenario": scenario, "seed": cfg.seed})
        out = Path(out_dir)
        _atomic_write(out / f"{scenario}.csv", body["trace_csv"])
        manifest = _manifest(cfg, "simulate", scenario=body["manifest"])
        _write_json(out / f"{scenario}_manifest.json", manifest)
        if verbose:
            click.echo(f"wrote {out / (scenario + '.csv')} "
                       f"({body['manifest']['n_samples']} samples)")
        return EXIT_OK

    _run(locals(), run)


@main.command()
@common_options
@click.option("--data", "data_path", required=True, type=click.Path(),
              help="Trace CSV (t_seconds,co2_ppm).")
@click.option("--fix", "fixes", multiple=True, metavar="NAME=VALUE",
              help="Pin a parameter, e.g. --fix e_lps=0.")
def infer(config_path, seed, out_dir, server, verbose, data_path, fixes):
    """Sample the posterior for a measured or simulated trace."""

    def run():
        cfg = _config(config_path, seed)
        fixed = {}
        for item in fixes:
            try:
                name, value = item.split("=", 1)
                fixed[name.strip()] = float(value)
            except ValueError:
                raise ClientError(EXIT_INPUT, f"bad --fix {item!r}") from None
        payload = {
            "series_csv": _read_text(data_path, "data"),
            "geometry": cfg.geometry.model_dump(),
            "priors": cfg.priors.model_dump(),
            "sampler": cfg.sampler.model_dump(),
            "fixed": fixed or None,
            "hdi_mass": cfg.assessment.hdi_mass,
            "seed": cfg.seed,
        }
        client = ServiceClient(server)
        body = client.call("POST", "/infer", payload)
        out = Path(out_dir)
        _write_json(out / "posterior.json", body["posterior"])
        _write_json(out / "summary.json", {
            "summary": body["summary"], "diagnostics": body["diagnostics"],
            "converged": body["converged"],
            "manifest": _manifest(cfg, "infer", data=Path(data_path).name)})
        click.echo(_summary_table(body["summary"]))
        if not body["converged"]:
            click.echo("WARNING: sampler not converged (r_hat > 1.05); "
                       "treat these results as unreliable", err=True)
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    _run(locals(), run)


@main.command()
@common_options
@click.option("--posterior", "posterior_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--n-sims", type=int, default=1000, show_default=True)
@click.option("--statistic", type=click.Choice(["mean", "max", "final_value"]),
              default="mean", show_default=True)
def ppc(config_path, seed, out_dir, server, verbose, posterior_path, data_path,
        n_sims, statistic):
    """Posterior predictive check of a fitted posterior against data."""

    def run():
        cfg = _config(config_path, seed)
        payload = {
            "posterior": _load_json(posterior_path, "posterior"),
            "series_csv": _read_text(data_path, "data"),
            "volume_l": cfg.geometry.build().volume_l,
            "n_sims": n_sims, "statistic": statistic, "seed": cfg.seed,
        }
        client = ServiceClient(server)
        body = client.call("POST", "/ppc", payload)
        out = Path(out_dir)
        result = dict(body["result"])
        result["manifest"] = _manifest(cfg, "ppc", data=Path(data_path).name,
                                       posterior=Path(posterior_path).name)
        _write_json(out / "ppc.json", result)
        _atomic_write(out / "envelope.csv", body["envelope_csv"])
        p = body["result"]["bayesian_p"]
        if 0.2 <= p <= 0.8:
            verdict = "consistent with the data (good fit is near 0.5)"
        elif p < 0.05 or p > 0.95:
            verdict = "POOR FIT (values near 0 or 1 mean the data look atypical)"
        else:
            verdict = "borderline"
        click.echo(f"bayesian_p = {p:.3f}  [{verdict}]")
        return EXIT_OK

    _run(locals(), run)


@main.command()
@common_options
@click.option("--data", "data_path", required=True, type=click.Path(),
              help="Sensor CSV file or a directory of them.")
def assess(config_path, seed, out_dir, server, verbose, data_path):
    """Segment occupied windows, infer each, and report clean-air adequacy."""

    def run():
        cfg = _config(config_path, seed)
        p = Path(data_path)
        if p.is_dir():
            files = sorted(q for q in p.iterdir() if q.suffix == ".csv")
        elif p.exists():
            files = [p]
        else:
            raise ClientError(EXIT_INPUT, f"data path not found: {data_path}")
        if not files:
            raise ClientError(EXIT_INPUT, f"no CSV files in {data_path}")
        payload = {
            "files": [{"name": f.name, "text": _read_text(str(f), "data")}
                      for f in files],
            "geometry": cfg.geometry.model_dump(),
            "priors": cfg.priors.model_dump(),
            "sampler": cfg.sampler.model_dump(),
            "policy": cfg.policy.model_dump(),
            "scenarios": [s.model_dump() for s in cfg.scenarios],
            "ingestion": cfg.ingestion.model_dump(mode="json"),
            "assessment": cfg.assessment.model_dump(),
            "seed": cfg.seed,
        }
        client = ServiceClient(server)
        body = client.call("POST", "/assess", payload)
        out = Path(out_dir)
        report = dict(body["report"])
        report["manifest"] = _manifest(cfg, "assess", data=p.name,
                                       n_segments=body["n_segments"])
        _write_json(out / "assessment.json", report)
        table = ["day_id,scenario,ecai_lps_per_person,c_limit,c_target,"
                 "c_ideal,ecai_compliant"]
        for day in body["report"]["days"]:
            for label in day["scenario_ecai"]:
                ecai = day["scenario_ecai"][label]
                trip = day["thresholds"][label]
                table.append(
                    f"{day['day_id']},{label},"
                    f"{'' if ecai is None else repr(float(ecai))},"
                    f"{trip['c_limit']!r},{trip['c_target']!r},"
                    f"{trip['c_ideal']!r},{day['ecai_compliant'][label]}")
        _atomic_write(out / "assessment.csv", "\n".join(table) + "\n")
        rows = [("day", "Q (ach)", "E (L/s)", "occupancy", "ECAi (L/s/p)",
                 "meets target")]
        for day in body["report"]["days"]:
            ecai = day["ecai_provided"]
            rows.append((day["day_id"], f"{day['q_ach']:.2f}",
                         f"{day['e_gen_lps']:.3f}", str(day["occupancy"]),
                         "n/a" if ecai is None else f"{ecai:.1f}",
                         "yes" if day["ecai_compliant"]["no_devices"] else "no"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        for r in rows:
            click.echo("  ".join(c.ljust(w) for c, w in zip(r, widths)))
        if not body["all_converged"]:
            click.echo("WARNING: at least one day's sampler did not converge",
                       err=True)
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    _run(locals(), run)


@main.command()
@common_options
@click.option("--posterior", "posterior_path", default=None, type=click.Path(),
              help="Posterior JSON from `infer` (means are used).")
@click.option("--params", "params_path", default=None, type=click.Path(),
              help="Explicit {e_gen_lps, c_out_ppm, sigma, occupancy} JSON.")
@click.option("--cadr-grid", default="0:1000:200", show_default=True,
              help="Grid as start:stop:step or a comma list, in cfm.")
@click.option("--n-runs", type=int, default=2000, show_default=True)
def thresholds(config_path, seed, out_dir, server, verbose, posterior_path,
               params_path, cadr_grid, n_runs):
    """Steady-state CO2 thresholds across a CADR grid, with piecewise fit."""

    def run():
        cfg = _config(config_path, seed)
        if (posterior_path is None) == (params_path is None):
            raise ClientError(EXIT_INPUT,
                              "provide exactly one of --posterior or --params")
        policy = cfg.policy.build()
        if params_path:
            params = _load_json(params_path, "params")
            unknown = set(params) - {"e_gen_lps", "c_out_ppm", "sigma",
                                     "occupancy"}
            if unknown:
                raise ClientError(EXIT_INPUT,
                                  f"unknown params keys: {sorted(unknown)}")
        else:
            post = _load_json(posterior_path, "posterior")
            try:
                from .inference import summarize
                from .mcmc import PosteriorSamples
                summ = summarize(PosteriorSamples.from_dict(post),
                                 hdi_mass=cfg.assessment.hdi_mass)
            except Exception as exc:
                raise ClientError(EXIT_INPUT, f"bad posterior: {exc}") from exc
            params = {"e_gen_lps": summ["e_lps"].mean,
                      "c_out_ppm": summ["c_out_ppm"].mean,
                      "sigma": summ["sigma"].mean}
        if "occupancy" not in params:
            from .assessment import estimate_occupancy
            params["occupancy"] = max(
                1, estimate_occupancy(params["e_gen_lps"], policy))

        try:
            if ":" in cadr_grid:
                parts = [float(x) for x in cadr_grid.split(":")]
                start, stop, step = (parts + [200.0])[:3]
                grid, v = [], start
                while v <= stop + 1e-9:
                    grid.append(round(v, 9))
                    v += step
            else:
                grid = [float(x) for x in cadr_grid.split(",")]
        except ValueError:
            raise ClientError(EXIT_INPUT,
                              f"bad --cadr-grid {cadr_grid!r}") from None

        payload = {
            "e_gen_lps": params["e_gen_lps"], "c_out_ppm": params["c_out_ppm"],
            "sigma": params["sigma"], "occupancy": int(params["occupancy"]),
            "volume_l": cfg.geometry.build().volume_l,
            "policy": cfg.policy.model_dump(),
            "cadr_grid_cfm": grid, "n_runs": n_runs, "seed": cfg.seed,
        }
        client = ServiceClient(server)
        body = client.call("POST", "/thresholds", payload)
        out = Path(out_dir)
        _atomic_write(out / "thresholds.csv", body["thresholds_csv"])
        _write_json(out / "threshold_fit.json", {
            "fits": body["fits"], "rows": body["rows"],
            "manifest": _manifest(cfg, "thresholds", params=params,
                                  cadr_grid=grid, n_runs=n_runs)})
        for row in body["rows"]:
            ens, emp = row["ensemble"], row["empirical"]
            click.echo(f"CADR {row['cadr_cfm']:7.1f} cfm: "
                       f"target {ens['c_target']:7.1f} ppm "
                       f"(empirical-curve value {emp['c_target']:7.1f})")
        return EXIT_OK

    _run(locals(), run)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()

"""Clean-air adequacy: occupancy, equivalent clean airflow per person,
retrofit sizing and steady-state CO2 thresholds.

The per-person clean-air target (default 20 L/s, classroom value from
ASHRAE 241) is met by outdoor air plus device clean-air delivery (CADR);
outdoor air never drops below the ASHRAE 62.1 floor (default 7.4 L/s per
person).  Steady-state CO2 thresholds indicating target compliance are
summarized from stochastic steady-state ensembles as mean + sd / mean /
mean - sd.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .model import (ModelParams, ach_to_lps, lps_to_ach, simulate_sde_ensemble,
                    steady_state)

CFM_TO_LPS = 0.471947  # 1 cubic foot per minute in liters per second


class AssessmentError(ValueError):
    """Invalid input to an assessment operation."""


@dataclass(frozen=True)
class Device:
    label: str
    cadr_cfm: float

    def __post_init__(self):
        if self.cadr_cfm < 0:
            raise AssessmentError(f"cadr_cfm must be >= 0, got {self.cadr_cfm}")


@dataclass(frozen=True)
class MitigationScenario:
    """A set of air-cleaning devices; total CADR is their exact sum."""

    devices: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))

    @property
    def cadr_cfm(self) -> float:
        return sum(d.cadr_cfm for d in self.devices)

    @property
    def cadr_lps(self) -> float:
        return self.cadr_cfm * CFM_TO_LPS

    @classmethod
    def single(cls, cadr_cfm: float, label: str = "") -> "MitigationScenario":
        if not label:
            label = f"cadr_{cadr_cfm:g}"
        return cls(devices=(Device(label=label, cadr_cfm=cadr_cfm),), label=label)

    def to_dict(self) -> dict:
        return {"label": self.label,
                "devices": [{"label": d.label, "cadr_cfm": d.cadr_cfm}
                            for d in self.devices]}

    @classmethod
    def from_dict(cls, d: dict) -> "MitigationScenario":
        return cls(devices=tuple(Device(label=x["label"], cadr_cfm=x["cadr_cfm"])
                                 for x in d.get("devices", [])),
                   label=d.get("label", ""))


BASELINE_SCENARIO = MitigationScenario(devices=(), label="no_devices")


@dataclass(frozen=True)
class EcaPolicy:
    """Per-person clean-air policy numbers (all L/s per person except the
    generation rate, which is L/s of CO2 per person)."""

    ecai_target_lps_per_person: float = 20.0
    min_outdoor_lps_per_person: float = 7.4
    per_person_gen_lps: float = 0.0047

    def __post_init__(self):
        for name in ("ecai_target_lps_per_person", "min_outdoor_lps_per_person",
                     "per_person_gen_lps"):
            if not getattr(self, name) > 0:
                raise AssessmentError(f"{name} must be > 0")
        if self.min_outdoor_lps_per_person > self.ecai_target_lps_per_person:
            raise AssessmentError("min_outdoor must not exceed ecai_target")

    def to_dict(self) -> dict:
        return {"ecai_target_lps_per_person": self.ecai_target_lps_per_person,
                "min_outdoor_lps_per_person": self.min_outdoor_lps_per_person,
                "per_person_gen_lps": self.per_person_gen_lps}

    @classmethod
    def from_dict(cls, d: dict) -> "EcaPolicy":
        extra = set(d) - {"ecai_target_lps_per_person",
                          "min_outdoor_lps_per_person", "per_person_gen_lps"}
        if extra:
            raise AssessmentError(f"unknown policy keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class ThresholdTriple:
    """Steady-state CO2 thresholds: limit >= target >= ideal (ppm)."""

    c_limit: float
    c_target: float
    c_ideal: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.c_ideal <= self.c_target <= self.c_limit:
            raise AssessmentError(
                f"thresholds out of order: ideal={self.c_ideal} "
                f"target={self.c_target} limit={self.c_limit}")

    def to_dict(self) -> dict:
        return {"c_limit": self.c_limit, "c_target": self.c_target,
                "c_ideal": self.c_ideal, "provenance": self.provenance}


def estimate_occupancy(e_gen: float, policy: EcaPolicy) -> int:
    """People implied by a total CO2 generation rate, rounded half away
    from zero."""
    if e_gen < 0:
        raise AssessmentError(f"e_gen must be >= 0, got {e_gen}")
    return int(math.floor(e_gen / policy.per_person_gen_lps + 0.5))


def compute_ecai(q_ach: float, volume_l: float, occupancy: int,
                 scenario: MitigationScenario) -> float:
    """Equivalent clean airflow per person: outdoor air plus device CADR."""
    if occupancy < 1:
        raise AssessmentError("occupancy must be >= 1 for a per-person rate")
    return (ach_to_lps(q_ach, volume_l) + scenario.cadr_lps) / occupancy


def required_outdoor_q(occupancy: int, scenario: MitigationScenario,
                       policy: EcaPolicy) -> float:
    """Outdoor airflow (L/s) that meets the clean-air target given the
    scenario's CADR, never below the per-person outdoor floor."""
    if occupancy < 1:
        raise AssessmentError("occupancy must be >= 1")
    need = policy.ecai_target_lps_per_person * occupancy - scenario.cadr_lps
    floor = policy.min_outdoor_lps_per_person * occupancy
    return max(need, floor)


def threshold_ensemble(e_gen: float, c_out: float, sigma: float,
                       volume_l: float, occupancy: int,
                       scenario: MitigationScenario, policy: EcaPolicy,
                       n_runs: int = 2000, seed=0,
                       dt_s: float = 20.0) -> ThresholdTriple:
    """Steady-state thresholds from a stochastic ensemble.

    Ventilation is pinned at required_outdoor_q.  Each run starts at the
    analytic steady state, simulates for 8 mean-reversion times, and
    reports the average of its final 20% of samples; the triple is
    (mean + sd, mean, mean - sd) over runs.  With sigma = 0 all three
    collapse exactly onto the analytic value.
    """
    if n_runs < 100:
        raise AssessmentError("n_runs must be >= 100")
    q_lps = required_outdoor_q(occupancy, scenario, policy)
    params = ModelParams(q_vent=q_lps, c_out=c_out, e_gen=e_gen, sigma=sigma)
    lam = lps_to_ach(q_lps, volume_l)
    ss = steady_state(params, volume_l)
    if sigma == 0.0:
        # deterministic: every run sits at the analytic steady state
        return ThresholdTriple(
            c_limit=ss, c_target=ss, c_ideal=ss,
            provenance={"kind": "ensemble", "mean": ss, "sd": 0.0,
                        "n_runs": n_runs, "q_lps": q_lps,
                        "negative_paths": 0})
    horizon_h = 8.0 / lam
    dt_h = dt_s / 3600.0
    ens = simulate_sde_ensemble(ss, params, volume_l, horizon_h, dt_h,
                                n_traj=n_runs, seed=seed)
    n_t = ens.paths.shape[1]
    tail = max(1, int(math.ceil(0.2 * n_t)))
    run_values = ens.paths[:, n_t - tail:].mean(axis=1)
    mean = float(run_values.mean())
    sd = float(run_values.std(ddof=1)) if n_runs > 1 else 0.0
    return ThresholdTriple(
        c_limit=mean + sd, c_target=mean, c_ideal=mean - sd,
        provenance={"kind": "ensemble", "mean": mean, "sd": sd,
                    "n_runs": n_runs, "q_lps": q_lps,
                    "negative_paths": ens.n_negative_paths})


_EMPIRICAL_BREAK_CFM = 600.0
_EMPIRICAL_COEFFS = {
    "c_limit": (0.8, 829.1),
    "c_target": (0.7, 684.6),
    "c_ideal": (0.5, 540.1),
}


def threshold_empirical(cadr_cfm: float) -> ThresholdTriple:
    """Piecewise-linear threshold equations fitted for classroom-like
    rooms: linear in CADR up to 600 cfm, constant beyond."""
    if cadr_cfm < 0:
        raise AssessmentError(f"cadr_cfm must be >= 0, got {cadr_cfm}")
    values = {}
    for name, (slope, intercept) in _EMPIRICAL_COEFFS.items():
        if cadr_cfm <= _EMPIRICAL_BREAK_CFM:
            values[name] = slope * cadr_cfm + intercept
        else:
            values[name] = slope * _EMPIRICAL_BREAK_CFM + intercept
    return ThresholdTriple(**values, provenance={"kind": "empirical_equation"})


@dataclass(frozen=True)
class PiecewiseFit:
    slope: float
    intercept: float
    breakpoint: float
    plateau: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "breakpoint": self.breakpoint, "plateau": self.plateau}


def fit_threshold_curve(points: Sequence[tuple], breakpoint: float = 600.0) -> dict:
    """Fit slope/intercept below the breakpoint and a plateau above it,
    independently per threshold; continuity is not enforced.

    points: (cadr_cfm, ThresholdTriple) pairs; needs at least four points
    spanning the breakpoint.
    """
    if len(points) < 4:
        raise AssessmentError("need at least four CADR points to fit")
    cadr = np.array([p[0] for p in points], dtype=float)
    pre = cadr <= breakpoint
    post = ~pre
    if pre.sum() < 2:
        raise AssessmentError(
            f"need at least two points at or below the breakpoint {breakpoint}; "
            f"got CADR values {sorted(cadr.tolist())}")
    if post.sum() < 1:
        raise AssessmentError(
            f"need at least one point above the breakpoint {breakpoint}")
    out = {}
    for name in ("c_limit", "c_target", "c_ideal"):
        y = np.array([getattr(p[1], name) for p in points], dtype=float)
        slope, intercept = np.polyfit(cadr[pre], y[pre], 1)
        out[name] = PiecewiseFit(slope=float(slope), intercept=float(intercept),
                                 breakpoint=breakpoint,
                                 plateau=float(y[post].mean()))
    return out


def design_target_curve(occupancies: Sequence[int], cadr_cfm: float,
                        e_per_person: float, policy: EcaPolicy,
                        volume_l: float, c_out: float, sigma: float,
                        n_runs: int = 2000, seed: int = 0) -> list:
    """c_target across occupancy levels with emission scaled per person."""
    if len(occupancies) == 0:
        raise AssessmentError("occupancies must be nonempty")
    scenario = MitigationScenario.single(cadr_cfm)
    out = []
    for k, n_people in enumerate(occupancies):
        triple = threshold_ensemble(
            e_gen=n_people * e_per_person, c_out=c_out, sigma=sigma,
            volume_l=volume_l, occupancy=int(n_people), scenario=scenario,
            policy=policy, n_runs=n_runs, seed=[int(seed), k])
        out.append((int(n_people), triple.c_target))
    return out


@dataclass(frozen=True)
class DayAssessment:
    """Inference-backed verdict for one occupied window."""

    day_id: str
    q_ach: float
    e_gen_lps: float
    c_out_ppm: float
    sigma: float
    occupancy: int
    ecai_provided: float
    observed_peak_ppm: float
    scenario_ecai: dict          # scenario label -> L/s/person
    thresholds: dict             # scenario label -> ThresholdTriple
    ecai_compliant: dict         # scenario label -> bool
    threshold_compliant: dict    # scenario label -> bool
    converged: bool

    def to_dict(self) -> dict:
        def fin(v):
            return v if math.isfinite(v) else None

        return {"day_id": self.day_id, "q_ach": self.q_ach,
                "e_gen_lps": self.e_gen_lps, "c_out_ppm": self.c_out_ppm,
                "sigma": self.sigma, "occupancy": self.occupancy,
                "ecai_provided": fin(self.ecai_provided),
                "observed_peak_ppm": self.observed_peak_ppm,
                "scenario_ecai": {k: fin(v) for k, v in self.scenario_ecai.items()},
                "thresholds": {k: v.to_dict() for k, v in self.thresholds.items()},
                "ecai_compliant": self.ecai_compliant,
                "threshold_compliant": self.threshold_compliant,
                "converged": self.converged}


@dataclass(frozen=True)
class AssessmentReport:
    """Per-day assessments plus simple aggregates."""

    days: list
    policy: EcaPolicy
    volume_l: float

    def aggregates(self) -> dict:
        if not self.days:
            return {}
        ecai = [d.ecai_provided for d in self.days if math.isfinite(d.ecai_provided)]
        out = {"n_days": len(self.days),
               "days_ecai_compliant": int(sum(
                   d.ecai_compliant.get("no_devices", False) for d in self.days))}
        if ecai:
            out.update(ecai_mean=float(np.mean(ecai)),
                       ecai_min=float(np.min(ecai)),
                       ecai_max=float(np.max(ecai)))
        return out

    def to_dict(self) -> dict:
        return {"policy": self.policy.to_dict(), "volume_l": self.volume_l,
                "days": [d.to_dict() for d in self.days],
                "aggregates": self.aggregates()}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def assess_day(day_id: str, summary_means: dict, observed_peak_ppm: float,
               volume_l: float, scenarios: Sequence[MitigationScenario],
               policy: EcaPolicy, converged: bool = True,
               threshold_runs: int = 2000, seed: int = 0) -> DayAssessment:
    """Turn one day's posterior means into an assessment row.

    summary_means needs q_ach, c_out_ppm, e_lps and sigma.  Thresholds use
    the day's own posterior means (including its c_out) per scenario.
    """
    q_ach = float(summary_means["q_ach"])
    e_gen = float(summary_means["e_lps"])
    c_out = float(summary_means["c_out_ppm"])
    sigma = float(summary_means["sigma"])
    occupancy = estimate_occupancy(e_gen, policy)
    all_scenarios = [BASELINE_SCENARIO] + [s for s in scenarios
                                           if s.label != BASELINE_SCENARIO.label]
    scenario_ecai, thresholds = {}, {}
    ecai_ok, threshold_ok = {}, {}
    ecai_provided = float("nan")
    for k, scen in enumerate(all_scenarios):
        if occupancy >= 1:
            val = compute_ecai(q_ach, volume_l, occupancy, scen)
            triple = threshold_ensemble(
                e_gen=e_gen, c_out=c_out, sigma=sigma, volume_l=volume_l,
                occupancy=occupancy, scenario=scen, policy=policy,
                n_runs=threshold_runs, seed=[int(seed), k])
        else:
            val = float("inf")  # nobody present: any airflow suffices
            triple = ThresholdTriple(c_limit=c_out, c_target=c_out,
                                     c_ideal=c_out,
                                     provenance={"kind": "unoccupied"})
        scenario_ecai[scen.label] = val
        thresholds[scen.label] = triple
        ecai_ok[scen.label] = bool(val >= policy.ecai_target_lps_per_person)
        threshold_ok[scen.label] = bool(observed_peak_ppm <= triple.c_target)
        if scen.label == BASELINE_SCENARIO.label:
            ecai_provided = val
    return DayAssessment(day_id=day_id, q_ach=q_ach, e_gen_lps=e_gen,
                         c_out_ppm=c_out, sigma=sigma, occupancy=occupancy,
                         ecai_provided=ecai_provided,
                         observed_peak_ppm=observed_peak_ppm,
                         scenario_ecai=scenario_ecai, thresholds=thresholds,
                         ecai_compliant=ecai_ok,
                         threshold_compliant=threshold_ok, converged=converged)


def thresholds_to_csv(rows: Sequence[tuple], dest: str | IO[str]) -> None:
    """Write (cadr_cfm, ThresholdTriple) rows as
    `cadr_cfm,c_limit,c_target,c_ideal`."""
    lines = ["cadr_cfm,c_limit,c_target,c_ideal"]
    for cadr, triple in rows:
        lines.append(f"{float(cadr)!r},{triple.c_limit!r},"
                     f"{triple.c_target!r},{triple.c_ideal!r}")
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

"""Posterior predictive checking and ODE-vs-SDE trend comparison.

Predictive trajectories are regenerated on the observed time grid from
draws resampled out of the pooled chains, starting from the observed
initial value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .mcmc import PosteriorSamples
from .model import Co2Series, ModelParams, ach_to_lps, simulate_sde_on_grid
from .stats import PosteriorSummary

STATISTICS = ("mean", "max", "final_value")


class PpcError(ValueError):
    """Invalid input to a posterior predictive operation."""


def _statistic(name: str, values: np.ndarray) -> float:
    if name == "mean":
        return float(values.mean())
    if name == "max":
        return float(values.max())
    if name == "final_value":
        return float(values[-1])
    raise PpcError(f"unknown test statistic {name!r}; pick one of {STATISTICS}")


def _params_from_row(row, volume_l: float) -> ModelParams:
    q_ach, c_out, e_lps, sigma = (float(v) for v in row)
    return ModelParams(q_vent=ach_to_lps(max(q_ach, 0.0), volume_l),
                       c_out=min(max(c_out, 0.0), 5000.0),
                       e_gen=max(e_lps, 0.0), sigma=max(sigma, 0.0))


@dataclass(frozen=True, eq=False)
class PpcResult:
    """Simulated-statistic distribution against the observed statistic.

    bayesian_p uses add-one smoothing, (1 + #{T_sim >= T_obs}) / (1 + n),
    so a finite simulation count never reports exactly 0 or 1; ties count
    as >=.
    """

    n_sims: int
    test_statistic: str
    t_obs: float
    t_sims: np.ndarray
    bayesian_p: float
    envelope: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_sims": self.n_sims, "test_statistic": self.test_statistic,
                "t_obs": self.t_obs, "bayesian_p": self.bayesian_p,
                "t_sims": np.asarray(self.t_sims).tolist(),
                "envelope": {k: np.asarray(v).tolist()
                             for k, v in self.envelope.items()},
                "metadata": self.metadata}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def envelope_to_csv(self, dest: str | IO[str]) -> None:
        env = self.envelope
        lines = ["t_seconds,q025,q50,q975,observed"]
        for i in range(len(env["t_seconds"])):
            lines.append(",".join(repr(float(env[k][i])) for k in
                                  ("t_seconds", "q025", "q50", "q975", "observed")))
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def posterior_predictive(samples: PosteriorSamples, data: Co2Series,
                         volume_l: float, n_sims: int = 1000,
                         statistic: str = "mean", seed: int = 0) -> PpcResult:
    """Regenerate n_sims trajectories from posterior draws and compare.

    Draw indices come from the (seed, 0) stream; trajectory i uses the
    (seed, 1 + i) stream, so results do not depend on evaluation order.
    """
    if n_sims < 100:
        raise PpcError("n_sims must be >= 100")
    if len(data) < 2:
        raise PpcError("need at least two observations")
    pooled = samples.pooled()
    if pooled.shape[0] == 0:
        raise PpcError("empty posterior")
    if statistic not in STATISTICS:
        raise PpcError(f"unknown test statistic {statistic!r}")

    idx = np.random.default_rng([int(seed), 0]).integers(0, pooled.shape[0],
                                                         size=n_sims)
    c0 = float(data.co2_ppm[0])
    sims = np.empty((n_sims, len(data)))
    for i in range(n_sims):
        params = _params_from_row(pooled[idx[i]], volume_l)
        rng = np.random.default_rng([int(seed), 1 + i])
        sims[i] = simulate_sde_on_grid(c0, params, volume_l, data.t_seconds, rng)

    t_obs = _statistic(statistic, data.co2_ppm)
    t_sims = np.array([_statistic(statistic, sims[i]) for i in range(n_sims)])
    bayesian_p = (1.0 + float(np.sum(t_sims >= t_obs))) / (1.0 + n_sims)

    q = np.quantile(sims, [0.025, 0.5, 0.975], axis=0)
    envelope = {"t_seconds": data.t_seconds.copy(), "q025": q[0], "q50": q[1],
                "q975": q[2], "observed": data.co2_ppm.copy()}
    return PpcResult(n_sims=n_sims, test_statistic=statistic, t_obs=t_obs,
                     t_sims=t_sims, bayesian_p=bayesian_p, envelope=envelope,
                     metadata={"seed": int(seed),
                               "initial_value": "observed",
                               "n_posterior_draws": int(pooled.shape[0])})


@dataclass(frozen=True, eq=False)
class TrendComparison:
    """Deterministic trend at the posterior means, a stochastic envelope
    around it, and the band of SDE-minus-ODE residuals."""

    t_seconds: np.ndarray
    ode_trajectory: np.ndarray
    sde_envelope: dict       # q025/q50/q975 of the SDE paths
    residual_band: dict      # q025/q50/q975 of (SDE - ODE)
    n_sims: int

    def to_dict(self) -> dict:
        return {"t_seconds": self.t_seconds.tolist(),
                "ode_trajectory": self.ode_trajectory.tolist(),
                "sde_envelope": {k: np.asarray(v).tolist()
                                 for k, v in self.sde_envelope.items()},
                "residual_band": {k: np.asarray(v).tolist()
                                  for k, v in self.residual_band.items()},
                "n_sims": self.n_sims}


def trend_compare(summary: PosteriorSummary, data: Co2Series, volume_l: float,
                  n_sims: int = 100, seed: int = 0) -> TrendComparison:
    """Run the deterministic and stochastic models at the posterior means.

    The ODE path uses the same per-pair stepping as the SDE paths, so the
    residual band isolates the noise term alone.
    """
    if n_sims < 1:
        raise PpcError("n_sims must be >= 1")
    if len(data) < 2:
        raise PpcError("need at least two observations")
    means = [summary[name].mean for name in
             ("q_ach", "c_out_ppm", "e_lps", "sigma")]
    params = _params_from_row(means, volume_l)
    c0 = float(data.co2_ppm[0])

    ode_params = ModelParams(q_vent=params.q_vent, c_out=params.c_out,
                             e_gen=params.e_gen, sigma=0.0)
    silent = np.random.default_rng(0)
    ode = simulate_sde_on_grid(c0, ode_params, volume_l, data.t_seconds, silent)

    sims = np.empty((n_sims, len(data)))
    for i in range(n_sims):
        rng = np.random.default_rng([int(seed), i])
        sims[i] = simulate_sde_on_grid(c0, params, volume_l, data.t_seconds, rng)

    q = np.quantile(sims, [0.025, 0.5, 0.975], axis=0)
    resid = sims - ode[None, :]
    rq = np.quantile(resid, [0.025, 0.5, 0.975], axis=0)
    return TrendComparison(
        t_seconds=data.t_seconds.copy(), ode_trajectory=ode,
        sde_envelope={"q025": q[0], "q50": q[1], "q975": q[2]},
        residual_band={"q025": rq[0], "q50": rq[1], "q975": rq[2]},
        n_sims=n_sims)

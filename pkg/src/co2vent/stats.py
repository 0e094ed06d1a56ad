"""Sample-based posterior statistics: HDI, split R-hat, effective sample size."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata


def hdi(samples, mass: float = 0.95) -> tuple[float, float]:
    """Narrowest interval containing `mass` of the samples."""
    if not 0.0 < mass < 1.0:
        raise ValueError(f"hdi mass must be in (0, 1), got {mass}")
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples for an HDI")
    n_in = int(math.ceil(mass * n))
    if n_in >= n:
        return (float(x[0]), float(x[-1]))
    widths = x[n_in:] - x[: n - n_in]
    i = int(np.argmin(widths))
    return (float(x[i]), float(x[i + n_in]))


def _split_halves(chains: np.ndarray) -> np.ndarray:
    """Split each chain in half, dropping a trailing odd draw."""
    m, n = chains.shape
    half = n // 2
    if half < 2:
        raise ValueError("chains too short to split")
    return np.vstack([chains[:, :half], chains[:, half: 2 * half]])


def _rank_normalize(chains: np.ndarray) -> np.ndarray:
    flat = chains.reshape(-1)
    ranks = rankdata(flat, method="average")
    z = ndtri((ranks - 0.375) / (flat.size + 0.25))
    return z.reshape(chains.shape)


def split_rhat(chains) -> float:
    """Rank-normalized split potential scale reduction factor.

    chains: array-like of shape (n_chains, n_draws).  Returns 1.0 for a
    constant input (no spread to diagnose).
    """
    c = np.asarray(chains, dtype=float)
    if c.ndim != 2 or c.shape[0] < 2:
        raise ValueError("need a (n_chains >= 2, n_draws) array")
    if np.allclose(c, c.flat[0]):
        return 1.0
    halves = _rank_normalize(_split_halves(c))
    m, n = halves.shape
    chain_means = halves.mean(axis=1)
    w = halves.var(axis=1, ddof=1).mean()
    b = n * chain_means.var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    if w <= 0:
        return 1.0
    return float(np.sqrt(var_plus / w))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance via FFT (normalized by n)."""
    n = x.size
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real
    return acov / n


def ess_mean(chains) -> float:
    """Effective sample size for the mean, multi-chain, with Geyer's
    initial monotone positive-sequence truncation."""
    c = np.asarray(chains, dtype=float)
    if c.ndim != 2 or c.shape[0] < 1:
        raise ValueError("need a (n_chains, n_draws) array")
    m, n = c.shape
    if n < 4:
        raise ValueError("chains too short for an ESS estimate")
    if np.allclose(c, c.flat[0]):
        return float("nan")

    acov = np.vstack([_autocovariance(c[j]) for j in range(m)])
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if m > 1:
        var_plus += c.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float("nan")

    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # Geyer pairs (rho_2k + rho_2k+1): keep while positive, force monotone.
    pair_sums = []
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p <= 0:
            break
        pair_sums.append(p)
        t += 2
    tau = -1.0
    running_min = math.inf
    for p in pair_sums:
        running_min = min(running_min, p)
        tau += 2.0 * running_min
    tau = max(tau, 1.0 / math.log10(m * n + 10.0))
    ess = m * n / tau
    return float(min(ess, m * n))


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: float
    hdi_low: float
    hdi_high: float


@dataclass(frozen=True)
class PosteriorSummary:
    """Pooled-chain mean, sd and HDI per parameter."""

    params: dict  # name -> ParamSummary
    hdi_mass: float

    def __getitem__(self, name: str) -> ParamSummary:
        return self.params[name]

    def to_dict(self) -> dict:
        return {"hdi_mass": self.hdi_mass,
                "params": {k: {"mean": v.mean, "sd": v.sd,
                               "hdi_low": v.hdi_low, "hdi_high": v.hdi_high}
                           for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorSummary":
        return cls(params={k: ParamSummary(**v) for k, v in d["params"].items()},
                   hdi_mass=d["hdi_mass"])

"""Bayesian estimation of (Q, c_out, E, sigma) from a CO2 series.

The transition likelihood treats each observed increment as Gaussian,

    dC_i ~ N( drift(C_i) * dt_i , sigma^2 * dt_i ),

which is the Euler-Maruyama density of the stochastic balance evaluated
per observation pair (irregular sampling supported, no resampling).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .mcmc import PosteriorSamples, PosteriorUnreachableError, run_hmc_chain, transform_for
from .model import Co2Series, SECONDS_PER_HOUR
from .priors import PARAM_NAMES, ParamDraw, PriorSet, log_prior
from .stats import ParamSummary, PosteriorSummary, ess_mean, hdi, split_rhat

_LOG_2PI = math.log(2.0 * math.pi)


class InferenceError(ValueError):
    """Invalid input to an inference operation."""


class DegenerateDataError(InferenceError):
    """sigma = 0 with identically zero residuals: the data carry no noise
    information and the likelihood is improper."""


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler settings; the defaults favor two medium chains with a short
    adaptation window."""

    draws: int = 5000
    chains: int = 2
    burn_in: int = 500
    max_leapfrog: int = 16
    target_accept: float = 0.8

    def __post_init__(self):
        if self.draws < 1000:
            raise InferenceError("config.draws must be >= 1000")
        if self.chains < 2:
            raise InferenceError("config.chains must be >= 2")
        if self.burn_in < 0:
            raise InferenceError("config.burn_in must be >= 0")
        if self.max_leapfrog < 1:
            raise InferenceError("config.max_leapfrog must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise InferenceError("config.target_accept must be in (0, 1)")

    def to_dict(self) -> dict:
        return {"draws": self.draws, "chains": self.chains,
                "burn_in": self.burn_in, "max_leapfrog": self.max_leapfrog,
                "target_accept": self.target_accept}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        extra = set(d) - {"draws", "chains", "burn_in", "max_leapfrog",
                          "target_accept"}
        if extra:
            raise InferenceError(f"unknown sampler keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class _DataArrays:
    """Increment view of a series, precomputed once per dataset."""

    dc: np.ndarray      # concentration increments, ppm
    dt: np.ndarray      # pairwise intervals, hours
    c_left: np.ndarray  # left endpoints, ppm
    e_scale: float      # e_lps -> ppm/h multiplier

    @classmethod
    def build(cls, data: Co2Series, volume_l: float) -> "_DataArrays":
        if len(data) < 2:
            raise InferenceError("need at least two samples to form increments")
        if not (math.isfinite(volume_l) and volume_l > 0):
            raise InferenceError(f"volume_l must be finite and > 0, got {volume_l}")
        t_h = data.t_hours
        return cls(dc=np.diff(data.co2_ppm), dt=np.diff(t_h),
                   c_left=data.co2_ppm[:-1],
                   e_scale=1.0e6 * SECONDS_PER_HOUR / volume_l)


def _loglik(arr: _DataArrays, q_ach, c_out, e_lps, sigma) -> float:
    drift = (c_out - arr.c_left) * q_ach + e_lps * arr.e_scale
    r = arr.dc - drift * arr.dt
    if sigma == 0.0:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(arr.dc))))
        if np.any(np.abs(r) > tol):
            return -math.inf
        raise DegenerateDataError(
            "sigma = 0 with identically zero residuals: noise scale is "
            "unidentifiable from this series")
    if sigma < 0.0:
        return -math.inf
    v = sigma * sigma * arr.dt
    return float(-0.5 * np.sum(np.log(2.0 * math.pi * v)) - np.sum(r * r / (2.0 * v)))


def _loglik_and_grad(arr: _DataArrays, q_ach, c_out, e_lps, sigma):
    drift = (c_out - arr.c_left) * q_ach + e_lps * arr.e_scale
    r = arr.dc - drift * arr.dt
    s2 = sigma * sigma
    v = s2 * arr.dt
    ll = -0.5 * np.sum(np.log(2.0 * math.pi * v)) - np.sum(r * r / (2.0 * v))
    g_q = float(np.sum(r * (c_out - arr.c_left)) / s2)
    g_c = float(q_ach * np.sum(r) / s2)
    g_e = float(arr.e_scale * np.sum(r) / s2)
    g_s = float(-arr.dt.size / sigma + np.sum(r * r / arr.dt) / (s2 * sigma))
    return float(ll), np.array([g_q, g_c, g_e, g_s])


def log_likelihood_em(draw: ParamDraw, data: Co2Series, volume_l: float) -> float:
    """Gaussian transition log likelihood over consecutive observation pairs."""
    arr = _DataArrays.build(data, volume_l)
    return _loglik(arr, draw.q_ach, draw.c_out_ppm, draw.e_lps, draw.sigma)


def log_posterior(draw: ParamDraw, priors: PriorSet, data: Co2Series,
                  volume_l: float) -> float:
    """Unnormalized log posterior: log_prior + log_likelihood_em."""
    lp = log_prior(draw, priors)
    if lp == -math.inf:
        return -math.inf
    return lp + log_likelihood_em(draw, data, volume_l)


def log_posterior_grad(draw: ParamDraw, priors: PriorSet, data: Co2Series,
                       volume_l: float) -> np.ndarray:
    """Gradient of log_posterior w.r.t. (q_ach, c_out_ppm, e_lps, sigma).

    Only defined at interior points of the prior supports.
    """
    arr = _DataArrays.build(data, volume_l)
    theta = draw.as_array()
    for value, spec in zip(theta, priors.specs()):
        lo, hi = spec.support()
        if not lo < value < hi:
            raise InferenceError(f"gradient requested outside prior support: {value}")
    _, g = _loglik_and_grad(arr, *theta)
    g_prior = np.array([spec.dlogpdf(v) for v, spec in zip(theta, priors.specs())])
    return g + g_prior


def _make_env(arr: _DataArrays, priors: PriorSet, fixed: dict):
    """Build the unconstrained-space posterior closure for the kernel.

    Returns (logpost_and_grad, free_idx, transforms, pack) where pack maps
    a free z-vector to the full 4-parameter theta array.
    """
    specs = priors.specs()
    fixed_arr = np.full(4, np.nan)
    for name, value in fixed.items():
        if name not in PARAM_NAMES:
            raise InferenceError(f"unknown parameter to fix: {name!r}")
        fixed_arr[PARAM_NAMES.index(name)] = float(value)
    free_idx = [i for i in range(4) if math.isnan(fixed_arr[i])]
    if not free_idx:
        raise InferenceError("cannot fix all four parameters")
    transforms = [transform_for(specs[i]) for i in free_idx]

    def pack(z: np.ndarray) -> np.ndarray:
        theta = fixed_arr.copy()
        for k, i in enumerate(free_idx):
            theta[i] = transforms[k].constrain(z[k])
        return theta

    def logpost_and_grad(z: np.ndarray):
        theta = pack(z)
        sigma = theta[3]
        if sigma < 1e-100:
            return -math.inf, np.zeros(len(free_idx))
        lp = 0.0
        for i in range(4):
            lp += specs[i].logpdf(theta[i])
        if not math.isfinite(lp):
            return -math.inf, np.zeros(len(free_idx))
        ll, g_theta = _loglik_and_grad(arr, *theta)
        if not math.isfinite(ll):
            return -math.inf, np.zeros(len(free_idx))
        g_theta += np.array([specs[i].dlogpdf(theta[i]) for i in range(4)])
        total = lp + ll
        grad = np.empty(len(free_idx))
        for k, i in enumerate(free_idx):
            tr = transforms[k]
            total += tr.log_jac(z[k])
            grad[k] = g_theta[i] * tr.dtheta_dz(z[k]) + tr.dlog_jac_dz(z[k])
        if not math.isfinite(total):
            return -math.inf, np.zeros(len(free_idx))
        return total, grad

    return logpost_and_grad, free_idx, transforms, pack


def _chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(chain)])


def sample_posterior(priors: PriorSet, data: Co2Series, volume_l: float,
                     config: SamplerConfig | None = None, seed: int = 0,
                     fixed: dict | None = None) -> PosteriorSamples:
    """Draw posterior samples with independent per-chain streams.

    fixed pins parameters at known values (e.g. fixed={"e_lps": 0.0} for a
    pure-decay experiment); pinned columns are excluded from sampling and
    from the convergence diagnostics.

    Raises PosteriorUnreachableError when no initialization draw (50 tries
    per chain, taken from the priors) reaches a finite log posterior.  A
    run with any r_hat > 1.05 is still returned, flagged via `converged`.
    """
    config = config or SamplerConfig()
    fixed = dict(fixed or {})
    arr = _DataArrays.build(data, volume_l)
    logpost_and_grad, free_idx, transforms, pack = _make_env(arr, priors, fixed)
    specs = priors.specs()

    chains = np.empty((config.chains, config.draws, 4))
    chain_infos = []
    for chain in range(config.chains):
        rng = _chain_rng(seed, chain)
        z0 = None
        for _ in range(50):
            theta_try = [specs[i].sample(rng) for i in range(4)]
            z_try = np.array([transforms[k].unconstrain(theta_try[i])
                              for k, i in enumerate(free_idx)])
            lp, _ = logpost_and_grad(z_try)
            if math.isfinite(lp):
                z0 = z_try
                break
        if z0 is None:
            raise PosteriorUnreachableError(
                "posterior unreachable: no finite log posterior in 50 "
                "prior-drawn initializations")
        z_draws, info = run_hmc_chain(
            logpost_and_grad, z0, config.draws, config.burn_in, rng,
            max_leapfrog=config.max_leapfrog, target_accept=config.target_accept)
        for j in range(config.draws):
            chains[chain, j] = pack(z_draws[j])
        chain_infos.append(info)

    diagnostics = {}
    for k, i in enumerate(free_idx):
        name = PARAM_NAMES[i]
        per_chain = chains[:, :, i]
        diagnostics[name] = {
            "r_hat": split_rhat(per_chain),
            "ess": ess_mean(per_chain),
            "acceptance_rate": float(np.mean(
                [ci["acceptance_rate"] for ci in chain_infos])),
        }

    sampler_config = config.to_dict()
    sampler_config["seed"] = int(seed)
    sampler_config["algorithm"] = "hmc-jittered"
    sampler_config["step_sizes"] = [ci["step_size"] for ci in chain_infos]
    return PosteriorSamples(chains=chains, sampler_config=sampler_config,
                            diagnostics=diagnostics, fixed=fixed)


def summarize(samples: PosteriorSamples, hdi_mass: float = 0.95) -> PosteriorSummary:
    """Pooled mean, sd and highest-density interval per parameter."""
    if not 0.0 < hdi_mass < 1.0:
        raise InferenceError(f"hdi_mass must be in (0, 1), got {hdi_mass}")
    pooled = samples.pooled()
    if pooled.shape[0] < 1000:
        raise InferenceError("need at least 1000 pooled draws to summarize")
    out = {}
    for i, name in enumerate(samples.param_names):
        col = pooled[:, i]
        mean = float(col.mean())
        sd = float(col.std(ddof=1))
        if np.all(col == col[0]):
            lo = hi = float(col[0])
        else:
            lo, hi = hdi(col, hdi_mass)
        if not lo <= mean <= hi:
            warnings.warn(f"posterior mean of {name} lies outside its HDI "
                          "(multimodal or heavily skewed marginal?)")
        out[name] = ParamSummary(mean=mean, sd=sd, hdi_low=lo, hdi_high=hi)
    return PosteriorSummary(params=out, hdi_mass=hdi_mass)


@dataclass(frozen=True)
class PriorSensitivityResult:
    """Per-prior-set summaries plus pairwise posterior-mean shifts in units
    of the pooled posterior sd."""

    summaries: dict          # name -> PosteriorSummary
    shifts: dict             # "a|b" -> {param: shift_in_pooled_sd}
    converged: dict          # name -> bool

    def max_shift(self, param: str) -> float:
        return max(s[param] for s in self.shifts.values())

    def to_dict(self) -> dict:
        return {"summaries": {k: v.to_dict() for k, v in self.summaries.items()},
                "shifts": self.shifts, "converged": self.converged}


def prior_sensitivity(data: Co2Series, volume_l: float, prior_sets: dict,
                      config: SamplerConfig | None = None,
                      seed: int = 0) -> PriorSensitivityResult:
    """Re-run inference under each named prior set (same seed for each run,
    so identical sets give identical results) and tabulate mean shifts."""
    if len(prior_sets) < 2:
        raise InferenceError("need at least two prior sets to compare")
    summaries, converged = {}, {}
    for name, priors in prior_sets.items():
        try:
            samples = sample_posterior(priors, data, volume_l, config=config,
                                       seed=seed)
        except Exception as exc:
            raise InferenceError(f"prior set {name!r}: {exc}") from exc
        summaries[name] = summarize(samples)
        converged[name] = samples.converged
    shifts = {}
    names = list(summaries)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            entry = {}
            for param in PARAM_NAMES:
                sa, sb = summaries[a][param], summaries[b][param]
                pooled_sd = math.sqrt(0.5 * (sa.sd ** 2 + sb.sd ** 2))
                entry[param] = (abs(sa.mean - sb.mean) / pooled_sd
                                if pooled_sd > 0 else 0.0)
            shifts[f"{a}|{b}"] = entry
    return PriorSensitivityResult(summaries=summaries, shifts=shifts,
                                  converged=converged)


@dataclass(frozen=True)
class DecayFit:
    """Log-linear tracer-decay fit: air-change rate with its standard error."""

    ach: float
    se: float
    n: int
    warning: str | None = None


def decay_reference_ach(data: Co2Series, c_out: float) -> DecayFit:
    """Reference estimator: least-squares slope of ln(C - c_out) vs t.

    Requires every sample strictly above c_out.  The standard error uses
    an AR(1) effective-sample-size correction, since densely sampled decay
    residuals are strongly autocorrelated and the plain OLS error would be
    far too optimistic.  A non-negative fitted slope (no decay) is
    returned flagged rather than raised.
    """
    if len(data) < 3:
        raise InferenceError("need at least three samples for a decay fit")
    if np.any(data.co2_ppm <= c_out):
        raise InferenceError(
            "decay fit requires all samples strictly above c_out")
    t = data.t_hours
    y = np.log(data.co2_ppm - c_out)
    n = t.size
    tm, ym = t.mean(), y.mean()
    x = t - tm
    sxx = float(np.sum(x * x))
    slope = float(np.sum(x * (y - ym)) / sxx)
    resid = y - (ym + slope * x)
    se = _decay_slope_se(t, x, sxx, slope, resid)
    warning = None
    if slope >= 0:
        warning = "fitted slope is non-negative: series is not decaying"
    return DecayFit(ach=-slope, se=se, n=n, warning=warning)


def _decay_slope_se(t, x, sxx, slope, resid):
    """Standard error of the log-decay slope.

    The log residual at time t is approximately u_t * exp(lam*t) / A with
    u a mean-reverting noise path started at the decay peak, giving

        Cov(eps_s, eps_t) = c * (exp(2*lam*min(s, t)) - 1).

    Var(slope) = c * x' Omega x / sxx^2 is evaluated with that structure.
    The scale c comes from the residual sum of squares divided by
    tr((I - H) Omega), not by n - 2: with a correlation time comparable to
    the window, the fitted line absorbs much of the noise and plain OLS
    residuals would understate c severely.  Falls back to an
    AR(1)-corrected OLS error when the fitted slope is not a decay.
    """
    n = t.size
    lam = -slope
    if lam > 0 and n > 4:
        s = t - t[0]
        span = float(s[-1])
        g = np.exp(2.0 * lam * (s - span))  # e^{2 lam s} scaled by e^{-2 lam span}
        const = math.exp(-2.0 * lam * span)

        def quad_min(v):
            # v' G v with G_ij = g[min(i, j)] (times sorted ascending)
            suffix = np.cumsum(v[::-1])[::-1]
            tail = np.concatenate([suffix[1:], [0.0]])
            return float(np.sum(g * v * (v + 2.0 * tail)))

        x_omega_x = quad_min(x)  # constant part vanishes: sum(x) = 0
        tr_omega = float(np.sum(g)) - n * const
        ones = np.ones(n)
        tr_h_omega = (quad_min(ones) - const * n * n) / n + x_omega_x / sxx
        denom = tr_omega - tr_h_omega
        if denom > 0 and x_omega_x > 0:
            c_hat = float(np.sum(resid * resid)) / denom
            var = c_hat * x_omega_x / (sxx * sxx)
            if var > 0 and math.isfinite(var):
                return math.sqrt(var)
    # fallback: OLS with an AR(1) effective-sample correction
    se = math.sqrt(float(np.sum(resid ** 2)) / max(n - 2, 1) / sxx)
    r = resid - resid.mean()
    denom = float(np.sum(r * r))
    if denom > 0:
        rho = float(np.sum(r[1:] * r[:-1]) / denom)
        rho = min(max(rho, 0.0), 1.0 - 1.0 / n)
        se *= math.sqrt((1.0 + rho) / (1.0 - rho))
    return se

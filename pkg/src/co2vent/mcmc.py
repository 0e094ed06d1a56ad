"""Gradient-based MCMC kernel over an unconstrained reparameterization.

Bounded (uniform-prior) parameters are mapped through a logit so the
proposal space is all of R^d; normal-prior parameters pass through
unchanged.  Sampling uses Hamiltonian trajectories with a jittered number
of leapfrog steps.  Step size (dual averaging) and the diagonal mass
matrix adapt during burn-in only; the post-burn-in kernel is fixed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .priors import PARAM_NAMES, PriorSpec


class SamplerError(RuntimeError):
    """The sampler could not run as configured."""


class PosteriorUnreachableError(SamplerError):
    """No initialization attempt reached a finite log posterior."""


# ---------------------------------------------------------------------------
# Parameter transforms


class IdentityTransform:
    def constrain(self, z):
        return z

    def unconstrain(self, theta):
        return theta

    def dtheta_dz(self, z):
        return 1.0

    def log_jac(self, z):
        return 0.0

    def dlog_jac_dz(self, z):
        return 0.0


class LogitTransform:
    """Bijection R -> (lo, hi) via a scaled logistic."""

    def __init__(self, lo: float, hi: float):
        self.lo = lo
        self.width = hi - lo

    def constrain(self, z):
        return self.lo + self.width * expit(z)

    def unconstrain(self, theta):
        p = (theta - self.lo) / self.width
        p = min(max(p, 1e-12), 1.0 - 1e-12)
        return math.log(p / (1.0 - p))

    def dtheta_dz(self, z):
        s = expit(z)
        return self.width * s * (1.0 - s)

    def log_jac(self, z):
        return math.log(self.width) + log_expit(z) + log_expit(-z)

    def dlog_jac_dz(self, z):
        return 1.0 - 2.0 * expit(z)


def transform_for(spec: PriorSpec):
    if spec.kind == "uniform":
        return LogitTransform(spec.lower, spec.upper)
    return IdentityTransform()


# ---------------------------------------------------------------------------
# Posterior sample container


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    """Post-burn-in draws from every chain plus run metadata.

    chains has shape (n_chains, n_draws, 4) with columns ordered as
    PARAM_NAMES; fixed parameters repeat their pinned value.
    """

    chains: np.ndarray
    sampler_config: dict
    diagnostics: dict
    fixed: dict = field(default_factory=dict)
    param_names: tuple = PARAM_NAMES

    def __post_init__(self):
        c = np.asarray(self.chains, dtype=float)
        object.__setattr__(self, "chains", c)
        if c.ndim != 3 or c.shape[2] != len(self.param_names):
            raise ValueError("chains must have shape (n_chains, n_draws, n_params)")

    @property
    def n_chains(self) -> int:
        return self.chains.shape[0]

    @property
    def n_draws(self) -> int:
        return self.chains.shape[1]

    def pooled(self) -> np.ndarray:
        return self.chains.reshape(-1, self.chains.shape[2])

    def column(self, name: str) -> np.ndarray:
        return self.pooled()[:, self.param_names.index(name)]

    @property
    def converged(self) -> bool:
        return all(d["r_hat"] <= 1.05 for d in self.diagnostics.values())

    def to_dict(self) -> dict:
        return {
            "params": list(self.param_names),
            "sampler_config": self.sampler_config,
            "diagnostics": self.diagnostics,
            "fixed": self.fixed,
            "chains": [chain.tolist() for chain in self.chains],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorSamples":
        return cls(chains=np.array(d["chains"], dtype=float),
                   sampler_config=d["sampler_config"],
                   diagnostics=d["diagnostics"],
                   fixed=d.get("fixed", {}),
                   param_names=tuple(d["params"]))

    @classmethod
    def from_json(cls, text: str) -> "PosteriorSamples":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Hamiltonian kernel


def _leapfrog(z, p, grad, eps, n_steps, inv_mass, logpost_and_grad):
    lp = None
    p = p + 0.5 * eps * grad
    for step in range(n_steps):
        z = z + eps * inv_mass * p
        lp, grad = logpost_and_grad(z)
        if not np.all(np.isfinite(grad)) or not math.isfinite(lp):
            return z, p, lp, grad, False
        if step < n_steps - 1:
            p = p + eps * grad
    p = p + 0.5 * eps * grad
    return z, p, lp, grad, True


def _kinetic(p, inv_mass):
    return 0.5 * float(np.dot(p * inv_mass, p))


def _find_initial_step(z, lp, grad, inv_mass, rng, logpost_and_grad):
    """Double/halve eps until the one-step acceptance crosses 1/2."""
    eps = 1.0
    p = rng.standard_normal(z.size) / np.sqrt(inv_mass)
    h0 = lp - _kinetic(p, inv_mass)
    z1, p1, lp1, _, ok = _leapfrog(z, p, grad, eps, 1, inv_mass, logpost_and_grad)
    log_ratio = (lp1 - _kinetic(p1, inv_mass)) - h0 if ok else -math.inf
    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(60):
        eps *= 2.0 ** direction
        z1, p1, lp1, _, ok = _leapfrog(z, p, grad, eps, 1, inv_mass,
                                       logpost_and_grad)
        log_ratio = (lp1 - _kinetic(p1, inv_mass)) - h0 if ok else -math.inf
        if direction * log_ratio <= direction * math.log(0.5):
            break
    return max(eps, 1e-10)


@dataclass
class _DualAveraging:
    """Nesterov-style step-size averaging toward a target acceptance."""

    eps0: float
    target: float
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    def __post_init__(self):
        self.mu = math.log(10.0 * self.eps0)
        self.log_eps = math.log(self.eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_stat: float) -> float:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def smoothed_eps(self) -> float:
        return math.exp(self.log_eps_bar)


def run_hmc_chain(logpost_and_grad, z0: np.ndarray, n_draws: int, burn_in: int,
                  rng: np.random.Generator, max_leapfrog: int = 16,
                  target_accept: float = 0.8):
    """Run one chain; returns (draws, info).

    Adaptation schedule inside burn-in: dual-averaged step size throughout,
    with the diagonal mass matrix re-estimated once from the middle half of
    the burn-in draws.  Both freeze at the end of burn-in.
    """
    d = z0.size
    z = np.array(z0, dtype=float)
    lp, grad = logpost_and_grad(z)
    if not math.isfinite(lp):
        raise SamplerError("initial point has non-finite log posterior")

    inv_mass = np.ones(d)
    eps = _find_initial_step(z, lp, grad, inv_mass, rng, logpost_and_grad)
    da = _DualAveraging(eps, target_accept)

    mass_lo, mass_hi = burn_in // 4, (3 * burn_in) // 4
    mass_window = []

    draws = np.empty((n_draws, d))
    n_accept = 0
    accept_stats = []

    total = burn_in + n_draws
    for it in range(total):
        adapting = it < burn_in
        p = rng.standard_normal(d) / np.sqrt(inv_mass)
        n_leap = int(rng.integers(1, max_leapfrog + 1))
        h0 = lp - _kinetic(p, inv_mass)
        z1, p1, lp1, grad1, ok = _leapfrog(z, p, grad, eps, n_leap, inv_mass,
                                           logpost_and_grad)
        if ok:
            log_ratio = (lp1 - _kinetic(p1, inv_mass)) - h0
            if math.isnan(log_ratio):
                log_ratio = -math.inf
            accept_stat = min(1.0, math.exp(min(0.0, log_ratio)))
        else:
            log_ratio, accept_stat = -math.inf, 0.0
        if math.log(rng.random()) < log_ratio:
            z, lp, grad = z1, lp1, grad1
            if not adapting:
                n_accept += 1

        if adapting:
            eps = da.update(accept_stat)
            if mass_lo <= it < mass_hi:
                mass_window.append(z.copy())
            if it == mass_hi - 1 and len(mass_window) >= 10:
                var = np.var(np.asarray(mass_window), axis=0, ddof=1)
                w = len(mass_window)
                inv_mass = (w / (w + 5.0)) * var + (5.0 / (w + 5.0)) * 1e-3
                eps = _find_initial_step(z, lp, grad, inv_mass, rng,
                                         logpost_and_grad)
                da = _DualAveraging(eps, target_accept)
            if it == burn_in - 1:
                eps = da.smoothed_eps
        else:
            accept_stats.append(accept_stat)
            draws[it - burn_in] = z

    info = {
        "step_size": eps,
        "inv_mass": inv_mass.tolist(),
        "acceptance_rate": n_accept / max(n_draws, 1),
        "mean_accept_stat": float(np.mean(accept_stats)) if accept_stats else 0.0,
    }
    return draws, info

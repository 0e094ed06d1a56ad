"""Prior specifications for the four estimated parameters.

Canonical units: Q in air changes per hour, c_out in ppm, E in L/s, and
sigma in ppm per sqrt hour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("q_ach", "c_out_ppm", "e_lps", "sigma")

_LOG_2PI = math.log(2.0 * math.pi)


class PriorError(ValueError):
    """Malformed prior specification."""


@dataclass(frozen=True)
class PriorSpec:
    """One marginal prior: uniform(lower, upper) or normal(mean, sd)."""

    kind: str
    lower: float | None = None
    upper: float | None = None
    mean: float | None = None
    sd: float | None = None

    def __post_init__(self):
        if self.kind == "uniform":
            if self.lower is None or self.upper is None:
                raise PriorError("uniform prior needs lower and upper")
            if not self.lower < self.upper:
                raise PriorError(
                    f"uniform prior needs lower < upper, got [{self.lower}, {self.upper}]")
        elif self.kind == "normal":
            if self.mean is None or self.sd is None:
                raise PriorError("normal prior needs mean and sd")
            if not self.sd > 0:
                raise PriorError(f"normal prior needs sd > 0, got {self.sd}")
        else:
            raise PriorError(f"unknown prior kind {self.kind!r}")

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "PriorSpec":
        return cls(kind="uniform", lower=lower, upper=upper)

    @classmethod
    def normal(cls, mean: float, sd: float) -> "PriorSpec":
        return cls(kind="normal", mean=mean, sd=sd)

    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return (self.lower, self.upper)
        return (-math.inf, math.inf)

    def contains(self, x: float) -> bool:
        lo, hi = self.support()
        return lo <= x <= hi

    def logpdf(self, x: float) -> float:
        if self.kind == "uniform":
            if self.lower <= x <= self.upper:
                return -math.log(self.upper - self.lower)
            return -math.inf
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * _LOG_2PI

    def dlogpdf(self, x: float) -> float:
        """Derivative of logpdf inside the support."""
        if self.kind == "uniform":
            return 0.0
        return -(x - self.mean) / (self.sd * self.sd)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "uniform":
            return float(rng.uniform(self.lower, self.upper))
        return float(rng.normal(self.mean, self.sd))

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "lower": self.lower, "upper": self.upper}
        return {"kind": "normal", "mean": self.mean, "sd": self.sd}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        known = {"kind", "lower", "upper", "mean", "sd"}
        extra = set(d) - known
        if extra:
            raise PriorError(f"unknown prior fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class PriorSet:
    """Joint (independent) prior over the four estimated parameters."""

    q: PriorSpec
    c_out: PriorSpec
    e: PriorSpec
    sigma: PriorSpec

    def __post_init__(self):
        lo, _ = self.sigma.support()
        if not (self.sigma.kind == "uniform" and lo >= 0):
            raise PriorError(
                "sigma prior must be uniform with nonnegative support")

    def specs(self) -> tuple[PriorSpec, PriorSpec, PriorSpec, PriorSpec]:
        return (self.q, self.c_out, self.e, self.sigma)

    def to_dict(self) -> dict:
        return {"q": self.q.to_dict(), "c_out": self.c_out.to_dict(),
                "e": self.e.to_dict(), "sigma": self.sigma.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSet":
        extra = set(d) - {"q", "c_out", "e", "sigma"}
        if extra:
            raise PriorError(f"unknown prior-set keys: {sorted(extra)}")
        try:
            return cls(q=PriorSpec.from_dict(d["q"]),
                       c_out=PriorSpec.from_dict(d["c_out"]),
                       e=PriorSpec.from_dict(d["e"]),
                       sigma=PriorSpec.from_dict(d["sigma"]))
        except KeyError as exc:
            raise PriorError(f"prior set missing entry for {exc}") from exc


@dataclass(frozen=True)
class ParamDraw:
    """One point in parameter space (canonical units)."""

    q_ach: float
    c_out_ppm: float
    e_lps: float
    sigma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.q_ach, self.c_out_ppm, self.e_lps, self.sigma])

    @classmethod
    def from_array(cls, a) -> "ParamDraw":
        q, c, e, s = (float(x) for x in a)
        return cls(q_ach=q, c_out_ppm=c, e_lps=e, sigma=s)


def log_prior(draw: ParamDraw, priors: PriorSet) -> float:
    """Sum of the marginal log densities; -inf outside any support."""
    total = 0.0
    for value, spec in zip(draw.as_array(), priors.specs()):
        lp = spec.logpdf(value)
        if lp == -math.inf:
            return -math.inf
        total += lp
    return total


DEFAULT_SIGMA_PRIOR = PriorSpec.uniform(0.0, 500.0)


def default_prior_set() -> PriorSet:
    """Everyday defaults: flat Q in 0..3 ach, outdoor 350..550 ppm,
    emission 0..0.05 L/s, noise scale 0..500 ppm/sqrt(h)."""
    return PriorSet(q=PriorSpec.uniform(0.0, 3.0),
                    c_out=PriorSpec.uniform(350.0, 550.0),
                    e=PriorSpec.uniform(0.0, 0.05),
                    sigma=DEFAULT_SIGMA_PRIOR)


def vague_prior_set() -> PriorSet:
    """Deliberately wide variant used for prior-sensitivity checks."""
    return PriorSet(q=PriorSpec.uniform(0.0, 10.0),
                    c_out=PriorSpec.uniform(350.0, 550.0),
                    e=PriorSpec.uniform(0.0, 0.1),
                    sigma=DEFAULT_SIGMA_PRIOR)


def informative_prior_set(c_out_variant: str = "uniform") -> PriorSet:
    """Tight priors centred on typical chamber conditions.

    c_out_variant selects between a narrow uniform window and a normal
    prior for the outdoor concentration.
    """
    if c_out_variant == "uniform":
        c_out = PriorSpec.uniform(396.0, 416.0)
    elif c_out_variant == "normal":
        c_out = PriorSpec.normal(400.0, 20.0)
    else:
        raise PriorError(f"unknown c_out variant {c_out_variant!r}")
    return PriorSet(q=PriorSpec.normal(2.0, 0.2),
                    c_out=c_out,
                    e=PriorSpec.normal(0.013, 0.005),
                    sigma=DEFAULT_SIGMA_PRIOR)

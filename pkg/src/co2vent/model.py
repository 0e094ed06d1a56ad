"""Room CO2 mass balance: deterministic and stochastic forward models.

A well-mixed single zone of volume V (liters) with outdoor supply at
concentration c_out (ppm), ventilation rate Q (L/s) and an indoor CO2
source E (L/s of pure CO2) follows the mass balance

    V dC/dt = (c_out - C) * Q + E * CE,        CE = 1e6 ppm

optionally driven by white noise with scale sigma (ppm per sqrt hour):

    dC = [(c_out - C) * Q + E * CE] / V dt + sigma dW.

Internal units are hours for time, ppm for concentration and liters for
volume; flows stay in L/s and are converted where the formulas need them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

PPM_PER_FRACTION = 1.0e6
SECONDS_PER_HOUR = 3600.0


class ModelError(ValueError):
    """Invalid input to a forward-model operation."""


class NoVentilationError(ModelError):
    """Q = 0 requested where the formula divides by Q (use linear_growth)."""


class StabilityError(ModelError):
    """Time step too large for a stable explicit integration."""


def ach_to_lps(ach: float, volume_l: float) -> float:
    """Convert air changes per hour to a flow in L/s for a given volume."""
    return ach * volume_l / SECONDS_PER_HOUR


def lps_to_ach(q_lps: float, volume_l: float) -> float:
    """Convert a flow in L/s to air changes per hour for a given volume."""
    return q_lps * SECONDS_PER_HOUR / volume_l


@dataclass(frozen=True)
class RoomGeometry:
    """Rectangular room dimensions in meters."""

    width_m: float
    length_m: float
    height_m: float

    def __post_init__(self):
        for name in ("width_m", "length_m", "height_m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{name} must be finite and > 0, got {v}")

    @property
    def volume_l(self) -> float:
        return self.width_m * self.length_m * self.height_m * 1000.0

    def to_dict(self) -> dict:
        return {"width_m": self.width_m, "length_m": self.length_m,
                "height_m": self.height_m}

    @classmethod
    def from_dict(cls, d: dict) -> "RoomGeometry":
        return cls(width_m=d["width_m"], length_m=d["length_m"],
                   height_m=d["height_m"])


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the CO2 balance.

    q_vent: ventilation rate, L/s.  c_out: outdoor CO2, ppm.  e_gen: total
    CO2 generation rate, L/s.  sigma: noise scale, ppm per sqrt hour.  The
    ppm conversion constant c_e is fixed and not user-settable.
    """

    q_vent: float
    c_out: float
    e_gen: float
    sigma: float = 0.0

    c_e: float = field(default=PPM_PER_FRACTION, init=False, repr=False)

    def __post_init__(self):
        for name in ("q_vent", "c_out", "e_gen", "sigma"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ModelError(f"{name} must be finite, got {v}")
        if self.q_vent < 0:
            raise ModelError(f"q_vent must be >= 0, got {self.q_vent}")
        if self.e_gen < 0:
            raise ModelError(f"e_gen must be >= 0, got {self.e_gen}")
        if self.sigma < 0:
            raise ModelError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.c_out <= 5000.0:
            raise ModelError(
                f"c_out outside the plausible sensor range [0, 5000]: {self.c_out}")

    def to_dict(self) -> dict:
        return {"q_vent": self.q_vent, "c_out": self.c_out,
                "e_gen": self.e_gen, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(q_vent=d["q_vent"], c_out=d["c_out"],
                   e_gen=d["e_gen"], sigma=d.get("sigma", 0.0))


@dataclass(frozen=True, eq=False)
class AchRate:
    """Ventilation rate in air changes per hour, optionally with a
    standard error (least-squares decay fits carry one)."""

    ach: float
    se: float | None = None

    def to_lps(self, volume_l: float) -> float:
        return ach_to_lps(self.ach, volume_l)


@dataclass(frozen=True, eq=False)
class Co2Series:
    """Timestamped CO2 observations (seconds, ppm), strictly increasing in
    time.  Sampling may be irregular; dt_hint_s records the nominal
    interval when one is known."""

    t_seconds: np.ndarray
    co2_ppm: np.ndarray
    dt_hint_s: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t_seconds, dtype=float)
        c = np.asarray(self.co2_ppm, dtype=float)
        object.__setattr__(self, "t_seconds", t)
        object.__setattr__(self, "co2_ppm", c)
        if t.ndim != 1 or c.ndim != 1 or t.shape != c.shape:
            raise ModelError("t_seconds and co2_ppm must be 1-d and equal length")
        if t.size == 0:
            raise ModelError("empty series")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(c))):
            raise ModelError("non-finite values in series")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ModelError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return int(self.t_seconds.size)

    @property
    def t_hours(self) -> np.ndarray:
        return self.t_seconds / SECONDS_PER_HOUR

    def to_csv(self, dest: str | IO[str]) -> None:
        """Write `t_seconds,co2_ppm` rows; repr floats round-trip exactly."""
        lines = ["t_seconds,co2_ppm"]
        lines += [f"{float(t)!r},{float(c)!r}"
                  for t, c in zip(self.t_seconds, self.co2_ppm)]
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)

    @classmethod
    def from_csv(cls, src: str | IO[str]) -> "Co2Series":
        if hasattr(src, "read"):
            text = src.read()
        else:
            with open(src, "r", encoding="utf-8") as fh:
                text = fh.read()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != "t_seconds,co2_ppm":
            raise ModelError("expected header 't_seconds,co2_ppm'")
        t, c = [], []
        for i, ln in enumerate(lines[1:], start=2):
            try:
                a, b = ln.split(",")
                t.append(float(a))
                c.append(float(b))
            except ValueError as exc:
                raise ModelError(f"line {i}: cannot parse {ln!r} ({exc})") from exc
        return cls(np.array(t), np.array(c))


def _check_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise ModelError(f"{name} must be finite")


def drift(c_r, params: ModelParams, volume_l: float):
    """Deterministic rate of change of room CO2, in ppm per hour.

    Accepts a scalar or an ndarray of concentrations.
    """
    if not (math.isfinite(volume_l) and volume_l > 0):
        raise ModelError(f"volume_l must be finite and > 0, got {volume_l}")
    _check_finite("c_r", c_r)
    scale = SECONDS_PER_HOUR / volume_l
    return ((params.c_out - c_r) * params.q_vent
            + params.e_gen * params.c_e) * scale


def steady_state(params: ModelParams, volume_l: float) -> float:
    """Equilibrium concentration c_out + E*CE/Q; Q = 0 has no equilibrium."""
    if params.q_vent == 0:
        raise NoVentilationError(
            "q_vent = 0: concentration grows without bound (no steady state)")
    return params.c_out + params.e_gen * params.c_e / params.q_vent


def closed_form_ode(c0: float, params: ModelParams, volume_l: float, t):
    """Exact solution C(t) = C_ss + (c0 - C_ss) * exp(-lambda*t), t in hours.

    Raises NoVentilationError for Q = 0; use linear_growth for that branch.
    """
    if params.q_vent == 0:
        raise NoVentilationError(
            "q_vent = 0 has no exponential solution; use linear_growth")
    _check_finite("c0", c0)
    _check_finite("t", t)
    lam = lps_to_ach(params.q_vent, volume_l)
    css = steady_state(params, volume_l)
    return css + (c0 - css) * np.exp(-lam * np.asarray(t, dtype=float))


def linear_growth(c0: float, params: ModelParams, volume_l: float, t):
    """Q = 0 branch of the balance: pure source accumulation, t in hours."""
    _check_finite("c0", c0)
    _check_finite("t", t)
    rate = params.e_gen * params.c_e * SECONDS_PER_HOUR / volume_l
    return c0 + rate * np.asarray(t, dtype=float)


def _check_step(params: ModelParams, volume_l: float, dt_h: float) -> None:
    if not (math.isfinite(dt_h) and dt_h > 0):
        raise ModelError(f"dt must be finite and > 0, got {dt_h}")
    lam = lps_to_ach(params.q_vent, volume_l)
    if lam > 0 and dt_h > 2.0 / lam:
        raise StabilityError(
            f"dt = {dt_h} h exceeds the stability bound 2/lambda = {2.0 / lam} h")


def _time_grid(horizon_h: float, dt_h: float) -> np.ndarray:
    if horizon_h < dt_h:
        raise ModelError("horizon must be at least one step")
    n_steps = int(math.floor(horizon_h / dt_h + 1e-9))
    return np.arange(n_steps + 1, dtype=float) * dt_h


def simulate_ode(c0: float, params: ModelParams, volume_l: float,
                 horizon_h: float, dt_h: float) -> Co2Series:
    """Forward-Euler trajectory of the deterministic balance."""
    _check_finite("c0", c0)
    _check_step(params, volume_l, dt_h)
    t_h = _time_grid(horizon_h, dt_h)
    out = np.empty(t_h.size)
    out[0] = c0
    c = float(c0)
    for k in range(1, t_h.size):
        c = c + drift(c, params, volume_l) * dt_h
        out[k] = c
    return Co2Series(t_h * SECONDS_PER_HOUR, out, dt_hint_s=dt_h * SECONDS_PER_HOUR)


def em_step(c_r: float, params: ModelParams, volume_l: float,
            dt_h: float, z: float) -> float:
    """One Euler-Maruyama step: c + drift*dt + sigma*sqrt(dt)*z."""
    if not (math.isfinite(dt_h) and dt_h > 0):
        raise ModelError(f"dt must be finite and > 0, got {dt_h}")
    _check_finite("z", z)
    return (c_r + drift(c_r, params, volume_l) * dt_h
            + params.sigma * math.sqrt(dt_h) * z)


def _trajectory_rng(seed, index: int) -> np.random.Generator:
    """Independent stream for one ensemble member, keyed by (seed, index)."""
    if isinstance(seed, (int, np.integer)):
        key = [int(seed), index]
    else:
        key = [int(s) for s in seed] + [index]
    return np.random.default_rng(key)


def simulate_sde(c0: float, params: ModelParams, volume_l: float,
                 horizon_h: float, dt_h: float, seed: int = 0) -> Co2Series:
    """Euler-Maruyama sample path; the seed fully determines the result.

    With sigma = 0 the output matches simulate_ode bit for bit.
    """
    _check_finite("c0", c0)
    _check_step(params, volume_l, dt_h)
    t_h = _time_grid(horizon_h, dt_h)
    n_steps = t_h.size - 1
    z = np.random.default_rng(seed).standard_normal(n_steps)
    noise = params.sigma * math.sqrt(dt_h) * z
    out = np.empty(t_h.size)
    out[0] = c0
    c = float(c0)
    for k in range(n_steps):
        c = c + drift(c, params, volume_l) * dt_h + noise[k]
        out[k + 1] = c
    return Co2Series(t_h * SECONDS_PER_HOUR, out, dt_hint_s=dt_h * SECONDS_PER_HOUR)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """A batch of SDE sample paths on a common grid.

    paths has shape (n_trajectories, n_times).  Trajectories that dip below
    zero are not clamped (clamping would bias the increment distribution);
    they are counted instead.
    """

    t_seconds: np.ndarray
    paths: np.ndarray

    @property
    def n_negative_paths(self) -> int:
        return int(np.sum(np.any(self.paths < 0.0, axis=1)))

    @property
    def has_negative(self) -> bool:
        return self.n_negative_paths > 0

    def mean(self) -> np.ndarray:
        return self.paths.mean(axis=0)

    def var(self) -> np.ndarray:
        return self.paths.var(axis=0, ddof=1)


def simulate_sde_ensemble(c0: float, params: ModelParams, volume_l: float,
                          horizon_h: float, dt_h: float, n_traj: int,
                          seed=0) -> EnsembleResult:
    """Simulate n_traj independent paths.

    Each trajectory draws from its own stream keyed by (seed, index), so
    the result does not depend on scheduling or batching.
    """
    if n_traj < 1:
        raise ModelError("n_traj must be >= 1")
    _check_finite("c0", c0)
    _check_step(params, volume_l, dt_h)
    t_h = _time_grid(horizon_h, dt_h)
    n_steps = t_h.size - 1
    z = np.empty((n_traj, n_steps))
    for i in range(n_traj):
        z[i] = _trajectory_rng(seed, i).standard_normal(n_steps)
    noise = params.sigma * math.sqrt(dt_h) * z
    paths = np.empty((n_traj, t_h.size))
    paths[:, 0] = c0
    c = np.full(n_traj, float(c0))
    for k in range(n_steps):
        c = c + drift(c, params, volume_l) * dt_h + noise[:, k]
        paths[:, k + 1] = c
    return EnsembleResult(t_h * SECONDS_PER_HOUR, paths)


def simulate_sde_on_grid(c0: float, params: ModelParams, volume_l: float,
                         t_seconds: Iterable[float],
                         rng: np.random.Generator) -> np.ndarray:
    """Euler-Maruyama path on an arbitrary (possibly irregular) time grid.

    The first grid point carries c0; each step uses its own pairwise dt.
    """
    t_h = np.asarray(t_seconds, dtype=float) / SECONDS_PER_HOUR
    if t_h.size < 1:
        raise ModelError("empty time grid")
    dts = np.diff(t_h)
    if np.any(dts <= 0):
        raise ModelError("time grid must be strictly increasing")
    z = rng.standard_normal(dts.size)
    noise = params.sigma * np.sqrt(dts) * z
    out = np.empty(t_h.size)
    out[0] = c0
    c = float(c0)
    for k in range(dts.size):
        c = c + drift(c, params, volume_l) * dts[k] + noise[k]
        out[k + 1] = c
    return out

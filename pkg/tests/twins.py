"""Shared synthetic-data builders for the test suite.

Ground truth is always known here: traces come from the package's own
stochastic simulator under chamber-like or classroom-like conditions.
"""

from __future__ import annotations

from datetime import datetime
from zoneinfo import ZoneInfo

import numpy as np

from co2vent.model import Co2Series, ModelParams, ach_to_lps, simulate_sde

CHAMBER_VOLUME_L = 2.3 * 3.5 * 2.4 * 1000.0
CLASSROOM1_VOLUME_L = 9.4 * 6.6 * 3.47 * 1000.0

# (e_gen L/s, occupancy) rows for a three-season classroom campaign; the
# occupancies are what the per-person generation rate implies.
CLASSROOM1_DAYS = [
    (0.044, 9), (0.079, 17), (0.09, 19), (0.083, 18), (0.088, 19),
    (0.044, 9), (0.069, 15), (0.078, 17), (0.081, 17), (0.091, 19),
    (0.046, 10), (0.087, 19), (0.079, 17), (0.083, 18), (0.092, 20),
]


def injection_twin(ach=1.9, e_gen=0.013, sigma=72.7, c0=420.0, c_out=420.0,
                   horizon_h=4.0, dt_s=20.0, seed=0,
                   volume_l=CHAMBER_VOLUME_L) -> Co2Series:
    params = ModelParams(q_vent=ach_to_lps(ach, volume_l), c_out=c_out,
                         e_gen=e_gen, sigma=sigma)
    return simulate_sde(c0, params, volume_l, horizon_h, dt_s / 3600.0, seed=seed)


def decay_twin(ach=1.9, sigma=30.0, c0=3000.0, c_out=420.0, horizon_h=2.5,
               dt_s=20.0, seed=0, volume_l=CHAMBER_VOLUME_L) -> Co2Series:
    params = ModelParams(q_vent=ach_to_lps(ach, volume_l), c_out=c_out,
                         e_gen=0.0, sigma=sigma)
    return simulate_sde(c0, params, volume_l, horizon_h, dt_s / 3600.0, seed=seed)


def classroom_day(day: int, seed: int, ach=0.35, n_people=9, c_out=430.0,
                  sigma=30.0, month=10, year=2020,
                  tz="America/Montreal") -> Co2Series:
    """One school day at 1-minute sampling: flat from 07:00, emission from
    08:30 to 11:30 (students present), decay until 16:00."""
    volume_l = CLASSROOM1_VOLUME_L
    e = n_people * 0.0047
    zone = ZoneInfo(tz)
    start = datetime(year, month, day, 7, 0, tzinfo=zone).timestamp()
    t = start + np.arange(0, 9 * 3600, 60.0)
    rng = np.random.default_rng(seed)
    occupied = ((t - start) >= 1.5 * 3600) & ((t - start) < 4.5 * 3600)
    q = ach_to_lps(ach, volume_l)
    c = np.empty(t.size)
    c[0] = 450.0
    for k in range(t.size - 1):
        dt_h = (t[k + 1] - t[k]) / 3600.0
        e_k = e if occupied[k] else 0.0
        drift = ((c_out - c[k]) * q + e_k * 1e6) * 3600.0 / volume_l
        c[k + 1] = c[k] + drift * dt_h + sigma * np.sqrt(dt_h) * rng.standard_normal()
    return Co2Series(t, c)

"""Built-in synthetic chamber scenarios: tracer-gas decay and constant
injection under known ventilation, emission and noise levels.

These mirror a standard airtight-chamber protocol (volume 19.32 m3,
20-second sampling): three decay runs at different air-change rates, then
constant injection at two release rates with two fan regimes whose noise
scales differ.  Useful as ground-truth fixtures for recovery tests.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ModelParams, RoomGeometry, ach_to_lps

CHAMBER = RoomGeometry(width_m=2.3, length_m=3.5, height_m=2.4)


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    kind: str              # "decay" | "injection"
    ach: float
    e_gen_lps: float
    sigma: float
    c0_ppm: float
    c_out_ppm: float
    horizon_h: float
    dt_s: float = 20.0
    geometry: RoomGeometry = CHAMBER

    @property
    def volume_l(self) -> float:
        return self.geometry.volume_l

    def params(self) -> ModelParams:
        return ModelParams(q_vent=ach_to_lps(self.ach, self.volume_l),
                           c_out=self.c_out_ppm, e_gen=self.e_gen_lps,
                           sigma=self.sigma)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "ach": self.ach,
                "e_gen_lps": self.e_gen_lps, "sigma": self.sigma,
                "c0_ppm": self.c0_ppm, "c_out_ppm": self.c_out_ppm,
                "horizon_h": self.horizon_h, "dt_s": self.dt_s,
                "geometry": self.geometry.to_dict()}


PRESETS = {p.name: p for p in (
    ScenarioPreset("test1", "decay", ach=1.9, e_gen_lps=0.0, sigma=30.0,
                   c0_ppm=3000.0, c_out_ppm=420.0, horizon_h=2.5),
    ScenarioPreset("test2", "decay", ach=1.51, e_gen_lps=0.0, sigma=30.0,
                   c0_ppm=3000.0, c_out_ppm=420.0, horizon_h=3.0),
    ScenarioPreset("test3", "decay", ach=0.53, e_gen_lps=0.0, sigma=30.0,
                   c0_ppm=4000.0, c_out_ppm=420.0, horizon_h=6.0),
    ScenarioPreset("test4", "injection", ach=1.9, e_gen_lps=0.013, sigma=72.7,
                   c0_ppm=420.0, c_out_ppm=420.0, horizon_h=4.0),
    ScenarioPreset("test5", "injection", ach=1.9, e_gen_lps=0.013, sigma=75.4,
                   c0_ppm=420.0, c_out_ppm=420.0, horizon_h=4.0),
    ScenarioPreset("test6", "injection", ach=1.9, e_gen_lps=0.026, sigma=157.3,
                   c0_ppm=420.0, c_out_ppm=420.0, horizon_h=4.0),
    ScenarioPreset("test7", "injection", ach=1.9, e_gen_lps=0.026, sigma=48.6,
                   c0_ppm=420.0, c_out_ppm=420.0, horizon_h=4.0),
)}


def get_preset(name: str) -> ScenarioPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}; available: {sorted(PRESETS)}") from None

"""Run configuration: one JSON document, schema-validated up front.

Unknown keys are rejected everywhere so a typo cannot silently fall back
to a default.
"""

from __future__ import annotations

import hashlib
import json
from datetime import date, time
from typing import Optional

from pydantic import (BaseModel, ConfigDict, Field, field_validator,
                      model_validator)

from .assessment import EcaPolicy, MitigationScenario
from .inference import SamplerConfig
from .model import RoomGeometry
from .priors import PriorSet, PriorSpec


class ConfigError(ValueError):
    """Configuration failed validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryCfg(_Strict):
    width_m: float = Field(gt=0)
    length_m: float = Field(gt=0)
    height_m: float = Field(gt=0)

    def build(self) -> RoomGeometry:
        return RoomGeometry(width_m=self.width_m, length_m=self.length_m,
                            height_m=self.height_m)


class PriorCfg(_Strict):
    kind: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    mean: Optional[float] = None
    sd: Optional[float] = None

    @model_validator(mode="after")
    def _wellformed(self) -> "PriorCfg":
        try:
            PriorSpec.from_dict(self.model_dump(exclude_none=True))
        except Exception as exc:
            raise ValueError(str(exc)) from exc
        return self

    def build(self) -> PriorSpec:
        return PriorSpec.from_dict(self.model_dump(exclude_none=True))


class PriorsCfg(_Strict):
    q: PriorCfg = PriorCfg(kind="uniform", lower=0.0, upper=3.0)
    c_out: PriorCfg = PriorCfg(kind="uniform", lower=350.0, upper=550.0)
    e: PriorCfg = PriorCfg(kind="uniform", lower=0.0, upper=0.05)
    sigma: PriorCfg = PriorCfg(kind="uniform", lower=0.0, upper=500.0)

    def build(self) -> PriorSet:
        return PriorSet(q=self.q.build(), c_out=self.c_out.build(),
                        e=self.e.build(), sigma=self.sigma.build())


class SamplerCfg(_Strict):
    draws: int = 5000
    chains: int = 2
    burn_in: int = 500
    max_leapfrog: int = 16
    target_accept: float = 0.8

    def build(self) -> SamplerConfig:
        return SamplerConfig(**self.model_dump())


class PolicyCfg(_Strict):
    ecai_target_lps_per_person: float = 20.0
    min_outdoor_lps_per_person: float = 7.4
    per_person_gen_lps: float = 0.0047

    def build(self) -> EcaPolicy:
        return EcaPolicy(**self.model_dump())


class DeviceCfg(_Strict):
    label: str
    cadr_cfm: float = Field(ge=0)


class ScenarioCfg(_Strict):
    label: str
    devices: list[DeviceCfg] = []

    def build(self) -> MitigationScenario:
        return MitigationScenario.from_dict(self.model_dump())


class IngestionCfg(_Strict):
    timestamp_column: str = "timestamp"
    co2_column: str = "co2_ppm"
    timezone: str = "UTC"
    school_start: Optional[time] = None
    school_hours: tuple[time, time] = (time(8, 0), time(16, 0))
    seasons: Optional[dict[str, list[tuple[date, date]]]] = None
    rise_threshold_ppm_per_h: float = 100.0
    smoothing_window_s: float = 600.0
    min_prominence_ppm: float = 100.0
    sustained_decline_s: float = 900.0
    resample_dt_s: Optional[float] = None
    max_gap_s: float = 900.0

    @field_validator("timezone")
    @classmethod
    def _tz_exists(cls, v: str) -> str:
        from zoneinfo import ZoneInfo
        try:
            ZoneInfo(v)
        except Exception as exc:
            raise ValueError(f"unknown timezone {v!r}") from exc
        return v

    def column_map(self) -> dict:
        return {"timestamp": self.timestamp_column, "co2": self.co2_column}


class AssessmentCfg(_Strict):
    threshold_runs: int = 2000
    hdi_mass: float = 0.95


class RunConfig(_Strict):
    geometry: GeometryCfg
    priors: PriorsCfg = PriorsCfg()
    sampler: SamplerCfg = SamplerCfg()
    policy: PolicyCfg = PolicyCfg()
    scenarios: list[ScenarioCfg] = []
    ingestion: IngestionCfg = IngestionCfg()
    assessment: AssessmentCfg = AssessmentCfg()
    seed: int = Field(default=0, ge=0)

    def scenario_objects(self) -> list[MitigationScenario]:
        return [s.build() for s in self.scenarios]

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True,
                          separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    from pydantic import ValidationError
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc

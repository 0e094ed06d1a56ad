"""Request/response models for the HTTP service.

Data series travel as CSV text (`t_seconds,co2_ppm`) so the byte-exact
format is identical whether it comes from the CLI, a file or another
service.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from ..config import (AssessmentCfg, GeometryCfg, IngestionCfg, PolicyCfg,
                      PriorsCfg, SamplerCfg, ScenarioCfg)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HealthResponse(BaseModel):
    status: str


class VersionResponse(BaseModel):
    name: str
    version: str


class CustomScenario(_Strict):
    """Explicit simulation setup for when no preset fits."""

    kind: str = "injection"
    geometry: GeometryCfg
    ach: float = Field(ge=0)
    e_gen_lps: float = Field(default=0.0, ge=0)
    sigma: float = Field(default=0.0, ge=0)
    c0_ppm: float = Field(default=420.0, ge=0)
    c_out_ppm: float = Field(default=420.0, ge=0, le=5000)
    horizon_h: float = Field(default=3.0, gt=0)
    dt_s: float = Field(default=20.0, gt=0)


class SimulateRequest(_Strict):
    scenario: Optional[str] = None
    custom: Optional[CustomScenario] = None
    seed: int = Field(default=0, ge=0)


class SimulateResponse(BaseModel):
    trace_csv: str
    manifest: dict


class InferRequest(_Strict):
    series_csv: str
    volume_l: Optional[float] = Field(default=None, gt=0)
    geometry: Optional[GeometryCfg] = None
    priors: PriorsCfg = PriorsCfg()
    sampler: SamplerCfg = SamplerCfg()
    fixed: Optional[dict[str, float]] = None
    hdi_mass: float = Field(default=0.95, gt=0, lt=1)
    seed: int = Field(default=0, ge=0)


class InferResponse(BaseModel):
    posterior: dict
    summary: dict
    diagnostics: dict
    converged: bool


class PpcRequest(_Strict):
    posterior: dict
    series_csv: str
    volume_l: float = Field(gt=0)
    n_sims: int = Field(default=1000, ge=100)
    statistic: str = "mean"
    seed: int = Field(default=0, ge=0)


class PpcResponse(BaseModel):
    result: dict
    envelope_csv: str


class TrendRequest(_Strict):
    posterior: dict
    series_csv: str
    volume_l: float = Field(gt=0)
    n_sims: int = Field(default=100, ge=1)
    hdi_mass: float = Field(default=0.95, gt=0, lt=1)
    seed: int = Field(default=0, ge=0)


class TrendResponse(BaseModel):
    comparison: dict


class FilePayload(_Strict):
    name: str
    text: str


class AssessRequest(_Strict):
    files: list[FilePayload]
    geometry: GeometryCfg
    priors: PriorsCfg = PriorsCfg()
    sampler: SamplerCfg = SamplerCfg()
    policy: PolicyCfg = PolicyCfg()
    scenarios: list[ScenarioCfg] = []
    ingestion: IngestionCfg = IngestionCfg()
    assessment: AssessmentCfg = AssessmentCfg()
    seed: int = Field(default=0, ge=0)


class AssessResponse(BaseModel):
    report: dict
    n_segments: int
    all_converged: bool


class ThresholdsRequest(_Strict):
    e_gen_lps: float = Field(ge=0)
    c_out_ppm: float = Field(ge=0, le=5000)
    sigma: float = Field(ge=0)
    occupancy: int = Field(ge=1)
    volume_l: float = Field(gt=0)
    policy: PolicyCfg = PolicyCfg()
    cadr_grid_cfm: list[float]
    n_runs: int = Field(default=2000, ge=100)
    seed: int = Field(default=0, ge=0)


class ThresholdsResponse(BaseModel):
    rows: list[dict]
    fits: dict
    thresholds_csv: str

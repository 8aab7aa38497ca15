"""
Pydantic schemas for experiment configs, CSV rows and manifests.
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ExperimentConfig(BaseModel):
    """Validated parameters of one CLI command."""

    model_config = ConfigDict(extra="forbid")

    command: str
    domain: Optional[str] = None
    h: Optional[str] = None
    m: List[int] = Field(default_factory=list)
    p: Optional[float] = None
    q: Optional[float] = None
    depth: Optional[int] = Field(default=None, ge=0)
    samples: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    output: str
    threads: Optional[int] = Field(default=None, ge=1)
    extra: Dict[str, Any] = Field(default_factory=dict)


class DensityRow(BaseModel):
    """One row of the density-experiment CSV."""
    m: int
    h: float
    err_total: float
    err_lp: float
    err_grad: float
    localized_energy: float
    lip_um: float
    runtime_ms: float


class SeriesRow(BaseModel):
    """One row of an energy or series experiment CSV."""
    i: int
    term: float
    partial_sum: float
    closed_form_ratio: float


class SweepRow(BaseModel):
    """Estimate against a swept parameter (level, depth or resolution)."""
    parameter: str
    value: float
    estimate: float


class Manifest(BaseModel):
    """Output manifest: config echo, results and written files."""
    app: str
    version: str
    config: ExperimentConfig
    results: Dict[str, Any] = Field(default_factory=dict)
    files: List[str] = Field(default_factory=list)


class CubeRow(BaseModel):
    """One Whitney cube in the cube-list export."""
    level: int
    corner: str
    side: float
    distance: float


class VertexRow(BaseModel):
    """One vertex of an exported path."""
    index: int
    x: float
    y: float
    z: Optional[float] = None

"""
Pydantic schemas for spec files, reports and experiment outputs.
"""
from qhgeo.schemas.domain import (
    DomainKind,
    DomainSpec,
    BitmapSidecar,
)
from qhgeo.schemas.reports import (
    CheckResult,
    ValidationReport,
    HyperbolicityReport,
    SobolevNorm,
    ChainReport,
    TraceVariation,
    CurveCondition,
    StripEnergy,
    PorosityCheck,
)
from qhgeo.schemas.experiments import (
    ExperimentConfig,
    DensityRow,
    SeriesRow,
    SweepRow,
    Manifest,
    CubeRow,
    VertexRow,
)

__all__ = [
    # Domains
    "DomainKind",
    "DomainSpec",
    "BitmapSidecar",
    # Reports
    "CheckResult",
    "ValidationReport",
    "HyperbolicityReport",
    "SobolevNorm",
    "ChainReport",
    "TraceVariation",
    "CurveCondition",
    "StripEnergy",
    "PorosityCheck",
    # Experiments
    "ExperimentConfig",
    "DensityRow",
    "SeriesRow",
    "SweepRow",
    "Manifest",
    "CubeRow",
    "VertexRow",
]

"""
Application configuration management.
"""
import os
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from QHGEO_* environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="QHGEO_",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "qhgeo"
    OUTPUT_DIR: Path = Field(default=Path("outputs"))
    SEED: int = 0

    # Workers
    THREADS: Optional[int] = Field(default=None, ge=1, description="Worker cap")

    # Dilation multipliers, all scaled by sqrt(n) * C1
    U_FACTOR: float = 5.0
    BLOCK_FACTOR: float = 25.0
    COVER_FACTOR: float = 60.0
    LAYER_FACTOR: float = 70.0
    PIECE_FACTOR: float = 71.0

    # Validator caps
    SIDE_RATIO_CAP: float = 16.0
    # Unset: derived per scale from n, C1 and the boundary side ratio
    OVERLAP_CAP: Optional[int] = Field(default=None, ge=1)
    OVERLAP_FRACTION_CAP: float = 0.01

    # Automatic C1: margin below the largest admissible value, then a ceiling
    C1_MARGIN: float = Field(default=0.95, gt=0, lt=1)
    C1_CEILING: float = Field(default=0.6, gt=0)

    # Partition of unity: cut-offs fall from 1 to 0 over at least this many cells
    TRANSITION_CELLS: float = Field(default=2.0, ge=1)

    # Sampling
    CHAIN_SAMPLES: int = 32
    GEODESIC_PROBES: int = 5

    # Counterexample numerics
    CURVE_CONSTANT: float = 100.0
    SERIES_TERMS: int = 400
    QUADRATURE_TOL: float = 0.01

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = Field(default="text", pattern="^(text|json)$")


# Global settings instance
settings = Settings()


def worker_count(threads: Optional[int] = None) -> int:
    """
    Resolve the worker cap for parallel sections.

    Args:
        threads: Explicit cap (CLI flag); falls back to QHGEO_THREADS, then cpu count

    Returns:
        Number of workers, at least 1
    """
    if threads is not None:
        return max(1, int(threads))
    if settings.THREADS is not None:
        return settings.THREADS
    return max(1, os.cpu_count() or 1)

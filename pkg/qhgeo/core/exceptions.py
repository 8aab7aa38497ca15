"""
Error hierarchy with machine-readable records.
"""
from typing import Any, Dict, Optional


class QhgeoError(Exception):
    """Base error; carries a detail message and a process exit code."""

    exit_code: int = 1

    def __init__(self, detail: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        self.context = context or {}

    def to_record(self) -> Dict[str, Any]:
        """Return the error record written to error.json."""
        return {
            "error": type(self).__name__,
            "detail": self.detail,
            "exit_code": self.exit_code,
            "context": self.context,
        }


class ConfigurationError(QhgeoError):
    """Bad arguments, malformed spec files or invalid parameters."""

    exit_code = 2


class DomainError(QhgeoError):
    """Domain construction failed (empty interior, disconnected occupancy)."""


class PointOutsideDomainError(QhgeoError):
    """A query point is not within h*sqrt(n) of an occupied cell."""


class ResolutionError(QhgeoError):
    """The grid is too coarse for the requested construction."""


class ScaleTooSmallError(QhgeoError):
    """The scale m is too small for the core construction."""


class PartitionDefectError(QhgeoError):
    """The raw partition sum dropped below one at some cell."""


class CantorConstructionError(QhgeoError):
    """A Cantor-type construction violated its admissibility conditions."""


class ValidationFailure(QhgeoError):
    """A validator report contains failed checks."""

    def __init__(self, detail: str, report_path: Optional[str] = None,
                 context: Optional[Dict[str, Any]] = None):
        super().__init__(detail, context)
        self.report_path = report_path

    def to_record(self) -> Dict[str, Any]:
        record = super().to_record()
        record["report_path"] = self.report_path
        return record

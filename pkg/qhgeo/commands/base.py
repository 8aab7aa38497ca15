"""
Shared plumbing for subcommands: common flags, domain loading and output files.
"""
import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from qhgeo.core.config import settings
from qhgeo.core.exceptions import ConfigurationError, ValidationFailure
from qhgeo.schemas.experiments import ExperimentConfig
from qhgeo.schemas.reports import ValidationReport
from qhgeo.services.domain import DiscreteDomain, build_domain
from qhgeo.utils.io import load_domain_spec, write_json
from qhgeo.utils.parsing import parse_rational
import logging

logger = logging.getLogger(__name__)


@dataclass
class CommandContext:
    """Parsed arguments, the validated config and the files written so far."""

    args: argparse.Namespace
    config: ExperimentConfig
    output: Path
    files: List[str] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)

    def path(self, name: str) -> Path:
        """Record and return an output path."""
        self.files.append(name)
        return self.output / name

    @property
    def threads(self) -> Optional[int]:
        return self.config.threads

    def domain(self) -> DiscreteDomain:
        """Load --domain at --h."""
        if not self.config.domain or not self.config.h:
            raise ConfigurationError("This command needs --domain and --h")
        spec_path = Path(self.config.domain)
        spec = load_domain_spec(spec_path)
        dom = build_domain(spec, parse_rational(self.config.h), base_dir=spec_path.parent)
        self.results["domain"] = {
            "name": dom.name,
            "dimension": dom.dimension,
            "cells": dom.node_count,
            "h": dom.h,
        }
        return dom

    def report(self, name: str, report: ValidationReport) -> None:
        """Write a validation report; raise if it has failures."""
        target = self.path(name)
        write_json(target, report)
        if not report.passed:
            failed = [check.name for check in report.failures()]
            logger.error(f"{report.subject} failed: {failed}")
            raise ValidationFailure(
                f"{report.subject} failed checks: {', '.join(failed)}",
                report_path=str(target),
                context={"failed": failed},
            )


def add_common(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every subcommand."""
    parser.add_argument("--output", default=str(settings.OUTPUT_DIR), help="Output directory")
    parser.add_argument("--seed", type=int, default=settings.SEED, help="Sampling seed")
    parser.add_argument("--threads", type=int, default=None, help="Worker cap")
    parser.add_argument("--log-level", default=None, help="Log level override")


def add_domain(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--domain", required=True, help="Domain spec file")
    parser.add_argument("--h", required=True, help="Grid spacing, e.g. 1/256")

"""
Command-line entry point.

Every run writes manifest.json into --output on success and error.json on
failure. Exit codes: 0 success, 1 validation or computation failure,
2 bad arguments or configuration.
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from qhgeo import __version__
from qhgeo.commands import register_analysis, register_counterexample, register_geometry
from qhgeo.commands.base import CommandContext
from qhgeo.core.config import settings
from qhgeo.core.exceptions import ConfigurationError, QhgeoError, ValidationFailure
from qhgeo.core.logging import setup_logging
from qhgeo.schemas.experiments import ExperimentConfig, Manifest
from qhgeo.utils.io import write_json
from qhgeo.utils.parsing import parse_range
import logging

logger = logging.getLogger(__name__)

# Namespace keys that map onto ExperimentConfig fields; the rest go to extra.
CONFIG_KEYS = ("domain", "h", "p", "q", "depth", "samples", "seed", "output", "threads")
INTERNAL_KEYS = {"command", "kind", "handler", "log_level", "m"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhgeo", description=settings.APP_NAME)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_geometry(subparsers)
    register_analysis(subparsers)
    register_counterexample(subparsers)
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Validate parsed arguments into an ExperimentConfig.

    Raises:
        ConfigurationError: If a value is out of range or malformed
    """
    values: Dict[str, Any] = {key: getattr(args, key) for key in CONFIG_KEYS if hasattr(args, key)}
    command = args.command
    if getattr(args, "kind", None):
        command = f"{command} {args.kind}"
    values["command"] = command
    if getattr(args, "m", None):
        values["m"] = parse_range(args.m)
    if values.get("threads") is None:
        values["threads"] = settings.THREADS
    values["extra"] = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in INTERNAL_KEYS and key not in CONFIG_KEYS
    }
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        problems = [f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigurationError(f"Invalid parameters: {'; '.join(problems)}", context={"errors": problems})


def _write_error(output: Path, error: QhgeoError) -> None:
    try:
        output.mkdir(parents=True, exist_ok=True)
        write_json(output / "error.json", error.to_record())
    except OSError as e:
        logger.error(f"Could not write error.json to {output}: {e}")


def _requested_output(argv: Sequence[str]) -> Path:
    """The --output value from raw argv, for runs argparse rejected."""
    for i, token in enumerate(argv):
        if token == "--output" and i + 1 < len(argv):
            return Path(argv[i + 1])
        if token.startswith("--output="):
            return Path(token.split("=", 1)[1])
    return Path(settings.OUTPUT_DIR)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run one subcommand and return the process exit code.

    Args:
        argv: Arguments without the program name, defaults to sys.argv[1:]

    Returns:
        0 on success, the error's exit code otherwise
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help/--version
        code = e.code if isinstance(e.code, int) else 2
        if code != 0:
            raw = list(sys.argv[1:] if argv is None else argv)
            _write_error(_requested_output(raw), ConfigurationError(
                "Invalid command line, see usage above", context={"argv": raw}))
        return code

    setup_logging(args.log_level)
    output = Path(args.output)

    try:
        config = build_config(args)
        output.mkdir(parents=True, exist_ok=True)
        ctx = CommandContext(args=args, config=config, output=output)
        logger.info(f"Running {config.command} into {output}")
        results = args.handler(ctx)

        files: List[str] = sorted(set(ctx.files) | {"manifest.json"})
        manifest = Manifest(
            app=settings.APP_NAME,
            version=__version__,
            config=config,
            results=results,
            files=files,
        )
        write_json(output / "manifest.json", manifest)
        logger.info(f"{config.command} finished, {len(files)} files written")
        return 0

    except ValidationFailure as e:
        logger.error(f"Validation failed: {e.detail} (report: {e.report_path})")
        _write_error(output, e)
        return e.exit_code
    except QhgeoError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        _write_error(output, e)
        return e.exit_code
    except OSError as e:
        error = QhgeoError(f"I/O error: {e}")
        logger.error(error.detail)
        _write_error(output, error)
        return error.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

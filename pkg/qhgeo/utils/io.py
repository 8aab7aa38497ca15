"""
File input and output: spec files, bitmaps, CSV, JSON and grid exports.
"""
import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import dotenv_values
from PIL import Image
from pydantic import BaseModel, ValidationError

from qhgeo.core.exceptions import ConfigurationError
from qhgeo.schemas.domain import BitmapSidecar, DomainSpec
from qhgeo.utils.parsing import parse_bool, parse_floats, parse_groups, parse_rational
import logging

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_key_values(path: PathLike) -> Dict[str, str]:
    """Read a KEY=VALUE file; keys are lower-cased."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"File not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower(): (value or "").strip() for key, value in values.items()}


def load_domain_spec(path: PathLike) -> DomainSpec:
    """
    Load a domain spec file.

    Args:
        path: KEY=VALUE file with a `kind` key and per-kind parameters

    Returns:
        Validated DomainSpec with file references resolved against the spec's directory

    Raises:
        ConfigurationError: Unknown keys, malformed numbers or invalid parameters
    """
    path = Path(path)
    raw = read_key_values(path)
    base = path.parent
    data: Dict[str, Any] = {}
    for key, value in raw.items():
        if key in ("kind",):
            data[key] = value
        elif key in ("bounds", "center", "z_range"):
            data[key] = parse_floats(value)
        elif key in ("radius", "inner_radius"):
            data[key] = float(parse_rational(value))
        elif key in ("boxes", "disks"):
            data[key] = parse_groups(value)
        elif key == "allow_pruning":
            data[key] = parse_bool(value)
        elif key == "path":
            data[key] = (base / value).resolve()
        elif key == "slice":
            data[key] = load_domain_spec(base / value)
        else:
            raise ConfigurationError(f"Unknown key {key!r} in {path}")
    try:
        spec = DomainSpec(**data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid domain spec {path}: {e}") from e
    logger.debug(f"Loaded domain spec {path} ({spec.kind})")
    return spec


def read_bitmap(path: PathLike) -> Tuple[np.ndarray, BitmapSidecar]:
    """
    Read a PGM (P5) or PNG bitmap and its sidecar.

    Pixels >= 128 are inside. The sidecar `<image>.meta` holds `origin = x,y`
    (centre of the bottom-left pixel) and `spacing`. The mask is returned
    indexed [x, y] with y increasing upwards.
    """
    path = Path(path)
    sidecar_path = path.with_name(path.name + ".meta")
    meta = read_key_values(sidecar_path)
    try:
        sidecar = BitmapSidecar(
            origin=parse_floats(meta.get("origin", "")),
            spacing=float(parse_rational(meta.get("spacing", "0"))),
        )
    except ValidationError as e:
        raise ConfigurationError(f"Invalid sidecar {sidecar_path}: {e}") from e
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("L"))
    except OSError as e:
        raise ConfigurationError(f"Cannot read bitmap {path}: {e}") from e
    mask = pixels >= 128
    return np.ascontiguousarray(mask[::-1, :].T), sidecar


def write_bitmap(path: PathLike, mask: np.ndarray) -> None:
    """Write an [x, y] mask as a PGM/PNG (format from the suffix)."""
    pixels = (np.asarray(mask, dtype=bool).T[::-1, :] * 255).astype(np.uint8)
    Image.fromarray(pixels).save(path)


def write_grayscale(path: PathLike, values: np.ndarray) -> None:
    """Write a 2-D [x, y] field in [0, 1] as 8-bit grayscale."""
    clipped = np.clip(np.nan_to_num(values, nan=0.0), 0.0, 1.0)
    pixels = np.round(clipped.T[::-1, :] * 255).astype(np.uint8)
    Image.fromarray(pixels).save(path)


def _format(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: PathLike, rows: Sequence[BaseModel],
              columns: Optional[List[str]] = None) -> None:
    """Write pydantic rows as CSV with shortest round-trip float text."""
    path = Path(path)
    if columns is None:
        columns = list(type(rows[0]).model_fields) if rows else []
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            data = row.model_dump()
            writer.writerow([_format(data[column]) for column in columns])
    logger.info(f"Wrote {len(rows)} rows to {path}")


def write_json(path: PathLike, payload: Union[BaseModel, Dict[str, Any]]) -> None:
    """Write JSON with sorted keys."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump()
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(value: Any) -> Any:
    # numpy scalars and arrays turn up inside free-form result dicts
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def write_label_grid(path: PathLike, labels: np.ndarray) -> None:
    """Write an int32 label grid as flat little-endian binary (C order)."""
    np.ascontiguousarray(labels, dtype="<i4").tofile(path)


def write_intervals(path: PathLike, intervals: Iterable[Tuple[float, float]]) -> None:
    """Write sorted interval endpoints, one `a b` pair per line."""
    with Path(path).open("w") as handle:
        for a, b in intervals:
            handle.write(f"{a!r} {b!r}\n")

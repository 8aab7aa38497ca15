"""
Parsers for CLI and spec-file values.
"""
from fractions import Fraction
from typing import List, Tuple

from qhgeo.core.exceptions import ConfigurationError


def parse_rational(text: str) -> Fraction:
    """Parse '1/256', '0.25' or '3' into an exact Fraction."""
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigurationError(f"Not a rational number: {text!r}") from e
    return value


def parse_range(text: str) -> List[int]:
    """Parse 'a..b' (inclusive), 'a,b,c' or a single integer."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ConfigurationError(f"Empty range: {text!r}")
            return list(range(lo_i, hi_i + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Not an integer range: {text!r}") from e


def parse_floats(text: str) -> List[float]:
    """Parse a comma-separated list of numbers (rationals allowed)."""
    return [float(parse_rational(part)) for part in str(text).split(",") if part.strip()]


def parse_point(text: str) -> Tuple[float, ...]:
    """Parse 'x,y' or 'x,y,z'."""
    values = parse_floats(text)
    if len(values) not in (2, 3):
        raise ConfigurationError(f"Expected a 2-D or 3-D point: {text!r}")
    return tuple(values)


def parse_groups(text: str) -> List[List[float]]:
    """Parse 'a,b,c; d,e,f' into lists of numbers."""
    return [parse_floats(group) for group in str(text).split(";") if group.strip()]


def parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off", ""):
        return False
    raise ConfigurationError(f"Not a boolean: {text!r}")

"""
Cantor-type sets, the Cantor step function and the 3-D counterexample domain.

The thin set C uses contraction ratios lambda_i with products P_i; the fat
set F removes gaps beta_i = (1 - lambda_{i+1}) P_i; E = C x F. For i >= i0
the ratios follow P_i = i^(3/(p-2)) 2^(-i(p-1)/(p-2)) exactly, so that
2^(i(1-p)) P_i^(2-p) = 1/i^3.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from qhgeo.core.config import settings
from qhgeo.core.exceptions import (
    CantorConstructionError,
    ConfigurationError,
    DomainError,
    ResolutionError,
)
from qhgeo.schemas.experiments import SeriesRow
from qhgeo.schemas.reports import (
    CurveCondition,
    PorosityCheck,
    StripEnergy,
    TraceVariation,
)
from qhgeo.services.approximation import GridFunction
from qhgeo.services.domain import DiscreteDomain, Point, domain_from_mask, to_fraction
import logging

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
MAX_THIN_DEPTH = 24
MAX_I0 = 100000


def _check_p(p: float) -> None:
    if not p > 2:
        raise ConfigurationError(f"The thin Cantor normalisation needs p > 2, got {p}")


def _log_target(p: float, i: int) -> float:
    """log of i^(3/(p-2)) 2^(-i(p-1)/(p-2))."""
    return 3.0 / (p - 2.0) * math.log(i) - i * (p - 1.0) / (p - 2.0) * LN2


def pidef_ratio(p: float, i: int) -> float:
    """
    Ratio P_i / P_{i-1} that keeps 2^(i(1-p)) P_i^(2-p) = 1/i^3.

    Equals 2^((p-1)/(2-p)) (i/(i-1))^(3/(p-2)).
    """
    _check_p(p)
    if i < 2:
        raise ConfigurationError(f"The ratio formula needs i >= 2, got {i}")
    return 2.0 ** ((p - 1.0) / (2.0 - p)) * (i / (i - 1.0)) ** (3.0 / (p - 2.0))


def default_i0(p: float) -> int:
    """
    Smallest i0 with P_{i0}^(1/i0) < 1/2 and every later ratio below 1/2.

    The ratio decreases in i, so checking i0 + 1 suffices.
    """
    _check_p(p)
    for i0 in range(1, MAX_I0):
        flat = math.exp(_log_target(p, i0) / i0)
        if 0 < flat < 0.5 and pidef_ratio(p, i0 + 1) < 0.5:
            return i0
    raise CantorConstructionError(f"No admissible i0 below {MAX_I0} for p={p}")


def cantor_lambda(p: float, i: int, i0: Optional[int] = None) -> float:
    """
    Contraction ratio lambda_i.

    Args:
        p: Exponent > 2
        i: Index >= 1
        i0: First normalised index (defaults to default_i0(p))

    Returns:
        P_{i0}^(1/i0) for i <= i0, the normalising ratio afterwards

    Raises:
        ConfigurationError: p <= 2 or i < 1
        CantorConstructionError: The requested i0 gives a ratio outside (0, 1/2)
    """
    _check_p(p)
    if i < 1:
        raise ConfigurationError(f"Ratio index must be >= 1, got {i}")
    i0 = default_i0(p) if i0 is None else i0
    if i <= i0:
        value = math.exp(_log_target(p, i0) / i0)
    else:
        value = pidef_ratio(p, i)
    if not 0 < value < 0.5:
        raise CantorConstructionError(
            f"lambda_{i} = {value:.6g} is not in (0, 1/2) for p={p}, i0={i0}",
            context={"p": p, "i": i, "i0": i0},
        )
    return value


@dataclass(frozen=True)
class CantorSpec:
    """Ratios lambda_1..lambda_{depth+1} and their products."""

    p: float
    depth: int
    lambdas: Tuple[float, ...]
    i0: Optional[int] = None

    def ratio(self, i: int) -> float:
        return self.lambdas[i - 1]

    @cached_property
    def _log_products(self) -> Tuple[float, ...]:
        logs = [0.0]
        for value in self.lambdas:
            logs.append(logs[-1] + math.log(value))
        return tuple(logs)

    @cached_property
    def _products(self) -> Tuple[float, ...]:
        out = [1.0]
        for value in self.lambdas:
            out.append(out[-1] * value)
        return tuple(out)

    @cached_property
    def _exact_products(self) -> Tuple[Fraction, ...]:
        out = [Fraction(1)]
        for value in self.lambdas:
            out.append(out[-1] * Fraction(value))
        return tuple(out)

    def product(self, i: int) -> float:
        """P_i (P_0 = 1)."""
        return self._products[i]

    def log_product(self, i: int) -> float:
        return self._log_products[i]

    def product_exact(self, i: int) -> Fraction:
        """P_i in exact rational arithmetic over the stored ratios."""
        return self._exact_products[i]

    def beta(self, i: int) -> float:
        return (1.0 - self.ratio(i + 1)) * self.product(i)

    def beta_exact(self, i: int) -> Fraction:
        return (1 - Fraction(self.ratio(i + 1))) * self.product_exact(i)

    def pidef_residual(self, i: int) -> float:
        """|i^3 2^(i(1-p)) P_i^(2-p) - 1|."""
        log_value = 3.0 * math.log(i) + i * (1.0 - self.p) * LN2 + (2.0 - self.p) * self.log_product(i)
        return abs(math.expm1(log_value))

    def extended(self, depth: int) -> "CantorSpec":
        """The same ratio rule carried to a larger depth."""
        if depth <= self.depth:
            return self
        if self.i0 is None:
            raise ConfigurationError(
                f"Explicit ratios only reach depth {self.depth}, {depth} requested"
            )
        return cantor_spec(self.p, depth, self.i0)


def cantor_spec(p: float, depth: int, i0: Optional[int] = None,
                lambdas: Optional[Sequence[float]] = None) -> CantorSpec:
    """
    Build a CantorSpec from the normalisation rule or explicit ratios.

    Args:
        p: Exponent > 2
        depth: Construction depth >= 0
        i0: First normalised index (rule only)
        lambdas: Explicit ratios lambda_1.. (at least depth + 1 of them)

    Raises:
        ConfigurationError: Bad p or depth, too few explicit ratios
        CantorConstructionError: A ratio outside (0, 1/2)
    """
    _check_p(p)
    if depth < 0:
        raise ConfigurationError(f"depth must be >= 0, got {depth}")
    if lambdas is not None:
        values = tuple(float(v) for v in lambdas)
        if len(values) < depth + 1:
            raise ConfigurationError(f"Need {depth + 1} ratios, got {len(values)}")
        for k, value in enumerate(values, start=1):
            if not 0 < value < 0.5:
                raise CantorConstructionError(f"lambda_{k} = {value} is not in (0, 1/2)")
        return CantorSpec(p=p, depth=depth, lambdas=values[:depth + 1], i0=None)

    i0 = default_i0(p) if i0 is None else int(i0)
    if i0 < 1:
        raise ConfigurationError(f"i0 must be >= 1, got {i0}")
    values = tuple(cantor_lambda(p, i, i0) for i in range(1, depth + 2))
    logger.debug(f"Cantor spec p={p} depth={depth} i0={i0}")
    return CantorSpec(p=p, depth=depth, lambdas=values, i0=i0)


@dataclass(frozen=True, eq=False)
class IntervalSet:
    """Sorted, pairwise disjoint closed intervals inside [0, 1]."""

    lo: np.ndarray
    hi: np.ndarray
    exact: Optional[Tuple[Tuple[Fraction, Fraction], ...]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise CantorConstructionError("Interval endpoints must be matching 1-D arrays")
        if self.lo.size:
            if np.any(self.hi < self.lo):
                raise CantorConstructionError("Interval with hi < lo")
            if np.any(self.lo[1:] <= self.hi[:-1]):
                raise CantorConstructionError("Intervals overlap or are unsorted")
            if self.lo[0] < 0 or self.hi[-1] > 1:
                raise CantorConstructionError("Intervals leave [0, 1]")

    @classmethod
    def from_exact(cls, pairs: Sequence[Tuple[Fraction, Fraction]]) -> "IntervalSet":
        pairs = tuple(sorted(pairs))
        lo = np.array([float(a) for a, _ in pairs])
        hi = np.array([float(b) for _, b in pairs])
        return cls(lo=lo, hi=hi, exact=pairs)

    def __len__(self) -> int:
        return int(self.lo.size)

    @property
    def lengths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def measure(self) -> float:
        if self.exact is not None:
            return float(self.exact_measure)
        return math.fsum(self.lengths.tolist())

    @property
    def exact_measure(self) -> Optional[Fraction]:
        if self.exact is None:
            return None
        return sum((b - a for a, b in self.exact), Fraction(0))

    def pairs(self) -> List[Tuple[float, float]]:
        return list(zip(self.lo.tolist(), self.hi.tolist()))

    def _left(self, x: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.lo, x, side="right") - 1

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = self._left(x)
        safe = np.clip(k, 0, max(len(self) - 1, 0))
        return (k >= 0) & (x <= self.hi[safe]) if len(self) else np.zeros(x.shape, dtype=bool)

    def distance(self, x) -> np.ndarray:
        """Distance from each x to the union of the intervals."""
        x = np.asarray(x, dtype=float)
        if not len(self):
            return np.full(x.shape, np.inf)
        k = self._left(x)
        left = np.clip(k, 0, len(self) - 1)
        right = np.clip(k + 1, 0, len(self) - 1)
        to_left = np.where(k >= 0, np.maximum(x - self.hi[left], 0.0), np.inf)
        to_right = np.where(k + 1 < len(self), np.maximum(self.lo[right] - x, 0.0), np.inf)
        inside = (k >= 0) & (x <= self.hi[left])
        return np.where(inside, 0.0, np.minimum(to_left, to_right))

    def gaps(self) -> List[Tuple[float, float]]:
        """Open complementary intervals between consecutive members."""
        return list(zip(self.hi[:-1].tolist(), self.lo[1:].tolist()))


def _thin_levels(spec: CantorSpec, depth: int) -> List[np.ndarray]:
    """Left endpoints of the 2^i level-i intervals, for i = 0..depth."""
    levels = [np.zeros(1)]
    for i in range(depth):
        step = spec.product(i) - spec.product(i + 1)
        lo = levels[-1]
        levels.append(np.stack([lo, lo + step], axis=1).ravel())
    return levels


def build_thin_cantor(spec: CantorSpec) -> IntervalSet:
    """
    The thin set C at level depth: 2^depth intervals of length P_depth.

    Raises:
        ConfigurationError: depth too large to enumerate
    """
    if spec.depth > MAX_THIN_DEPTH:
        raise ConfigurationError(f"Thin Cantor depth {spec.depth} exceeds {MAX_THIN_DEPTH}")
    lo = _thin_levels(spec, spec.depth)[-1]
    return IntervalSet(lo=lo, hi=lo + spec.product(spec.depth))


def box_dimension_estimate(p: float, i_from: int, i_to: int, i0: Optional[int] = None) -> float:
    """
    Slope of log(2^i) against log(1/P_i) over i_from..i_to.

    Tends to (p-2)/(p-1) as the window moves to large i.
    """
    if i_to <= i_from:
        raise ConfigurationError("Need i_to > i_from")
    spec = cantor_spec(p, i_to, i0)
    i = np.arange(i_from, i_to + 1)
    counts = i * LN2
    scales = np.array([-spec.log_product(k) for k in i])
    slope, _ = np.polyfit(scales, counts, 1)
    return float(slope)


def fat_cantor_measure(spec: CantorSpec, steps: Optional[int] = None) -> Fraction:
    """1 - (P_1 - P_{n+1}): measure of F_n by telescoping."""
    n = spec.depth if steps is None else steps
    return 1 - (spec.product_exact(1) - spec.product_exact(n + 1))


def build_fat_cantor(spec: CantorSpec, steps: Optional[int] = None) -> IntervalSet:
    """
    The fat set F_n after n splitting steps, in exact arithmetic.

    Each step splits one largest interval [a, b] into [a, a+r] and
    [a+r+beta_n, b] with r = (b - a - P_n) / 2, the tail sum of the gaps
    being P_n.

    Raises:
        CantorConstructionError: No interval is longer than the remaining tail
    """
    n_steps = spec.depth if steps is None else steps
    if n_steps > spec.depth:
        raise ConfigurationError(f"Fat Cantor steps {n_steps} exceed spec depth {spec.depth}")
    intervals: List[Tuple[Fraction, Fraction]] = [(Fraction(0), Fraction(1))]
    for n in range(1, n_steps + 1):
        tail = spec.product_exact(n)
        # one largest interval, leftmost on ties
        k = max(range(len(intervals)), key=lambda j: (intervals[j][1] - intervals[j][0], -j))
        a, b = intervals[k]
        if not b - a > tail:
            raise CantorConstructionError(
                f"Step {n}: largest interval {float(b - a):.6g} does not exceed tail {float(tail):.6g}",
                context={"step": n},
            )
        r = (b - a - tail) / 2
        gap = spec.beta_exact(n)
        intervals[k:k + 1] = [(a, a + r), (a + r + gap, b)]
    return IntervalSet.from_exact(intervals)


@dataclass(frozen=True, eq=False)
class RemovableSet:
    """E = C x F as a union of axis-parallel boxes."""

    spec: CantorSpec
    c: IntervalSet
    f: IntervalSet

    @property
    def box_count(self) -> int:
        return len(self.c) * len(self.f)

    @property
    def measure(self) -> float:
        return self.c.measure * self.f.measure

    def boxes(self) -> List[Tuple[float, float, float, float]]:
        return [(xa, xb, ya, yb) for xa, xb in self.c.pairs() for ya, yb in self.f.pairs()]

    def contains(self, x, y) -> np.ndarray:
        return self.c.contains(x) & self.f.contains(y)

    def distance(self, x, y) -> np.ndarray:
        """Euclidean distance to E; a product set separates into its factors."""
        return np.hypot(self.c.distance(x), self.f.distance(y))


def build_removable_set(spec: CantorSpec) -> RemovableSet:
    """E = C x F at the spec's depth."""
    removable = RemovableSet(spec=spec, c=build_thin_cantor(spec), f=build_fat_cantor(spec))
    logger.info(f"Removable set at depth {spec.depth}: {removable.box_count} boxes, "
                f"measure {removable.measure:.6g}")
    return removable


@dataclass(frozen=True, eq=False)
class StepFunctionField:
    """Cantor step function u on the plane minus E."""

    removable: RemovableSet
    gap_lo: np.ndarray
    gap_hi: np.ndarray
    gap_value: np.ndarray

    @property
    def depth(self) -> int:
        return self.removable.spec.depth

    def plateaus(self, y0: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closed intervals of the line y = y0 where u is constant, with their values."""
        dy = float(self.removable.f.distance(y0))
        lo = self.gap_lo + dy
        hi = self.gap_hi - dy
        keep = lo <= hi
        starts = np.concatenate([[-np.inf], lo[keep], [1.0]])
        ends = np.concatenate([[0.0], hi[keep], [np.inf]])
        values = np.concatenate([[0.0], self.gap_value[keep], [1.0]])
        return starts, ends, values

    def line(self, x, y0: float) -> np.ndarray:
        """
        u along y = y0.

        Raises:
            DomainError: Some (x, y0) lies in E
        """
        x = np.asarray(x, dtype=float)
        if np.any(self.removable.contains(x, y0)):
            raise DomainError(f"u is undefined on E (line y={y0})")
        starts, ends, values = self.plateaus(y0)
        k = np.searchsorted(starts, x, side="right") - 1
        nxt = np.minimum(k + 1, starts.size - 1)
        on_plateau = x <= ends[k]
        span = starts[nxt] - ends[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(on_plateau, 0.0, (x - ends[k]) / np.where(span > 0, span, 1.0))
        return np.where(on_plateau, values[k], values[k] + t * (values[nxt] - values[k]))

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
        out = np.empty(x.shape)
        for y0 in np.unique(y):
            rows = y == y0
            out[rows] = self.line(x[rows], float(y0))
        return out


def step_function(removable: RemovableSet) -> StepFunctionField:
    """Plateau gaps of all levels below the depth, sorted by position."""
    spec = removable.spec
    lows, highs, values = [], [], []
    for i, lo in enumerate(_thin_levels(spec, spec.depth)[:-1]):
        lows.append(lo + spec.product(i + 1))
        highs.append(lo + spec.product(i) - spec.product(i + 1))
        values.append((2.0 * np.arange(lo.size) + 1.0) / 2.0 ** (i + 1))
    if lows:
        gap_lo, gap_hi, gap_value = (np.concatenate(a) for a in (lows, highs, values))
        order = np.argsort(gap_lo, kind="stable")
        gap_lo, gap_hi, gap_value = gap_lo[order], gap_hi[order], gap_value[order]
    else:
        gap_lo = gap_hi = gap_value = np.zeros(0)
    return StepFunctionField(removable, gap_lo, gap_hi, gap_value)


def cantor_step_value(step: StepFunctionField, x: float, y: float) -> float:
    """
    u(x, y) off E.

    Raises:
        DomainError: (x, y) in E
    """
    return float(step.line(np.array([x]), y)[0])


def line_lipschitz(step: StepFunctionField, y0: float) -> float:
    """
    Lipschitz constant of u along y = y0, for y0 off F.

    Raises:
        DomainError: y0 in F, where u is a Cantor function
    """
    if bool(step.removable.f.contains(y0)):
        raise DomainError(f"y0={y0} lies in F")
    starts, ends, values = step.plateaus(y0)
    spans = starts[1:] - ends[:-1]
    rises = values[1:] - values[:-1]
    slopes = np.where(spans > 0, rises / np.where(spans > 0, spans, 1.0), 0.0)
    return float(slopes.max()) if slopes.size else 0.0


def trace_variation(step: StepFunctionField, y0: float) -> TraceVariation:
    """
    Variation of u along y = y0 in F and the measure where it is not constant.

    The plateaus are the dyadic values (2j-1)/2^(i+1); the increments live on
    C, of measure 2^depth P_depth.

    Raises:
        DomainError: y0 not in F
    """
    if not bool(step.removable.f.contains(y0)):
        raise DomainError(f"y0={y0} is not in F")
    levels = [Fraction(0)] + [Fraction(v) for v in step.gap_value.tolist()] + [Fraction(1)]
    variation = sum((abs(b - a) for a, b in zip(levels, levels[1:])), Fraction(0))
    spec = step.removable.spec
    support = 2.0 ** spec.depth * spec.product(spec.depth)
    return TraceVariation(
        variation=float(variation),
        variation_exact=str(variation),
        support_measure=support,
        plateau_count=int(step.gap_value.size),
    )


def strip_energy(spec: CantorSpec, q: float, i: int, steps: Optional[int] = None) -> StripEnergy:
    """
    Integral of |grad u~|^q over the 2^i model components of strip i.

    u~ = 2^(-i-1) x / y on {|x| < y, y_lo < y < y_hi}. Midpoint rule in
    (y, x/y) coordinates, doubled until the relative change is below
    QUADRATURE_TOL.

    Raises:
        ConfigurationError: q < 1, i < 1 or i beyond the spec depth
    """
    if q < 1:
        raise ConfigurationError(f"q must be >= 1, got {q}")
    if not 1 <= i <= spec.depth:
        raise ConfigurationError(f"Strip index {i} outside 1..{spec.depth}")
    y_lo = 0.5 * (1.0 - spec.ratio(i + 1)) * spec.product(i)
    y_hi = 0.5 * (1.0 - spec.ratio(i)) * spec.product(i - 1)
    scale = 2.0 ** (-i - 1)

    def integrate(n: int) -> float:
        y = y_lo + (np.arange(n) + 0.5) * (y_hi - y_lo) / n
        t = -1.0 + (np.arange(n) + 0.5) * 2.0 / n
        grad = scale / y[:, None] * np.sqrt(1.0 + t[None, :] ** 2)
        # dx = y dt
        cell = (y_hi - y_lo) / n * (2.0 / n)
        return float((grad ** q * y[:, None]).sum() * cell)

    n = steps or 16
    value = integrate(n)
    if steps is None:
        while n < 4096:
            finer = integrate(2 * n)
            n *= 2
            if abs(finer - value) <= settings.QUADRATURE_TOL * abs(finer):
                value = finer
                break
            value = finer
    total = 2.0 ** i * value
    bound = 2.0 ** (i * (1.0 - q)) * spec.product(i) ** (2.0 - q)
    return StripEnergy(i=i, q=q, integral=total, bound=bound, ratio=total / bound, steps=n)


def gradient_energy(spec: CantorSpec, q: float, terms: int) -> List[SeriesRow]:
    """
    Partial sums of sum_i i 2^(i(1-q)) P_i^(2-q).

    closed_form_ratio is term_i * i^2, which is 1 for i >= i0 when q = p.
    """
    if q < 1:
        raise ConfigurationError(f"q must be >= 1, got {q}")
    if terms < 1:
        raise ConfigurationError(f"Need at least one term, got {terms}")
    spec = spec.extended(terms)
    rows: List[SeriesRow] = []
    partial = 0.0
    for i in range(1, terms + 1):
        term = math.exp(math.log(i) + i * (1.0 - q) * LN2 + (2.0 - q) * spec.log_product(i))
        partial += term
        rows.append(SeriesRow(i=i, term=term, partial_sum=partial, closed_form_ratio=term * i * i))
    return rows


def tail_estimate(rows: Sequence[SeriesRow]) -> float:
    """Geometric extrapolation of the remaining tail from the last two terms."""
    if len(rows) < 2:
        return math.inf
    ratio = rows[-1].term / rows[-2].term if rows[-2].term > 0 else math.inf
    if ratio >= 1:
        return math.inf
    return rows[-1].term * ratio / (1.0 - ratio)


def curve_criterion(p: float, q: float) -> float:
    """(p-1)/(p-2) * (q-2)/(q-1); the curve series converges iff this exceeds 1."""
    _check_p(p)
    if not q > 2:
        raise ConfigurationError(f"Curve condition needs q > 2, got {q}")
    return (p - 1.0) / (p - 2.0) * (q - 2.0) / (q - 1.0)


def curve_series(p: float, q: float, terms: int) -> List[SeriesRow]:
    """
    Partial sums of sum_i i^(3/(p-2) (q-2)/(q-1)) 2^(i (1 - criterion)).

    closed_form_ratio is the term over its geometric factor.
    """
    criterion = curve_criterion(p, q)
    power = 3.0 / (p - 2.0) * (q - 2.0) / (q - 1.0)
    rows: List[SeriesRow] = []
    partial = 0.0
    for i in range(1, terms + 1):
        geometric = 2.0 ** (i * (1.0 - criterion))
        term = i ** power * geometric
        partial += term
        rows.append(SeriesRow(i=i, term=term, partial_sum=partial, closed_form_ratio=term / geometric))
    return rows


def is_cauchy(rows: Sequence[SeriesRow], tol: Optional[float] = None) -> bool:
    """Second-half increment small against the partial sum, with decaying terms."""
    if len(rows) < 4:
        return False
    tol = settings.QUADRATURE_TOL if tol is None else tol
    half = rows[len(rows) // 2 - 1].partial_sum
    last = rows[-1].partial_sum
    if not math.isfinite(last):
        return False
    return last - half <= tol * max(half, 1e-300) and rows[-1].term < rows[-2].term


def _simpson(values: np.ndarray, length: float) -> float:
    n = values.size - 1
    weights = np.ones(values.size)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return float(length / (3.0 * n) * (weights * values).sum())


def _segment_integral(removable: RemovableSet, a: np.ndarray, b: np.ndarray, exponent: float) -> float:
    length = float(np.linalg.norm(b - a))
    if length == 0:
        return 0.0

    def integrate(n: int) -> float:
        t = np.linspace(0.0, 1.0, n + 1)
        points = a[None, :] + t[:, None] * (b - a)[None, :]
        dist = removable.distance(points[:, 0], points[:, 1])
        return _simpson(dist ** exponent, length)

    n = 64
    value = integrate(n)
    while n < 2 ** 16:
        n *= 2
        finer = integrate(n)
        if abs(finer - value) <= settings.QUADRATURE_TOL * abs(finer):
            return finer
        value = finer
    return value


def _off_f(removable: RemovableSet, y: float) -> float:
    """y itself when off F, otherwise the nearest midpoint of a gap of F."""
    f = removable.f
    if not bool(f.contains(y)):
        return y
    gaps = f.gaps()
    margin = min((b - a) / 2.0 for a, b in gaps) if gaps else 0.5
    candidates = [(a + b) / 2.0 for a, b in gaps] + [f.lo[0] - margin, f.hi[-1] + margin]
    return min(candidates, key=lambda c: abs(c - y))


def curve_path(removable: RemovableSet, z1: Point, z2: Point) -> Tuple[np.ndarray, int]:
    """
    Polyline from z1 to z2 avoiding E.

    Endpoints on a line y in F first move vertically off F; the curve then
    runs horizontally to the midpoint x0 of a level-n interval of C with
    P_{n+1} <= |z1 - z2| <= P_n, vertically along x = x0, and back.

    Returns:
        Vertices and the scale level n
    """
    spec = removable.spec
    p1, p2 = np.asarray(z1, dtype=float), np.asarray(z2, dtype=float)
    gap = float(np.linalg.norm(p1 - p2))
    n = 0
    while n + 1 < spec.depth and spec.product(n + 1) > gap:
        n += 1
    levels = _thin_levels(spec, n)
    centers = levels[-1] + spec.product(n) / 2.0
    target = (p1[0] + p2[0]) / 2.0
    x0 = float(centers[int(np.argmin(np.abs(centers - target)))])
    y1, y2 = _off_f(removable, p1[1]), _off_f(removable, p2[1])
    vertices = np.array([
        p1, (p1[0], y1), (x0, y1), (x0, y2), (p2[0], y2), p2,
    ], dtype=float)
    return vertices, n


def curve_condition(spec: CantorSpec, q: float, z1: Point, z2: Point,
                    removable: Optional[RemovableSet] = None) -> CurveCondition:
    """
    Integral of dist(z, E)^(1/(1-q)) along the avoiding curve against
    C(p, q) |z1 - z2|^((q-2)/(q-1)).

    Raises:
        ConfigurationError: q <= 2, or depth 0 where C has no gaps
        DomainError: An endpoint lies on E
    """
    criterion = curve_criterion(spec.p, q)
    if spec.depth < 1:
        raise ConfigurationError("The curve condition needs depth >= 1")
    removable = removable or build_removable_set(spec)
    for z in (z1, z2):
        if bool(removable.contains(z[0], z[1])):
            raise DomainError(f"Endpoint {tuple(z)} lies on E")
    converges = is_cauchy(curve_series(spec.p, q, settings.SERIES_TERMS))
    gap = float(np.linalg.norm(np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float)))
    if gap == 0:
        return CurveCondition(integral=0.0, bound=0.0, passed=True, scale_level=spec.depth,
                              criterion=criterion, series_converges=converges)
    vertices, n = curve_path(removable, z1, z2)
    exponent = 1.0 / (1.0 - q)
    integral = sum(_segment_integral(removable, a, b, exponent)
                   for a, b in zip(vertices[:-1], vertices[1:]))
    bound = settings.CURVE_CONSTANT * gap ** ((q - 2.0) / (q - 1.0))
    return CurveCondition(
        integral=integral,
        bound=bound,
        passed=integral <= bound,
        scale_level=n,
        criterion=criterion,
        series_converges=converges,
    )


@dataclass(frozen=True, eq=False)
class LewisCantor:
    """Middle-gap Cantor set of positive length for 1 < p <= 2."""

    p: float
    s: float
    depth: int
    intervals: IntervalSet
    gaps: Tuple[float, ...]
    interval_lengths: Tuple[float, ...]
    residual_measure: float
    gap_sums: Tuple[float, ...]


def lewis_gap(p: float, s: float, i: int) -> float:
    """Length of each gap removed at step i."""
    if p == 2:
        return s * 2.0 ** (-i) * math.exp(-(2.0 ** i))
    if i == 0:
        return s * 2.0 ** (-1.0 / (2.0 - p))
    return s * i ** (-2.0 / (2.0 - p)) * 2.0 ** (-(i + 1.0) / (2.0 - p))


def build_lewis_cantor(p: float, s: float, depth: int) -> LewisCantor:
    """
    Remove a middle gap from each of the 2^i intervals at steps 0..depth.

    gap_sums are partial sums over steps of 2^i gap_i^(2-p).

    Raises:
        ConfigurationError: p outside (1, 2], s outside (0, 1/3), bad depth
        CantorConstructionError: Total removed length reaches 1, or a gap
            does not fit its interval
    """
    if not 1 < p <= 2:
        raise ConfigurationError(f"The middle-gap set needs 1 < p <= 2, got {p}")
    if not 0 < s < 1.0 / 3.0:
        raise ConfigurationError(f"s must lie in (0, 1/3), got {s}")
    if not 0 <= depth <= MAX_THIN_DEPTH:
        raise ConfigurationError(f"depth must lie in 0..{MAX_THIN_DEPTH}, got {depth}")

    removed = math.fsum(2.0 ** i * lewis_gap(p, s, i) for i in range(0, 200))
    if removed >= 1:
        raise CantorConstructionError(
            f"s={s} removes total length {removed:.6g} >= 1", context={"p": p, "s": s}
        )

    lo = np.zeros(1)
    length = 1.0
    gaps: List[float] = []
    lengths: List[float] = [length]
    sums: List[float] = []
    partial = 0.0
    for i in range(depth + 1):
        gap = lewis_gap(p, s, i)
        if not gap < length:
            raise CantorConstructionError(f"Step {i}: gap {gap:.6g} does not fit interval {length:.6g}")
        child = (length - gap) / 2.0
        lo = np.stack([lo, lo + child + gap], axis=1).ravel()
        length = child
        gaps.append(gap)
        lengths.append(length)
        partial += 2.0 ** i * gap ** (2.0 - p)
        sums.append(partial)
    intervals = IntervalSet(lo=lo, hi=lo + length)
    residual = 1.0 - math.fsum(2.0 ** i * g for i, g in enumerate(gaps))
    logger.info(f"Middle-gap set p={p} s={s} depth={depth}: residual measure {residual:.6g}")
    return LewisCantor(
        p=p, s=s, depth=depth, intervals=intervals, gaps=tuple(gaps),
        interval_lengths=tuple(lengths), residual_measure=residual, gap_sums=tuple(sums),
    )


def porosity_check(lewis: LewisCantor, q: float, samples: int = 100, seed: int = 0) -> PorosityCheck:
    """
    Gap-to-radius ratios gap_i / r_i^(1/(2-q)) at sampled points of the set.

    x is the midpoint of a random final interval and r_i the length of its
    level-i ancestor; the ancestor's middle gap must lie in [x - r_i, x + r_i].
    Each sample reports its smallest ratio over levels (0 if a gap is missed).

    Raises:
        ConfigurationError: q outside (p, 2)
    """
    if not lewis.p < q < 2:
        raise ConfigurationError(f"Porosity exponent must lie in ({lewis.p}, 2), got {q}")
    final = lewis.intervals
    steps = lewis.depth + 1
    exponent = 1.0 / (2.0 - q)
    rng = np.random.default_rng(seed)
    ratios: List[float] = []
    for pick in rng.integers(len(final), size=samples).tolist():
        x = (final.lo[pick] + final.hi[pick]) / 2.0
        best = math.inf
        for i, gap in enumerate(lewis.gaps):
            r = lewis.interval_lengths[i]
            leftmost = (pick >> (steps - i)) << (steps - i)
            start = final.lo[leftmost] + lewis.interval_lengths[i + 1]
            inside = start >= x - r and start + gap <= x + r
            best = min(best, gap / r ** exponent if inside else 0.0)
        ratios.append(best)
    return PorosityCheck(q=q, min_ratio=min(ratios) if ratios else 0.0, ratios=ratios)


def _runs(mask: np.ndarray) -> int:
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    return int((np.diff(padded) == 1).sum())


def build_3d_domain(spec: CantorSpec, h, removable: Optional[RemovableSet] = None) -> DiscreteDomain:
    """
    ((-1,2)^2 minus E) x (0, 1/2] together with (-1,2)^2 x (1/2, 1).

    A column is cut when its cell meets E, i.e. the centre is within h/2 of
    C in x and of F in y.

    Raises:
        ResolutionError: The grid merges separate intervals of C or F
    """
    h_exact = to_fraction(h)
    hf = float(h_exact)
    removable = removable or build_removable_set(spec)
    steps = int(math.ceil(3 / h_exact)) + 3
    origin_xy = -1.0 - hf
    axis = origin_xy + np.arange(steps) * hf
    inside_xy = (axis > -1.0) & (axis < 2.0)
    z_steps = int(math.ceil(1 / h_exact)) + 3
    z_axis = -hf + np.arange(z_steps) * hf
    inside_z = (z_axis > 0.0) & (z_axis < 1.0)

    cut_x = removable.c.distance(axis) <= hf / 2.0
    cut_y = removable.f.distance(axis) <= hf / 2.0
    if _runs(cut_x) != len(removable.c) or _runs(cut_y) != len(removable.f):
        raise ResolutionError(
            f"h={hf} cannot separate the {removable.box_count} boxes of E at depth {spec.depth}",
            context={"h": hf, "depth": spec.depth},
        )
    cut = cut_x[:, None] & cut_y[None, :]
    plane = inside_xy[:, None] & inside_xy[None, :]
    lower = plane & ~cut
    occupancy = np.zeros((steps, steps, z_steps), dtype=bool)
    occupancy[:, :, inside_z & (z_axis <= 0.5)] = lower[:, :, None]
    occupancy[:, :, inside_z & (z_axis > 0.5)] = plane[:, :, None]
    return domain_from_mask(occupancy, (origin_xy, origin_xy, -hf), h_exact,
                            name=f"slab-depth-{spec.depth}", source=removable)


def kappa(z) -> np.ndarray:
    """1 on [0, 1/4], 0 from 1/2 on, C^1 smoothstep between; |kappa'| <= 6."""
    t = np.clip((np.asarray(z, dtype=float) - 0.25) / 0.25, 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


def _removable_of(dom3d: DiscreteDomain) -> RemovableSet:
    if not isinstance(dom3d.source, RemovableSet):
        raise ConfigurationError("Domain was not built by build_3d_domain")
    return dom3d.source


def lift_function(step: StepFunctionField, dom3d: DiscreteDomain,
                  profile: Callable[[np.ndarray], np.ndarray] = kappa) -> GridFunction:
    """u(x, y) * kappa(z) on the 3-D domain; u is only evaluated where kappa > 0."""
    points = dom3d.points
    weights = profile(points[:, 2])
    values = np.zeros(dom3d.node_count)
    active = weights > 0
    if np.any(active):
        values[active] = step(points[active, 0], points[active, 1]) * weights[active]
    return GridFunction(dom3d, values, "lift")


def _in_domain(removable: RemovableSet, w: np.ndarray) -> np.ndarray:
    w = np.atleast_2d(w)
    x, y, z = w[:, 0], w[:, 1], w[:, 2]
    box = (x > -1) & (x < 2) & (y > -1) & (y < 2) & (z > 0) & (z < 1)
    return box & ((z > 0.5) | ~removable.contains(x, y))


def _squash(removable: RemovableSet, w: np.ndarray) -> np.ndarray:
    w = np.atleast_2d(np.asarray(w, dtype=float))
    planar = removable.distance(w[:, 0], w[:, 1])
    vertical = np.maximum(w[:, 2] - 0.5, 0.0)
    out = w.copy()
    out[:, 2] = w[:, 2] * np.hypot(planar, vertical)
    return out


def squash_map(dom3d: DiscreteDomain, w: Point) -> Tuple[float, float, float]:
    """
    (x, y, z) -> (x, y, z * dist(w, E x (0, 1/2])).

    Raises:
        DomainError: w not in the domain
    """
    removable = _removable_of(dom3d)
    point = np.asarray(w, dtype=float)
    if point.size != 3 or not bool(_in_domain(removable, point)[0]):
        raise DomainError(f"{tuple(point)} is not in the domain")
    return tuple(float(v) for v in _squash(removable, point)[0])


def _box_gap(intervals: IntervalSet, lo: float, hi: float) -> float:
    """Distance between [lo, hi] and the union of the intervals."""
    if not len(intervals):
        return math.inf
    return float(np.maximum(np.maximum(intervals.lo - hi, lo - intervals.hi), 0.0).min())


def bilipschitz_witness(dom3d: DiscreteDomain, box: Sequence[Tuple[float, float]],
                        samples: int = 1000, seed: int = 0) -> Dict[str, float]:
    """
    Distortion extremes |f(a) - f(b)| / |a - b| of the squash map on a sub-box.

    Also counts image collisions among pairs sharing (x, y).

    Raises:
        ConfigurationError: The box leaves the domain or meets E x (0, 1/2]
    """
    removable = _removable_of(dom3d)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if lo.size != 3 or np.any(hi <= lo):
        raise ConfigurationError("Box must be three nonempty (lo, hi) ranges")
    if np.any(lo[:2] <= -1) or np.any(hi[:2] >= 2) or lo[2] <= 0 or hi[2] >= 1:
        raise ConfigurationError("Box must lie inside (-1, 2)^2 x (0, 1)")
    clearance = math.sqrt(
        _box_gap(removable.c, lo[0], hi[0]) ** 2
        + _box_gap(removable.f, lo[1], hi[1]) ** 2
        + max(lo[2] - 0.5, 0.0) ** 2
    )
    if clearance <= 0:
        raise ConfigurationError("Box meets E x (0, 1/2]")

    rng = np.random.default_rng(seed)
    a = lo + (hi - lo) * rng.random((samples, 3))
    b = lo + (hi - lo) * rng.random((samples, 3))
    fa, fb = _squash(removable, a), _squash(removable, b)
    ratios = np.linalg.norm(fa - fb, axis=1) / np.linalg.norm(a - b, axis=1)

    c = b.copy()
    c[:, :2] = a[:, :2]
    fc = _squash(removable, c)
    distinct = np.abs(a[:, 2] - c[:, 2]) > 1e-12
    collisions = int(np.sum(distinct & (np.abs(fa[:, 2] - fc[:, 2]) <= 1e-12)))
    return {
        "min_ratio": float(ratios.min()),
        "max_ratio": float(ratios.max()),
        "clearance": clearance,
        "collisions": float(collisions),
        "samples": float(samples),
    }

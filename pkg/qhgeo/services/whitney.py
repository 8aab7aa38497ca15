"""
Dyadic Whitney decompositions of grid domains.

Cubes are anchored at the lower corner of the domain's bounding box and
stored as (level, integer corner); their geometry is never rounded. A cube
owns the lattice points in its half-open box, so cell sets of disjoint cubes
never overlap.
"""
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from qhgeo.core.exceptions import ResolutionError
from qhgeo.schemas.reports import CheckResult, ValidationReport
from qhgeo.services.domain import DiscreteDomain
import logging

logger = logging.getLogger(__name__)


def dyadic_side(level: int) -> Fraction:
    """Exact side 2^-level."""
    return Fraction(1, 2 ** level) if level >= 0 else Fraction(2 ** -level)


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Cube prod [c_i 2^-k, (c_i + 1) 2^-k] relative to the domain anchor."""

    level: int
    corner: Tuple[int, ...]

    @property
    def side(self) -> Fraction:
        return dyadic_side(self.level)

    @property
    def dimension(self) -> int:
        return len(self.corner)

    @property
    def diameter(self) -> float:
        return math.sqrt(self.dimension) * float(self.side)

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, tuple(c // 2 for c in self.corner))

    def children(self) -> List["DyadicCube"]:
        return [
            DyadicCube(self.level + 1, tuple(2 * c + b for c, b in zip(self.corner, bits)))
            for bits in itertools.product((0, 1), repeat=self.dimension)
        ]

    def box(self, level: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Integer closed box in units of 2^-level (level >= self.level)."""
        scale = 2 ** (level - self.level)
        return (tuple(c * scale for c in self.corner),
                tuple((c + 1) * scale for c in self.corner))

    def touches(self, other: "DyadicCube") -> bool:
        """Closed cubes intersect."""
        level = max(self.level, other.level)
        (alo, ahi), (blo, bhi) = self.box(level), other.box(level)
        return all(a0 <= b1 and b0 <= a1 for a0, a1, b0, b1 in zip(alo, ahi, blo, bhi))

    def overlaps(self, other: "DyadicCube") -> bool:
        """Open interiors intersect."""
        level = max(self.level, other.level)
        (alo, ahi), (blo, bhi) = self.box(level), other.box(level)
        return all(a0 < b1 and b0 < a1 for a0, a1, b0, b1 in zip(alo, ahi, blo, bhi))

    def contains(self, other: "DyadicCube") -> bool:
        return other.level >= self.level and other.ancestor(self.level) == self

    def ancestor(self, level: int) -> "DyadicCube":
        shift = self.level - level
        return DyadicCube(level, tuple(c >> shift for c in self.corner))

    def center(self, dom: DiscreteDomain) -> np.ndarray:
        side = float(self.side)
        return dom.anchor + (np.asarray(self.corner, dtype=float) + 0.5) * side

    def index_range(self, dom: DiscreteDomain) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Half-open lattice index box owned by the cube (clipped to the grid)."""
        ratio = self.side / dom.h_exact
        lo, hi = [], []
        for c, size in zip(self.corner, dom.shape):
            lo.append(min(max(math.ceil(c * ratio) + 1, 0), size))
            hi.append(min(max(math.ceil((c + 1) * ratio) + 1, 0), size))
        return tuple(lo), tuple(hi)

    def slices(self, dom: DiscreteDomain) -> Tuple[slice, ...]:
        lo, hi = self.index_range(dom)
        return tuple(slice(a, b) for a, b in zip(lo, hi))

    def label(self) -> str:
        return f"{self.level}:{','.join(str(c) for c in self.corner)}"


def _sample_offsets(ndim: int) -> np.ndarray:
    """Corners and face centres of the unit cube, doubled to stay integral."""
    corners = [np.array(bits) * 2 for bits in itertools.product((0, 1), repeat=ndim)]
    faces = []
    for axis in range(ndim):
        for side in (0, 2):
            point = np.ones(ndim, dtype=np.int64)
            point[axis] = side
            faces.append(point)
    return np.array(corners + faces, dtype=np.int64)


def _exact_floor(values: np.ndarray, num: int, shift: int, den: int) -> np.ndarray:
    """floor((values * num + shift) / den) in exact integer arithmetic."""
    bound = (int(np.abs(values).max()) + 1) * num + abs(shift) if values.size else 0
    if bound < 2 ** 62:
        return (values.astype(np.int64) * num + shift) // den
    exact = (values.astype(object) * num + shift) // den
    return np.clip(exact.astype(np.float64), -2.0 ** 62, 2.0 ** 62).astype(np.int64)


def _nearest_indices(corners: np.ndarray, level: int, dom: DiscreteDomain) -> np.ndarray:
    """
    Nearest lattice index of every sample point of every cube.

    Returns an array (cubes, samples, ndim). Sample offsets from the anchor
    are doubled * side / (2h) in grid units, rounded half up.
    """
    ratio = dyadic_side(level) / dom.h_exact
    num, den = ratio.numerator, ratio.denominator
    doubled = 2 * corners[:, None, :] + _sample_offsets(corners.shape[1])[None, :, :]
    return _exact_floor(doubled, num, den, 2 * den) + 1


def sampled_distance(dom: DiscreteDomain, corners: np.ndarray, level: int) -> np.ndarray:
    """
    Conservative dist(Q, boundary) for a batch of same-level cubes.

    Minimum of the grid boundary-distance field over the corner and
    face-centre samples, minus h*sqrt(n); samples off the grid count as 0.
    """
    corners = np.asarray(corners, dtype=np.int64).reshape(-1, dom.dimension)
    if corners.shape[0] == 0:
        return np.zeros(0)
    index = _nearest_indices(corners, level, dom)
    valid = np.all((index >= 0) & (index < np.asarray(dom.shape)), axis=-1)
    safe = np.where(valid[..., None], index, 0)
    values = dom.boundary_distance[tuple(np.moveaxis(safe, -1, 0))]
    values = np.where(valid, values, 0.0)
    return values.min(axis=1) - dom.snap_radius


def cube_distance(dom: DiscreteDomain, cube: DyadicCube) -> float:
    return float(sampled_distance(dom, np.array([cube.corner]), cube.level)[0])


def _summed_area(occupancy: np.ndarray) -> np.ndarray:
    table = occupancy.astype(np.int64)
    for axis in range(occupancy.ndim):
        table = np.cumsum(table, axis=axis)
    return np.pad(table, [(1, 0)] * occupancy.ndim)


def _box_counts(table: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Occupied-cell counts in half-open boxes [lo, hi) via inclusion-exclusion."""
    ndim = lo.shape[1]
    total = np.zeros(lo.shape[0], dtype=np.int64)
    for bits in itertools.product((0, 1), repeat=ndim):
        idx = tuple(np.where(b, hi[:, axis], lo[:, axis]) for axis, b in enumerate(bits))
        sign = -1 if (ndim - sum(bits)) % 2 else 1
        total += sign * table[idx]
    return total


def _index_boxes(dom: DiscreteDomain, corners: np.ndarray, level: int):
    """Half-open lattice index boxes owned by a batch of same-level cubes."""
    ratio = dyadic_side(level) / dom.h_exact
    num, den = ratio.numerator, ratio.denominator
    shape = np.asarray(dom.shape)
    lo = _exact_floor(corners, num, den - 1, den) + 1
    hi = _exact_floor(corners + 1, num, den - 1, den) + 1
    return np.clip(lo, 0, shape), np.clip(hi, 0, shape)


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    """Accepted cubes in (level, corner) order plus the truncation level."""

    domain: DiscreteDomain
    cubes: Tuple[DyadicCube, ...]
    max_level: int

    def __len__(self) -> int:
        return len(self.cubes)

    @cached_property
    def position(self) -> Dict[DyadicCube, int]:
        return {cube: i for i, cube in enumerate(self.cubes)}

    @cached_property
    def distances(self) -> np.ndarray:
        """Conservative dist(Q, boundary) per cube."""
        out = np.zeros(len(self.cubes))
        by_level: Dict[int, List[int]] = {}
        for i, cube in enumerate(self.cubes):
            by_level.setdefault(cube.level, []).append(i)
        for level, members in by_level.items():
            corners = np.array([self.cubes[i].corner for i in members])
            out[members] = sampled_distance(self.domain, corners, level)
        return out

    @cached_property
    def sides(self) -> np.ndarray:
        return np.array([float(cube.side) for cube in self.cubes])

    @cached_property
    def cell_labels(self) -> np.ndarray:
        """Grid of owning cube positions; -1 on uncovered cells."""
        labels = np.full(self.domain.shape, -1, dtype=np.int64)
        for i, cube in enumerate(self.cubes):
            labels[cube.slices(self.domain)] = i
        labels[~self.domain.occupancy] = -1
        labels.setflags(write=False)
        return labels

    @cached_property
    def node_labels(self) -> np.ndarray:
        """Owning cube position per domain node; -1 for residual cells."""
        return self.cell_labels[self.domain.occupancy]

    @cached_property
    def cube_nodes(self) -> List[np.ndarray]:
        order = np.argsort(self.node_labels, kind="stable")
        labels = self.node_labels[order]
        bounds = np.searchsorted(labels, np.arange(len(self.cubes) + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(len(self.cubes))]

    @cached_property
    def residual(self) -> np.ndarray:
        """Node ids of occupied cells outside every cube."""
        return np.flatnonzero(self.node_labels < 0)

    @cached_property
    def graph(self) -> nx.Graph:
        return cube_graph(self)

    def nodes_of(self, positions: Sequence[int]) -> np.ndarray:
        parts = [self.cube_nodes[i] for i in positions]
        return np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)

    def level_counts(self) -> Dict[int, int]:
        counts: Dict[int, int] = {}
        for cube in self.cubes:
            counts[cube.level] = counts.get(cube.level, 0) + 1
        return dict(sorted(counts.items()))


def top_level(dom: DiscreteDomain) -> int:
    """Finest level whose side still covers the whole bounding box."""
    extent = max(Fraction(int(max(dom.shape)) - 3), Fraction(1)) * dom.h_exact
    level = 0
    while dyadic_side(level) < extent:
        level -= 1
    while dyadic_side(level + 1) >= extent:
        level += 1
    return level


def whitney_decompose(dom: DiscreteDomain, max_level: int) -> WhitneyDecomposition:
    """
    Greedy top-down Whitney decomposition.

    A cube is accepted when l <= dist(Q, boundary) <= 4*sqrt(n)*l; otherwise
    it is split if it still holds occupied cells and is above max_level.

    Args:
        dom: Grid domain
        max_level: Finest cube level

    Returns:
        WhitneyDecomposition with cubes sorted by (level, corner)

    Raises:
        ResolutionError: 2^-max_level < 2h, or no cube satisfies the distance band
    """
    finest = dyadic_side(max_level)
    if finest < 2 * dom.h_exact:
        raise ResolutionError(
            f"max_level {max_level} needs 2^-max_level >= 2h (h={dom.h})",
            context={"max_level": max_level, "h": dom.h},
        )
    ndim = dom.dimension
    root = math.sqrt(ndim)
    table = _summed_area(dom.occupancy)

    level = top_level(dom)
    extent = max(Fraction(int(max(dom.shape)) - 3), Fraction(1)) * dom.h_exact
    side = dyadic_side(level)
    reach = math.floor(extent / side) + 1
    candidates = np.array(list(itertools.product(range(reach), repeat=ndim)), dtype=np.int64)

    accepted: List[DyadicCube] = []
    while candidates.shape[0] and level <= max_level:
        side_f = float(dyadic_side(level))
        lo, hi = _index_boxes(dom, candidates, level)
        counts = _box_counts(table, lo, hi)
        live = counts > 0
        candidates = candidates[live]
        dist = sampled_distance(dom, candidates, level)
        ok = (dist >= side_f) & (dist <= 4 * root * side_f)
        accepted.extend(DyadicCube(level, tuple(int(c) for c in corner)) for corner in candidates[ok])
        logger.debug(f"Level {level}: {int(live.sum())} live, {int(ok.sum())} accepted")
        rest = candidates[~ok]
        if level == max_level or rest.shape[0] == 0:
            break
        bits = np.array(list(itertools.product((0, 1), repeat=ndim)), dtype=np.int64)
        candidates = (2 * rest[:, None, :] + bits[None, :, :]).reshape(-1, ndim)
        level += 1

    if not accepted:
        raise ResolutionError(
            "No dyadic cube satisfies the Whitney distance band at this resolution",
            context={"max_level": max_level, "h": dom.h},
        )
    dec = WhitneyDecomposition(domain=dom, cubes=tuple(sorted(accepted)), max_level=max_level)
    logger.info(
        f"Whitney decomposition: {len(dec)} cubes, levels {dec.level_counts()}, "
        f"{dec.residual.size} residual cells"
    )
    return dec


def _touching_pairs(cubes: Sequence[DyadicCube], strict: bool = False) -> List[Tuple[int, int]]:
    """Sort-and-sweep over integer boxes at the finest level present."""
    if not cubes:
        return []
    level = max(cube.level for cube in cubes)
    boxes = [cube.box(level) for cube in cubes]
    order = sorted(range(len(cubes)), key=lambda i: (boxes[i][0][0], i))
    pairs: List[Tuple[int, int]] = []
    active: List[int] = []
    for i in order:
        lo_i, hi_i = boxes[i]
        if strict:
            active = [j for j in active if boxes[j][1][0] > lo_i[0]]
        else:
            active = [j for j in active if boxes[j][1][0] >= lo_i[0]]
        for j in active:
            lo_j, hi_j = boxes[j]
            if strict:
                hit = all(a0 < b1 and b0 < a1 for a0, a1, b0, b1 in zip(lo_i, hi_i, lo_j, hi_j))
            else:
                hit = all(a0 <= b1 and b0 <= a1 for a0, a1, b0, b1 in zip(lo_i, hi_i, lo_j, hi_j))
            if hit:
                pairs.append((min(i, j), max(i, j)))
        active.append(i)
    return sorted(pairs)


def cube_graph(dec: WhitneyDecomposition) -> nx.Graph:
    """Undirected graph on cube positions; edges join cubes whose closures meet."""
    graph = nx.Graph()
    for i, cube in enumerate(dec.cubes):
        graph.add_node(i, cube=cube)
    graph.add_edges_from(_touching_pairs(dec.cubes))
    return graph


def validate_whitney(dec: WhitneyDecomposition, dom: Optional[DiscreteDomain] = None) -> ValidationReport:
    """
    Check disjointness, containment, coverage, the distance band and the
    neighbour side ratio.

    Args:
        dec: Decomposition (possibly hand-built)
        dom: Domain; defaults to the decomposition's own

    Returns:
        ValidationReport with one check per condition
    """
    dom = dom if dom is not None else dec.domain
    tol = dom.snap_radius
    root = math.sqrt(dom.dimension)
    checks: List[CheckResult] = []

    overlaps = _touching_pairs(dec.cubes, strict=True)
    checks.append(CheckResult(
        name="disjoint_interiors",
        passed=not overlaps,
        value=float(len(overlaps)),
        limit=0.0,
        counterexample=(f"{dec.cubes[overlaps[0][0]].label()} / {dec.cubes[overlaps[0][1]].label()}"
                        if overlaps else None),
    ))

    outside = None
    for cube in dec.cubes:
        window = dom.occupancy[cube.slices(dom)]
        if window.size == 0 or not window.all():
            outside = cube
            break
    checks.append(CheckResult(
        name="cubes_inside",
        passed=outside is None,
        counterexample=outside.label() if outside else None,
    ))

    finest = 2.0 ** -dec.max_level
    reach = (1 + root) * finest + 2 * tol
    covered = np.zeros(dom.shape, dtype=bool)
    for cube in dec.cubes:
        covered[cube.slices(dom)] = True
    missed = dom.occupancy & ~covered & (dom.boundary_distance > reach)
    miss_at = np.argwhere(missed)
    checks.append(CheckResult(
        name="coverage",
        passed=miss_at.shape[0] == 0,
        value=float(miss_at.shape[0]),
        limit=reach,
        counterexample=str(tuple(int(v) for v in miss_at[0])) if miss_at.shape[0] else None,
    ))

    band_bad = None
    worst = 0.0
    for cube in dec.cubes:
        side = float(cube.side)
        dist = cube_distance(dom, cube)
        worst = max(worst, dist / side)
        if not (side - tol <= dist <= 4 * root * side + tol):
            band_bad = band_bad or f"{cube.label()} dist={dist:.6g} side={side:.6g}"
    checks.append(CheckResult(
        name="distance_band",
        passed=band_bad is None,
        value=worst,
        limit=4 * root,
        counterexample=band_bad,
    ))

    ratio_bad = None
    worst_gap = 0
    for i, j in _touching_pairs(dec.cubes):
        gap = abs(dec.cubes[i].level - dec.cubes[j].level)
        worst_gap = max(worst_gap, gap)
        if gap > 2 and ratio_bad is None:
            ratio_bad = f"{dec.cubes[i].label()} / {dec.cubes[j].label()}"
    checks.append(CheckResult(
        name="neighbor_side_ratio",
        passed=ratio_bad is None,
        value=float(2 ** worst_gap),
        limit=4.0,
        counterexample=ratio_bad,
    ))

    report = ValidationReport(
        subject="whitney",
        checks=checks,
        metrics={
            "cube_count": float(len(dec.cubes)),
            "residual_cells": float(int((dom.occupancy & ~covered).sum())),
            "max_level": float(dec.max_level),
        },
    )
    if report.passed:
        logger.info(f"Whitney validation passed ({len(dec.cubes)} cubes)")
    else:
        logger.warning(f"Whitney validation failed: {[c.name for c in report.failures()]}")
    return report

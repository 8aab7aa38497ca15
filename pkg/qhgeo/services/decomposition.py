"""
Core part and boundary layer of a Whitney decomposition at scale m.

The core is grown from the cubes of side >= 2^-m connected to a largest
cube Q0 and then refined by sweeping its boundary cubes: each boundary cube
that is still present blocks the regions its inner ball U_j cuts off from
Q0, and cubes deep inside such a blocked region are dropped. The rest of
the domain splits into a layer E near the surviving boundary cubes and a
far part F, each cut into pieces indexed by the selected boundary cubes.

All inner balls are centred at cube centres with radius factor * sqrt(n) *
c1 * diam(Q); the factors come from settings.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import gamma

from qhgeo.core.config import settings
from qhgeo.core.exceptions import ConfigurationError, ScaleTooSmallError
from qhgeo.schemas.reports import CheckResult, ValidationReport
from qhgeo.services.domain import DiscreteDomain
from qhgeo.services.qh_metric import chain_positions
from qhgeo.services.whitney import DyadicCube, WhitneyDecomposition
from qhgeo.utils.grid import cell_closure, cell_interior, components
import logging

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CubeBall:
    """Inner distances from a cube centre, truncated at the largest radius used."""

    center: int
    nodes: np.ndarray
    dist: np.ndarray

    def within(self, radius: float) -> np.ndarray:
        return self.nodes[self.dist <= radius * (1 + 1e-12)]

    def distance_to(self, nodes: np.ndarray) -> np.ndarray:
        """Inner distance of each node (inf past the truncation radius)."""
        out = np.full(np.asarray(nodes).size, np.inf)
        idx = np.searchsorted(self.nodes, nodes)
        idx = np.clip(idx, 0, max(self.nodes.size - 1, 0))
        if self.nodes.size:
            hit = self.nodes[idx] == nodes
            out[hit] = self.dist[idx[hit]]
        return out


@dataclass(frozen=True, eq=False)
class CorePartition:
    """Refined core at scale m with its boundary cube families."""

    decomposition: WhitneyDecomposition
    m: int
    c1: float
    q0: int
    omega: np.ndarray
    working: Tuple[int, ...]
    initial_boundary: Tuple[int, ...]
    fired: Tuple[int, ...]
    selected: Tuple[int, ...]
    boundary: Tuple[int, ...]
    balls: Dict[int, CubeBall] = field(repr=False)
    blocks: Dict[int, np.ndarray] = field(repr=False)
    surviving_index: Dict[int, int] = field(default_factory=dict)

    @property
    def domain(self) -> DiscreteDomain:
        return self.decomposition.domain

    @property
    def q0_cube(self) -> DyadicCube:
        return self.decomposition.cubes[self.q0]

    @property
    def scale(self) -> float:
        return 2.0 ** -self.m

    def radius(self, position: int, factor: float) -> float:
        """factor * sqrt(n) * c1 * diam(Q) for the cube at a position."""
        cube = self.decomposition.cubes[position]
        return factor * cube.dimension * self.c1 * float(cube.side)

    def ball(self, position: int, factor: float) -> np.ndarray:
        return self.balls[position].within(self.radius(position, factor))

    def u(self, position: int) -> np.ndarray:
        return self.ball(position, settings.U_FACTOR)

    @property
    def side_ratio(self) -> float:
        """Largest side of a boundary cube over 2^-m."""
        cubes = self.decomposition.cubes
        return max((float(cubes[i].side) / self.scale for i in self.boundary), default=0.0)

    def overlap_cap(self) -> int:
        """
        Multiplicity bound for pieces, balls and boundary cubes at this scale.

        Two pieces can only meet when their cube centres are closer than the
        sum of their piece radii plus closure and snapping slack. Cubes of
        side >= 2^-m with centres in such a ball are disjoint and lie in a
        ball of radius that plus half a diameter, so a volume count bounds
        them. QHGEO_OVERLAP_CAP overrides the derived value.
        """
        if settings.OVERLAP_CAP is not None:
            return settings.OVERLAP_CAP
        dom = self.domain
        n = dom.dimension
        ratio = max(self.side_ratio, 1.0)
        reach = settings.PIECE_FACTOR * n * self.c1 * ratio
        slack = 2 * (dom.snap_radius + dom.h * np.sqrt(n)) / self.scale
        radius = 2 * reach + slack + np.sqrt(n) * ratio / 2
        unit_ball = np.pi ** (n / 2) / gamma(n / 2 + 1)
        return max(int(np.floor(unit_ball * radius ** n)), 1)

    def summary(self) -> Dict[str, object]:
        cubes = self.decomposition.cubes
        return {
            "m": self.m,
            "c1": self.c1,
            "q0": cubes[self.q0].label(),
            "core_cells": int(self.omega.size),
            "core_cubes": len(self.working),
            "initial_boundary": len(self.initial_boundary),
            "fired": len(self.fired),
            "selected": [cubes[i].label() for i in self.selected],
            "boundary_cubes": len(self.boundary),
            "surviving_index": {str(k): v for k, v in self.surviving_index.items()},
            "side_ratio": self.side_ratio,
            "overlap_cap": self.overlap_cap(),
            "factors": {
                "u": settings.U_FACTOR,
                "block": settings.BLOCK_FACTOR,
                "cover": settings.COVER_FACTOR,
                "layer": settings.LAYER_FACTOR,
                "piece": settings.PIECE_FACTOR,
            },
        }


@dataclass(frozen=True, eq=False)
class BoundaryLayer:
    """E and F with their pieces; raw sets partition the complement of the core."""

    e_raw: np.ndarray
    f_raw: np.ndarray
    e: np.ndarray
    f: np.ndarray
    s_raw: List[np.ndarray]
    t_raw: List[np.ndarray]
    s: List[np.ndarray]
    t: List[np.ndarray]
    selected: Tuple[int, ...]


def largest_cube(dec: WhitneyDecomposition) -> int:
    """Position of a largest cube with the greatest boundary distance."""
    top = min(cube.level for cube in dec.cubes)
    candidates = [i for i, cube in enumerate(dec.cubes) if cube.level == top]
    return max(candidates, key=lambda i: (dec.distances[i], -i))


def _core_positions(dec: WhitneyDecomposition, m: int, q0: int) -> List[int]:
    if dec.cubes[q0].level > m:
        raise ScaleTooSmallError(
            f"No Whitney cube of side >= 2^-{m} contains Q0",
            context={"m": m},
        )
    eligible = [i for i, cube in enumerate(dec.cubes) if cube.level <= m]
    return sorted(nx.node_connected_component(dec.graph.subgraph(eligible), q0))


def core_component(dec: WhitneyDecomposition, dom: DiscreteDomain, m: int,
                   q0: Optional[DyadicCube] = None) -> np.ndarray:
    """
    Union of cubes of side >= 2^-m joined to Q0 through such cubes.

    Args:
        dec: Whitney decomposition
        dom: Its domain
        m: Scale
        q0: A largest cube; defaults to largest_cube(dec)

    Returns:
        Sorted node ids of the component

    Raises:
        ScaleTooSmallError: No cube of side >= 2^-m
    """
    position = largest_cube(dec) if q0 is None else dec.position[q0]
    return dec.nodes_of(_core_positions(dec, m, position))


def _member_grid(dec: WhitneyDecomposition, member: np.ndarray) -> np.ndarray:
    labels = dec.cell_labels
    return (labels >= 0) & member[np.maximum(labels, 0)]


def _boundary_positions(dec: WhitneyDecomposition, member: np.ndarray) -> List[int]:
    """Cubes of the family whose cells touch a cell outside the family's union."""
    inside = _member_grid(dec, member)
    touching = cell_closure(~inside, np.ones_like(inside)) & inside
    return sorted(int(i) for i in np.unique(dec.cell_labels[touching]))


def _touches_outside(dec: WhitneyDecomposition, member: np.ndarray, position: int) -> bool:
    dom = dec.domain
    lo, hi = dec.cubes[position].index_range(dom)
    window = tuple(slice(max(a - 1, 0), min(b + 1, size)) for a, b, size in zip(lo, hi, dom.shape))
    labels = dec.cell_labels[window]
    inside = (labels >= 0) & member[np.maximum(labels, 0)]
    return not inside.all()


def _cube_ball(dec: WhitneyDecomposition, position: int, radius: float) -> CubeBall:
    dom = dec.domain
    center = dom.snap(dec.cubes[position].center(dom))
    limit = radius * (1 + 1e-12)
    dist = dom.euclid_graph.distances_from(center, limit=limit)
    nodes = np.flatnonzero(dist <= limit)
    return CubeBall(center=center, nodes=nodes, dist=dist[nodes])


def admissible_c1(dec: WhitneyDecomposition, dom: DiscreteDomain, m: int) -> float:
    """
    Supremum of the c1 for which no initial boundary cube's U meets Q0.

    Any smaller positive c1 lets refine_core run at this scale. Returns inf
    when the core has no boundary cubes.

    Raises:
        ScaleTooSmallError: No cube of side >= 2^-m
    """
    q0 = largest_cube(dec)
    working = np.zeros(len(dec.cubes), dtype=bool)
    working[_core_positions(dec, m, q0)] = True
    initial = _boundary_positions(dec, working)
    if not initial:
        return float("inf")
    reach = dom.euclid_graph.distances(dec.cube_nodes[q0])
    bounds = [
        reach[dom.snap(dec.cubes[p].center(dom))] / (settings.U_FACTOR * dom.dimension * float(dec.cubes[p].side))
        for p in initial
    ]
    return float(min(bounds))


def choose_c1(dec: WhitneyDecomposition, dom: DiscreteDomain, m: int, c1: Optional[float] = None) -> float:
    """
    The given c1, or C1_MARGIN times admissible_c1 capped at C1_CEILING.

    Raises:
        ConfigurationError: c1 <= 0
        ScaleTooSmallError: Every positive c1 lets some U meet Q0
    """
    if c1 is not None:
        if c1 <= 0:
            raise ConfigurationError(f"c1 must be positive, got {c1}")
        return float(c1)
    bound = admissible_c1(dec, dom, m)
    if bound <= 0:
        raise ScaleTooSmallError(f"m={m} too small: Q0 is itself a boundary cube", context={"m": m})
    chosen = min(settings.C1_MARGIN * bound, settings.C1_CEILING)
    logger.info(f"c1 at m={m}: {chosen:.4g} (admissible below {bound:.4g})")
    return chosen


def refine_core(dec: WhitneyDecomposition, dom: DiscreteDomain, m: int, c1: float,
                shuffle_seed: Optional[int] = None) -> CorePartition:
    """
    Refine the core component by sweeping its boundary cubes.

    Args:
        dec: Whitney decomposition
        dom: Its domain
        m: Scale
        c1: Ball-separation constant used for all radii
        shuffle_seed: Sweep in a seeded random order instead of (level, corner)

    Returns:
        CorePartition with U/Block data for every cube whose step fired

    Raises:
        ConfigurationError: c1 <= 0
        ScaleTooSmallError: No cube of side >= 2^-m, or some U_j meets Q0
    """
    if c1 <= 0:
        raise ConfigurationError(f"c1 must be positive, got {c1}")
    count = len(dec.cubes)
    q0 = largest_cube(dec)
    q0_nodes = dec.cube_nodes[q0]
    q0_cell = tuple(dom.coords[q0_nodes[0]])

    working = np.zeros(count, dtype=bool)
    working[_core_positions(dec, m, q0)] = True
    initial = _boundary_positions(dec, working)
    order = list(initial)
    if shuffle_seed is not None:
        order = [order[i] for i in np.random.default_rng(shuffle_seed).permutation(len(order))]

    node_labels = dec.node_labels
    covered = node_labels >= 0
    sizes = np.bincount(node_labels[covered], minlength=count)

    def scale(pos: int, factor: float) -> float:
        return factor * dom.dimension * c1 * float(dec.cubes[pos].side)

    fired: List[int] = []
    balls: Dict[int, CubeBall] = {}
    blocks: Dict[int, np.ndarray] = {}
    for position in order:
        if not working[position] or not _touches_outside(dec, working, position):
            continue
        ball = _cube_ball(dec, position, scale(position, settings.PIECE_FACTOR))
        u_nodes = ball.within(scale(position, settings.U_FACTOR))
        if np.isin(q0_nodes, u_nodes).any():
            raise ScaleTooSmallError(
                f"m={m} too small: U of cube {dec.cubes[position].label()} meets Q0",
                context={"m": m, "c1": c1, "cube": dec.cubes[position].label()},
            )
        u_mask = dom.mask_of(u_nodes)
        rest = dom.occupancy & ~u_mask
        labels, _ = components(rest)
        block_nodes = dom.nodes_of(rest & (labels != labels[q0_cell]))
        fired.append(position)
        balls[position] = ball
        blocks[position] = block_nodes

        if block_nodes.size:
            keep = np.ones(dom.node_count, dtype=bool)
            keep[block_nodes] = False
            keep[ball.within(scale(position, settings.BLOCK_FACTOR))] = True
            kept = np.bincount(node_labels[covered & keep], minlength=count)
            drop = working & (kept == 0) & (sizes > 0)
            if drop.any():
                logger.debug(f"Cube {dec.cubes[position].label()} drops {int(drop.sum())} cubes")
            working &= ~drop

    boundary = _boundary_positions(dec, working)
    boundary_set = set(boundary)
    selected = [p for p in order if working[p] and p in boundary_set]
    index = {p: i for i, p in enumerate(selected)}
    surviving = {i: index[p] for i, p in enumerate(order) if p in index}
    positions = [int(p) for p in np.flatnonzero(working)]

    core = CorePartition(
        decomposition=dec,
        m=m,
        c1=float(c1),
        q0=q0,
        omega=dec.nodes_of(positions),
        working=tuple(positions),
        initial_boundary=tuple(order),
        fired=tuple(fired),
        selected=tuple(selected),
        boundary=tuple(boundary),
        balls=balls,
        blocks=blocks,
        surviving_index=surviving,
    )
    logger.info(
        f"Core at m={m}: {len(positions)} cubes, {len(order)} initial boundary cubes, "
        f"{len(fired)} fired, {len(selected)} selected, {len(boundary)} boundary cubes"
    )
    return core


def _close(dom: DiscreteDomain, nodes: np.ndarray) -> np.ndarray:
    return dom.nodes_of(cell_closure(dom.mask_of(nodes), dom.occupancy))


def boundary_layer(dec: WhitneyDecomposition, dom: DiscreteDomain,
                   core: CorePartition) -> BoundaryLayer:
    """
    Split the complement of the core into E and F and cut both into pieces.

    S_j takes what the ball V_j adds to E beyond earlier balls; T_j takes
    what Block_j adds to F beyond earlier blocks. Pieces are returned raw and
    closed (one cell layer added inside the domain); empty pieces are kept.
    """
    count = dom.node_count
    omega = np.zeros(count, dtype=bool)
    omega[core.omega] = True

    near = np.zeros(count, dtype=bool)
    for position in core.selected:
        near[core.ball(position, settings.LAYER_FACTOR)] = True
    e_raw = near & ~omega
    f_raw = ~omega & ~e_raw

    s_raw: List[np.ndarray] = []
    seen = np.zeros(count, dtype=bool)
    for position in core.selected:
        v = np.zeros(count, dtype=bool)
        v[core.ball(position, settings.PIECE_FACTOR)] = True
        s_raw.append(np.flatnonzero(v & ~seen & e_raw))
        seen |= v

    t_raw: List[np.ndarray] = []
    seen = np.zeros(count, dtype=bool)
    for position in core.selected:
        t = np.zeros(count, dtype=bool)
        t[core.blocks[position]] = True
        t &= f_raw
        t_raw.append(np.flatnonzero(t & ~seen))
        seen |= t

    layer = BoundaryLayer(
        e_raw=np.flatnonzero(e_raw),
        f_raw=np.flatnonzero(f_raw),
        e=_close(dom, np.flatnonzero(e_raw)),
        f=_close(dom, np.flatnonzero(f_raw)),
        s_raw=s_raw,
        t_raw=t_raw,
        s=[_close(dom, piece) for piece in s_raw],
        t=[_close(dom, piece) for piece in t_raw],
        selected=core.selected,
    )
    logger.info(
        f"Boundary layer at m={core.m}: |E|={layer.e_raw.size}, |F|={layer.f_raw.size}, "
        f"{sum(1 for p in s_raw if p.size)} nonempty S, {sum(1 for p in t_raw if p.size)} nonempty T"
    )
    return layer


def incidence(pieces: Sequence[np.ndarray], node_count: int) -> csr_matrix:
    """Piece-by-node membership matrix."""
    rows = [np.full(np.asarray(p).size, i, dtype=np.int64) for i, p in enumerate(pieces)]
    cols = [np.asarray(p, dtype=np.int64) for p in pieces]
    row = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    col = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    return csr_matrix((np.ones(row.size), (row, col)), shape=(len(pieces), node_count))


def meet_counts(a: csr_matrix, b: csr_matrix, same: bool = False) -> np.ndarray:
    """For each row piece of a, the number of b pieces it meets (itself excluded if same)."""
    if a.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    product = (a @ b.T).tocsr()
    product.eliminate_zeros()
    counts = np.diff(product.indptr).astype(np.int64)
    if same:
        diagonal = np.asarray(product.diagonal() > 0, dtype=np.int64)
        counts -= diagonal
    return counts


def ball_meet_counts(core: CorePartition, dom: DiscreteDomain) -> np.ndarray:
    """
    For each selected cube, how many other selected cubes' V balls meet its V ball.

    Balls are packed into bit rows and only pairs whose centres are within
    the sum of their radii are compared; a sparse product would cost the
    square of the per-node ball multiplicity.
    """
    selected = core.selected
    if not selected:
        return np.zeros(0, dtype=np.int64)
    radii = np.array([core.radius(p, settings.PIECE_FACTOR) for p in selected])
    centers = dom.points[[core.balls[p].center for p in selected]]
    packed = np.zeros((len(selected), (dom.node_count + 7) // 8), dtype=np.uint8)
    row = np.zeros(dom.node_count, dtype=bool)
    for j, p in enumerate(selected):
        nodes = core.ball(p, settings.PIECE_FACTOR)
        row[nodes] = True
        packed[j] = np.packbits(row)
        row[nodes] = False
    counts = np.zeros(len(selected), dtype=np.int64)
    for j in range(len(selected)):
        gap = np.linalg.norm(centers - centers[j], axis=1)
        near = np.flatnonzero(gap <= (radii + radii[j]) * (1 + 1e-9) + dom.h)
        near = near[near != j]
        if near.size:
            counts[j] = int((packed[near] & packed[j]).any(axis=1).sum())
    return counts


def _first(items: Sequence[str]) -> Optional[str]:
    return items[0] if items else None


def validate_partitioning(core: CorePartition, layer: BoundaryLayer, dom: DiscreteDomain,
                          chain_bound: Optional[int] = None) -> ValidationReport:
    """
    Check the core and layer invariants and record the overlap-count maxima.

    Args:
        core: Refined core
        layer: Its boundary layer
        dom: Domain
        chain_bound: When given, also check side lengths of the cubes within
            this many chain steps of the boundary cubes

    Returns:
        ValidationReport; metrics carry every overlap-count maximum
    """
    dec = core.decomposition
    cubes = dec.cubes
    count = dom.node_count
    slack = dom.snap_radius
    checks: List[CheckResult] = []
    metrics: Dict[str, float] = {}

    omega = np.zeros(count, dtype=bool)
    omega[core.omega] = True
    q0_nodes = dec.cube_nodes[core.q0]
    checks.append(CheckResult(name="q0_in_core", passed=bool(omega[q0_nodes].all())))

    ratio = core.side_ratio
    checks.append(CheckResult(
        name="boundary_side_ratio",
        passed=ratio <= settings.SIDE_RATIO_CAP and all(
            float(cubes[i].side) >= core.scale for i in core.boundary),
        value=ratio,
        limit=settings.SIDE_RATIO_CAP,
    ))
    metrics["side_ratio"] = ratio

    reached = omega.copy()
    for position in core.selected:
        reached[core.u(position)] = True
        reached[core.blocks[position]] = True
    missing = np.flatnonzero(~reached)
    checks.append(CheckResult(
        name="coverage",
        passed=missing.size == 0,
        value=float(missing.size),
        limit=0.0,
        counterexample=str(tuple(dom.point_of(missing[0]))) if missing.size else None,
    ))

    cover_radius = {p: core.radius(p, settings.COVER_FACTOR) for p in core.selected}
    union_cover = np.zeros(count, dtype=bool)
    for position in core.selected:
        union_cover[core.ball(position, settings.COVER_FACTOR)] = True
    boundary_set = np.zeros(len(cubes), dtype=bool)
    boundary_set[list(core.boundary)] = True

    implication_bad: List[str] = []
    for position in core.selected:
        block = core.blocks[position]
        if not block.size:
            continue
        met = np.unique(dec.node_labels[block])
        met = met[(met >= 0) & boundary_set[np.maximum(met, 0)]]
        ball = core.balls[position]
        for k in met:
            reach = ball.distance_to(dec.cube_nodes[k])
            if reach.max() > cover_radius[position] * (1 + 1e-12):
                implication_bad.append(f"{cubes[k].label()} vs {cubes[position].label()}")
    checks.append(CheckResult(
        name="block_implies_cover_ball",
        passed=not implication_bad,
        value=float(len(implication_bad)),
        limit=0.0,
        counterexample=_first(implication_bad),
    ))

    uncovered = [cubes[k].label() for k in core.boundary if not union_cover[dec.cube_nodes[k]].all()]
    checks.append(CheckResult(
        name="cover_balls_cover_boundary",
        passed=not uncovered,
        value=float(len(uncovered)),
        limit=0.0,
        counterexample=_first(uncovered),
    ))

    u_pieces = [core.u(p) for p in core.selected]
    u_mat = incidence(u_pieces, count)
    block_mat = incidence([core.blocks[p] for p in core.selected], count)
    u_sizes = np.array([piece.size for piece in u_pieces], dtype=float)
    deduction_bad: List[str] = []
    if u_pieces:
        uu = (u_mat @ u_mat.T).toarray()
        bu = (block_mat @ u_mat.T).toarray()
        for j, k in zip(*np.nonzero((uu == 0) & (bu > 0))):
            if bu[j, k] < u_sizes[k]:
                deduction_bad.append(
                    f"U of {cubes[core.selected[k]].label()} not inside Block of "
                    f"{cubes[core.selected[j]].label()}")
    checks.append(CheckResult(
        name="deduction",
        passed=not deduction_bad,
        value=float(len(deduction_bad)),
        limit=0.0,
        counterexample=_first(deduction_bad),
    ))

    closed = np.zeros(count, dtype=bool)
    closed[layer.e] = True
    closed[layer.f] = True
    gap = np.flatnonzero(~omega & ~closed)
    checks.append(CheckResult(name="layer_union", passed=gap.size == 0, value=float(gap.size), limit=0.0))

    e_closed = np.zeros(count, dtype=bool)
    e_closed[layer.e] = True
    shared = int(e_closed[layer.f].sum())
    fraction = shared / max(count, 1)
    checks.append(CheckResult(
        name="layer_overlap_fraction",
        passed=fraction <= settings.OVERLAP_FRACTION_CAP,
        value=fraction,
        limit=settings.OVERLAP_FRACTION_CAP,
    ))
    metrics["layer_overlap_fraction"] = fraction

    if layer.f_raw.size and core.omega.size:
        reach = dom.euclid_graph.distances(core.omega, limit=core.scale * 2)
        far_min = float(reach[layer.f_raw].min())
    else:
        far_min = float("inf")
    checks.append(CheckResult(
        name="far_layer_distance",
        passed=far_min >= core.scale - slack,
        value=far_min if np.isfinite(far_min) else None,
        limit=core.scale - slack,
    ))

    in_s = np.zeros(count, dtype=bool)
    for piece in layer.s_raw:
        in_s[piece] = True
    in_t = np.zeros(count, dtype=bool)
    for piece in layer.t_raw:
        in_t[piece] = True
    e_left = int((~in_s[layer.e_raw]).sum())
    f_left = int((~in_t[layer.f_raw]).sum())
    checks.append(CheckResult(name="s_pieces_cover_e", passed=e_left == 0, value=float(e_left), limit=0.0))
    checks.append(CheckResult(name="t_pieces_cover_f", passed=f_left == 0, value=float(f_left), limit=0.0))

    widest = 0.0
    for position, piece in zip(core.selected, layer.s_raw):
        if piece.size:
            widest = max(widest, 2 * float(core.balls[position].distance_to(piece).max()) + 2 * slack)
    diameter_limit = 2 * settings.PIECE_FACTOR * dom.dimension * core.c1 * settings.SIDE_RATIO_CAP
    checks.append(CheckResult(
        name="piece_diameter",
        passed=widest / core.scale <= diameter_limit + 2 * slack / core.scale,
        value=widest / core.scale,
        limit=diameter_limit,
    ))

    s_mat = incidence(layer.s, count)
    t_mat = incidence(layer.t, count)
    b_mat = incidence([dec.cube_nodes[k] for k in core.boundary], count)
    overlaps = {
        "overlap_v_v": ball_meet_counts(core, dom),
        "overlap_s_s": meet_counts(s_mat, s_mat, same=True),
        "overlap_t_s": meet_counts(t_mat, s_mat),
        "overlap_s_t": meet_counts(s_mat, t_mat),
        "overlap_b_s": meet_counts(b_mat, s_mat),
    }
    cap = core.overlap_cap()
    metrics["overlap_cap"] = float(cap)
    for name, counts in overlaps.items():
        peak = int(counts.max()) if counts.size else 0
        metrics[name] = float(peak)
        worst = int(np.argmax(counts)) if counts.size else 0
        checks.append(CheckResult(
            name=name,
            passed=peak <= cap,
            value=float(peak),
            limit=float(cap),
            counterexample=f"piece {worst}" if peak > cap else None,
        ))

    if chain_bound is not None:
        near = near_boundary_cubes(dec, core, chain_bound)
        widest_ratio = max((float(cubes[i].side) / core.scale for i in near), default=0.0)
        checks.append(CheckResult(
            name="near_boundary_sides",
            passed=widest_ratio <= settings.SIDE_RATIO_CAP * 2 ** chain_bound,
            value=widest_ratio,
            limit=settings.SIDE_RATIO_CAP * 2 ** chain_bound,
        ))
        metrics["chain_bound"] = float(chain_bound)
        metrics["near_boundary_cubes"] = float(len(near))

    metrics.update({
        "m": float(core.m),
        "c1": core.c1,
        "core_cells": float(core.omega.size),
        "selected": float(len(core.selected)),
        "boundary_cubes": float(len(core.boundary)),
        "e_cells": float(layer.e_raw.size),
        "f_cells": float(layer.f_raw.size),
    })
    report = ValidationReport(subject=f"partitioning m={core.m}", checks=checks, metrics=metrics)
    if report.passed:
        logger.info(f"Partitioning at m={core.m} passed all {len(checks)} checks")
    else:
        logger.warning(f"Partitioning at m={core.m} failed: {[c.name for c in report.failures()]}")
    return report


def near_boundary_cubes(dec: WhitneyDecomposition, core: CorePartition, chain_bound: int) -> List[int]:
    """Positions of cubes joined to a boundary cube by a chain of at most chain_bound cubes."""
    if chain_bound < 1 or not core.boundary:
        return []
    reach = nx.multi_source_dijkstra_path_length(dec.graph, set(core.boundary), cutoff=chain_bound - 1)
    return sorted(reach)


def chain_length_bound(dec: WhitneyDecomposition, dom: DiscreteDomain, core: CorePartition,
                       layer: BoundaryLayer, samples: Optional[int] = None, seed: int = 0) -> int:
    """
    Longest observed Whitney chain between a boundary cube and a selected cube
    whose piece it meets.

    Up to `samples` such pairs (settings.CHAIN_SAMPLES by default) are drawn
    with the given seed; chains follow qh geodesics between cube centres.
    """
    samples = settings.CHAIN_SAMPLES if samples is None else samples
    count = dom.node_count
    pieces = [np.union1d(s, t) for s, t in zip(layer.s, layer.t)]
    b_mat = incidence([dec.cube_nodes[k] for k in core.boundary], count)
    p_mat = incidence(pieces, count)
    if b_mat.shape[0] == 0 or p_mat.shape[0] == 0:
        return 1
    meets = (b_mat @ p_mat.T).tocoo()
    pairs = sorted({(core.boundary[i], core.selected[j]) for i, j in zip(meets.row, meets.col)})
    if not pairs:
        return 1
    rng = np.random.default_rng(seed)
    if len(pairs) > samples:
        pairs = [pairs[i] for i in np.sort(rng.choice(len(pairs), size=samples, replace=False))]
    longest = max(len(chain_positions(dec, a, b)) for a, b in pairs)
    logger.info(f"Chain bound at m={core.m}: {longest} over {len(pairs)} pairs")
    return longest


def exhaustion_depth(cores: Sequence[CorePartition]) -> Optional[int]:
    """
    Smallest M with omega_m compactly inside omega_m' whenever m' >= m + M.

    Compact containment is taken at cell level: omega_m lies in the cell
    interior of omega_m'. Returns None when no tested M works.
    """
    ordered = sorted(cores, key=lambda c: c.m)
    if len(ordered) < 2:
        return None
    dom = ordered[0].domain
    interiors = [cell_interior(dom.mask_of(c.omega)) for c in ordered]
    contained = {}
    for a, lower in enumerate(ordered):
        inner = dom.mask_of(lower.omega)
        for b in range(a + 1, len(ordered)):
            contained[(a, b)] = not bool((inner & ~interiors[b]).any())
    span = ordered[-1].m - ordered[0].m
    for depth in range(1, span + 1):
        pairs = [(a, b) for a in range(len(ordered)) for b in range(a + 1, len(ordered))
                 if ordered[b].m - ordered[a].m >= depth]
        if pairs and all(contained[pair] for pair in pairs):
            return depth
    return None

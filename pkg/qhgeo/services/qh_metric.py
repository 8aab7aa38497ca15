"""
Quasihyperbolic distances, geodesics and empirical hyperbolicity constants.

The quasihyperbolic length of a cell path is the sum over its edges of
|uv| * (1/d(u) + 1/d(v)) / 2, with d the boundary-distance field. All
estimators draw their samples sequentially from one seeded generator, so a
larger sample count always extends the same stream.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from qhgeo.core.config import settings, worker_count
from qhgeo.core.exceptions import ConfigurationError, DomainError
from qhgeo.schemas.reports import ChainReport, HyperbolicityReport
from qhgeo.services.domain import DiscreteDomain, Point, ball_from_node
from qhgeo.services.whitney import DyadicCube, WhitneyDecomposition
from qhgeo.utils.grid import components
import logging

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QhPath:
    """Polyline through cell centres with both of its lengths."""

    nodes: Tuple[int, ...]
    vertices: np.ndarray
    euclidean_length: float
    qh_length: float

    def __len__(self) -> int:
        return len(self.nodes)


def qh_distance(dom: DiscreteDomain, a: Point, b: Point) -> float:
    """
    Quasihyperbolic distance between the cells nearest to a and b.

    Raises:
        PointOutsideDomainError: Either endpoint cannot be snapped
    """
    na, nb = dom.snap(a), dom.snap(b)
    if na == nb:
        return 0.0
    return float(dom.qh_graph.distances_from(na)[nb])


def _geodesic_nodes(dom: DiscreteDomain, source: int, target: int,
                    dist: Optional[np.ndarray] = None) -> List[int]:
    if source == target:
        return [int(source)]
    if dist is None:
        dist = dom.qh_graph.distances_from(source)
    return dom.qh_graph.trace_path(dist, source, target)


def _path_from_nodes(dom: DiscreteDomain, nodes: Sequence[int]) -> QhPath:
    vertices = dom.points[np.asarray(nodes, dtype=np.int64)]
    steps = np.linalg.norm(np.diff(vertices, axis=0), axis=1) if len(nodes) > 1 else np.zeros(0)
    return QhPath(
        nodes=tuple(int(n) for n in nodes),
        vertices=vertices,
        euclidean_length=float(steps.sum()),
        qh_length=dom.qh_graph.path_weight(nodes),
    )


def qh_geodesic(dom: DiscreteDomain, a: Point, b: Point) -> QhPath:
    """
    Quasihyperbolic geodesic on the cell graph.

    Ties between equally short predecessors go to the smallest node id.

    Raises:
        PointOutsideDomainError: Either endpoint cannot be snapped
    """
    na, nb = dom.snap(a), dom.snap(b)
    return _path_from_nodes(dom, _geodesic_nodes(dom, na, nb))


def _sample_pool(dom: DiscreteDomain) -> np.ndarray:
    """Cells at least 4h from the boundary, or every cell if there are none."""
    pool = np.flatnonzero(dom.node_distance >= 4 * dom.h)
    return pool if pool.size else np.arange(dom.node_count)


def _draw(dom: DiscreteDomain, samples: int, seed: int, arity: int) -> List[Tuple[int, ...]]:
    if samples < 1:
        raise ConfigurationError(f"samples must be >= 1, got {samples}")
    pool = _sample_pool(dom)
    rng = np.random.default_rng(seed)
    return [tuple(int(pool[i]) for i in rng.integers(pool.size, size=arity)) for _ in range(samples)]


def _parallel_max(work: Callable[[Tuple[int, ...]], float], items: Sequence[Tuple[int, ...]],
                  threads: Optional[int]) -> float:
    workers = min(worker_count(threads), max(1, len(items)))
    if workers == 1:
        values = [work(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(work, items))
    return float(max(values)) if values else 0.0


def triangle_thinness(dom: DiscreteDomain, x: int, y: int, z: int) -> float:
    """Max over w on [x, y] of the qh distance from w to [y, z] and [x, z]."""
    if x == y == z:
        return 0.0
    graph = dom.qh_graph
    from_x = graph.distances_from(x)
    from_y = graph.distances_from(y)
    side_xy = _geodesic_nodes(dom, x, y, from_x)
    side_xz = _geodesic_nodes(dom, x, z, from_x)
    side_yz = _geodesic_nodes(dom, y, z, from_y)
    reach = graph.distances(side_xz + side_yz)
    return float(reach[np.asarray(side_xy)].max())


def estimate_delta(dom: DiscreteDomain, samples: int, seed: int = 0,
                   threads: Optional[int] = None) -> HyperbolicityReport:
    """
    Thin-triangle estimate of the Gromov constant of the qh metric.

    Args:
        dom: Grid domain
        samples: Number of triples
        seed: Generator seed
        threads: Worker cap

    Returns:
        HyperbolicityReport with delta_estimate set
    """
    triples = _draw(dom, samples, seed, 3)
    delta = _parallel_max(lambda t: triangle_thinness(dom, *t), triples, threads)
    logger.info(f"Delta estimate {delta:.6g} from {samples} triples (seed={seed})")
    return HyperbolicityReport(delta_estimate=delta, sample_count=samples, seed=seed, h=dom.h)


def four_point_delta(dom: DiscreteDomain, samples: int, seed: int = 0,
                     threads: Optional[int] = None) -> float:
    """Four-point Gromov condition on sampled quadruples (cross-check)."""
    def work(quad: Tuple[int, ...]) -> float:
        x, y, z, w = quad
        graph = dom.qh_graph
        dx, dy, dz = graph.distances_from(x), graph.distances_from(y), graph.distances_from(z)
        sums = sorted([dx[y] + dz[w], dx[z] + dy[w], dx[w] + dy[z]])
        return (sums[-1] - sums[-2]) / 2.0

    return _parallel_max(work, _draw(dom, samples, seed, 4), threads)


def _separated(dom: DiscreteDomain, ball: np.ndarray, x: int, y: int) -> bool:
    """Ball meets x or y, or its removal disconnects them."""
    member = np.zeros(dom.node_count, dtype=bool)
    member[ball] = True
    if member[x] or member[y]:
        return True
    remaining = dom.occupancy & ~dom.mask_of(ball)
    labels, _ = components(remaining)
    cx, cy = dom.coords[x], dom.coords[y]
    return labels[tuple(cx)] != labels[tuple(cy)]


def separates(dom: DiscreteDomain, center: Point, radius: float, x: Point, y: Point) -> bool:
    """
    Whether the inner ball B(center, radius) meets every cell path from x to y.

    Raises:
        PointOutsideDomainError: Any point cannot be snapped
    """
    ball = ball_from_node(dom, dom.snap(center), radius).nodes
    return _separated(dom, ball, dom.snap(x), dom.snap(y))


def _probe_nodes(path: Sequence[int], probes: int) -> List[int]:
    if len(path) <= 2:
        return [int(path[len(path) // 2])]
    picks = {int(path[round(k * (len(path) - 1) / (probes + 1))]) for k in range(1, probes + 1)}
    return sorted(picks)


def separation_constant(dom: DiscreteDomain, x: int, y: int, z: int) -> float:
    """
    Smallest c such that the inner ball B(z, c * d(z)) separates x from y.

    Binary search over the sorted inner distances from z; the predicate is
    monotone since removing a larger ball leaves a smaller set.
    """
    dist = dom.euclid_graph.distances_from(z)
    order = np.argsort(dist, kind="stable")
    order = order[np.isfinite(dist[order])]
    radii = dist[order]
    lo, hi = 0, radii.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        ball = order[radii <= radii[mid]]
        if _separated(dom, ball, x, y):
            hi = mid
        else:
            lo = mid + 1
    return float(radii[lo] / dom.node_distance[z])


def check_ball_separation(dom: DiscreteDomain, samples: int, seed: int = 0,
                          threads: Optional[int] = None) -> float:
    """
    Empirical ball-separation constant C1.

    For each sampled pair, probes settings.GEODESIC_PROBES points of the
    geodesic and records the smallest separating ball radius over d(z).

    Returns:
        Maximum over pairs and probes (0.0 when every pair is degenerate)
    """
    def work(pair: Tuple[int, ...]) -> float:
        x, y = pair
        if x == y:
            return 0.0
        path = _geodesic_nodes(dom, x, y)
        return max(separation_constant(dom, x, y, z)
                   for z in _probe_nodes(path, settings.GEODESIC_PROBES))

    c1 = _parallel_max(work, _draw(dom, samples, seed, 2), threads)
    logger.info(f"Ball-separation estimate {c1:.6g} from {samples} pairs (seed={seed})")
    return c1


def check_gehring_hayman(dom: DiscreteDomain, samples: int, seed: int = 0,
                         threads: Optional[int] = None) -> float:
    """
    Empirical Gehring-Hayman constant C2: geodesic length over inner distance.

    Pairs that snap to the same cell are skipped.
    """
    def work(pair: Tuple[int, ...]) -> float:
        x, y = pair
        if x == y:
            return 0.0
        path = _path_from_nodes(dom, _geodesic_nodes(dom, x, y))
        inner = float(dom.euclid_graph.distances_from(x)[y])
        return path.euclidean_length / inner

    c2 = _parallel_max(work, _draw(dom, samples, seed, 2), threads)
    logger.info(f"Gehring-Hayman estimate {c2:.6g} from {samples} pairs (seed={seed})")
    return c2


def hyperbolicity_report(dom: DiscreteDomain, samples: int, seed: int = 0,
                         threads: Optional[int] = None) -> HyperbolicityReport:
    """Delta, C1 and C2 from the same seed."""
    report = estimate_delta(dom, samples, seed, threads)
    return report.model_copy(update={
        "c1_estimate": check_ball_separation(dom, samples, seed, threads),
        "c2_estimate": check_gehring_hayman(dom, samples, seed, threads),
    })


def chain_positions(dec: WhitneyDecomposition, first: int, last: int) -> List[int]:
    """Cube positions met by the geodesic between two cube centres, in path order."""
    dom = dec.domain
    if first == last:
        return [first]
    source = dom.snap(dec.cubes[first].center(dom))
    target = dom.snap(dec.cubes[last].center(dom))
    chain: List[int] = []
    for node in _geodesic_nodes(dom, source, target):
        label = int(dec.node_labels[node])
        if label >= 0 and label not in chain:
            chain.append(label)
    if not chain or chain[0] != first:
        chain = [first] + [c for c in chain if c != first]
    if chain[-1] != last:
        chain = [c for c in chain if c != last] + [last]
    return chain


def chain_between(dec: WhitneyDecomposition, dom: DiscreteDomain,
                  q1: DyadicCube, q2: DyadicCube) -> ChainReport:
    """
    Whitney chain along the qh geodesic joining two cube centres.

    Raises:
        DomainError: A cube is not part of the decomposition
    """
    if dom is not dec.domain:
        raise DomainError("Decomposition was built on a different domain")
    for cube in (q1, q2):
        if cube not in dec.position:
            raise DomainError(f"Cube {cube.label()} is not in the decomposition")
    chain = chain_positions(dec, dec.position[q1], dec.position[q2])
    ratios = [float(dec.cubes[i].side / q1.side) for i in chain]
    return ChainReport(
        cubes=[dec.cubes[i].label() for i in chain],
        length=len(chain),
        min_side_ratio=min(ratios),
        max_side_ratio=max(ratios),
    )

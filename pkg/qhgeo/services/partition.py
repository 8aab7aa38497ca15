"""
Lipschitz partition of unity subordinate to the core and the layer pieces.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from qhgeo.core.config import settings, worker_count
from qhgeo.core.exceptions import PartitionDefectError
from qhgeo.services.decomposition import BoundaryLayer, CorePartition
from qhgeo.services.domain import DiscreteDomain, Point
import logging

logger = logging.getLogger(__name__)

SparseField = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Normalised psi (dense) and sparse phi_j / varphi_j, indexed like the selected cubes."""

    domain: DiscreteDomain
    m: int
    psi: np.ndarray
    phi: List[SparseField]
    varphi: List[SparseField]
    raw_total: np.ndarray
    gradient_bound: float
    locality: int

    def total(self) -> np.ndarray:
        """psi + sum phi_j + sum varphi_j at every node."""
        out = self.psi.copy()
        for nodes, values in self.phi + self.varphi:
            np.add.at(out, nodes, values)
        return out

    def dense(self, field: SparseField) -> np.ndarray:
        out = np.zeros(self.domain.node_count)
        out[field[0]] = field[1]
        return out

    def support_sizes(self) -> Dict[str, List[int]]:
        return {
            "phi": [int(nodes.size) for nodes, _ in self.phi],
            "varphi": [int(nodes.size) for nodes, _ in self.varphi],
        }


def _cutoff(dom: DiscreteDomain, piece: np.ndarray, slope: float) -> SparseField:
    """max(1 - slope * dist(x, piece), 0) over its support."""
    if piece.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    dist = dom.euclid_graph.distances(piece, limit=1.0 / slope)
    values = np.maximum(1.0 - slope * dist, 0.0)
    nodes = np.flatnonzero(values > 0)
    return nodes, values[nodes]


def _fields(dom: DiscreteDomain, pieces: List[np.ndarray], slope: float,
            threads: Optional[int]) -> List[SparseField]:
    workers = min(worker_count(threads), max(1, len(pieces)))
    if workers == 1:
        return [_cutoff(dom, piece, slope) for piece in pieces]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda piece: _cutoff(dom, piece, slope), pieces))


def transition_slope(dom: DiscreteDomain, slope: float) -> float:
    """A cut-off slope, capped so every transition spans TRANSITION_CELLS cells."""
    return min(slope, 1.0 / (settings.TRANSITION_CELLS * dom.h))


def build_partition(core: CorePartition, layer: BoundaryLayer, dom: DiscreteDomain,
                    threads: Optional[int] = None) -> PartitionOfUnity:
    """
    Build and normalise the partition of unity at scale m.

    psi = min(2^(m+8) dist(x, E u F), 1); phi_j and varphi_j are the
    2^(m+6)-slope cut-offs of S_j and T_j. Both slopes go through
    transition_slope, so on coarse grids a field never drops from 1 to 0
    across a single edge. Each field is divided by their sum.

    Raises:
        PartitionDefectError: The raw sum drops below 1 somewhere
    """
    m = core.m
    count = dom.node_count
    rim = np.union1d(layer.e, layer.f)
    if rim.size:
        rise = transition_slope(dom, 2.0 ** (m + 8))
        psi_dist = dom.euclid_graph.distances(rim, limit=1.0 / rise)
        psi = np.minimum(rise * psi_dist, 1.0)
    else:
        psi = np.ones(count)

    slope = transition_slope(dom, 2.0 ** (m + 6))
    phi = _fields(dom, layer.s, slope, threads)
    varphi = _fields(dom, layer.t, slope, threads)

    raw = psi.copy()
    nonzero = (psi > 0).astype(np.int64)
    for nodes, values in phi + varphi:
        np.add.at(raw, nodes, values)
        nonzero[nodes] += 1
    worst = int(np.argmin(raw))
    if raw[worst] < 1.0 - 1e-12:
        raise PartitionDefectError(
            f"Partition sum {raw[worst]:.6g} < 1 at {tuple(dom.point_of(worst))}",
            context={"m": m, "node": worst, "sum": float(raw[worst])},
        )

    psi = psi / raw
    phi = [(nodes, values / raw[nodes]) for nodes, values in phi]
    varphi = [(nodes, values / raw[nodes]) for nodes, values in varphi]

    graph = dom.euclid_graph
    bound = graph.lipschitz(psi)
    for nodes, values in phi + varphi:
        if nodes.size:
            dense = np.zeros(count)
            dense[nodes] = values
            bound = max(bound, graph.lipschitz(dense))

    locality = int(nonzero.max()) if count else 0
    cap = core.overlap_cap() + 1
    if locality > cap:
        logger.warning(f"{locality} fields overlap at one cell (cap {cap})")
    logger.info(
        f"Partition at m={m}: {len(phi)} phi, {sum(1 for n, _ in varphi if n.size)} nonempty varphi, "
        f"gradient bound {bound:.6g}, locality {locality}"
    )
    return PartitionOfUnity(
        domain=dom,
        m=m,
        psi=psi,
        phi=phi,
        varphi=varphi,
        raw_total=raw,
        gradient_bound=float(bound),
        locality=locality,
    )


def _value_at(field: SparseField, node: int) -> float:
    nodes, values = field
    i = int(np.searchsorted(nodes, node))
    if i < nodes.size and nodes[i] == node:
        return float(values[i])
    return 0.0


def evaluate_partition(pou: PartitionOfUnity, x: Point) -> Dict[str, float]:
    """
    Nonzero partition weights at the cell containing x.

    Returns:
        Mapping like {"psi": 0.5, "phi[3]": 0.5}

    Raises:
        PointOutsideDomainError: x cannot be snapped
    """
    node = pou.domain.snap(x)
    weights: Dict[str, float] = {}
    if pou.psi[node] > 0:
        weights["psi"] = float(pou.psi[node])
    for name, fields in (("phi", pou.phi), ("varphi", pou.varphi)):
        for j, field in enumerate(fields):
            value = _value_at(field, node)
            if value > 0:
                weights[f"{name}[{j}]"] = value
    return weights

"""
Weighted cell graphs over occupied grid cells.

Cells are joined to all 8 (2-D) or 26 (3-D) neighbours. Node ids follow the
C-order of the occupancy array, so comparing ids compares cell indices
lexicographically; path reconstruction uses this as its tie-break.
"""
import itertools
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


def neighbor_offsets(ndim: int) -> np.ndarray:
    """All nonzero offsets in {-1, 0, 1}^ndim in lexicographic order."""
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=ndim) if any(o)]
    return np.array(offsets, dtype=np.int64)


def full_structure(ndim: int) -> np.ndarray:
    """Connectivity structure matching the cell graph (8 or 26 neighbours)."""
    return ndimage.generate_binary_structure(ndim, ndim)


def _shift_slices(shape: Sequence[int], offset: Sequence[int]):
    src, dst = [], []
    for size, o in zip(shape, offset):
        src.append(slice(max(0, -o), size - max(0, o)))
        dst.append(slice(max(0, o), size - max(0, -o)))
    return tuple(src), tuple(dst)


class GridGraph:
    """Sparse symmetric graph on occupied cells with per-edge weights."""

    def __init__(self, node_index: np.ndarray, h: float,
                 node_weight: Optional[np.ndarray] = None):
        """
        Build the graph.

        Args:
            node_index: Grid of node ids, -1 on unoccupied cells
            h: Grid spacing
            node_weight: Optional per-node density; edge weight becomes
                |uv| * (w(u) + w(v)) / 2, otherwise |uv|
        """
        self.node_count = int(node_index.max()) + 1 if node_index.size else 0
        sources: List[np.ndarray] = []
        targets: List[np.ndarray] = []
        lengths: List[np.ndarray] = []
        for offset in neighbor_offsets(node_index.ndim):
            src_sl, dst_sl = _shift_slices(node_index.shape, offset)
            src = node_index[src_sl].ravel()
            dst = node_index[dst_sl].ravel()
            keep = (src >= 0) & (dst >= 0)
            sources.append(src[keep])
            targets.append(dst[keep])
            lengths.append(np.full(int(keep.sum()), h * float(np.linalg.norm(offset))))

        self.src = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
        self.dst = np.concatenate(targets) if targets else np.zeros(0, dtype=np.int64)
        self.length = np.concatenate(lengths) if lengths else np.zeros(0)
        if node_weight is None:
            weight = self.length
        else:
            weight = self.length * (node_weight[self.src] + node_weight[self.dst]) / 2.0
        self.weight = weight
        self.csr = csr_matrix(
            (weight, (self.src, self.dst)), shape=(self.node_count, self.node_count)
        )
        self.csr.sort_indices()

    def distances(self, sources: Iterable[int], limit: float = np.inf) -> np.ndarray:
        """Multi-source shortest-path distances (inf beyond limit)."""
        sources = np.unique(np.asarray(list(sources), dtype=np.int64))
        if sources.size == 0:
            return np.full(self.node_count, np.inf)
        return dijkstra(self.csr, directed=False, indices=sources,
                        min_only=True, limit=limit)

    def distances_from(self, source: int, limit: float = np.inf) -> np.ndarray:
        """Single-source shortest-path distances."""
        return dijkstra(self.csr, directed=False, indices=int(source), limit=limit)

    def trace_path(self, dist: np.ndarray, source: int, target: int) -> List[int]:
        """
        Walk back from target to source along tight edges.

        Among tight predecessors the smallest node id wins, which makes the
        result independent of heap order inside the solver.
        """
        if not np.isfinite(dist[target]):
            raise ValueError(f"node {target} unreachable from {source}")
        indptr, indices, data = self.csr.indptr, self.csr.indices, self.csr.data
        path = [int(target)]
        node = int(target)
        while node != source:
            nbrs = indices[indptr[node]:indptr[node + 1]]
            weights = data[indptr[node]:indptr[node + 1]]
            tol = 1e-12 * max(1.0, float(dist[node]))
            tight = nbrs[np.abs(dist[nbrs] + weights - dist[node]) <= tol]
            tight = tight[dist[tight] < dist[node]]
            if tight.size == 0:
                raise ValueError(f"no tight predecessor at node {node}")
            node = int(tight.min())
            path.append(node)
        path.reverse()
        return path

    def path_weight(self, path: Sequence[int]) -> float:
        """Sum of edge weights along a node path."""
        total = 0.0
        for u, v in zip(path[:-1], path[1:]):
            total += float(self.csr[u, v])
        return total

    def lipschitz(self, values: np.ndarray) -> float:
        """Max |f(u) - f(v)| / |uv| over graph edges."""
        if self.length.size == 0:
            return 0.0
        return float(np.max(np.abs(values[self.src] - values[self.dst]) / self.length))


def cell_closure(mask: np.ndarray, occupancy: np.ndarray) -> np.ndarray:
    """Add every occupied cell adjacent to the set."""
    grown = ndimage.binary_dilation(mask, structure=full_structure(mask.ndim))
    return grown & occupancy


def cell_interior(mask: np.ndarray) -> np.ndarray:
    """Cells of the set whose whole neighbourhood lies in the set."""
    return ndimage.binary_erosion(mask, structure=full_structure(mask.ndim), border_value=0)


def components(mask: np.ndarray):
    """Label path-components with the cell-graph connectivity."""
    return ndimage.label(mask, structure=full_structure(mask.ndim))

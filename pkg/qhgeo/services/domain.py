"""
Bounded domains sampled on uniform grids.

A domain is a boolean occupancy array over lattice points `origin + i*h`
together with the exact Euclidean distance from each occupied point to the
nearest unoccupied one. Grids always carry one exterior layer, so the
distance field is positive on occupied cells and zero elsewhere.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import directed_hausdorff

from qhgeo.core.exceptions import ConfigurationError, DomainError, PointOutsideDomainError
from qhgeo.schemas.domain import DomainSpec
from qhgeo.utils.grid import GridGraph, components
from qhgeo.utils.io import read_bitmap

logger = logging.getLogger(__name__)

Point = Sequence[float]
Spacing = Union[Fraction, float, int, str]


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Immutable grid sampling of a bounded domain."""

    dimension: int
    origin: Tuple[float, ...]
    h_exact: Fraction
    occupancy: np.ndarray
    boundary_distance: np.ndarray
    name: str = ""
    source: Optional[Any] = field(default=None, repr=False)

    def __post_init__(self):
        self.occupancy.setflags(write=False)
        self.boundary_distance.setflags(write=False)

    @property
    def h(self) -> float:
        return float(self.h_exact)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.occupancy.shape

    @property
    def snap_radius(self) -> float:
        """Largest allowed distance between a query point and its cell."""
        return self.h * math.sqrt(self.dimension)

    @cached_property
    def anchor(self) -> np.ndarray:
        """Bounding-box lower corner; dyadic cubes are anchored here."""
        return np.asarray(self.origin) + self.h

    @cached_property
    def extent(self) -> np.ndarray:
        """Bounding-box side lengths covered by the interior lattice points."""
        return (np.asarray(self.shape) - 3) * self.h

    @cached_property
    def node_index(self) -> np.ndarray:
        index = np.full(self.shape, -1, dtype=np.int64)
        index[self.occupancy] = np.arange(int(self.occupancy.sum()))
        index.setflags(write=False)
        return index

    @cached_property
    def coords(self) -> np.ndarray:
        """Integer cell indices of the nodes, in node order."""
        return np.argwhere(self.occupancy)

    @cached_property
    def points(self) -> np.ndarray:
        return np.asarray(self.origin) + self.coords * self.h

    @cached_property
    def node_distance(self) -> np.ndarray:
        return self.boundary_distance[self.occupancy]

    @property
    def node_count(self) -> int:
        return int(self.coords.shape[0])

    @cached_property
    def euclid_graph(self) -> GridGraph:
        """Cell graph with Euclidean edge lengths (inner metric)."""
        return GridGraph(self.node_index, self.h)

    @cached_property
    def qh_graph(self) -> GridGraph:
        """Cell graph with edge weight |uv| * mean(1/d) (quasihyperbolic metric)."""
        return GridGraph(self.node_index, self.h, node_weight=1.0 / self.node_distance)

    def point_of(self, node: int) -> np.ndarray:
        return self.points[int(node)]

    def mask_of(self, nodes: np.ndarray) -> np.ndarray:
        """Boolean grid with the given nodes set."""
        mask = np.zeros(self.shape, dtype=bool)
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size:
            mask[tuple(self.coords[nodes].T)] = True
        return mask

    def nodes_of(self, mask: np.ndarray) -> np.ndarray:
        """Sorted node ids of the occupied cells in a boolean grid."""
        ids = self.node_index[mask & self.occupancy]
        return np.sort(ids)

    def snap(self, point: Point) -> int:
        """
        Snap a point to the nearest occupied cell.

        Raises:
            PointOutsideDomainError: No occupied cell within h*sqrt(n)
        """
        p = np.asarray(point, dtype=float)
        if p.shape != (self.dimension,):
            raise PointOutsideDomainError(
                f"Point {tuple(point)} has wrong dimension for a {self.dimension}-D domain"
            )
        t = (p - np.asarray(self.origin)) / self.h
        lo = np.floor(t).astype(np.int64) - 1
        hi = np.ceil(t).astype(np.int64) + 1
        lo = np.clip(lo, 0, np.asarray(self.shape) - 1)
        hi = np.clip(hi, 0, np.asarray(self.shape) - 1)
        window = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        ids = self.node_index[window].ravel()
        ids = np.sort(ids[ids >= 0])
        if ids.size:
            gaps = np.linalg.norm(self.points[ids] - p, axis=1)
            best = int(np.argmin(gaps))
            if gaps[best] <= self.snap_radius + 1e-12:
                return int(ids[best])
        raise PointOutsideDomainError(
            f"Point {tuple(float(x) for x in p)} is not within h*sqrt(n) of the domain",
            context={"point": [float(x) for x in p], "h": self.h},
        )


@dataclass(frozen=True, eq=False)
class InnerRegion:
    """Closed inner-metric ball: member node ids, centre and radius."""

    nodes: np.ndarray
    center: Tuple[float, ...]
    radius: float

    def __len__(self) -> int:
        return int(self.nodes.size)

    def __contains__(self, node: int) -> bool:
        i = np.searchsorted(self.nodes, node)
        return bool(i < self.nodes.size and self.nodes[i] == node)


def to_fraction(h: Spacing) -> Fraction:
    """Exact spacing; floats are rounded to a denominator below 2**40."""
    if isinstance(h, Fraction):
        value = h
    elif isinstance(h, str):
        value = Fraction(h.strip())
    elif isinstance(h, int):
        value = Fraction(h)
    else:
        value = Fraction(h).limit_denominator(2 ** 40)
    if value <= 0:
        raise ConfigurationError(f"Grid spacing must be positive, got {h}")
    return value


def _axis_points(lo: float, hi: float, h: Fraction) -> Tuple[float, np.ndarray]:
    count = math.ceil(Fraction(hi - lo) / h)
    step = float(h)
    return lo - step, lo + (np.arange(count + 3) - 1) * step


def _planar_bounds(spec: DomainSpec) -> Tuple[float, float, float, float]:
    if spec.kind == "square":
        return tuple(spec.bounds[:4])
    if spec.kind in ("disk", "annulus"):
        cx, cy = spec.center
        r = spec.radius
        return cx - r, cx + r, cy - r, cy + r
    if spec.kind == "custom-union":
        xs0 = [b[0] for b in spec.boxes] + [d[0] - d[2] for d in spec.disks]
        xs1 = [b[1] for b in spec.boxes] + [d[0] + d[2] for d in spec.disks]
        ys0 = [b[2] for b in spec.boxes] + [d[1] - d[2] for d in spec.disks]
        ys1 = [b[3] for b in spec.boxes] + [d[1] + d[2] for d in spec.disks]
        return min(xs0), max(xs1), min(ys0), max(ys1)
    raise ConfigurationError(f"{spec.kind} has no planar bounds")


def _planar_mask(spec: DomainSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Open-set membership of the points (x[i], y[j])."""
    X, Y = np.meshgrid(x, y, indexing="ij")
    if spec.kind == "square":
        x0, x1, y0, y1 = spec.bounds[:4]
        return (X > x0) & (X < x1) & (Y > y0) & (Y < y1)
    if spec.kind in ("disk", "annulus"):
        cx, cy = spec.center
        r2 = (X - cx) ** 2 + (Y - cy) ** 2
        inside = r2 < spec.radius ** 2
        if spec.kind == "annulus":
            inside &= r2 > spec.inner_radius ** 2
        return inside
    if spec.kind == "custom-union":
        inside = np.zeros(X.shape, dtype=bool)
        for x0, x1, y0, y1 in spec.boxes:
            inside |= (X > x0) & (X < x1) & (Y > y0) & (Y < y1)
        for cx, cy, r in spec.disks:
            inside |= (X - cx) ** 2 + (Y - cy) ** 2 < r ** 2
        return inside
    raise ConfigurationError(f"{spec.kind} is not a planar parametric kind")


def _sample_spec(spec: DomainSpec, h: Fraction, base_dir: Optional[Path]):
    """Return (origin, occupancy) for a spec."""
    if spec.kind == "bitmap-file":
        path = Path(spec.path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mask, sidecar = read_bitmap(path)
        spacing = to_fraction(sidecar.spacing)
        if abs(float(spacing) - float(h)) > 1e-12 * float(h):
            raise ConfigurationError(
                f"Bitmap spacing {sidecar.spacing} differs from requested h={float(h)}"
            )
        origin = tuple(float(o) - float(h) for o in sidecar.origin)
        return origin, np.pad(mask, 1)

    if spec.kind == "square" and len(spec.bounds) == 6:
        x0, x1, y0, y1, z0, z1 = spec.bounds
        ox, xs = _axis_points(x0, x1, h)
        oy, ys = _axis_points(y0, y1, h)
        oz, zs = _axis_points(z0, z1, h)
        planar = (xs[:, None] > x0) & (xs[:, None] < x1) & (ys[None, :] > y0) & (ys[None, :] < y1)
        vertical = (zs > z0) & (zs < z1)
        return (ox, oy, oz), planar[:, :, None] & vertical[None, None, :]

    if spec.kind == "product-3d":
        x0, x1, y0, y1 = _planar_bounds(spec.slice)
        z0, z1 = spec.z_range
        ox, xs = _axis_points(x0, x1, h)
        oy, ys = _axis_points(y0, y1, h)
        oz, zs = _axis_points(z0, z1, h)
        planar = _planar_mask(spec.slice, xs, ys)
        vertical = (zs > z0) & (zs < z1)
        return (ox, oy, oz), planar[:, :, None] & vertical[None, None, :]

    x0, x1, y0, y1 = _planar_bounds(spec)
    ox, xs = _axis_points(x0, x1, h)
    oy, ys = _axis_points(y0, y1, h)
    return (ox, oy), _planar_mask(spec, xs, ys)


def domain_from_mask(occupancy: np.ndarray, origin: Sequence[float], h: Spacing,
                     allow_pruning: bool = False, name: str = "",
                     source: Optional[Any] = None) -> DiscreteDomain:
    """
    Finish a domain from a sampled occupancy grid.

    The grid must already carry an unoccupied exterior layer.

    Raises:
        DomainError: Empty interior, or disconnected occupancy without pruning
    """
    h_exact = to_fraction(h)
    occupancy = np.ascontiguousarray(occupancy, dtype=bool)
    if occupancy.ndim not in (2, 3):
        raise DomainError(f"Only 2-D and 3-D domains are supported, got {occupancy.ndim}-D")
    if not occupancy.any():
        raise DomainError("Domain has empty interior at this resolution",
                          context={"h": float(h_exact)})

    labels, count = components(occupancy)
    if count > 1:
        if not allow_pruning:
            raise DomainError(
                f"Occupancy has {count} path-components; set allow_pruning to keep the largest",
                context={"components": int(count)},
            )
        sizes = np.bincount(labels.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        logger.warning(f"Pruning {count - 1} components, keeping {int(sizes[keep - 1])} cells")
        occupancy = labels == keep

    distance = ndimage.distance_transform_edt(occupancy, sampling=float(h_exact))
    dom = DiscreteDomain(
        dimension=occupancy.ndim,
        origin=tuple(float(o) for o in origin),
        h_exact=h_exact,
        occupancy=occupancy,
        boundary_distance=np.asarray(distance, dtype=float),
        name=name,
        source=source,
    )
    logger.info(f"Built {dom.dimension}-D domain {name!r}: {dom.node_count} cells, h={dom.h}")
    return dom


def build_domain(spec: DomainSpec, h: Spacing, base_dir: Optional[Path] = None) -> DiscreteDomain:
    """
    Sample a domain spec on a uniform grid.

    Args:
        spec: Domain description
        h: Grid spacing (exact rationals recommended, e.g. Fraction(1, 256))
        base_dir: Directory for relative bitmap paths

    Returns:
        Connected DiscreteDomain with its boundary-distance field

    Raises:
        ConfigurationError: Non-positive h or bad bitmap metadata
        DomainError: Empty interior or disconnected occupancy without pruning
    """
    h_exact = to_fraction(h)
    origin, occupancy = _sample_spec(spec, h_exact, base_dir)
    return domain_from_mask(occupancy, origin, h_exact,
                            allow_pruning=spec.allow_pruning, name=spec.kind)


def inner_distance(dom: DiscreteDomain, a: Point, b: Point) -> float:
    """
    Length of a shortest grid path between the cells nearest to a and b.

    Raises:
        PointOutsideDomainError: Either point cannot be snapped
    """
    na, nb = dom.snap(a), dom.snap(b)
    if na == nb:
        return 0.0
    dist = dom.euclid_graph.distances_from(na)
    return float(dist[nb])


def ball_from_node(dom: DiscreteDomain, node: int, radius: float) -> InnerRegion:
    """Inner ball about an occupied cell."""
    limit = radius * (1 + 1e-12) + 1e-15
    dist = dom.euclid_graph.distances_from(node, limit=limit)
    members = np.flatnonzero(dist <= limit)
    return InnerRegion(nodes=members, center=tuple(dom.point_of(node)), radius=float(radius))


def inner_ball(dom: DiscreteDomain, center: Point, radius: float) -> InnerRegion:
    """
    All occupied cells within inner distance `radius` of the centre cell.

    Raises:
        PointOutsideDomainError: Centre cannot be snapped
        ConfigurationError: Negative radius
    """
    if radius < 0:
        raise ConfigurationError(f"Radius must be nonnegative, got {radius}")
    region = ball_from_node(dom, dom.snap(center), radius)
    return InnerRegion(nodes=region.nodes, center=tuple(float(c) for c in center),
                       radius=float(radius))


def hausdorff_distance(a_points: np.ndarray, b_points: np.ndarray) -> float:
    """
    Hausdorff distance between two finite point sets (cell centres).

    Raises:
        DomainError: Either set is empty
    """
    a_points = np.atleast_2d(np.asarray(a_points, dtype=float))
    b_points = np.atleast_2d(np.asarray(b_points, dtype=float))
    if a_points.size == 0 or b_points.size == 0:
        raise DomainError("hausdorff_distance needs two nonempty sets")
    forward = directed_hausdorff(a_points, b_points, seed=0)[0]
    backward = directed_hausdorff(b_points, a_points, seed=0)[0]
    return float(max(forward, backward))

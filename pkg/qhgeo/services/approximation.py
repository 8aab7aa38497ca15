"""
Approximation by the partition of unity and discrete Sobolev norms.

u_m = u * psi + sum_j a_j phi_j + sum_j a_j varphi_j, where a_j is the
average of u over the j-th selected boundary cube.
"""
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from qhgeo.core.exceptions import ConfigurationError, DomainError, ResolutionError
from qhgeo.schemas.experiments import DensityRow
from qhgeo.schemas.reports import SobolevNorm
from qhgeo.services.decomposition import (
    BoundaryLayer,
    CorePartition,
    boundary_layer,
    chain_length_bound,
    choose_c1,
    incidence,
    near_boundary_cubes,
    refine_core,
)
from qhgeo.services.domain import DiscreteDomain
from qhgeo.services.partition import PartitionOfUnity, build_partition
from qhgeo.services.whitney import DyadicCube, WhitneyDecomposition, whitney_decompose
import logging

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values at the domain's nodes."""

    domain: DiscreteDomain
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.values.shape != (self.domain.node_count,):
            raise ConfigurationError(
                f"{self.name or 'function'} has {self.values.shape} values for "
                f"{self.domain.node_count} cells"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError(f"{self.name or 'function'} has non-finite values")

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.domain, self.values - other.values, f"{self.name}-{other.name}")

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def grid(self, fill: float = 0.0) -> np.ndarray:
        """Values placed on the occupancy grid."""
        out = np.full(self.domain.shape, fill)
        out[self.domain.occupancy] = self.values
        return out


def _default_pole(dom: DiscreteDomain) -> np.ndarray:
    """A boundary point: the right end of the bounding box at mid-height."""
    lo = dom.anchor
    hi = dom.anchor + dom.extent
    pole = (lo + hi) / 2.0
    occupied_x = dom.points[:, 0]
    pole[0] = float(occupied_x.max()) + dom.h / 2.0 if occupied_x.size else hi[0]
    mid = np.abs(dom.points[:, 1:] - pole[1:]).sum(axis=1)
    row = dom.points[mid <= mid.min() + 1e-12]
    if row.size:
        pole[0] = float(row[:, 0].max()) + dom.h / 2.0
    return pole


def _parse_pole(text: str, dom: DiscreteDomain) -> Tuple[float, np.ndarray]:
    if "@" in text:
        exponent, at = text.split("@", 1)
        pole = np.array([float(v) for v in at.split(",")])
        if pole.size != dom.dimension:
            raise ConfigurationError(f"Pole {at!r} has wrong dimension")
    else:
        exponent, pole = text, _default_pole(dom)
    return float(exponent), pole


def catalog(spec: str, dom: DiscreteDomain) -> GridFunction:
    """
    Build a test function from its catalog name.

    Args:
        spec: constant:c, coord:k, power:alpha[@x,y], loglog:alpha[@x,y]
        dom: Domain to sample on

    Returns:
        GridFunction named after the spec

    Raises:
        ConfigurationError: Unknown name or bad parameters
    """
    kind, _, arg = spec.partition(":")
    points = dom.points
    try:
        if kind == "constant":
            values = np.full(dom.node_count, float(arg or 1.0))
        elif kind == "coord":
            axis = int(arg or 0)
            if not 0 <= axis < dom.dimension:
                raise ConfigurationError(f"coord axis {axis} out of range")
            values = points[:, axis].copy()
        elif kind in ("power", "loglog"):
            alpha, pole = _parse_pole(arg, dom)
            r = np.maximum(np.linalg.norm(points - pole, axis=1), dom.h / 2.0)
            if kind == "power":
                if not 0 < alpha < 1:
                    raise ConfigurationError("power exponent must lie in (0, 1)")
                values = r ** alpha
            else:
                scale = math.e * max(float(np.max(dom.extent)) * math.sqrt(dom.dimension), 1.0)
                values = np.log(np.log(scale / r)) ** alpha
        else:
            raise ConfigurationError(f"Unknown test function {spec!r}")
    except ValueError as e:
        raise ConfigurationError(f"Bad test function {spec!r}: {e}") from e
    return GridFunction(dom, values, spec)


def catalog_p_range(spec: str, dimension: int) -> Tuple[float, float]:
    """Exponents p for which the catalog function is numerically in W^{1,p}."""
    kind, _, arg = spec.partition(":")
    if kind in ("constant", "coord"):
        return 1.0, math.inf
    if kind == "power":
        alpha = float(arg.split("@")[0])
        return 1.0, dimension / (1.0 - alpha)
    if kind == "loglog":
        return 1.0, float(dimension)
    raise ConfigurationError(f"Unknown test function {spec!r}")


def cube_nodes(dom: DiscreteDomain, cube: DyadicCube) -> np.ndarray:
    window = np.zeros(dom.shape, dtype=bool)
    window[cube.slices(dom)] = True
    return dom.nodes_of(window)


def cube_average(u: GridFunction, cube: DyadicCube) -> float:
    """
    Mean of u over the occupied cells owned by a cube.

    Raises:
        DomainError: The cube owns no occupied cell
    """
    nodes = cube_nodes(u.domain, cube)
    if nodes.size == 0:
        raise DomainError(f"Cube {cube.label()} contains no occupied cell")
    return float(u.values[nodes].mean())


def approximate(u: GridFunction, pou: PartitionOfUnity, core: CorePartition) -> GridFunction:
    """
    Partition-of-unity approximant u_m.

    Raises:
        ConfigurationError: Pieces and selected cubes do not correspond
    """
    selected = core.selected
    if len(pou.phi) != len(selected) or len(pou.varphi) != len(selected):
        raise ConfigurationError(
            f"Partition has {len(pou.phi)} pieces but the core selects {len(selected)} cubes"
        )
    cubes = core.decomposition.cubes
    averages = np.array([cube_average(u, cubes[p]) for p in selected])
    values = u.values * pou.psi
    for a, (nodes, weights) in zip(averages, pou.phi):
        np.add.at(values, nodes, a * weights)
    for a, (nodes, weights) in zip(averages, pou.varphi):
        np.add.at(values, nodes, a * weights)
    return GridFunction(u.domain, values, f"{u.name}@m={core.m}")


def gradient(u: GridFunction) -> np.ndarray:
    """
    Finite-difference gradient per node, shape (nodes, n).

    Central differences where both axis neighbours are occupied, one-sided
    where only one is, zero otherwise.
    """
    dom = u.domain
    values = u.grid()
    occ = dom.occupancy
    h = dom.h
    out = np.zeros((dom.node_count, dom.dimension))
    for axis in range(dom.dimension):
        fwd_occ = np.zeros_like(occ)
        bwd_occ = np.zeros_like(occ)
        fwd_val = np.zeros_like(values)
        bwd_val = np.zeros_like(values)
        src = [slice(None)] * occ.ndim
        dst = [slice(None)] * occ.ndim
        src[axis], dst[axis] = slice(1, None), slice(None, -1)
        fwd_occ[tuple(dst)] = occ[tuple(src)]
        fwd_val[tuple(dst)] = values[tuple(src)]
        bwd_occ[tuple(src)] = occ[tuple(dst)]
        bwd_val[tuple(src)] = values[tuple(dst)]
        both = fwd_occ & bwd_occ
        diff = np.zeros_like(values)
        diff[both] = (fwd_val[both] - bwd_val[both]) / (2 * h)
        only_fwd = fwd_occ & ~bwd_occ
        diff[only_fwd] = (fwd_val[only_fwd] - values[only_fwd]) / h
        only_bwd = bwd_occ & ~fwd_occ
        diff[only_bwd] = (values[only_bwd] - bwd_val[only_bwd]) / h
        out[:, axis] = diff[occ]
    return out


def sobolev_norm(u: GridFunction, dom: Optional[DiscreteDomain] = None, p: float = 2.0,
                 nodes: Optional[np.ndarray] = None) -> SobolevNorm:
    """
    Discrete W^{1,p} norm: cell sums of |u|^p and |grad u|^p times h^n.

    Args:
        u: Grid function
        dom: Domain (defaults to u's)
        p: Exponent >= 1
        nodes: Restrict both sums to these nodes

    Raises:
        ConfigurationError: p < 1
    """
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    dom = dom if dom is not None else u.domain
    volume = dom.h ** dom.dimension
    values = u.values
    grad = np.linalg.norm(gradient(u), axis=1)
    if nodes is not None:
        values = values[nodes]
        grad = grad[nodes]
    lp = float((np.abs(values) ** p).sum() * volume) ** (1.0 / p)
    gp = float((grad ** p).sum() * volume) ** (1.0 / p)
    total = (lp ** p + gp ** p) ** (1.0 / p)
    return SobolevNorm(p=p, lp_term=lp, gradient_term=gp, total=total)


def lipschitz_constant(u: GridFunction) -> float:
    """Largest difference quotient over neighbouring cells."""
    return u.domain.euclid_graph.lipschitz(u.values)


def average_discrepancy(u: GridFunction, core: CorePartition, layer: BoundaryLayer, p: float) -> float:
    """
    Sum over meeting piece pairs (j, k) of |a_j - a_k|^p 2^{mp} |piece_j|.

    This is the chained-average term that bounds the energy of u_m on the
    layer from above.
    """
    dom = u.domain
    cubes = core.decomposition.cubes
    averages = np.array([cube_average(u, cubes[p_]) for p_ in core.selected])
    pieces = [np.union1d(s, t) for s, t in zip(layer.s, layer.t)]
    if not pieces:
        return 0.0
    mat = incidence(pieces, dom.node_count)
    meets = (mat @ mat.T).tocoo()
    volume = dom.h ** dom.dimension
    sizes = np.array([piece.size for piece in pieces], dtype=float) * volume
    total = 0.0
    for j, k in zip(meets.row, meets.col):
        if j != k:
            total += abs(averages[j] - averages[k]) ** p * 2.0 ** (core.m * p) * sizes[j]
    return float(total)


@dataclass
class DensityStudy:
    """Rows of the convergence table plus per-scale diagnostics."""

    rows: List[DensityRow] = field(default_factory=list)
    diagnostics: List[Dict[str, float]] = field(default_factory=list)


def default_max_level(dom: DiscreteDomain) -> int:
    """Finest Whitney level with 2^-level >= 2h."""
    return int(math.floor(math.log2(1.0 / (2.0 * dom.h)) + 1e-12))


def density_experiment(dom: DiscreteDomain, u: GridFunction, p: float, m_list: Sequence[int],
                       c1: Optional[float] = None, max_level: Optional[int] = None,
                       dec: Optional[WhitneyDecomposition] = None,
                       threads: Optional[int] = None) -> DensityStudy:
    """
    Measure ||u - u_m||_{W^{1,p}} over a list of scales.

    Args:
        dom: Domain
        u: Target function (finite Sobolev norm)
        p: Exponent
        m_list: Scales to run
        c1: Ball-separation constant for the core construction; None picks
            one per scale with choose_c1
        max_level: Whitney truncation (defaults to the finest admissible level)
        dec: Reuse an existing decomposition
        threads: Worker cap

    Returns:
        DensityStudy with one DensityRow per scale
    """
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    if dec is None:
        level = default_max_level(dom) if max_level is None else max_level
        dec = whitney_decompose(dom, level)
    if m_list and dec.max_level < max(m_list) + 2:
        logger.warning(f"max_level {dec.max_level} < m + 2 for m = {max(m_list)}")
    base = sobolev_norm(u, dom, p)
    if not math.isfinite(base.total):
        raise ResolutionError(f"{u.name} has no finite W^1,{p} norm on this grid")

    study = DensityStudy()
    for m in m_list:
        started = time.perf_counter()
        core = refine_core(dec, dom, m, choose_c1(dec, dom, m, c1))
        layer = boundary_layer(dec, dom, core)
        pou = build_partition(core, layer, dom, threads)
        u_m = approximate(u, pou, core)
        err = sobolev_norm(u - u_m, dom, p)

        chain = chain_length_bound(dec, dom, core, layer)
        near = dec.nodes_of(near_boundary_cubes(dec, core, chain))
        region = np.union1d(near, np.union1d(layer.e_raw, layer.f_raw))
        localized = sobolev_norm(u, dom, p, nodes=region).total ** p
        discrepancy = average_discrepancy(u, core, layer, p)
        elapsed = (time.perf_counter() - started) * 1000.0

        study.rows.append(DensityRow(
            m=m,
            h=dom.h,
            err_total=err.total,
            err_lp=err.lp_term,
            err_grad=err.gradient_term,
            localized_energy=localized,
            lip_um=lipschitz_constant(u_m),
            runtime_ms=elapsed,
        ))
        bound = localized + discrepancy
        study.diagnostics.append({
            "m": float(m),
            "c1": core.c1,
            "chain_bound": float(chain),
            "discrepancy": discrepancy,
            "localization_ratio": err.total ** p / bound if bound > 0 else 0.0,
            "sup_u": u.sup_norm,
            "sup_um": u_m.sup_norm,
            "relative_error": err.total / base.total if base.total > 0 else 0.0,
        })
        logger.info(f"m={m}: err={err.total:.6g} localized={localized:.6g} ({elapsed:.0f} ms)")
    return study

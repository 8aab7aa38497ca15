"""
Tests for grid domains, snapping and inner distances.
"""
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from qhgeo.core.exceptions import ConfigurationError, DomainError, PointOutsideDomainError
from qhgeo.schemas.domain import DomainSpec
from qhgeo.services.domain import (
    build_domain,
    domain_from_mask,
    hausdorff_distance,
    inner_ball,
    inner_distance,
    to_fraction,
)
from qhgeo.utils.io import load_domain_spec, write_bitmap


def test_square_lattice(coarse_square):
    """Test the open square keeps only strictly interior lattice points."""
    assert coarse_square.dimension == 2
    assert coarse_square.shape == (19, 19)
    assert coarse_square.node_count == 15 * 15
    assert coarse_square.origin == pytest.approx((-1 / 16, -1 / 16))


def test_boundary_distance(coarse_square):
    """Test the distance field at the centre and next to the boundary."""
    centre = coarse_square.snap((0.5, 0.5))
    corner = coarse_square.snap((1 / 16, 1 / 16))
    assert coarse_square.node_distance[centre] == pytest.approx(0.5)
    assert coarse_square.node_distance[corner] == pytest.approx(1 / 16)
    assert np.all(coarse_square.boundary_distance[~coarse_square.occupancy] == 0)


def test_exterior_layer_is_empty(coarse_square):
    """Test the grid carries an unoccupied frame."""
    occ = coarse_square.occupancy
    assert not occ[0, :].any() and not occ[-1, :].any()
    assert not occ[:, 0].any() and not occ[:, -1].any()


def test_snap_outside_raises(coarse_square):
    """Test snapping a far point."""
    with pytest.raises(PointOutsideDomainError):
        coarse_square.snap((3.0, 3.0))


def test_snap_wrong_dimension(coarse_square):
    """Test snapping a 3-D point onto a planar domain."""
    with pytest.raises(PointOutsideDomainError):
        coarse_square.snap((0.5, 0.5, 0.5))


def test_inner_distance_straight(coarse_square):
    """Test inner distance along a grid line."""
    assert inner_distance(coarse_square, (1 / 16, 1 / 16), (15 / 16, 1 / 16)) == pytest.approx(14 / 16)
    assert inner_distance(coarse_square, (0.5, 0.5), (0.5, 0.5)) == 0.0


def test_inner_distance_around_slot(domains_dir):
    """Test the U-shape forces paths around its slot."""
    dom = build_domain(load_domain_spec(domains_dir / "ushape.spec"), Fraction(1, 32))
    a, b = (0.125, 0.75), (0.875, 0.75)
    straight = math.dist(a, b)
    assert inner_distance(dom, a, b) > straight + 0.5


def test_inner_ball(coarse_square):
    """Test ball membership and radius validation."""
    ball = inner_ball(coarse_square, (0.5, 0.5), 1 / 16)
    assert len(ball) == 5
    assert coarse_square.snap((0.5, 0.5)) in ball
    with pytest.raises(ConfigurationError):
        inner_ball(coarse_square, (0.5, 0.5), -1.0)


def test_disconnected_union_needs_pruning():
    """Test two separate boxes are rejected unless pruning is allowed."""
    spec = DomainSpec(kind="custom-union", boxes=[[0, 1, 0, 1], [2, 3, 0, 1]])
    with pytest.raises(DomainError):
        build_domain(spec, Fraction(1, 8))
    pruned = build_domain(spec.model_copy(update={"allow_pruning": True}), Fraction(1, 8))
    assert pruned.node_count == 7 * 7


def test_empty_interior():
    """Test a disk too small for the grid."""
    spec = DomainSpec(kind="disk", center=[0.05, 0.05], radius=0.01)
    with pytest.raises(DomainError):
        build_domain(spec, Fraction(1, 4))


def test_annulus_has_hole(domains_dir):
    """Test the annulus excludes its inner disk."""
    dom = build_domain(load_domain_spec(domains_dir / "annulus.spec"), Fraction(1, 16))
    with pytest.raises(PointOutsideDomainError):
        dom.snap((0.0, 0.0))
    assert dom.node_distance[dom.snap((0.75, 0.0))] == pytest.approx(0.25)


def test_product_domain(domains_dir):
    """Test the 3-D product spec."""
    dom = build_domain(load_domain_spec(domains_dir / "cube.spec"), Fraction(1, 8))
    assert dom.dimension == 3
    assert dom.node_count == 7 ** 3


def test_bitmap_domain(tmp_path):
    """Test a bitmap spec with its sidecar."""
    mask = np.zeros((10, 6), dtype=bool)
    mask[1:9, 1:5] = True
    write_bitmap(tmp_path / "shape.png", mask)
    (tmp_path / "shape.png.meta").write_text("origin=0,0\nspacing=1/8\n")
    (tmp_path / "shape.spec").write_text("kind=bitmap-file\npath=shape.png\n")
    spec = load_domain_spec(tmp_path / "shape.spec")
    dom = build_domain(spec, Fraction(1, 8), base_dir=tmp_path)
    assert dom.node_count == int(mask.sum())
    assert dom.snap((0.125, 0.125)) == 0


def test_bitmap_spacing_mismatch(tmp_path):
    """Test a sidecar spacing that differs from h."""
    mask = np.ones((4, 4), dtype=bool)
    write_bitmap(tmp_path / "shape.png", mask)
    (tmp_path / "shape.png.meta").write_text("origin=0,0\nspacing=1/8\n")
    spec = DomainSpec(kind="bitmap-file", path=tmp_path / "shape.png")
    with pytest.raises(ConfigurationError):
        build_domain(spec, Fraction(1, 16))


def test_to_fraction():
    """Test exact spacings."""
    assert to_fraction("1/256") == Fraction(1, 256)
    assert to_fraction(0.125) == Fraction(1, 8)
    with pytest.raises(ConfigurationError):
        to_fraction(0)


def test_hausdorff_distance():
    """Test the symmetric Hausdorff distance of two point sets."""
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.0]])
    assert hausdorff_distance(a, b) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        hausdorff_distance(a, np.zeros((0, 2)))


def test_inner_ball_monotone(coarse_square):
    """Test balls grow with the radius."""
    radii = [0.0, 1 / 16, 0.1, 0.25, 0.6]
    balls = [inner_ball(coarse_square, (0.3, 0.7), r) for r in radii]
    for smaller, larger in zip(balls, balls[1:]):
        assert np.isin(smaller.nodes, larger.nodes).all()
        assert len(smaller) <= len(larger)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_distance_transform_brute_force(seed):
    """Test boundary distances against a direct search over empty cells."""
    rng = np.random.default_rng(seed)
    grid = np.zeros((24, 24), dtype=bool)
    grid[1:-1, 1:-1] = rng.random((22, 22)) < 0.75
    dom = domain_from_mask(grid, (0.0, 0.0), Fraction(1, 32), allow_pruning=True)
    filled = np.argwhere(dom.occupancy)
    empty = np.argwhere(~dom.occupancy)
    expected = cdist(filled, empty).min(axis=1) * dom.h
    assert np.allclose(dom.node_distance, expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("h", [Fraction(1, 16), Fraction(1, 64), Fraction(1, 100)])
def test_dumbbell_is_connected(domains_dir, h):
    """Test the corridor overlaps both squares at every spacing."""
    dom = build_domain(load_domain_spec(domains_dir / "dumbbell.spec"), h)
    assert dom.points[:, 0].min() < 1 < 2 < dom.points[:, 0].max()
    corridor = dom.snap((1.5, 0.5))
    assert dom.node_distance[corridor] < 0.1

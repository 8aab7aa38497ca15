"""
Tests for quasihyperbolic distances, geodesics and hyperbolicity estimates.
"""
import math
from fractions import Fraction

import numpy as np
import pytest

from qhgeo.core.exceptions import ConfigurationError, DomainError
from qhgeo.services.domain import build_domain
from qhgeo.services.qh_metric import (
    chain_between,
    estimate_delta,
    four_point_delta,
    hyperbolicity_report,
    qh_distance,
    qh_geodesic,
    separates,
)
from qhgeo.services.whitney import DyadicCube


def test_qh_distance_zero_and_symmetric(coarse_square):
    """Test identity and symmetry."""
    a, b = (0.25, 0.25), (0.75, 0.5)
    assert qh_distance(coarse_square, a, a) == 0.0
    assert qh_distance(coarse_square, a, b) == pytest.approx(qh_distance(coarse_square, b, a))


def test_qh_distance_lower_bound(coarse_square):
    """Test k(a, b) >= log(1 + |a - b| / min(d(a), d(b)))."""
    a, b = (0.125, 0.5), (0.875, 0.5)
    d = min(coarse_square.node_distance[coarse_square.snap(p)] for p in (a, b))
    assert qh_distance(coarse_square, a, b) >= math.log(1 + math.dist(a, b) / d) - 1e-12


def test_geodesic_matches_distance(coarse_square):
    """Test the geodesic realises the distance and ends at the snapped cells."""
    a, b = (0.125, 0.125), (0.875, 0.625)
    path = qh_geodesic(coarse_square, a, b)
    assert path.qh_length == pytest.approx(qh_distance(coarse_square, a, b))
    assert path.nodes[0] == coarse_square.snap(a)
    assert path.nodes[-1] == coarse_square.snap(b)
    assert path.euclidean_length >= math.dist(a, b) - 1e-12


def test_geodesic_is_deterministic(coarse_square):
    """Test repeated geodesics agree."""
    a, b = (0.125, 0.5), (0.875, 0.5)
    assert qh_geodesic(coarse_square, a, b).nodes == qh_geodesic(coarse_square, a, b).nodes


def test_delta_same_seed(coarse_square):
    """Test the delta estimate depends only on the seed."""
    first = estimate_delta(coarse_square, 6, seed=3, threads=1)
    second = estimate_delta(coarse_square, 6, seed=3, threads=2)
    assert first.delta_estimate == second.delta_estimate
    assert first.delta_estimate >= 0
    assert first.sample_count == 6 and first.seed == 3


def test_delta_needs_samples(coarse_square):
    """Test zero samples are refused."""
    with pytest.raises(ConfigurationError):
        estimate_delta(coarse_square, 0)


def test_four_point_delta(coarse_square):
    """Test the four-point check is nonnegative."""
    assert four_point_delta(coarse_square, 4, seed=1, threads=1) >= 0


def test_hyperbolicity_report(coarse_square):
    """Test all three constants come from one report."""
    report = hyperbolicity_report(coarse_square, 3, seed=0, threads=1)
    assert report.c1_estimate is not None and report.c1_estimate >= 0
    assert report.c2_estimate is not None and report.c2_estimate >= 1 - 1e-9
    assert report.h == pytest.approx(1 / 16)


def test_separates(coarse_square):
    """Test a ball covering one endpoint separates, a tiny far ball does not."""
    assert separates(coarse_square, (0.25, 0.5), 0.1, (0.25, 0.5), (0.75, 0.5))
    assert not separates(coarse_square, (0.5, 0.875), 0.0, (0.25, 0.5), (0.75, 0.5))


def test_chain_between(fine_decomposition, fine_square):
    """Test the Whitney chain starts and ends at the given cubes."""
    q1, q2 = DyadicCube(3, (3, 3)), DyadicCube(3, (2, 5))
    report = chain_between(fine_decomposition, fine_square, q1, q2)
    assert report.cubes[0] == q1.label()
    assert report.cubes[-1] == q2.label()
    assert report.length >= 2
    with pytest.raises(DomainError):
        chain_between(fine_decomposition, fine_square, q1, DyadicCube(9, (0, 0)))


def test_qh_triangle_inequality(coarse_square):
    """Test symmetry and the triangle inequality on sampled cells."""
    rng = np.random.default_rng(7)
    nodes = rng.choice(coarse_square.node_count, size=12, replace=False)
    graph = coarse_square.qh_graph
    table = np.array([graph.distances_from(node)[nodes] for node in nodes])
    assert np.allclose(table, table.T, rtol=0, atol=1e-9)
    through = table[:, :, None] + table[None, :, :]
    assert (table[:, None, :] <= through + 1e-9).all()


@pytest.mark.parametrize("h", [
    Fraction(1, 256),
    pytest.param(Fraction(1, 1024), marks=pytest.mark.slow),
])
def test_qh_distance_log_two(unit_square, h):
    """Test a vertical segment near the bottom edge has qh length log(0.2 / 0.1)."""
    dom = build_domain(unit_square, h)
    assert qh_distance(dom, (0.5, 0.1), (0.5, 0.2)) == pytest.approx(math.log(2), rel=0.05)

"""
Tests for dyadic cubes and Whitney decompositions.
"""
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest

from qhgeo.core.exceptions import ResolutionError
from qhgeo.services.domain import build_domain
from qhgeo.services.whitney import (
    DyadicCube,
    WhitneyDecomposition,
    dyadic_side,
    top_level,
    validate_whitney,
    whitney_decompose,
)
from qhgeo.utils.io import load_domain_spec


def test_dyadic_side():
    """Test exact sides for positive and negative levels."""
    assert dyadic_side(3) == Fraction(1, 8)
    assert dyadic_side(-2) == 4


def test_cube_family():
    """Test parent, children, containment and contact."""
    cube = DyadicCube(2, (1, 2))
    assert cube.parent() == DyadicCube(1, (0, 1))
    children = cube.children()
    assert len(children) == 4
    assert all(cube.contains(child) and child.parent() == cube for child in children)
    assert cube.touches(DyadicCube(2, (2, 3)))
    assert not cube.overlaps(DyadicCube(2, (2, 3)))
    assert cube.overlaps(DyadicCube(3, (2, 4)))
    assert not cube.touches(DyadicCube(2, (3, 2)))
    assert cube.label() == "2:1,2"


def test_top_level(fine_square):
    """Test the coarsest level covers the unit box."""
    assert top_level(fine_square) == 0


def test_square_decomposition(fine_decomposition):
    """Test the cube levels on the unit square."""
    counts = fine_decomposition.level_counts()
    assert min(counts) == 3
    assert max(counts) <= 5
    assert list(fine_decomposition.cubes) == sorted(fine_decomposition.cubes)


def test_square_validates(fine_decomposition):
    """Test every Whitney condition holds on the unit square."""
    report = validate_whitney(fine_decomposition)
    assert report.passed, report.failures()
    assert report.check("neighbor_side_ratio").value <= 4


def test_cubes_own_disjoint_cells(fine_decomposition):
    """Test cube cell sets never overlap."""
    seen = set()
    for nodes in fine_decomposition.cube_nodes:
        members = set(nodes.tolist())
        assert not members & seen
        seen |= members


def test_distance_band(fine_decomposition):
    """Test the accepted cubes sit in the distance band."""
    sides = fine_decomposition.sides
    distances = fine_decomposition.distances
    assert (distances >= sides).all()
    assert (distances <= 4 * 2 ** 0.5 * sides).all()


def test_max_level_too_fine(fine_square):
    """Test cubes smaller than two cells are refused."""
    with pytest.raises(ResolutionError):
        whitney_decompose(fine_square, 6)


def test_overlapping_cubes_fail(fine_square):
    """Test a hand-built family with nested cubes."""
    dec = WhitneyDecomposition(
        domain=fine_square,
        cubes=(DyadicCube(2, (1, 1)), DyadicCube(3, (2, 2))),
        max_level=5,
    )
    report = validate_whitney(dec)
    assert not report.passed
    assert not report.check("disjoint_interiors").passed
    assert report.check("disjoint_interiors").counterexample == "2:1,1 / 3:2,2"


def test_cube_graph_edges(fine_decomposition):
    """Test adjacent cubes are joined in the cube graph."""
    graph = fine_decomposition.graph
    assert graph.number_of_nodes() == len(fine_decomposition)
    position = fine_decomposition.position
    a, b = DyadicCube(3, (3, 3)), DyadicCube(3, (4, 3))
    assert graph.has_edge(position[a], position[b])


def test_two_by_two_block_graph(fine_square):
    """Test four equal cubes in a block touch pairwise, diagonals included."""
    block = (DyadicCube(3, (2, 2)), DyadicCube(3, (2, 3)), DyadicCube(3, (3, 2)), DyadicCube(3, (3, 3)))
    dec = WhitneyDecomposition(domain=fine_square, cubes=block, max_level=5)
    assert dec.graph.number_of_edges() == 6
    single = WhitneyDecomposition(domain=fine_square, cubes=block[:1], max_level=5)
    assert single.graph.number_of_edges() == 0


def test_square_graph_is_connected(fine_decomposition):
    """Test the cube graph of the square has one component."""
    assert nx.is_connected(fine_decomposition.graph)


@pytest.mark.parametrize("name", ["disk", "dumbbell"])
def test_shipped_domains_validate(request, name):
    """Test the Whitney conditions on the curved and corridor domains."""
    _, dec = request.getfixturevalue(name)
    report = validate_whitney(dec)
    assert report.passed, report.failures()
    assert nx.is_connected(dec.graph)


def test_disk_level_counts(disk):
    """Test cube counts near the circle roughly double per level."""
    _, dec = disk
    counts = dec.level_counts()
    for level in (4, 5):
        assert counts[level] <= counts[level + 1] <= 4 * counts[level]


def test_annulus_validates(domains_dir):
    """Test the annulus decomposition surrounds the hole."""
    dom = build_domain(load_domain_spec(domains_dir / "annulus.spec"), Fraction(1, 64))
    dec = whitney_decompose(dom, 5)
    assert validate_whitney(dec).passed
    centers = np.array([cube.center(dom) for cube in dec.cubes])
    radii = np.linalg.norm(centers, axis=1)
    assert radii.min() > 0.5
    assert radii.max() < 1.0


@pytest.mark.slow
@pytest.mark.parametrize("name", ["square", "disk", "annulus", "dumbbell"])
def test_whitney_at_acceptance_resolution(domains_dir, name):
    """Test every shipped planar domain at h = 1/256."""
    dom = build_domain(load_domain_spec(domains_dir / f"{name}.spec"), Fraction(1, 256))
    dec = whitney_decompose(dom, 7)
    report = validate_whitney(dec)
    assert report.passed, report.failures()

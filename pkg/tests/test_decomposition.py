"""
Tests for the refined core, the boundary layer and their validator.
"""
import numpy as np
import pytest

from qhgeo.core.config import settings
from qhgeo.core.exceptions import ConfigurationError, ScaleTooSmallError
from qhgeo.services.decomposition import (
    admissible_c1,
    ball_meet_counts,
    boundary_layer,
    chain_length_bound,
    choose_c1,
    core_component,
    exhaustion_depth,
    incidence,
    largest_cube,
    meet_counts,
    near_boundary_cubes,
    refine_core,
    validate_partitioning,
)
from qhgeo.services.whitney import DyadicCube

C1 = 0.04


@pytest.fixture(scope="module")
def core(fine_decomposition, fine_square):
    return refine_core(fine_decomposition, fine_square, 3, C1)


@pytest.fixture(scope="module")
def layer(fine_decomposition, fine_square, core):
    return boundary_layer(fine_decomposition, fine_square, core)


def test_largest_cube(fine_decomposition):
    """Test Q0 is the first of the central cubes."""
    assert fine_decomposition.cubes[largest_cube(fine_decomposition)] == DyadicCube(3, (3, 3))


def test_core_component(fine_decomposition, fine_square):
    """Test the scale-3 component is the union of the level-3 cubes."""
    nodes = core_component(fine_decomposition, fine_square, 3)
    points = fine_square.points[nodes]
    assert points.min() == pytest.approx(0.25)
    assert points.max() == pytest.approx(0.75 - 1 / 64)


def test_core_selects_ring(core):
    """Test the boundary cubes of the core form the level-3 ring."""
    assert len(core.initial_boundary) == 12
    assert len(core.selected) == 12
    assert set(core.boundary) == set(core.selected)
    assert core.side_ratio == pytest.approx(1.0)
    assert sorted(core.surviving_index.values()) == list(range(12))


def test_core_contains_q0(core, fine_decomposition):
    """Test omega keeps every cell of Q0."""
    q0_nodes = fine_decomposition.cube_nodes[core.q0]
    assert np.isin(q0_nodes, core.omega).all()


def test_scale_too_small(fine_decomposition, fine_square):
    """Test large balls reaching Q0 are refused."""
    with pytest.raises(ScaleTooSmallError):
        refine_core(fine_decomposition, fine_square, 3, 1.0)
    with pytest.raises(ScaleTooSmallError):
        refine_core(fine_decomposition, fine_square, 2, C1)


def test_bad_c1(fine_decomposition, fine_square):
    """Test nonpositive c1 is refused."""
    with pytest.raises(ConfigurationError):
        refine_core(fine_decomposition, fine_square, 3, 0.0)


def test_shuffled_sweep(fine_decomposition, fine_square, core):
    """Test a shuffled sweep keeps the same core here."""
    shuffled = refine_core(fine_decomposition, fine_square, 3, C1, shuffle_seed=5)
    assert np.array_equal(shuffled.omega, core.omega)
    assert set(shuffled.selected) == set(core.selected)


def test_layer_splits_complement(layer, core, fine_square):
    """Test omega, E and F partition the cells."""
    labels = np.zeros(fine_square.node_count, dtype=int)
    for nodes in (core.omega, layer.e_raw, layer.f_raw):
        labels[nodes] += 1
    assert (labels == 1).all()


def test_pieces_cover_layer(layer):
    """Test S pieces cover E without overlapping."""
    stacked = np.concatenate(layer.s_raw)
    assert np.array_equal(np.sort(stacked), layer.e_raw)
    assert len(layer.s_raw) == len(layer.selected)


def test_validator_records_checks(core, layer, fine_square):
    """Test the structural checks that hold for any c1."""
    report = validate_partitioning(core, layer, fine_square, chain_bound=2)
    assert report.check("q0_in_core").passed
    assert report.check("s_pieces_cover_e").passed
    assert report.check("layer_union").passed
    assert report.check("boundary_side_ratio").passed
    assert report.metrics["selected"] == 12
    assert "overlap_s_s" in report.metrics


def test_validator_flags_small_c1(core, layer, fine_square):
    """Test coverage fails when the U balls are too small to reach the rim."""
    report = validate_partitioning(core, layer, fine_square)
    assert not report.passed
    assert not report.check("coverage").passed


def test_chain_length(fine_decomposition, fine_square, core, layer):
    """Test chains from boundary cubes to meeting pieces are short."""
    bound = chain_length_bound(fine_decomposition, fine_square, core, layer, seed=0)
    assert 1 <= bound <= len(fine_decomposition)
    near = near_boundary_cubes(fine_decomposition, core, 1)
    assert sorted(near) == sorted(core.boundary)


def test_exhaustion_depth(fine_decomposition, fine_square, core):
    """Test consecutive cores are compactly nested."""
    finer = refine_core(fine_decomposition, fine_square, 4, C1)
    assert exhaustion_depth([core, finer]) == 1
    assert exhaustion_depth([core]) is None


def test_meet_counts():
    """Test pairwise meeting counts of pieces."""
    pieces = [np.array([0, 1]), np.array([1, 2]), np.array([5])]
    mat = incidence(pieces, 6)
    assert meet_counts(mat, mat, same=True).tolist() == [1, 1, 0]


def test_ball_meet_counts(core, fine_square):
    """Test the packed V-ball counts agree with the sparse incidence product."""
    balls = [core.ball(p, settings.PIECE_FACTOR) for p in core.selected]
    mat = incidence(balls, fine_square.node_count)
    expected = meet_counts(mat, mat, same=True)
    assert ball_meet_counts(core, fine_square).tolist() == expected.tolist()
    assert expected.max() > 0


def test_derived_overlap_cap(core, layer, fine_square):
    """Test every overlap count stays under the multiplicity bound of the scale."""
    report = validate_partitioning(core, layer, fine_square)
    cap = core.overlap_cap()
    assert report.metrics["overlap_cap"] == cap
    assert cap > 1
    for name in ("overlap_v_v", "overlap_s_s", "overlap_t_s", "overlap_s_t", "overlap_b_s"):
        assert report.check(name).passed
        assert report.check(name).limit == cap
    assert core.summary()["overlap_cap"] == cap


def test_overlap_cap_override(core, layer, fine_square, monkeypatch):
    """Test QHGEO_OVERLAP_CAP replaces the derived bound."""
    monkeypatch.setattr(settings, "OVERLAP_CAP", 1)
    report = validate_partitioning(core, layer, fine_square)
    assert report.metrics["overlap_cap"] == 1
    assert not report.check("overlap_v_v").passed
    assert report.check("overlap_v_v").counterexample.startswith("piece ")


def test_admissible_c1(fine_decomposition, fine_square):
    """Test the largest c1 keeping every U away from Q0 is sharp."""
    bound = admissible_c1(fine_decomposition, fine_square, 3)
    assert C1 < bound < 1.0
    refine_core(fine_decomposition, fine_square, 3, 0.99 * bound)
    with pytest.raises(ScaleTooSmallError):
        refine_core(fine_decomposition, fine_square, 3, 1.01 * bound)


def test_choose_c1(fine_decomposition, fine_square):
    """Test explicit values pass through and the automatic one keeps its margin."""
    bound = admissible_c1(fine_decomposition, fine_square, 3)
    chosen = choose_c1(fine_decomposition, fine_square, 3)
    assert chosen == pytest.approx(min(settings.C1_MARGIN * bound, settings.C1_CEILING))
    assert choose_c1(fine_decomposition, fine_square, 3, 0.2) == 0.2
    with pytest.raises(ConfigurationError):
        choose_c1(fine_decomposition, fine_square, 3, 0.0)


def test_dumbbell_core_component(dumbbell):
    """Test the corridor joins the bulbs only once its cubes qualify."""
    dom, dec = dumbbell
    left = core_component(dec, dom, 4)
    assert dom.points[left, 0].max() < 1
    both = core_component(dec, dom, 6)
    assert dom.points[both, 0].max() > 2


def test_dumbbell_far_bulb_is_blocked(dumbbell):
    """Test a U ball at the corridor mouth cuts the far bulb off from Q0."""
    dom, dec = dumbbell
    core = refine_core(dec, dom, 4, 0.33)
    assert (dom.points[core.omega, 0] < 1).all()
    blocked = np.zeros(dom.node_count, dtype=bool)
    for position in core.selected:
        blocked[core.blocks[position]] = True
    assert blocked[dom.points[:, 0] > 2].all()


@pytest.mark.parametrize("name, m, c1", [
    ("dumbbell", 4, 0.33),
    ("dumbbell", 5, 0.55),
    pytest.param("dumbbell", 6, 0.37, marks=pytest.mark.slow),
    ("disk", 4, 0.5),
    ("disk", 5, 0.55),
    pytest.param("disk", 6, 0.6, marks=pytest.mark.slow),
])
def test_partitioning_validates(request, name, m, c1):
    """Test every core and layer check passes once U reaches the rim."""
    dom, dec = request.getfixturevalue(name)
    core = refine_core(dec, dom, m, c1)
    layer = boundary_layer(dec, dom, core)
    report = validate_partitioning(core, layer, dom)
    assert report.passed, [check.name for check in report.failures()]
    assert report.metrics["overlap_v_v"] <= report.metrics["overlap_cap"]

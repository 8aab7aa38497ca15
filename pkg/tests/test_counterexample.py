"""
Tests for the Cantor sets, the step function, the energy series and the
3-D domain built over E.
"""
import math
from fractions import Fraction

import numpy as np
import pytest

from qhgeo.core.exceptions import (
    CantorConstructionError,
    ConfigurationError,
    DomainError,
    ResolutionError,
)
from qhgeo.services.approximation import sobolev_norm
from qhgeo.services.counterexample import (
    IntervalSet,
    bilipschitz_witness,
    box_dimension_estimate,
    build_3d_domain,
    build_fat_cantor,
    build_lewis_cantor,
    build_removable_set,
    build_thin_cantor,
    cantor_lambda,
    cantor_spec,
    cantor_step_value,
    curve_condition,
    curve_criterion,
    curve_series,
    default_i0,
    fat_cantor_measure,
    gradient_energy,
    is_cauchy,
    kappa,
    lewis_gap,
    lift_function,
    line_lipschitz,
    pidef_ratio,
    porosity_check,
    squash_map,
    step_function,
    strip_energy,
    tail_estimate,
    trace_variation,
)
from qhgeo.services.qh_metric import estimate_delta

# Larger i0 keeps the early gaps of C wide enough for an h = 1/16 grid.
COARSE_I0 = 14


@pytest.mark.parametrize("p", [2.5, 3.0, 4.0])
def test_default_i0(p):
    """Test the first index where both ratio conditions hold."""
    assert default_i0(p) == 10


def test_lambda_values():
    """Test the flat ratio before i0 and the normalising ratio after."""
    assert cantor_lambda(3, 11) == pytest.approx(0.33275)
    assert cantor_lambda(3, 1) == pytest.approx(cantor_lambda(3, 10))
    assert cantor_lambda(3, 1) < 0.5
    assert pidef_ratio(4, 10 ** 6) == pytest.approx(2 ** -1.5, rel=1e-4)


def test_lambda_rejects_p():
    """Test p <= 2 has no thin normalisation."""
    with pytest.raises(ConfigurationError):
        cantor_lambda(2.0, 1)
    with pytest.raises(CantorConstructionError):
        cantor_lambda(3, 1, i0=2)


def test_product_matches_target():
    """Test 2^(i(1-p)) P_i^(2-p) = 1/i^3 from i0 on."""
    spec = cantor_spec(3, 30)
    assert spec.i0 == 10
    for i in range(10, 31):
        assert spec.pidef_residual(i) < 1e-9


def test_thin_cantor_middle_thirds():
    """Test explicit ratios give the familiar first level."""
    spec = cantor_spec(3, 1, lambdas=[1 / 3, 1 / 3])
    thin = build_thin_cantor(spec)
    assert thin.pairs() == [
        (0.0, pytest.approx(1 / 3)),
        (pytest.approx(2 / 3), pytest.approx(1.0)),
    ]


def test_thin_cantor_counts():
    """Test 2^depth intervals of length P_depth."""
    spec = cantor_spec(3, 6)
    thin = build_thin_cantor(spec)
    assert len(thin) == 64
    assert np.allclose(thin.lengths, spec.product(6))
    assert thin.measure == pytest.approx(64 * spec.product(6))


def test_explicit_ratios_validated():
    """Test explicit ratio lists."""
    with pytest.raises(ConfigurationError):
        cantor_spec(3, 3, lambdas=[0.25, 0.25])
    with pytest.raises(CantorConstructionError):
        cantor_spec(3, 1, lambdas=[0.25, 0.6])


def test_fat_cantor_exact():
    """Test the fat set after one step with quarter ratios."""
    spec = cantor_spec(3, 1, lambdas=[0.25, 0.25])
    fat = build_fat_cantor(spec)
    assert fat.exact == ((Fraction(0), Fraction(3, 8)), (Fraction(9, 16), Fraction(1)))
    assert fat.exact_measure == Fraction(13, 16)
    assert fat_cantor_measure(spec) == Fraction(13, 16)


def test_fat_cantor_measure_telescopes():
    """Test the measure of F_n equals 1 - (P_1 - P_{n+1})."""
    spec = cantor_spec(3, 8)
    fat = build_fat_cantor(spec)
    assert len(fat) == 9
    assert fat.exact_measure == fat_cantor_measure(spec)
    assert fat.measure > 0.5


def test_interval_set_validation():
    """Test overlapping intervals are refused."""
    with pytest.raises(CantorConstructionError):
        IntervalSet(lo=np.array([0.0, 0.2]), hi=np.array([0.3, 0.5]))
    with pytest.raises(CantorConstructionError):
        IntervalSet(lo=np.array([0.5]), hi=np.array([1.5]))


def test_interval_distance():
    """Test distances to a union of intervals."""
    intervals = IntervalSet(lo=np.array([0.0, 0.6]), hi=np.array([0.2, 1.0]))
    assert intervals.distance([0.1, 0.3, 0.55, -0.5]).tolist() == pytest.approx([0.0, 0.1, 0.05, 0.5])
    assert intervals.contains([0.2, 0.4]).tolist() == [True, False]
    assert intervals.gaps() == [(0.2, 0.6)]


def test_box_dimension():
    """Test the box-counting slope approaches (p-2)/(p-1)."""
    assert box_dimension_estimate(3, 200, 400) == pytest.approx(0.5, abs=0.01)
    assert box_dimension_estimate(4, 200, 400) == pytest.approx(2 / 3, abs=0.01)


def test_removable_set():
    """Test E = C x F membership and distance."""
    removable = build_removable_set(cantor_spec(3, 2))
    assert removable.box_count == 4 * 3
    assert bool(removable.contains(0.0, 0.0))
    assert not bool(removable.contains(0.5, 0.0))
    assert float(removable.distance(-0.3, -0.4)) == pytest.approx(0.5)
    assert removable.measure == pytest.approx(removable.c.measure * removable.f.measure)


def test_step_function_values():
    """Test the plateau values and the undefined set."""
    step = step_function(build_removable_set(cantor_spec(3, 3)))
    assert cantor_step_value(step, 0.5, 0.0) == pytest.approx(0.5)
    assert cantor_step_value(step, -0.5, 0.0) == 0.0
    assert cantor_step_value(step, 1.5, 0.0) == 1.0
    with pytest.raises(DomainError):
        cantor_step_value(step, 0.0, 0.0)


def test_step_function_monotone():
    """Test u is nondecreasing along a line in F."""
    step = step_function(build_removable_set(cantor_spec(3, 4)))
    x = np.linspace(-0.5, 1.5, 400)
    x = x[~step.removable.c.contains(x)]
    values = step.line(x, 0.0)
    assert np.all(np.diff(values) >= -1e-12)


def test_trace_variation():
    """Test the variation along y = 0 is one with support 2^d P_d."""
    spec = cantor_spec(3, 3)
    step = step_function(build_removable_set(spec))
    trace = trace_variation(step, 0.0)
    assert trace.variation == pytest.approx(1.0)
    assert trace.variation_exact == "1"
    assert trace.plateau_count == 7
    assert trace.support_measure == pytest.approx(8 * spec.product(3))


def test_trace_needs_line_in_f():
    """Test lines off F are refused and have finite slope."""
    spec = cantor_spec(3, 2)
    removable = build_removable_set(spec)
    step = step_function(removable)
    gap_lo, gap_hi = removable.f.gaps()[0]
    y_off = (gap_lo + gap_hi) / 2
    with pytest.raises(DomainError):
        trace_variation(step, y_off)
    with pytest.raises(DomainError):
        line_lipschitz(step, 0.0)
    assert 0 < line_lipschitz(step, y_off) < math.inf


def test_gradient_energy_terms():
    """Test term i = 1/i^2 from i0 on when q = p."""
    rows = gradient_energy(cantor_spec(3, 1), 3.0, 40)
    assert len(rows) == 40
    for row in rows[9:]:
        assert row.closed_form_ratio == pytest.approx(1.0, rel=1e-9)
        assert row.term == pytest.approx(1.0 / row.i ** 2, rel=1e-9)
    assert rows[-1].partial_sum == pytest.approx(sum(row.term for row in rows))
    assert 0 < tail_estimate(rows) < 1


def test_gradient_energy_diverges_above_p():
    """Test q > p makes the terms grow."""
    rows = gradient_energy(cantor_spec(3, 1), 3.5, 60)
    assert rows[-1].term > rows[-2].term
    assert tail_estimate(rows) == math.inf


def test_strip_energy_ratio():
    """Test the strip energy stays comparable to its closed form."""
    spec = cantor_spec(3, 10)
    for i in range(1, 11):
        strip = strip_energy(spec, 3.0, i)
        assert 0.05 < strip.ratio < 5
    with pytest.raises(ConfigurationError):
        strip_energy(spec, 3.0, 11)


def test_curve_criterion():
    """Test the exponent that decides the curve series."""
    assert curve_criterion(3, 4) == pytest.approx(4 / 3)
    assert curve_criterion(3, 3) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        curve_criterion(3, 2)


def test_curve_series():
    """Test convergence above the critical exponent only."""
    assert is_cauchy(curve_series(3, 4, 400))
    assert not is_cauchy(curve_series(3, 3, 400))


def test_curve_condition():
    """Test the avoiding curve on a pair across a gap of C."""
    spec = cantor_spec(3, 6)
    removable = build_removable_set(spec)
    gap_lo, gap_hi = removable.f.gaps()[0]
    y = (gap_lo + gap_hi) / 2
    result = curve_condition(spec, 4.0, (0.1, y), (0.9, y), removable)
    assert result.integral > 0
    assert result.bound > 0
    assert result.criterion == pytest.approx(4 / 3)
    assert result.series_converges
    assert 0 <= result.scale_level < spec.depth


def test_curve_condition_on_e():
    """Test endpoints on E and depth zero are refused."""
    spec = cantor_spec(3, 2)
    with pytest.raises(DomainError):
        curve_condition(spec, 4.0, (0.0, 0.0), (0.5, 0.5))
    with pytest.raises(ConfigurationError):
        curve_condition(cantor_spec(3, 0), 4.0, (0.5, 0.5), (1.5, 0.5))


def test_lewis_set():
    """Test the middle-gap set keeps positive length."""
    lewis = build_lewis_cantor(1.5, 0.1, 6)
    assert len(lewis.intervals) == 2 ** 7
    assert 0 < lewis.residual_measure < 1
    assert lewis.residual_measure == pytest.approx(lewis.intervals.measure)
    assert list(lewis.gap_sums) == sorted(lewis.gap_sums)
    assert lewis_gap(1.5, 0.1, 0) == pytest.approx(0.025)


def test_lewis_limits():
    """Test p and s ranges."""
    with pytest.raises(ConfigurationError):
        build_lewis_cantor(2.5, 0.1, 3)
    with pytest.raises(ConfigurationError):
        build_lewis_cantor(1.5, 0.5, 3)
    assert build_lewis_cantor(2.0, 0.1, 4).residual_measure > 0


def test_porosity():
    """Test every sampled point sees its ancestor gaps."""
    lewis = build_lewis_cantor(1.5, 0.1, 5)
    check = porosity_check(lewis, 1.8, samples=20, seed=4)
    assert len(check.ratios) == 20
    assert check.min_ratio > 0
    with pytest.raises(ConfigurationError):
        porosity_check(lewis, 1.2)


def test_kappa():
    """Test the cut-off profile."""
    values = kappa([0.0, 0.25, 0.375, 0.5, 0.9])
    assert values.tolist() == pytest.approx([1.0, 1.0, 0.5, 0.0, 0.0])
    z = np.linspace(0, 1, 1001)
    assert np.abs(np.diff(kappa(z)) / np.diff(z)).max() <= 6 + 1e-6


@pytest.fixture(scope="module")
def slab():
    spec = cantor_spec(3, 1, i0=COARSE_I0)
    return build_3d_domain(spec, Fraction(1, 16))


def test_3d_domain_cuts_columns(slab):
    """Test columns over E are removed below z = 1/2 only."""
    assert slab.dimension == 3
    h = slab.h
    ix = round((0.0 - slab.origin[0]) / h)
    low = round((0.25 - slab.origin[2]) / h)
    high = round((0.75 - slab.origin[2]) / h)
    assert not slab.occupancy[ix, ix, low]
    assert slab.occupancy[ix, ix, high]
    far = round((1.5 - slab.origin[0]) / h)
    assert slab.occupancy[far, far, low]


def test_3d_domain_resolution():
    """Test a grid that merges intervals of C."""
    with pytest.raises(ResolutionError):
        build_3d_domain(cantor_spec(3, 1, i0=COARSE_I0), Fraction(1, 2))


def test_lift_function(slab):
    """Test the lifted function vanishes above z = 1/2 and has finite norm."""
    step = step_function(slab.source)
    lifted = lift_function(step, slab)
    top = slab.points[:, 2] >= 0.5
    assert np.all(lifted.values[top] == 0)
    assert lifted.values.max() <= 1.0
    assert math.isfinite(sobolev_norm(lifted, slab, 3.0).total)


def test_squash_map(slab):
    """Test heights are scaled by the distance to E x (0, 1/2]."""
    x, y, z = squash_map(slab, (1.5, 1.5, 0.25))
    assert (x, y) == (1.5, 1.5)
    assert z == pytest.approx(0.25 * math.hypot(0.5, 0.5))
    with pytest.raises(DomainError):
        squash_map(slab, (0.0, 0.0, 0.25))


def test_bilipschitz_witness(slab):
    """Test distortion on a box away from E and refusal of a box meeting it."""
    witness = bilipschitz_witness(slab, [(1.2, 1.8), (1.2, 1.8), (0.1, 0.4)], samples=200, seed=1)
    assert 0 < witness["min_ratio"] <= witness["max_ratio"] < math.inf
    assert witness["collisions"] == 0
    assert witness["clearance"] == pytest.approx(math.hypot(0.2, 0.2))
    with pytest.raises(ConfigurationError):
        bilipschitz_witness(slab, [(-0.1, 0.1), (-0.1, 0.1), (0.1, 0.4)])


def test_trace_variation_depth_twelve():
    """Test the trace witness at depth 12 and its shrinking support."""
    supports = []
    for depth in (10, 11, 12):
        spec = cantor_spec(3, depth)
        trace = trace_variation(step_function(build_removable_set(spec)), 0.0)
        assert trace.variation_exact == "1"
        assert trace.plateau_count == 2 ** depth - 1
        assert trace.support_measure == pytest.approx(2.0 ** depth * spec.product(depth))
        supports.append(trace.support_measure)
    assert supports[0] > supports[1] > supports[2] > 0


@pytest.mark.parametrize("p", [1.5, 1.8])
def test_lewis_set_depth_twelve(p):
    """Test the gap sums approach their closed-form limit and the set stays porous."""
    s = 0.1
    lewis = build_lewis_cantor(p, s, 12)
    limit = s ** (2 - p) * (0.5 + math.pi ** 2 / 12)
    assert 0.9 * limit < lewis.gap_sums[-1] < limit
    assert lewis.residual_measure > 0
    assert lewis.residual_measure == pytest.approx(lewis.intervals.measure)
    check = porosity_check(lewis, (p + 2) / 2, samples=100, seed=1)
    assert check.min_ratio > 0


@pytest.mark.slow
def test_delta_depth_sweep():
    """Record delta over depths 0 and 1 of the slab domain at h = 1/16.

    Growth in depth only shows once the second generation of gaps is
    resolved, which needs h <= 1/64; this sweep checks the estimates are
    well formed and reproducible on the grids a test run can afford.
    """
    domains = [build_3d_domain(cantor_spec(3, depth, i0=COARSE_I0), Fraction(1, 16)) for depth in (0, 1)]
    assert domains[1].node_count > domains[0].node_count
    for dom in domains:
        report = estimate_delta(dom, 8, seed=3, threads=2)
        assert math.isfinite(report.delta_estimate)
        assert report.delta_estimate >= 0
        assert estimate_delta(dom, 8, seed=3, threads=1).delta_estimate == pytest.approx(report.delta_estimate)

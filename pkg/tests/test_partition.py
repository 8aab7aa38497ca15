"""
Tests for the partition of unity.
"""
import numpy as np
import pytest

from qhgeo.core.config import settings
from qhgeo.core.exceptions import PartitionDefectError
from qhgeo.services.decomposition import BoundaryLayer, boundary_layer, refine_core
from qhgeo.services.partition import build_partition, evaluate_partition, transition_slope


@pytest.fixture(scope="module")
def parts(fine_decomposition, fine_square):
    core = refine_core(fine_decomposition, fine_square, 3, 0.04)
    layer = boundary_layer(fine_decomposition, fine_square, core)
    return core, layer


@pytest.fixture(scope="module")
def pou(parts, fine_square):
    core, layer = parts
    return build_partition(core, layer, fine_square, threads=2)


def test_sums_to_one(pou):
    """Test the normalised fields sum to one everywhere."""
    assert np.allclose(pou.total(), 1.0, atol=1e-12)
    assert (pou.raw_total >= 1.0 - 1e-12).all()


def test_field_counts(pou, parts):
    """Test one phi and one varphi per selected cube."""
    core, _ = parts
    assert len(pou.phi) == len(core.selected)
    assert len(pou.varphi) == len(core.selected)
    sizes = pou.support_sizes()
    assert all(size == 0 for size in sizes["varphi"])


def test_psi_vanishes_on_rim(pou, parts):
    """Test psi is zero on the closed layer and one deep in the core."""
    _, layer = parts
    assert np.all(pou.psi[layer.e] == 0)
    assert pou.psi[pou.domain.snap((0.5, 0.5))] == pytest.approx(1.0)


def test_gradient_bound(pou):
    """Test the Lipschitz bound scales like 2^m / h at this resolution."""
    assert pou.gradient_bound > 0
    assert pou.gradient_bound <= 2.0 / pou.domain.h + 1e-9


def test_evaluate_partition(pou):
    """Test the weights at a core point and at a layer point."""
    assert evaluate_partition(pou, (0.5, 0.5)) == {"psi": pytest.approx(1.0)}
    weights = evaluate_partition(pou, (1 / 64, 1 / 64))
    assert "psi" not in weights
    assert sum(weights.values()) == pytest.approx(1.0)


def test_threads_do_not_change_fields(parts, fine_square, pou):
    """Test serial and threaded builds agree."""
    core, layer = parts
    serial = build_partition(core, layer, fine_square, threads=1)
    assert np.array_equal(serial.psi, pou.psi)
    for (a_nodes, a_vals), (b_nodes, b_vals) in zip(serial.phi, pou.phi):
        assert np.array_equal(a_nodes, b_nodes)
        assert np.array_equal(a_vals, b_vals)


def test_defect_raises(parts, fine_square):
    """Test an uncovered layer cell makes the raw sum drop below one."""
    core, layer = parts
    broken = BoundaryLayer(
        e_raw=layer.e_raw,
        f_raw=layer.f_raw,
        e=layer.e,
        f=layer.f,
        s_raw=[np.zeros(0, dtype=np.int64) for _ in layer.s_raw],
        t_raw=layer.t_raw,
        s=[np.zeros(0, dtype=np.int64) for _ in layer.s],
        t=layer.t,
        selected=layer.selected,
    )
    with pytest.raises(PartitionDefectError):
        build_partition(core, broken, fine_square)


def test_transition_slope(fine_square):
    """Test steep cut-offs are flattened to two cells and gentle ones kept."""
    assert transition_slope(fine_square, 2.0 ** 9) == pytest.approx(32.0)
    assert transition_slope(fine_square, 8.0) == pytest.approx(8.0)


def test_psi_has_a_ramp(pou):
    """Test psi passes through intermediate values between the rim and the core."""
    raw_psi = pou.psi * pou.raw_total
    assert ((raw_psi > 0) & (raw_psi < 1)).any()
    assert np.isclose(raw_psi, 0.5).any()


def test_disk_partition_sums_to_one(disk):
    """Test the partition on the disk at a scale the validator accepts."""
    dom, dec = disk
    core = refine_core(dec, dom, 4, 0.5)
    layer = boundary_layer(dec, dom, core)
    part = build_partition(core, layer, dom, threads=2)
    assert np.allclose(part.total(), 1.0, atol=1e-12)
    assert part.gradient_bound <= 1.0 / dom.h + 1e-9
    for j, position in enumerate(core.selected):
        assert np.isin(layer.s_raw[j], core.ball(position, settings.PIECE_FACTOR)).all()

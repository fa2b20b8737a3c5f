import math

import numpy as np
import pytest
import scipy.io

from app.core.errors import ConfigurationError, ModelInvariantError, PreconditionError
from app.models.contact import SQRT_2PI, ContactModel, FourierSeries, Lattice
from app.models.operator import Symmetry
from app.schemas.contact import ContactModelConfig
from app.services import discretize, exact_heisenberg
from app.services.eigensolve import cluster_multiplicities, dense_eig, eigenvalues_below, lanczos_lowest


def test_popp_volume_flat(flat_model):
    assert discretize.popp_volume(flat_model) == pytest.approx(4.0 * math.pi ** 2, rel=1e-12)


def test_popp_volume_single_mode():
    # mean of (1 + eps cos)^-2 over a period is (1 - eps^2)^(-3/2)
    eps = 0.1
    model = ContactModel(epsilon=eps, coeff_a=FourierSeries.from_pairs([(1, 0, 1.0)]))
    expected = 4.0 * math.pi ** 2 * (1.0 - eps * eps) ** -1.5
    assert discretize.popp_volume(model) == pytest.approx(expected, rel=1e-10)


def test_sector_operator_is_exactly_hermitian(perturbed_model):
    op = discretize.build_sector_operator(perturbed_model, 3, 16)
    assert op.symmetry == Symmetry.HERMITIAN
    assert op.is_hermitian()
    assert op.grid_shape == (16, 16)
    assert op.meta["m"] == 3


def test_torus_sector_flat_spectrum(flat_model):
    op = discretize.build_torus_sector(flat_model, 16)
    assert op.symmetry == Symmetry.REAL_SYMMETRIC
    values = np.array([p.value for p in dense_eig(op, count=6)])
    assert values[0] == pytest.approx(0.0, abs=1e-10)
    np.testing.assert_allclose(values[1:5], values[1], rtol=1e-9)
    assert values[1] == pytest.approx(2.0 * math.pi, rel=0.02)


def test_sector_landau_degeneracy(flat_model):
    op = discretize.build_sector_operator(flat_model, 2, 16)
    values = [p.value for p in dense_eig(op, count=6)]
    assert values[0] == pytest.approx(values[1], rel=1e-9)
    assert values[0] == pytest.approx(2.0, rel=0.03)
    assert cluster_multiplicities(values)[:2] == [2, 2]


@pytest.mark.slow
def test_landau_levels_fine_grid(flat_model):
    for m in range(1, 5):
        op = discretize.build_sector_operator(flat_model, m, 64)
        values = eigenvalues_below(op, 6.0 * m)
        sizes = cluster_multiplicities(values)
        assert sizes[:3] == [m, m, m]
        starts = np.cumsum([0] + sizes[:2])
        for level, start in enumerate(starts):
            assert values[start] == pytest.approx((2 * level + 1) * m, rel=0.01)


def test_full3d_is_union_of_sectors(flat_model):
    n = 8
    op = discretize.build_full3d(flat_model, n)
    assert op.grid_shape == (n, n, n)
    assert op.is_hermitian()
    full = np.sort(eigenvalues_below(op, 9.5))
    parts = [eigenvalues_below(discretize.build_torus_sector(flat_model, n), 9.5)]
    for m in range(-n // 2, n // 2):
        if m:
            parts.append(eigenvalues_below(discretize.build_sector_operator(flat_model, m, n), 9.5))
    union = np.sort(np.concatenate(parts))
    assert full.size == union.size
    np.testing.assert_allclose(full, union, rtol=1e-9, atol=1e-9)


def test_flux_quantization_is_enforced():
    model = ContactModel(lattice=Lattice(1.0, 1.0, 2.0 * math.pi))
    with pytest.raises(ConfigurationError):
        discretize.build_sector_operator(model, 1, 16)


def test_preconditions(flat_model):
    with pytest.raises(PreconditionError):
        discretize.build_sector_operator(flat_model, 0, 16)
    with pytest.raises(PreconditionError):
        discretize.build_torus_sector(flat_model, 4)


def test_nonpositive_frame_is_rejected():
    model = ContactModel(epsilon=2.0, coeff_a=FourierSeries.from_pairs([(1, 0, 1.0)]))
    with pytest.raises(ModelInvariantError):
        discretize.build_torus_sector(model, 16)


def test_energy_operators_flat(flat_model):
    vertical, horizontal = discretize.energy_operators(flat_model, 3, 12)
    np.testing.assert_allclose(vertical.diagonal(), 9.0)
    assert horizontal.shape == (144, 144)


def test_multiplication_operator(flat_model):
    op = discretize.build_torus_sector(flat_model, 8)
    values = discretize.multiplication_operator(op, lambda x, y: np.cos(2 * np.pi * x / SQRT_2PI))
    assert values.shape == (64,)
    assert values[0] == pytest.approx(1.0)
    assert values.sum() == pytest.approx(0.0, abs=1e-12)


def test_gauge_check_is_exact(flat_model):
    h = FourierSeries.from_pairs([(0, 0, 1.0), (1, 0, 0.2)])
    report = discretize.gauge_check(flat_model, h, 24)
    assert report.max_spectral_deviation < 1e-8
    assert report.shift_within_bound


def test_gauge_check_measures_midpoint_discretization(flat_model):
    h = FourierSeries.from_pairs([(0, 0, 1.0), (1, 0, 0.2)])
    coarse = discretize.gauge_check(flat_model, h, 12)
    fine = discretize.gauge_check(flat_model, h, 24)
    assert 0.0 < fine.max_midpoint_gap < coarse.max_midpoint_gap
    assert fine.max_midpoint_gap < 0.1


def test_sector_range(perturbed_model, flat_model):
    assert discretize.sector_range(flat_model, 60.0) == 60
    assert discretize.sector_range(perturbed_model, 60.0) > 60


def test_matrix_market_export(flat_model, store):
    op = discretize.build_sector_operator(flat_model, 1, 8)
    path = discretize.write_matrix_market(op, store, "sector.mtx")
    loaded = scipy.io.mmread(str(path)).tocsr()
    np.testing.assert_allclose(loaded.toarray(), op.matrix.toarray(), rtol=1e-14, atol=1e-14)


def test_model_config_round_trip(perturbed_model):
    config = ContactModelConfig.from_model(perturbed_model.with_density(FourierSeries.constant(2.0)))
    restored = config.to_model()
    assert restored == perturbed_model.with_density(FourierSeries.constant(2.0))


def test_frame_factors_derivatives(perturbed_model):
    x, y, step = 0.37, -0.81, 1e-5
    jet = discretize.frame_factors(perturbed_model, x, y)
    assert jet.c.value == pytest.approx(jet.f.value * jet.g.value)

    def c(xx, yy):
        return discretize.frame_factors(perturbed_model, xx, yy).c.value

    assert jet.c.dx == pytest.approx((c(x + step, y) - c(x - step, y)) / (2 * step), abs=1e-8)
    assert jet.c.dy == pytest.approx((c(x, y + step) - c(x, y - step)) / (2 * step), abs=1e-8)
    assert jet.f.dy == 0.0


@pytest.mark.slow
def test_lowest_landau_level_converges_at_second_order(flat_model):
    errors = []
    for n in (12, 24, 48):
        op = discretize.build_sector_operator(flat_model, 1, n)
        errors.append(abs(dense_eig(op, count=1)[0].value - 1.0))
    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    np.testing.assert_allclose(slopes, 2.0, atol=0.3)


@pytest.mark.parametrize("model_name", ["flat_model", "perturbed_model"])
def test_opposite_sectors_are_conjugate(model_name, request):
    model = request.getfixturevalue(model_name)
    plus = discretize.build_sector_operator(model, 1, 16)
    minus = discretize.build_sector_operator(model, -1, 16)
    assert abs(minus.matrix - plus.matrix.conj()).max() == 0.0
    np.testing.assert_allclose(
        [p.value for p in dense_eig(minus)], [p.value for p in dense_eig(plus)], rtol=1e-12, atol=1e-9
    )


@pytest.mark.slow
def test_full3d_lowest_levels_match_flat_spectrum(flat_model):
    op = discretize.build_full3d(flat_model, 24)
    values = [p.value for p in lanczos_lowest(op, 10, seed=4)]
    aggregated = exact_heisenberg.aggregate_by_value(exact_heisenberg.enumerate_spectrum(4.0))
    exact = np.repeat([v for v, _ in aggregated], [count for _, count in aggregated])[:10]
    np.testing.assert_allclose(exact, [0.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0])
    np.testing.assert_allclose(values, exact, rtol=0.02, atol=1e-8)

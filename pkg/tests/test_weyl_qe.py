import numpy as np
import pytest
import scipy.sparse as sp

from app.core.errors import DomainError, OutOfRangeError, PreconditionError
from app.models.contact import SQRT_2PI
from app.models.operator import SparseOperator, Symmetry
from app.models.series import MatrixElementSeries
from app.services import discretize, exact_heisenberg, weyl_qe
from app.services.eigensolve import dense_eig


@pytest.fixture(scope="module")
def large_spectrum():
    return exact_heisenberg.enumerate_spectrum(1e4)


def test_weyl_fit_on_counting_function():
    report = weyl_qe.weyl_fit(lambda lams: 3.0 * lams ** 2, 10.0, 100.0, reference=3.0)
    assert report.constant == pytest.approx(3.0, rel=1e-12)
    assert report.exponent == pytest.approx(2.0, abs=1e-9)
    assert report.r2 == pytest.approx(1.0)
    assert report.relative_error < 1e-12


def test_weyl_fit_errors(flat_spectrum):
    with pytest.raises(PreconditionError):
        weyl_qe.weyl_fit(flat_spectrum, 100.0, 200.0, points=5)
    with pytest.raises(OutOfRangeError):
        weyl_qe.weyl_fit(flat_spectrum, 200.0, 100.0)
    with pytest.raises(OutOfRangeError):
        weyl_qe.weyl_fit(flat_spectrum, 100.0, 5000.0)
    with pytest.raises(DomainError):
        weyl_qe.weyl_fit([50.0, 60.0], 1.0, 10.0)


def test_cesaro_and_variance():
    series = MatrixElementSeries.from_values([1.0, 2.0, 3.0], [1.0, 0.0, 1.0])
    assert weyl_qe.cesaro_mean(series, 2.5) == pytest.approx(0.5)
    assert weyl_qe.variance(series, 2.5, 0.5) == pytest.approx(0.25)
    var, second, ok = weyl_qe.variance_bound_check(series, 3.0)
    assert ok and var <= second
    with pytest.raises(DomainError):
        weyl_qe.cesaro_mean(series, 0.5)


def test_weights_count_multiplicity():
    series = MatrixElementSeries.from_values([1.0, 2.0], [1.0, 0.0], weights=[3.0, 1.0])
    assert weyl_qe.cesaro_mean(series, 2.0) == pytest.approx(0.75)
    assert len(series.expanded()) == 4


def test_concentration_on_sigma(large_spectrum):
    series = weyl_qe.concentration_series(large_spectrum)
    means = weyl_qe.cesaro_curve(series, [1e2, 1e3, 1e4])
    assert 0.90 <= means[-1] <= 1.0
    assert means[0] < means[1] < means[2]
    variances = weyl_qe.variance_curve(series, [1e2, 1e3, 1e4], 1.0)
    assert variances[2] < variances[0]
    _, _, ok = weyl_qe.variance_bound_check(series, 1e4)
    assert ok


def test_torus_fraction_decays_like_inverse(large_spectrum):
    fractions, slope = weyl_qe.torus_fraction_curve(large_spectrum, [1e2, 1e3, 1e4])
    assert (np.diff(fractions) < 0).all()
    assert slope == pytest.approx(-1.0, abs=0.15)


def test_kvn_on_perfect_squares():
    n = np.arange(1, 10001)
    values = (np.sqrt(n).astype(int) ** 2 == n).astype(float)
    result = weyl_qe.kvn_extract(values)
    assert result.density_estimate >= 0.99 - 1e-12
    assert values[result.kept].max() == 0.0
    assert result.thresholds[0] == 0
    assert (np.diff(result.thresholds) > 0).all()


def test_kvn_rejects_negative_values():
    with pytest.raises(DomainError):
        weyl_qe.kvn_extract([0.1, -0.2])


def test_kvn_drops_torus_tail(large_spectrum):
    series = weyl_qe.concentration_series(large_spectrum)
    below = series.eigenvalues <= 1000.0
    expanded = MatrixElementSeries(
        series.eigenvalues[below], series.values[below], series.weights[below], series.label, series.tags[below]
    ).expanded()
    deficit = 1.0 - expanded.values
    result = weyl_qe.kvn_extract(deficit)
    torus = expanded.tags == 1
    tail = slice(torus.size // 2, None)
    ambient = torus[tail].mean()
    kept = torus[tail][result.kept[tail]].mean()
    assert ambient > 0
    assert kept < 0.1 * ambient
    assert result.density_estimate > 0.5


def test_quantum_limit_classification(flat_model):
    vertical, horizontal = discretize.energy_operators(flat_model, 5, 32)
    op = discretize.build_sector_operator(flat_model, 5, 32)
    record = weyl_qe.quantum_limit_classify(dense_eig(op, count=1)[0].vector, vertical, horizontal)
    assert 0.8 < record.sigma_fraction < 0.86
    assert not record.degenerate

    vertical, horizontal = discretize.energy_operators(flat_model, 0, 16)
    constant = np.ones(256) / 16.0
    record = weyl_qe.quantum_limit_classify(constant, vertical, horizontal)
    assert record.degenerate and record.sigma_fraction == 0.0

    with pytest.raises(DomainError):
        weyl_qe.quantum_limit_classify(np.zeros(256), vertical, horizontal)


def test_local_weyl_cancels_on_a_landau_cluster(flat_model):
    op = discretize.build_sector_operator(flat_model, 4, 24)
    pairs = dense_eig(op)
    series = weyl_qe.local_weyl_series(op, pairs, lambda x, y: np.cos(2 * np.pi * x / SQRT_2PI))
    assert abs(series.values[:4].sum()) < 1e-8
    assert abs(series.values.sum()) < 1e-8
    ones = weyl_qe.local_weyl_series(op, pairs[:10], lambda x, y: np.ones_like(x))
    np.testing.assert_allclose(ones.values, 1.0, rtol=1e-12)


def test_sigma_side_split():
    sector_plus = SparseOperator(sp.identity(4, format="csr"), Symmetry.REAL_SYMMETRIC, np.ones(4), (2, 2), {"m": 2})
    sector_minus = SparseOperator(sp.identity(4, format="csr"), Symmetry.REAL_SYMMETRIC, np.ones(4), (2, 2), {"m": -2})
    assert weyl_qe.sigma_side_split(sector_plus, np.ones(4)) == (1.0, 0.0)
    assert weyl_qe.sigma_side_split(sector_minus, np.ones(4)) == (0.0, 1.0)

    n = 8
    op = SparseOperator(sp.identity(n ** 3, format="csr"), Symmetry.REAL_SYMMETRIC, np.ones(n ** 3), (n, n, n), {})
    z = 2 * np.pi * np.arange(n) / n
    psi = np.broadcast_to(np.exp(1j * z), (n, n, n)).ravel()
    plus, minus = weyl_qe.sigma_side_split(op, psi)
    assert plus == pytest.approx(1.0)
    assert minus == pytest.approx(0.0, abs=1e-12)
    assert weyl_qe.sigma_side_split(op, np.ones(n ** 3)) == (0.0, 0.0)


def test_sector_spectrum_counts_flat_quotient(flat_model):
    values = weyl_qe.sector_spectrum(flat_model, 3.5, 16)
    assert values.size == exact_heisenberg.counting(exact_heisenberg.enumerate_spectrum(3.5), 3.5)


@pytest.mark.slow
def test_perturbed_weyl_law(perturbed_model):
    values = weyl_qe.sector_spectrum(perturbed_model, 60.0, 48)
    reference = discretize.popp_volume(perturbed_model) / 32.0
    report = weyl_qe.weyl_fit(values, 20.0, 60.0, reference=reference)
    assert report.relative_error < 0.10


@pytest.mark.slow
def test_weyl_constant_does_not_depend_on_density(flat_model):
    report = weyl_qe.density_comparison(flat_model, None, 20.0, 60.0, 48)
    assert report.popp.relative_error < 0.10
    assert report.density.relative_error < 0.10
    assert report.relative_gap < 0.10


def test_density_comparison_reuses_popp_values(flat_model):
    popp_values = weyl_qe.sector_spectrum(flat_model, 12.0, 16)
    report = weyl_qe.density_comparison(flat_model, None, 4.0, 12.0, 16, points=12, popp_values=popp_values)
    direct = weyl_qe.weyl_fit(popp_values, 4.0, 12.0, 12)
    assert report.popp.constant == pytest.approx(direct.constant)
    assert report.relative_gap == pytest.approx(
        abs(report.density.constant - report.popp.constant) / report.popp.constant
    )


def test_series_and_mask_csv(store):
    series = MatrixElementSeries.from_values([1.0, 2.0], [0.5, 0.25])
    lines = weyl_qe.write_series_csv(series, store).read_text().splitlines()
    assert lines == ["index,eigenvalue,value,weight", "0,1,0.5,1", "1,2,0.25,1"]
    result = weyl_qe.kvn_extract([0.5, 0.0])
    lines = weyl_qe.write_mask_csv([0.5, 0.0], result, store).read_text().splitlines()
    assert lines[0] == "index,value,kept,level"
    assert lines[1] == "0,0.5,1,0"

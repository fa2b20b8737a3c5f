"""Weyl fits, Cesaro means and variances of matrix-element series, and the
density-one extraction that turns a vanishing Cesaro mean into a vanishing
subsequence.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from app.core.deps import parallel_map
from app.core.errors import DomainError, OutOfRangeError, PreconditionError
from app.models.contact import ContactModel, FourierSeries
from app.models.operator import EigenPair, SparseOperator
from app.models.series import DensityOneSet, MatrixElementSeries
from app.models.spectrum import SpectrumList
from app.schemas.reports import ClassificationRecord, DensityComparison, WeylFitReport
from app.services import exact_heisenberg
from app.services.discretize import (
    build_sector_operator,
    build_torus_sector,
    multiplication_operator,
    popp_volume,
    sector_range,
)
from app.services.eigensolve import eigenvalues_below
from app.storage.artifacts import ArtifactStore

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 10
KVN_MAX_LEVEL = 60
DEGENERATE_TOL = 1e-12

# h = 1 + 0.2 cos(2 pi x / Lx)
DEFAULT_DENSITY_H = FourierSeries.from_pairs([(0, 0, 1.0), (1, 0, 0.2)])

CountingSource = Union[SpectrumList, np.ndarray, Sequence[float], Callable[[np.ndarray], np.ndarray]]


def _counting_function(source: CountingSource) -> Tuple[Callable[[np.ndarray], np.ndarray], float]:
    if isinstance(source, SpectrumList):
        return (lambda lams: exact_heisenberg.counting_many(source, lams)), source.lambda_max
    if callable(source):
        return (lambda lams: np.asarray(source(lams), dtype=float)), np.inf
    values = np.sort(np.asarray(source, dtype=float))
    return (lambda lams: np.searchsorted(values, lams, side="right")), np.inf


def weyl_fit(
    source: CountingSource,
    lam_lo: float,
    lam_hi: float,
    points: int = 32,
    exponent: float = 2.0,
    reference: Optional[float] = None,
) -> WeylFitReport:
    """Fit N(lam) ~ C lam^e on a geometric grid of `points` values.

    `constant` is C at the fixed exponent (geometric mean of N/lam^exponent);
    the free log-log least-squares fit supplies `exponent`, `constant_free`
    and r^2. `source` is a SpectrumList, a list of eigenvalues (one per
    eigenfunction) or a vectorized counting function.
    """
    if points < MIN_FIT_POINTS:
        raise PreconditionError("weyl_fit needs at least 10 points", points=points)
    count, lambda_max = _counting_function(source)
    if not 0 < lam_lo < lam_hi:
        raise OutOfRangeError("weyl_fit window must satisfy 0 < lam_lo < lam_hi", lam_lo=lam_lo, lam_hi=lam_hi)
    if lam_hi > lambda_max:
        raise OutOfRangeError("weyl_fit window beyond the enumerated cutoff", lam_hi=lam_hi, lambda_max=lambda_max)

    lams = np.geomspace(lam_lo, lam_hi, points)
    counts = np.asarray(count(lams), dtype=float)
    if np.any(counts <= 0):
        raise DomainError("empty counting window", lam_lo=lam_lo, lam_hi=lam_hi)

    log_l, log_n = np.log(lams), np.log(counts)
    slope, intercept = np.polyfit(log_l, log_n, 1)
    fitted = intercept + slope * log_l
    ss_res = float(np.sum((log_n - fitted) ** 2))
    ss_tot = float(np.sum((log_n - log_n.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    constant = float(np.exp(np.mean(log_n - exponent * log_l)))

    report = WeylFitReport(
        constant=constant,
        exponent=float(slope),
        r2=r2,
        constant_free=float(np.exp(intercept)),
        fixed_exponent=exponent,
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
        points=points,
        reference=reference,
    )
    logger.info("Weyl fit on [%g, %g]: C=%.6g exponent=%.4f r2=%.6f", lam_lo, lam_hi, constant, slope, r2)
    return report


def _cumulative(series: MatrixElementSeries, values: np.ndarray, lams) -> np.ndarray:
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    idx = np.searchsorted(series.eigenvalues, lams, side="right")
    weight = np.concatenate([[0.0], np.cumsum(series.weights)])[idx]
    total = np.concatenate([[0.0], np.cumsum(series.weights * values)])[idx]
    if np.any(weight <= 0):
        raise DomainError("no series entries below lambda", lam=float(lams[np.argmax(weight <= 0)]), label=series.label)
    return total / weight


def cesaro_mean(series: MatrixElementSeries, lam: float) -> float:
    """(1/N(lam)) * sum of values over eigenvalues <= lam, multiplicity weighted"""
    return float(_cumulative(series, series.values, lam)[0])


def cesaro_curve(series: MatrixElementSeries, lams) -> np.ndarray:
    return _cumulative(series, series.values, lams)


def variance(series: MatrixElementSeries, lam: float, center: float) -> float:
    return float(_cumulative(series, np.abs(series.values - center) ** 2, lam)[0])


def variance_curve(series: MatrixElementSeries, lams, center: float) -> np.ndarray:
    return _cumulative(series, np.abs(series.values - center) ** 2, lams)


def variance_bound_check(series: MatrixElementSeries, lam: float) -> Tuple[float, float, bool]:
    """(V, E(A^2), V <= E(A^2)) with V centred at the Cesaro mean"""
    center = cesaro_mean(series, lam)
    var = variance(series, lam, center)
    second = cesaro_mean(series.squared(), lam)
    return var, second, var <= second * (1.0 + 1e-12) + 1e-15


def kvn_extract(values) -> DensityOneSet:
    """Constructive density-one subsequence along which `values` tends to zero.

    T_k is the first index after which the running Cesaro mean stays below
    4^-k; from T_k on (until T_{k+1}) an index is kept iff its value is
    below 2^-k. Before T_1 the threshold is 1, strictly.
    """
    u = np.asarray(values, dtype=float)
    if u.size and u.min() < 0:
        raise DomainError("kvn_extract needs nonnegative values", minimum=float(u.min()))
    n = u.size
    if n == 0:
        return DensityOneSet(kept=np.zeros(0, dtype=bool), density_estimate=0.0)

    running = np.cumsum(u) / np.arange(1, n + 1)
    suffix_max = np.maximum.accumulate(running[::-1])[::-1]

    thresholds: List[int] = [0]
    for k in range(1, KVN_MAX_LEVEL + 1):
        below = np.nonzero(suffix_max < 4.0 ** (-k))[0]
        if below.size == 0:
            break
        thresholds.append(int(below[0]))
    levels = np.searchsorted(np.asarray(thresholds), np.arange(n), side="right") - 1
    kept = u < 2.0 ** (-levels.astype(float))

    density = float(kept.sum()) / n
    logger.debug("kvn extraction over %d values: %d levels, density %.6f", n, len(thresholds) - 1, density)
    return DensityOneSet(kept=kept, density_estimate=density, thresholds=thresholds, levels=levels)


def _quadratic(op, vec: np.ndarray) -> float:
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return float(np.real(np.vdot(vec, op @ vec)))
    return float(np.real(np.vdot(vec, op.matrix @ vec)))


def quantum_limit_classify(vector: np.ndarray, vertical, horizontal) -> ClassificationRecord:
    """sigma_fraction = <Z*Z psi, psi> / (<Z*Z psi, psi> + <(X*X + Y*Y) psi, psi>).

    Close to 1 the eigenfunction concentrates on the characteristic cone,
    close to 0 on the horizontal directions. A vanishing denominator (the
    constant function) gives fraction 0 with the degenerate flag set.
    """
    vector = np.asarray(vector)
    norm2 = float(np.real(np.vdot(vector, vector)))
    if norm2 == 0.0:
        raise DomainError("cannot classify the zero vector")
    v = _quadratic(vertical, vector)
    h = _quadratic(horizontal, vector)
    if v + h <= DEGENERATE_TOL * norm2:
        logger.warning("degenerate classification: vertical %.3e horizontal %.3e", v, h)
        return ClassificationRecord(sigma_fraction=0.0, vertical=v, horizontal=h, degenerate=True)
    return ClassificationRecord(sigma_fraction=min(max(v / (v + h), 0.0), 1.0), vertical=v, horizontal=h)


def concentration_series(spectrum: SpectrumList) -> MatrixElementSeries:
    """<h_Z^2/(g* + h_Z^2) phi, phi> per spectral datum, weighted by multiplicity"""
    return MatrixElementSeries(
        eigenvalues=spectrum.eigenvalues.astype(float),
        values=exact_heisenberg.concentration_values(spectrum),
        weights=spectrum.multiplicities.astype(float),
        label="concentration",
        tags=spectrum.kinds.copy(),
    )


def torus_fraction_curve(spectrum: SpectrumList, lams) -> Tuple[np.ndarray, float]:
    """N_0(lam)/N(lam) on the grid and its log-log slope"""
    lams = np.asarray(lams, dtype=float)
    fraction = exact_heisenberg.torus_counting_many(spectrum, lams) / exact_heisenberg.counting_many(spectrum, lams)
    slope = float(np.polyfit(np.log(lams), np.log(fraction), 1)[0])
    return fraction, slope


def local_weyl_series(op: SparseOperator, pairs: Sequence[EigenPair], f, label: str = "local") -> MatrixElementSeries:
    """<f phi_n, phi_n>_mu for the multiplication operator f(x, y).

    phi = psi / sqrt(mass) makes the mu-weighted sum a plain sum over |psi|^2.
    """
    weights = multiplication_operator(op, f)
    values = [float(np.sum(weights * np.abs(p.vector) ** 2)) for p in pairs]
    return MatrixElementSeries.from_values([p.value for p in pairs], values, label=label)


def sigma_side_split(op: SparseOperator, vector: np.ndarray) -> Tuple[float, float]:
    """Fractions of the vertical-frequency mass on the p_z > 0 and p_z < 0 sides.

    On a 3d operator the z direction is Fourier transformed; the Nyquist mode
    of an even grid has no partner and is left out together with m = 0.
    A sector operator lies entirely on the side of the sign of m.
    """
    if len(op.grid_shape) == 2:
        m = op.meta.get("m") or 0
        if m == 0:
            return 0.0, 0.0
        return (1.0, 0.0) if m > 0 else (0.0, 1.0)
    n = op.grid_shape[2]
    psi = np.asarray(vector).reshape(op.grid_shape)
    spectrum = np.abs(np.fft.fft(psi, axis=2)) ** 2
    modes = np.fft.fftfreq(n, d=1.0 / n)
    mass = spectrum.sum(axis=(0, 1))
    plus = float(mass[(modes > 0) & (modes < n / 2)].sum())
    minus = float(mass[(modes < 0) & (modes > -n / 2)].sum())
    total = plus + minus
    if total == 0.0:
        return 0.0, 0.0
    return plus / total, minus / total


def sector_spectrum(model: ContactModel, lambda_max: float, n_grid: int) -> np.ndarray:
    """Sorted eigenvalues <= lambda_max of the discretized quotient, one per eigenfunction.

    Sector -m is the complex conjugate of sector m, so each m > 0 is solved
    once and counted twice.
    """
    m_max = sector_range(model, lambda_max)

    def solve(m: int) -> np.ndarray:
        if m == 0:
            return eigenvalues_below(build_torus_sector(model, n_grid), lambda_max)
        values = eigenvalues_below(build_sector_operator(model, m, n_grid), lambda_max)
        return np.concatenate([values, values])

    parts = parallel_map(solve, range(0, m_max + 1))
    values = np.sort(np.concatenate(parts))
    logger.info("perturbed spectrum below %g: %d eigenvalues from %d sectors", lambda_max, values.size, m_max + 1)
    return values


def density_comparison(
    model: ContactModel,
    h: Optional[FourierSeries],
    lambda_lo: float,
    lambda_hi: float,
    n_grid: int,
    points: int = 32,
    popp_values: Optional[np.ndarray] = None,
) -> DensityComparison:
    """Weyl constants of the Popp density and of mu = h^2 Popp on one window.

    Both fits carry popp_volume/32 as reference; the leading constant does not
    depend on the density, so relative_gap measures discretization and fit noise.
    """
    h = DEFAULT_DENSITY_H if h is None else h
    reference = popp_volume(model) / 32.0
    if popp_values is None:
        popp_values = sector_spectrum(model.with_density(None), lambda_hi, n_grid)
    density_values = sector_spectrum(model.with_density(h), lambda_hi, n_grid)
    popp = weyl_fit(popp_values, lambda_lo, lambda_hi, points, reference=reference)
    density = weyl_fit(density_values, lambda_lo, lambda_hi, points, reference=reference)
    gap = abs(density.constant - popp.constant) / popp.constant
    logger.info("density comparison: C_popp=%.6g C_h=%.6g gap %.3e", popp.constant, density.constant, gap)
    return DensityComparison(popp=popp, density=density, relative_gap=gap)


def write_series_csv(series: MatrixElementSeries, store: ArtifactStore, name: str = "series.csv"):
    return store.write_csv(
        name,
        ("index", "eigenvalue", "value", "weight"),
        ((i, lam, val, w) for i, (lam, val, w) in enumerate(zip(series.eigenvalues, series.values, series.weights))),
    )


def write_mask_csv(values, extraction: DensityOneSet, store: ArtifactStore, name: str = "kvn_mask.csv"):
    values = np.asarray(values, dtype=float)
    levels = extraction.levels if extraction.levels is not None else np.zeros(values.size, dtype=int)
    return store.write_csv(
        name,
        ("index", "value", "kept", "level"),
        ((i, v, bool(k), int(lv)) for i, (v, k, lv) in enumerate(zip(values, extraction.kept, levels))),
    )

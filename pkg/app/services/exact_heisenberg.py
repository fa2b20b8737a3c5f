"""Closed-form spectrum of the flat Heisenberg quotient.

The e^{imz} sectors (m != 0) are Landau problems with levels (2l+1)|m| of
multiplicity |m|; the m = 0 sector is the flat torus with eigenvalues
2*pi*(j^2 + k^2).
"""
import logging
import math
from typing import List, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import DomainError, OutOfRangeError, PreconditionError, ResourceLimitError
from app.models.spectrum import SectorKind, SpectralDatum, SpectrumList
from app.schemas.reports import TorusFitReport
from app.storage.artifacts import ArtifactStore

logger = logging.getLogger(__name__)

# Gamma = {x, y in sqrt(2 pi) Z, z in 2 pi Z}; the fundamental cell has
# dx dy dz volume sqrt(2 pi) * sqrt(2 pi) * 2 pi, and for alpha_H = dz + x dy
# the Popp density |alpha_H ^ d alpha_H| is exactly dx dy dz.
POPP_VOLUME_FLAT = 4.0 * math.pi ** 2

# N(lambda) ~ P(M) / 32 * lambda^2
WEYL_CONSTANT_FLAT = POPP_VOLUME_FLAT / 32.0

SPECTRUM_CSV_HEADER = ("eigenvalue", "sector_kind", "l", "m", "j", "k", "multiplicity")


def estimate_entries(lambda_max: float) -> int:
    """Upper estimate of the number of stored entries below lambda_max"""
    lam = max(lambda_max, 1.0)
    return int(lam * (math.log(lam) + 2.0) + lam / 2.0 + 10)


def enumerate_spectrum(lambda_max: float) -> SpectrumList:
    if not lambda_max > 0:
        raise DomainError("lambda_max must be positive", lambda_max=lambda_max)
    estimate = estimate_entries(lambda_max)
    if estimate > settings.MAX_SPECTRUM_ENTRIES:
        raise ResourceLimitError(
            "spectrum enumeration exceeds the entry budget",
            lambda_max=lambda_max,
            estimate=estimate,
            budget=settings.MAX_SPECTRUM_ENTRIES,
        )

    # oscillator pairs: for each |m| <= lambda_max, l = 0 .. floor((lambda/|m| - 1)/2)
    mabs = np.arange(1, int(math.floor(lambda_max)) + 1, dtype=np.int64)
    counts = np.floor((lambda_max / mabs - 1.0) / 2.0).astype(np.int64) + 1
    counts = np.maximum(counts, 0)
    total = int(counts.sum())
    m_col = np.repeat(mabs, counts)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    l_col = np.arange(total, dtype=np.int64) - offsets
    keep = (2 * l_col + 1) * m_col <= lambda_max
    l_col, m_col = l_col[keep], m_col[keep]
    l_osc = np.concatenate([l_col, l_col])
    m_osc = np.concatenate([m_col, -m_col])
    ev_osc = ((2 * l_osc + 1) * np.abs(m_osc)).astype(float)

    # torus lattice points
    jmax = int(math.floor(math.sqrt(lambda_max / (2.0 * math.pi))))
    jj, kk = np.meshgrid(np.arange(-jmax, jmax + 1), np.arange(-jmax, jmax + 1), indexing="ij")
    ev_tor = 2.0 * np.pi * (jj * jj + kk * kk)
    inside = ev_tor <= lambda_max
    j_tor, k_tor, ev_tor = jj[inside].astype(np.int64), kk[inside].astype(np.int64), ev_tor[inside]

    n_osc, n_tor = ev_osc.size, ev_tor.size
    eigenvalues = np.concatenate([ev_osc, ev_tor])
    kinds = np.concatenate([np.zeros(n_osc, dtype=np.int8), np.ones(n_tor, dtype=np.int8)])
    l = np.concatenate([l_osc, np.zeros(n_tor, dtype=np.int64)])
    m = np.concatenate([m_osc, np.zeros(n_tor, dtype=np.int64)])
    j = np.concatenate([np.zeros(n_osc, dtype=np.int64), j_tor])
    k = np.concatenate([np.zeros(n_osc, dtype=np.int64), k_tor])
    mult = np.concatenate([np.abs(m_osc), np.ones(n_tor, dtype=np.int64)])

    order = np.lexsort((k, j, m, l, kinds, eigenvalues))
    spectrum = SpectrumList(
        lambda_max=float(lambda_max),
        eigenvalues=eigenvalues[order],
        kinds=kinds[order],
        l=l[order],
        m=m[order],
        j=j[order],
        k=k[order],
        multiplicities=mult[order],
    )
    logger.info(
        "enumerated flat spectrum below %.6g: %d oscillator and %d torus entries",
        lambda_max, n_osc, n_tor,
    )
    return spectrum


def counting(spectrum: SpectrumList, lam: float) -> int:
    """N(lam): multiplicity-weighted count of eigenvalues <= lam"""
    if lam > spectrum.lambda_max:
        raise OutOfRangeError(
            "counting beyond the enumerated cutoff",
            lam=lam,
            lambda_max=spectrum.lambda_max,
        )
    idx = int(np.searchsorted(spectrum.eigenvalues, lam, side="right"))
    return int(spectrum.cumulative[idx - 1]) if idx else 0


def counting_many(spectrum: SpectrumList, lams) -> np.ndarray:
    lams = np.asarray(lams, dtype=float)
    if lams.size and lams.max() > spectrum.lambda_max:
        raise OutOfRangeError(
            "counting beyond the enumerated cutoff",
            lam=float(lams.max()),
            lambda_max=spectrum.lambda_max,
        )
    idx = np.searchsorted(spectrum.eigenvalues, lams, side="right")
    cumulative = np.concatenate([[0], spectrum.cumulative])
    return cumulative[idx]


def torus_counting_many(spectrum: SpectrumList, lams) -> np.ndarray:
    """N_0(lam) restricted to the m = 0 sector"""
    torus = spectrum.eigenvalues[spectrum.is_torus]
    return np.searchsorted(torus, np.asarray(lams, dtype=float), side="right")


def concentration_element(datum: SpectralDatum) -> float:
    """Matrix element of h_Z^2 / (g* + h_Z^2): m^2 / (m^2 + (2l+1)|m|), 0 on the torus"""
    if datum.kind == SectorKind.TORUS:
        return 0.0
    mabs = abs(datum.m)
    return mabs / (mabs + 2 * datum.l + 1)


def concentration_values(spectrum: SpectrumList) -> np.ndarray:
    mabs = np.abs(spectrum.m).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = mabs / (mabs + 2.0 * spectrum.l + 1.0)
    return np.where(spectrum.is_torus, 0.0, values)


def oscillator_factors(datum: SpectralDatum) -> Tuple[int, int]:
    """(r, omega) with -Delta_H = R_H * Omega_H: r = |m|, omega = 2l + 1"""
    if datum.kind == SectorKind.TORUS:
        raise PreconditionError("torus data have no oscillator factorization", j=datum.j, k=datum.k)
    return abs(datum.m), 2 * datum.l + 1


def aggregate_by_value(spectrum: SpectrumList, tol: float = 1e-12) -> List[Tuple[float, int]]:
    """Merge equal eigenvalues (within tol, relative above 1) into (value, multiplicity)"""
    ev = spectrum.eigenvalues
    if ev.size == 0:
        return []
    scale = np.maximum(1.0, np.abs(ev[1:]))
    starts = np.concatenate([[True], np.diff(ev) > tol * scale])
    group = np.cumsum(starts) - 1
    mult = np.bincount(group, weights=spectrum.multiplicities).astype(np.int64)
    return [(float(v), int(n)) for v, n in zip(ev[starts], mult)]


def heat_trace_closed_form(t: float, tol: float = 1e-14) -> float:
    """Tr exp(t Delta_H) summed in closed form.

    Each Landau level l contributes sum_{m != 0} |m| x^|m| = 2x/(1-x)^2 with
    x = exp(-(2l+1)t); the torus gives theta(t)^2, theta(t) = sum_j exp(-2 pi j^2 t).
    The l-sum stops at the first L with
        2 x_L / ((1 - x_L)^2 (1 - exp(-2t))) < tol,
    which bounds the remaining levels since x_l decays geometrically with ratio exp(-2t).
    """
    if not t > 0:
        raise DomainError("heat trace needs t > 0", t=t)
    if not tol > 0:
        raise DomainError("heat trace needs tol > 0", tol=tol)

    total = 0.0
    block = 4096
    start = 0
    denom = -math.expm1(-2.0 * t)
    while True:
        ls = np.arange(start, start + block, dtype=float)
        a = (2.0 * ls + 1.0) * t
        x = np.exp(-a)
        one_minus = -np.expm1(-a)
        terms = 2.0 * x / one_minus ** 2
        tails = terms / denom
        below = np.nonzero(tails < tol)[0]
        if below.size:
            total += float(terms[: below[0]].sum())
            levels = start + int(below[0])
            break
        total += float(terms.sum())
        start += block

    jmax = int(math.ceil(math.sqrt((math.log(1.0 / tol) + 10.0) / (2.0 * math.pi * t)))) + 1
    js = np.arange(1, jmax + 1, dtype=float)
    theta = 1.0 + 2.0 * float(np.exp(-2.0 * math.pi * js * js * t).sum())
    logger.debug("heat trace at t=%.3g used %d Landau levels and %d theta terms", t, levels, jmax)
    return total + theta * theta


def spectrum_rows(spectrum: SpectrumList):
    for idx in range(len(spectrum)):
        if spectrum.kinds[idx] == 0:
            yield (
                float(spectrum.eigenvalues[idx]), SectorKind.OSCILLATOR.value,
                int(spectrum.l[idx]), int(spectrum.m[idx]), None, None,
                int(spectrum.multiplicities[idx]),
            )
        else:
            yield (
                float(spectrum.eigenvalues[idx]), SectorKind.TORUS.value,
                None, None, int(spectrum.j[idx]), int(spectrum.k[idx]), 1,
            )


def write_spectrum_csv(spectrum: SpectrumList, store: ArtifactStore, name: str = "spectrum.csv"):
    return store.write_csv(name, SPECTRUM_CSV_HEADER, spectrum_rows(spectrum))


def torus_counting_fit(spectrum: SpectrumList, lam_lo: float, lam_hi: float, points: int = 32) -> TorusFitReport:
    """Power-law fit N_0(lam) ~ C lam^e of the torus sector (C close to 1/2, e = 1)"""
    if not 0 < lam_lo < lam_hi <= spectrum.lambda_max:
        raise OutOfRangeError("torus fit window outside the enumerated range", lam_lo=lam_lo, lam_hi=lam_hi)
    lams = np.geomspace(lam_lo, lam_hi, points)
    counts = torus_counting_many(spectrum, lams)
    slope, intercept = np.polyfit(np.log(lams), np.log(counts.astype(float)), 1)
    return TorusFitReport(constant=float(np.exp(intercept)), exponent=float(slope), lambda_lo=lam_lo, lambda_hi=lam_hi)

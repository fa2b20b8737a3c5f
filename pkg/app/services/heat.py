"""Heat kernel of the flat Heisenberg group and the heat-trace route to Weyl's law.

The kernel from the origin is

    H_t(x, y, z) = 1/(8 pi^2 t^2) * int_R s/sinh(s) exp(-s (x^2+y^2) / (4 t tanh s)) cos(z s / t) ds,

so t^2 H_t(0) = (1/(8 pi^2)) * (pi^2 / 2) = 1/16. If Tr e^{t Delta} ~ c / t^2
then N(lam) ~ (c / Gamma(3)) lam^2, since int_0^inf e^{-t lam} d(C lam^2)
= Gamma(3) C / t^2 and Gamma(3) = 2.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.core.config import settings
from app.core.errors import DomainError, OutOfRangeError, ResolutionError
from app.models.spectrum import SpectrumList
from app.schemas.reports import KaramataReport, KernelReport
from app.storage.artifacts import ArtifactStore

logger = logging.getLogger(__name__)

GAMMA_3 = 2.0
NODES_PER_PANEL = 20
KARAMATA_MIN_R2 = 0.999


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on [0, truncation]"""

    truncation: float
    nodes: int
    panel_width: float
    scheme: str = "gauss-legendre-composite"

    def points(self):
        x, w = leggauss(NODES_PER_PANEL)
        panels = int(math.ceil(self.truncation / self.panel_width))
        width = self.truncation / panels
        left = np.arange(panels) * width
        s = (left[:, None] + (x[None, :] + 1.0) * (width / 2.0)).ravel()
        weights = np.tile(w * (width / 2.0), panels)
        return s, weights


def truncation_for(tol: float) -> float:
    """Smallest S with 2 (S + 1) e^{-S} < tol * pi^2 / 2.

    |s/sinh s| <= 2 s e^{-s} for s >= 1, so the discarded tails contribute
    at most that much relative to the integral pi^2/2 at the origin.
    """
    target = tol * math.pi ** 2 / 2.0
    s = 1.0
    while 2.0 * (s + 1.0) * math.exp(-s) >= target:
        s += 0.5
    return s


def quadrature_spec(z: float, t: float, tol: float) -> QuadratureSpec:
    truncation = truncation_for(tol)
    width = 1.0 if z == 0 else min(1.0, math.pi * t / abs(z))
    panels = int(math.ceil(truncation / width))
    return QuadratureSpec(truncation=truncation, nodes=panels * NODES_PER_PANEL, panel_width=width)


def _integrand(s: np.ndarray, r2: float, z: float, t: float) -> np.ndarray:
    ratio = s / np.sinh(s)
    coth = s / np.tanh(s)
    return ratio * np.exp(-r2 * coth / (4.0 * t)) * np.cos(z * s / t)


def _evaluate(x: float, y: float, z: float, t: float, tol: float):
    if not t > 0:
        raise DomainError("heat kernel needs t > 0", t=t)
    if not tol > 0:
        raise DomainError("heat kernel needs tol > 0", tol=tol)
    if abs(z) / t > settings.HEAT_MAX_FREQUENCY:
        raise ResolutionError(
            "cos(z s / t) oscillates too fast for the quadrature",
            z=z,
            t=t,
            max_frequency=settings.HEAT_MAX_FREQUENCY,
        )
    spec = quadrature_spec(z, t, tol)
    s, w = spec.points()
    integral = 2.0 * float(np.dot(w, _integrand(s, x * x + y * y, z, t)))
    return integral / (8.0 * math.pi ** 2 * t * t), spec


def gaveau_kernel(x: float, y: float, z: float, t: float, tol: float = 1e-10) -> float:
    value, _ = _evaluate(x, y, z, t, tol)
    return value


def kernel_report(x: float, y: float, z: float, t: float, tol: float = 1e-10) -> KernelReport:
    value, spec = _evaluate(x, y, z, t, tol)
    return KernelReport(x=x, y=y, z=z, t=t, value=value, t2_value=t * t * value, truncation=spec.truncation, nodes=spec.nodes)


def local_weyl_constant(t: float = 0.1) -> float:
    """Pointwise Weyl density per unit Popp volume, t^2 H_t(0) / Gamma(3) = 1/32"""
    return t * t * gaveau_kernel(0.0, 0.0, 0.0, t) / GAMMA_3


def heat_trace_from_spectrum(spectrum: SpectrumList, t: float) -> float:
    """Partial sum of exp(-t lam) over the enumerated spectrum"""
    if not t > 0:
        raise DomainError("heat trace needs t > 0", t=t)
    return float(np.sum(spectrum.multiplicities * np.exp(-t * spectrum.eigenvalues)))


def karamata_constant(
    trace_fn: Callable[[float], float],
    t_lo: float = 1e-4,
    t_hi: float = 1e-3,
    points: int = 24,
) -> KaramataReport:
    """Fit trace(t) ~ c / t^2 on a geometric t grid.

    c is the geometric mean of t^2 trace(t); r^2 measures the fixed -2 power
    model, and a poor fit is reported through `warning`. The free log-log
    slope is returned as `exponent`.
    """
    if not 0 < t_lo < t_hi:
        raise OutOfRangeError("Karamata window must satisfy 0 < t_lo < t_hi", t_lo=t_lo, t_hi=t_hi)
    ts = np.geomspace(t_lo, t_hi, points)
    traces = np.array([float(trace_fn(float(t))) for t in ts])
    if np.any(traces <= 0):
        raise DomainError("heat trace must be positive", minimum=float(traces.min()))

    log_t, log_tr = np.log(ts), np.log(traces)
    log_c = float(np.mean(log_tr + 2.0 * log_t))
    ss_res = float(np.sum((log_tr - (log_c - 2.0 * log_t)) ** 2))
    ss_tot = float(np.sum((log_tr - log_tr.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    slope = float(np.polyfit(log_t, log_tr, 1)[0])
    constant = math.exp(log_c)

    warning: Optional[str] = None
    if r2 < KARAMATA_MIN_R2:
        warning = f"trace is not c/t^2 on [{t_lo:g}, {t_hi:g}]: r2={r2:.6f}, slope={slope:.4f}"
        logger.warning(warning)
    logger.info("Karamata constant %.6g (Weyl constant %.6g), r2=%.6f", constant, constant / GAMMA_3, r2)
    return KaramataReport(
        constant=constant,
        weyl_constant=constant / GAMMA_3,
        exponent=slope,
        r2=r2,
        t_lo=t_lo,
        t_hi=t_hi,
        points=points,
        warning=warning,
    )


def trace_curve(trace_fn: Callable[[float], float], ts) -> np.ndarray:
    """Rows (t, trace, t^2 * trace)"""
    ts = np.asarray(ts, dtype=float)
    traces = np.array([float(trace_fn(float(t))) for t in ts])
    return np.column_stack([ts, traces, ts * ts * traces])


def write_trace_csv(rows: np.ndarray, store: ArtifactStore, name: str = "trace.csv"):
    return store.write_csv(name, ("t", "trace", "t2_trace"), rows.tolist())

"""Geodesic flow on the Bolza surface, the Reeb flow of a hyperbolic testbed.

Points of the unit tangent bundle are matrices M in SL(2, R); the base
point is M.i in the upper half-plane and the flow is right multiplication
by diag(e^{t/2}, e^{-t/2}). The surface group acts on the left. Its eight
side pairings of the regular octagon are, in the disk model,

    a_k = [[1 + sqrt2, e^{i k pi/4} sqrt(2 + 2 sqrt2)], [conj, 1 + sqrt2]],  k = 0..7,

with a_{k+4} = a_k^-1, carried to SL(2, R) by the Cayley transform.
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.deps import get_rng
from app.core.errors import DomainError, ResourceLimitError
from app.models.dynamics import HyperbolicState
from app.schemas.reports import RegionAverage

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
REDUCTION_TOL = 1e-12
BALL_RADIUS = 1.2
# a genus-2 surface has area 4 pi (g - 1)
SURFACE_AREA = 4.0 * math.pi

_CAYLEY = np.array([[1.0, -1j], [1.0, 1j]])
_CAYLEY_INV = np.linalg.inv(_CAYLEY)


def bolza_generators() -> np.ndarray:
    """The eight side pairings as an (8, 2, 2) array of SL(2, R) matrices"""
    alpha = 1.0 + SQRT2
    beta = math.sqrt(2.0 + 2.0 * SQRT2)
    out = np.empty((8, 2, 2))
    for k in range(8):
        phase = np.exp(1j * k * math.pi / 4.0)
        disk = np.array([[alpha, phase * beta], [np.conj(phase) * beta, alpha]])
        out[k] = (_CAYLEY_INV @ disk @ _CAYLEY).real
    return out


def octagon_inradius() -> float:
    """Half the translation length of a side pairing, arccosh(1 + sqrt2)"""
    return math.acosh(1.0 + SQRT2)


def octagon_circumradius() -> float:
    """Regular octagon with angles pi/4: cosh R = cot(pi/8)^2 = 3 + 2 sqrt2"""
    return math.acosh(3.0 + 2.0 * SQRT2)


def _sizes(mats: np.ndarray) -> np.ndarray:
    """cosh of the distance from i to M.i, |M|_F^2 / 2"""
    return np.sum(mats ** 2, axis=(-2, -1)) / 2.0


def _normalize(mats: np.ndarray) -> np.ndarray:
    det = mats[..., 0, 0] * mats[..., 1, 1] - mats[..., 0, 1] * mats[..., 1, 0]
    return mats / np.sqrt(det)[..., None, None]


def _reduce_batch(mats: np.ndarray, generators: np.ndarray) -> np.ndarray:
    """Greedy reduction of an (n, 2, 2) batch into the Dirichlet domain of i"""
    mats = mats.copy()
    active = np.arange(mats.shape[0])
    applied = 0
    while active.size:
        current = _sizes(mats[active])
        candidates = np.einsum("gij,njk->ngik", generators, mats[active])
        sizes = _sizes(candidates)
        best = np.argmin(sizes, axis=1)
        best_size = sizes[np.arange(active.size), best]
        improve = best_size < current - REDUCTION_TOL * current
        if not improve.any():
            break
        idx = active[improve]
        mats[idx] = _normalize(candidates[np.nonzero(improve)[0], best[improve]])
        active = idx
        applied += 1
        if applied > settings.HYPERBOLIC_MAX_REDUCTIONS:
            raise ResourceLimitError(
                "reduction did not terminate; the generator set is not a Dirichlet side pairing",
                applications=applied,
            )
    return mats


def hyperbolic_reduce(state: HyperbolicState, generators: Optional[np.ndarray] = None) -> HyperbolicState:
    """Move the base point into the closed Dirichlet domain of i by left multiplication"""
    generators = bolza_generators() if generators is None else np.asarray(generators, dtype=float)
    reduced = _reduce_batch(np.asarray(state.matrix, dtype=float)[None], generators)[0]
    return HyperbolicState(reduced)


def _flow_step(dt: float) -> np.ndarray:
    return np.diag([math.exp(dt / 2.0), math.exp(-dt / 2.0)])


def hyperbolic_flow(states: Sequence[HyperbolicState], T: float, dt: float = 0.05) -> List[HyperbolicState]:
    """Flow for time T in steps of dt, reducing after each step"""
    if not dt > 0 or T < 0:
        raise DomainError("hyperbolic flow needs dt > 0 and T >= 0", T=T, dt=dt)
    generators = bolza_generators()
    mats = np.array([s.matrix for s in states], dtype=float)
    n = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    if n:
        step = _flow_step(T / n)
        for _ in range(n):
            mats = _reduce_batch(mats @ step, generators)
    return [HyperbolicState(m) for m in mats]


def disk_points(mats: np.ndarray) -> np.ndarray:
    """Base points w = (z - i)/(z + i) in the Poincare disk"""
    a, b = mats[..., 0, 0], mats[..., 0, 1]
    c, d = mats[..., 1, 0], mats[..., 1, 1]
    z = (a * 1j + b) / (c * 1j + d)
    return (z - 1j) / (z + 1j)


def in_ball(w: np.ndarray, radius: float = BALL_RADIUS) -> np.ndarray:
    return np.abs(w) < math.tanh(radius / 2.0)


def in_half(w: np.ndarray) -> np.ndarray:
    return w.real > 0.0


def regions() -> Dict[str, Tuple[Callable[[np.ndarray], np.ndarray], float]]:
    """Indicator and normalized Liouville measure of each test region.

    The ball of radius r about i has area 2 pi (cosh r - 1); the octagon is
    symmetric under w -> -w, so each half carries measure 1/2.
    """
    return {
        "ball": (in_ball, 2.0 * math.pi * (math.cosh(BALL_RADIUS) - 1.0) / SURFACE_AREA),
        "half": (in_half, 0.5),
    }


def random_states(count: int, seed: int = 0) -> List[HyperbolicState]:
    rng = get_rng(seed)
    out = []
    for _ in range(count):
        t1, t2 = rng.uniform(0.0, 2.0 * math.pi, size=2)
        s = rng.uniform(0.0, 1.0)
        r1 = np.array([[math.cos(t1), -math.sin(t1)], [math.sin(t1), math.cos(t1)]])
        r2 = np.array([[math.cos(t2), -math.sin(t2)], [math.sin(t2), math.cos(t2)]])
        out.append(HyperbolicState(r1 @ np.diag([math.exp(s / 2), math.exp(-s / 2)]) @ r2))
    return out


def bolza_ergodic_averages(starts: int = 16, T: float = 1000.0, dt: float = 0.05, seed: int = 0) -> List[RegionAverage]:
    """Time averages of every region indicator along `starts` random geodesics"""
    if starts < 1:
        raise DomainError("need at least one start", starts=starts)
    generators = bolza_generators()
    mats = _reduce_batch(np.array([s.matrix for s in random_states(starts, seed)]), generators)
    n = int(math.ceil(T / dt - 1e-9))
    step = _flow_step(T / n)
    table = regions()
    hits = {name: np.zeros(starts) for name in table}
    for _ in range(n):
        mats = _reduce_batch(mats @ step, generators)
        w = disk_points(mats)
        for name, (indicator, _) in table.items():
            hits[name] += indicator(w)

    out = []
    for name, (_, measure) in table.items():
        averages = hits[name] / n
        mean = float(averages.mean())
        out.append(
            RegionAverage(
                name=name,
                measure=measure,
                averages=averages.tolist(),
                mean=mean,
                relative_error=abs(mean - measure) / measure,
            )
        )
        logger.info("region %s: mean %.5f vs measure %.5f over %d starts", name, mean, measure, starts)
    return out

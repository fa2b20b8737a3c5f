"""Geodesic and Reeb flows on the cotangent bundle of a contact model.

With the frame X = f d/dx, Y = g (d/dy - x d/dz) and c = f g the momenta are

    h_X = f p_x,  h_Y = g P,  h_Z = -c_y p_x + c_x P + c p_z,   P = p_y - x p_z,

where Z = (-c_y, c_x, c - x c_x) is the Reeb field of alpha_g = (dz + x dy)/c.
The cometric is g* = h_X^2 + h_Y^2 and the adiabatic quantity is
I = g* / |h_Z|. On the flat model h_X + i h_Y rotates as exp(-2 i p_z t),
so dh_X/dt = 2 h_Y h_Z and dh_Y/dt = -2 h_X h_Z.
"""
import logging
import math
from dataclasses import replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.deps import parallel_map
from app.core.errors import DomainError, NoConvergenceError, ResourceLimitError
from app.models.contact import ContactModel
from app.models.dynamics import FlowKind, PhasePoint, Scheme, TrajectorySample
from app.schemas.reports import AdiabaticReport, AdiabaticRun
from app.storage.artifacts import ArtifactStore

logger = logging.getLogger(__name__)

HZ_GUARD = 1e-10
CHART_FRACTION = 0.5
FLAT_HORIZON = 10.0

TRAJECTORY_CSV_HEADER = ("t", "x", "y", "z", "p_x", "p_y", "p_z", "gstar", "I")


def momenta(model: ContactModel, state: np.ndarray):
    """(h_X, h_Y, h_Z) for states of shape (..., 6)"""
    state = np.asarray(state, dtype=float)
    x, y = state[..., 0], state[..., 1]
    px, py, pz = state[..., 3], state[..., 4], state[..., 5]
    jet = model.frame_jet(x, y)
    P = py - x * pz
    c = jet.c
    return jet.f.value * px, jet.g.value * P, -c.dy * px + c.dx * P + c.value * pz


def gstar(model: ContactModel, state: np.ndarray):
    hx, hy, _ = momenta(model, state)
    return hx * hx + hy * hy


def reeb_hamiltonian(model: ContactModel, point: PhasePoint) -> float:
    return float(momenta(model, point.state)[2])


def adiabatic_invariant(model: ContactModel, state: np.ndarray):
    """I = (h_X^2 + h_Y^2)/|h_Z|, NaN where |h_Z| < 1e-10"""
    hx, hy, hz = momenta(model, state)
    hz = np.abs(hz)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(hz < HZ_GUARD, np.nan, (hx * hx + hy * hy) / hz)


def reeb_field(model: ContactModel, q) -> np.ndarray:
    """Z = c d/dz - c_y X_H + c_x Y_H in (x, y, z) coordinates"""
    x, y = float(q[0]), float(q[1])
    c = model.frame_jet(x, y).c
    return np.array([-float(c.dy), float(c.dx), float(c.value - x * c.dx)])


def geodesic_vector_field(model: ContactModel, point) -> np.ndarray:
    """Hamiltonian field of g* = f^2 p_x^2 + g^2 P^2 as (xdot, ydot, zdot, pxdot, pydot, pzdot)"""
    state = point.state if isinstance(point, PhasePoint) else np.asarray(point, dtype=float)
    x, y, _, px, py, pz = state
    jet = model.frame_jet(x, y)
    f, g = jet.f, jet.g
    P = py - x * pz
    f2, g2 = f.value * f.value, g.value * g.value
    return np.array([
        2.0 * f2 * px,
        2.0 * g2 * P,
        -2.0 * x * g2 * P,
        -2.0 * f.value * f.dx * px * px - 2.0 * g.value * g.dx * P * P + 2.0 * g2 * P * pz,
        -2.0 * f.value * f.dy * px * px - 2.0 * g.value * g.dy * P * P,
        0.0,
    ], dtype=float)


def reeb_vector_field(model: ContactModel, point) -> np.ndarray:
    """Cotangent lift of Z, the Hamiltonian field of h_Z"""
    state = point.state if isinstance(point, PhasePoint) else np.asarray(point, dtype=float)
    x, y, _, px, py, pz = state
    c = model.frame_jet(x, y).c
    P = py - x * pz
    return np.array([
        -c.dy,
        c.dx,
        c.value - x * c.dx,
        c.dxy * px - c.dxx * P,
        c.dyy * px - c.dxy * P - c.dy * pz,
        0.0,
    ], dtype=float)


def _field(model: ContactModel, flow: FlowKind) -> Callable[[np.ndarray], np.ndarray]:
    if FlowKind(flow) == FlowKind.GEODESIC:
        return lambda s: geodesic_vector_field(model, s)
    return lambda s: reeb_vector_field(model, s)


def _rk4_step(F, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = F(y)
    k2 = F(y + 0.5 * dt * k1)
    k3 = F(y + 0.5 * dt * k2)
    k4 = F(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _midpoint_step(F, y: np.ndarray, dt: float) -> np.ndarray:
    """y' = y + dt F((y + y')/2) by fixed-point iteration"""
    new = y + dt * F(y)
    for _ in range(settings.MIDPOINT_MAX_ITER):
        update = y + dt * F(0.5 * (y + new))
        change = float(np.max(np.abs(update - new)))
        new = update
        if change <= settings.MIDPOINT_TOL * (1.0 + float(np.max(np.abs(new)))):
            return new
    raise NoConvergenceError("implicit midpoint iteration did not converge", dt=dt, change=change)


def _steps(T: float, dt: float) -> int:
    if not dt > 0:
        raise DomainError("dt must be positive", dt=dt)
    if not T > 0:
        raise DomainError("T must be positive", T=T)
    n = int(math.ceil(T / dt - 1e-9))
    if n > settings.MAX_INTEGRATION_STEPS:
        raise ResourceLimitError("too many integration steps", steps=n, cap=settings.MAX_INTEGRATION_STEPS)
    return n


def integrate(
    model: ContactModel,
    flow: FlowKind,
    start: PhasePoint,
    T: float,
    dt: float,
    scheme: Scheme = Scheme.RK4,
    record_every: int = 1,
) -> TrajectorySample:
    """Fixed-step integration on the universal cover.

    The step is shrunk to T/ceil(T/dt) so the last sample sits at T. The
    sample is marked truncated when |h_Z| falls below half its initial value.
    """
    n = _steps(T, dt)
    h = T / n
    F = _field(model, flow)
    step = _rk4_step if Scheme(scheme) == Scheme.RK4 else _midpoint_step

    y = start.state.astype(float)
    times: List[float] = [0.0]
    states: List[np.ndarray] = [y.copy()]
    for i in range(1, n + 1):
        y = step(F, y, h)
        if i % record_every == 0 or i == n:
            times.append(i * h)
            states.append(y.copy())

    states_arr = np.array(states)
    g = gstar(model, states_arr)
    I = adiabatic_invariant(model, states_arr)
    hz = np.abs(momenta(model, states_arr)[2])
    truncated = bool(np.any(hz < CHART_FRACTION * hz[0]))
    logger.debug("integrated %s flow with %s: %d steps of %.3g", FlowKind(flow).value, Scheme(scheme).value, n, h)
    return TrajectorySample(
        times=np.array(times),
        states=states_arr,
        invariants=np.column_stack([g, I]),
        truncated=truncated,
    )


def flat_geodesic(start: PhasePoint, t) -> np.ndarray:
    """Closed-form flat geodesic, states of shape (len(t), 6).

    w = h_X + i h_Y evolves as w0 exp(-i W t) with W = 2 p_z, and x + i y
    moves on the circle kappa + rho0 exp(-i W t), rho0 = 2 i w0 / W, of
    radius sqrt(g*)/|p_z|.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x0, y0, z0 = start.q
    px, py, pz = start.p
    P = py - x0 * pz
    w0 = complex(px, P)
    out = np.empty((t.size, 6))
    if pz == 0.0:
        out[:, 0] = x0 + 2.0 * px * t
        out[:, 1] = y0 + 2.0 * P * t
        out[:, 2] = z0 - 2.0 * P * (x0 * t + px * t * t)
        out[:, 3] = px
        out[:, 4] = py
        out[:, 5] = 0.0
        return out
    W = 2.0 * pz
    rho0 = 2j * w0 / W
    kappa = complex(x0, y0) - rho0
    r, phi = abs(rho0), np.angle(rho0)
    zeta = kappa + rho0 * np.exp(-1j * W * t)
    w = w0 * np.exp(-1j * W * t)
    out[:, 0] = zeta.real
    out[:, 1] = zeta.imag
    out[:, 2] = (
        z0
        + r * kappa.real * (np.sin(phi) - np.sin(phi - W * t))
        + W * r * r * (t / 2.0 + (np.sin(2 * phi) - np.sin(2 * phi - 2 * W * t)) / (4.0 * W))
    )
    out[:, 3] = w.real
    out[:, 4] = w.imag + out[:, 0] * pz
    out[:, 5] = pz
    return out


def spiral_radius(start: PhasePoint) -> float:
    g = start.p[0] ** 2 + (start.p[1] - start.q[0] * start.p[2]) ** 2
    return math.sqrt(g) / abs(start.p[2])


def adiabatic_start(model: ContactModel, q, I0: float, theta: float = 0.3) -> PhasePoint:
    """Point over q with h_Z = 1 and h_X^2 + h_Y^2 = I0"""
    x, y = float(q[0]), float(q[1])
    jet = model.frame_jet(x, y)
    c = jet.c
    px = math.sqrt(I0) * math.cos(theta) / float(jet.f.value)
    P = math.sqrt(I0) * math.sin(theta) / float(jet.g.value)
    pz = (1.0 + float(c.dy) * px - float(c.dx) * P) / float(c.value)
    return PhasePoint.of(q, (px, P + x * pz, pz))


def horizon(epsilon: float, cap: Optional[float] = None) -> float:
    """T(eps) = 1/eps, capped; the flat run uses a fixed horizon"""
    if epsilon == 0.0:
        return FLAT_HORIZON if cap is None else min(FLAT_HORIZON, cap)
    T = 1.0 / abs(epsilon)
    return T if cap is None else min(T, cap)


def adiabatic_run(
    model: ContactModel,
    I0: float,
    q0=(0.1, 0.2, 0.0),
    dt: float = 0.005,
    scheme: Scheme = Scheme.IMPLICIT_MIDPOINT,
    horizon_cap: Optional[float] = None,
    theta: float = 0.3,
) -> AdiabaticRun:
    start = adiabatic_start(model, q0, I0, theta)
    T = horizon(model.epsilon, horizon_cap)
    sample = integrate(model, FlowKind.GEODESIC, start, T, dt, scheme)
    I = sample.adiabatic
    deviation = float(np.nanmax(np.abs(I - I[0])))
    if sample.truncated:
        logger.warning("adiabatic run eps=%g I0=%g left the chart around Sigma", model.epsilon, I0)
    return AdiabaticRun(epsilon=model.epsilon, I0=I0, horizon=T, deviation=deviation, truncated=sample.truncated)


def adiabatic_experiment(
    model: ContactModel,
    epsilons: Sequence[float],
    I0s: Optional[Sequence[float]] = None,
    dt: float = 0.005,
    scheme: Scheme = Scheme.IMPLICIT_MIDPOINT,
    horizon_cap: Optional[float] = None,
    q0=(0.1, 0.2, 0.0),
) -> AdiabaticReport:
    """sup |I(t) - I0| along geodesics for each eps, with I0 = eps unless given.

    `model` fixes the perturbation profile; its epsilon is replaced by each
    grid value. The slope is the log-log fit of deviation against eps over
    the nonflat, nontruncated runs.
    """
    I0s = list(epsilons) if I0s is None else list(I0s)
    if len(I0s) != len(epsilons):
        raise DomainError("I0 grid must match the epsilon grid", epsilons=len(epsilons), I0s=len(I0s))

    def run(pair):
        eps, I0 = pair
        return adiabatic_run(replace(model, epsilon=eps), I0, q0, dt, scheme, horizon_cap)

    runs = parallel_map(run, list(zip(epsilons, I0s)))
    usable = [r for r in runs if r.epsilon > 0 and r.deviation > 0 and not r.truncated]
    slope = None
    if len(usable) >= 2:
        slope = float(np.polyfit(np.log([r.epsilon for r in usable]), np.log([r.deviation for r in usable]), 1)[0])
    logger.info("adiabatic experiment over %d runs, slope %s", len(runs), slope)
    return AdiabaticReport(runs=runs, slope=slope)


def birkhoff_average(
    model: ContactModel,
    flow: FlowKind,
    start: PhasePoint,
    observable: Callable[[np.ndarray], np.ndarray],
    T: float,
    dt: float = 0.01,
    checkpoints: int = 10,
) -> np.ndarray:
    """Rows (t_k, (1/t_k) int_0^t_k f) at t_k = k T / checkpoints.

    The observable receives the (n, 6) array of sampled states.
    """
    sample = integrate(model, flow, start, T, dt, Scheme.RK4)
    values = np.asarray(observable(sample.states), dtype=float)
    times = sample.times
    running = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))])
    marks = T * np.arange(1, checkpoints + 1) / checkpoints
    idx = np.searchsorted(times, marks - 1e-12)
    idx = np.minimum(idx, times.size - 1)
    return np.column_stack([times[idx], running[idx] / times[idx]])


def _reeb_jacobian_field(model: ContactModel):
    def F(y: np.ndarray) -> np.ndarray:
        x, yy = y[0], y[1]
        c = model.frame_jet(x, yy).c
        DZ = np.array([
            [-c.dxy, -c.dyy, 0.0],
            [c.dxx, c.dxy, 0.0],
            [-x * c.dxx, c.dy - x * c.dxy, 0.0],
        ], dtype=float)
        D = y[3:].reshape(3, 3)
        Z = [-c.dy, c.dx, c.value - x * c.dx]
        return np.concatenate([np.array(Z, dtype=float), (DZ @ D).ravel()])

    return F


def reeb_popp_jacobian(model: ContactModel, q0, T: float, dt: float = 0.01) -> float:
    """Popp-measure Jacobian det(D phi_T) * rho(phi_T q0) / rho(q0), rho = c^-2"""
    n = _steps(T, dt)
    h = T / n
    F = _reeb_jacobian_field(model)
    y = np.concatenate([np.asarray(q0, dtype=float), np.eye(3).ravel()])
    for _ in range(n):
        y = _rk4_step(F, y, h)
    det = float(np.linalg.det(y[3:].reshape(3, 3)))
    rho0 = float(model.popp_density(q0[0], q0[1]))
    rho1 = float(model.popp_density(y[0], y[1]))
    return det * rho1 / rho0


def write_trajectory_csv(sample: TrajectorySample, store: ArtifactStore, name: str = "trajectory.csv"):
    rows = (
        (t, *state, inv[0], None if np.isnan(inv[1]) else inv[1])
        for t, state, inv in zip(sample.times, sample.states, sample.invariants)
    )
    return store.write_csv(name, TRAJECTORY_CSV_HEADER, rows)

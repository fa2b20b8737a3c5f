"""Sparse discretizations of -Delta_sR on the Heisenberg quotient.

Every builder assembles the quadratic form

    Q(phi) = sum over links  w_link * |U_link phi_b - phi_a|^2

on a cell-centred periodic grid x_i = i*hx, y_j = j*hy, together with the
lumped measure M = diag(rho * hx * hy), and stores A = M^-1/2 K M^-1/2.
Weights are rho f^2 hy/hx on x-links and rho g^2 hx/hy on y-links, with
rho = h^2 / (f g)^2 the density of mu evaluated analytically at link
midpoints, so divergence terms of the frame never need differentiating.

Sector m (functions phi(x, y) e^{imz}) uses Peierls phases:
  y-link (i, j) -> (i, j+1):      U = exp(-i m x_i hy)
  x-link (N-1, j) -> (0, j):      U = exp(i m Lx y_j)   (twisted boundary)
Every plaquette then carries flux m*hx*hy, and the corner plaquette closes
only when m*Lx*Ly is a multiple of 2 pi. With the default lattice the
twist Lx*y_j is exactly j z-planes when the z grid has n_grid points, so
build_full3d can use an exact plane shift across the x boundary.
"""
import logging
from dataclasses import replace
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvalsh

from app.core.config import settings
from app.core.errors import ConfigurationError, DomainError, ModelInvariantError, PreconditionError
from app.models.contact import ContactModel, FourierSeries
from app.models.operator import SparseOperator, Symmetry

logger = logging.getLogger(__name__)

MIN_GRID = 8
FLUX_TOL = 1e-9
TWIST_TOL = 1e-12


def frame_factors(model: ContactModel, x, y):
    """(f, g, c = f*g) with analytic first and second derivatives"""
    return model.frame_jet(x, y)


def _check_grid(n_grid: int) -> None:
    if n_grid < MIN_GRID:
        raise PreconditionError("grid too coarse", n_grid=n_grid, minimum=MIN_GRID)


def _checked(model: ContactModel) -> ContactModel:
    model.check_invariants(settings.MODEL_SAMPLE_GRID)
    return model


def popp_volume(model: ContactModel, quad_n: int = 64) -> float:
    """P(M) = Lz * integral of (1+eps a)^-2 (1+eps b)^-2 dx dy.

    alpha_g = alpha_H / c with c = (1+eps a)(1+eps b) normalizes d alpha_g on
    the distribution to the frame's area form; then alpha_g ^ d alpha_g
    = c^-2 alpha_H ^ d alpha_H = c^-2 dx dy dz. The trapezoid rule on a
    periodic grid is spectrally accurate for the trigonometric integrand.
    """
    if quad_n < MIN_GRID:
        raise PreconditionError("popp_volume needs quad_n >= 8", quad_n=quad_n)
    x, y = model.sample_grid(quad_n)
    f, g = model.frame(x, y)
    if f.min() <= 0.0 or g.min() <= 0.0:
        raise ModelInvariantError("frame factor is not positive on the quadrature grid")
    lat = model.lattice
    return float(lat.Lz * lat.Lx * lat.Ly * np.mean(1.0 / (f * g) ** 2))


def _grid(model: ContactModel, n_grid: int):
    lat = model.lattice
    hx, hy = lat.Lx / n_grid, lat.Ly / n_grid
    xs = np.arange(n_grid) * hx
    ys = np.arange(n_grid) * hy
    return hx, hy, xs, ys


def _check_flux(model: ContactModel, m: int) -> None:
    quanta = model.lattice.flux_quanta(m)
    if abs(quanta - round(quanta)) > FLUX_TOL:
        raise ConfigurationError(
            "flux m*Lx*Ly is not a multiple of 2*pi; the twisted boundary does not close",
            m=m,
            flux_quanta=quanta,
        )


def _weights(model: ContactModel, n_grid: int, endpoint_density: Optional[np.ndarray] = None):
    """Node density rho and link weights (wx, wy), each of shape (N, N).

    wx[i, j] belongs to the link (i, j) -> (i+1, j) and wy[i, j] to (i, j) -> (i, j+1).
    With endpoint_density = h on nodes, the density factor of a link is
    h_a * h_b instead of h(midpoint)^2 (the gauge-exact variant).
    """
    hx, hy, xs, ys = _grid(model, n_grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    xm, ym = X + 0.5 * hx, Y + 0.5 * hy

    if endpoint_density is None:
        rho = model.density(X, Y)
        fx, _ = model.frame(xm, Y)
        _, gy = model.frame(X, ym)
        wx = model.density(xm, Y) * fx ** 2 * (hy / hx)
        wy = model.density(X, ym) * gy ** 2 * (hx / hy)
    else:
        h = endpoint_density
        rho = model.popp_density(X, Y) * h ** 2
        fx, _ = model.frame(xm, Y)
        _, gy = model.frame(X, ym)
        wx = model.popp_density(xm, Y) * fx ** 2 * (hy / hx) * h * np.roll(h, -1, axis=0)
        wy = model.popp_density(X, ym) * gy ** 2 * (hx / hy) * h * np.roll(h, -1, axis=1)
    mass = rho * hx * hy
    return rho, mass, wx, wy


def _assemble(n: int, links_a, links_b, weights, phases, mass, grid_shape, meta) -> SparseOperator:
    """K from links (a, b, w, U), then A = M^-1/2 K M^-1/2 made exactly hermitian"""
    mass = np.asarray(mass, dtype=float).ravel()
    complex_ = phases is not None and np.iscomplexobj(phases)
    dtype = np.complex128 if complex_ else np.float64
    if phases is None:
        phases = np.ones(weights.shape[0], dtype=dtype)
    rows = np.concatenate([links_a, links_b, links_a, links_b])
    cols = np.concatenate([links_a, links_b, links_b, links_a])
    vals = np.concatenate([
        weights.astype(dtype),
        weights.astype(dtype),
        -weights * phases,
        -weights * np.conj(phases),
    ]).astype(dtype)
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    scale = sp.diags(1.0 / np.sqrt(mass))
    A = (scale @ K @ scale).tocsr()
    A = ((A + A.conj().T) * 0.5).tocsr()
    A.sort_indices()
    A.eliminate_zeros()
    symmetry = Symmetry.HERMITIAN if complex_ else Symmetry.REAL_SYMMETRIC
    return SparseOperator(A, symmetry, mass.copy(), grid_shape, meta)


def _plane_links(n_grid: int):
    """Node indices of the x-links and y-links of an N x N periodic grid"""
    idx = np.arange(n_grid * n_grid).reshape(n_grid, n_grid)
    return idx, np.roll(idx, -1, axis=0), np.roll(idx, -1, axis=1)


def _sector_phases(model: ContactModel, m: int, n_grid: int):
    hx, hy, xs, ys = _grid(model, n_grid)
    lat = model.lattice
    px = np.ones((n_grid, n_grid), dtype=np.complex128)
    px[-1, :] = np.exp(1j * m * lat.Lx * ys)
    py = np.repeat(np.exp(-1j * m * xs * hy)[:, None], n_grid, axis=1)
    return px, py


def _meta(model: ContactModel, n_grid: int, kind: str, m: Optional[int] = None):
    lat = model.lattice
    return {"kind": kind, "n_grid": n_grid, "m": m, "Lx": lat.Lx, "Ly": lat.Ly, "Lz": lat.Lz}


def _build_plane(model, m: int, n_grid: int, endpoint_density=None) -> SparseOperator:
    rho, mass, wx, wy = _weights(model, n_grid, endpoint_density)
    idx, right, up = _plane_links(n_grid)
    a = np.concatenate([idx.ravel(), idx.ravel()])
    b = np.concatenate([right.ravel(), up.ravel()])
    w = np.concatenate([wx.ravel(), wy.ravel()])
    if m == 0:
        phases = None
        kind = "torus"
    else:
        px, py = _sector_phases(model, m, n_grid)
        phases = np.concatenate([px.ravel(), py.ravel()])
        kind = "sector"
    return _assemble(n_grid * n_grid, a, b, w, phases, mass, (n_grid, n_grid), _meta(model, n_grid, kind, m))


def build_sector_operator(model: ContactModel, m: int, n_grid: int) -> SparseOperator:
    """Magnetic operator of the e^{imz} sector on twisted sections.

    Exact |m|-fold degeneracy of the flat Landau levels needs |m| to divide n_grid.
    """
    if m == 0:
        raise PreconditionError("m = 0 is the torus sector; use build_torus_sector")
    _check_grid(n_grid)
    _check_flux(model, m)
    op = _build_plane(_checked(model), m, n_grid)
    logger.debug("sector m=%d on %dx%d grid, nnz=%d", m, n_grid, n_grid, op.nnz)
    return op


def build_torus_sector(model: ContactModel, n_grid: int) -> SparseOperator:
    _check_grid(n_grid)
    return _build_plane(_checked(model), 0, n_grid)


def _z_modes(n_grid: int) -> np.ndarray:
    """Fourier modes of the z grid, [-N/2, N/2) for even N"""
    return np.fft.fftfreq(n_grid, d=1.0 / n_grid)


def _z_shift(n_grid: int, lz: float, shift: float) -> np.ndarray:
    """Band-limited shift f(z) -> f(z - shift) as an N x N circulant"""
    hz = lz / n_grid
    modes = _z_modes(n_grid)
    d = np.arange(n_grid)
    # column c of the circulant for offset d = l - l'
    kernel = np.exp(1j * np.outer(d * hz, modes) - 1j * modes * shift).sum(axis=1) / n_grid
    return kernel[(d[:, None] - d[None, :]) % n_grid]


def build_full3d(model: ContactModel, n_grid: int) -> SparseOperator:
    """-Delta_sR on n_grid^3 unknowns with f(x+Lx, y, z - Lx*y) = f(x, y, z).

    z is discretized spectrally, so the y-link is the band-limited shift
    z -> z - x*hy and the spectrum is the union of the sector spectra for
    m in [-n/2, n/2). The x-boundary link is the shift z -> z + Lx*y_j,
    which must land on a z-plane; with the default lattice it is exactly
    j planes for every n_grid.
    """
    _check_grid(n_grid)
    model = _checked(model)
    lat = model.lattice
    N = n_grid
    hx, hy, xs, ys = _grid(model, N)
    hz = lat.Lz / N

    twist = lat.Lx * ys / hz
    planes = np.rint(twist)
    if np.max(np.abs(twist - planes)) > TWIST_TOL:
        raise ConfigurationError(
            "twist Lx*y is not a whole number of z planes on this grid",
            n_grid=N,
            max_error=float(np.max(np.abs(twist - planes))),
        )
    planes = planes.astype(np.int64) % N

    rho, mass2d, wx, wy = _weights(model, N)
    wx, wy = wx * hz, wy * hz
    node = np.arange(N ** 3).reshape(N, N, N)
    rows, cols, vals = [], [], []

    def add_block(a_nodes, b_nodes, w, block):
        # a_nodes, b_nodes: z-columns (N,) ; block: U acting on the b column
        for nodes in (a_nodes, b_nodes):
            rows.append(nodes)
            cols.append(nodes)
            vals.append(np.full(N, w, dtype=np.complex128))
        r, c = np.nonzero(block)
        rows.append(a_nodes[r]); cols.append(b_nodes[c]); vals.append(-w * block[r, c])
        rows.append(b_nodes[c]); cols.append(a_nodes[r]); vals.append(-w * np.conj(block[r, c]))

    eye = np.eye(N)
    shifts = [_z_shift(N, lat.Lz, x * hy) for x in xs]
    for i in range(N):
        for j in range(N):
            a = node[i, j]
            # x-link, with the twist across the boundary
            if i < N - 1:
                add_block(a, node[i + 1, j], wx[i, j], eye)
            else:
                perm = np.roll(eye, planes[j], axis=1)
                add_block(a, node[0, j], wx[i, j], perm)
            add_block(a, node[i, (j + 1) % N], wy[i, j], shifts[i])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    K = sp.coo_matrix((vals, (rows, cols)), shape=(N ** 3, N ** 3)).tocsr()
    K.sum_duplicates()
    mass = np.repeat((mass2d * hz).ravel(), N)
    scale = sp.diags(1.0 / np.sqrt(mass))
    A = (scale @ K @ scale).tocsr()
    A = ((A + A.conj().T) * 0.5).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    logger.info("full 3d operator n=%d: dim=%d nnz=%d", N, A.shape[0], A.nnz)
    return SparseOperator(A, Symmetry.HERMITIAN, mass, (N, N, N), _meta(model, N, "full3d"))


def energy_operators(model: ContactModel, m: int, n_grid: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """(vertical, horizontal) quadratic forms on sector m.

    vertical is diag(m^2 c^2), the symbol h_Z^2 = c^2 p_z^2 on the sector;
    horizontal is the sector operator itself (X*X + Y*Y).
    """
    op = build_torus_sector(model, n_grid) if m == 0 else build_sector_operator(model, m, n_grid)
    _, _, xs, ys = _grid(model, n_grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    jet = model.frame_jet(X, Y)
    vertical = sp.diags(((m * jet.c.value) ** 2).ravel()).tocsr()
    return vertical, op.matrix


def multiplication_operator(op: SparseOperator, f) -> np.ndarray:
    """Values of f(x, y) on the operator's nodes, flattened in operator order"""
    meta = op.meta
    n = meta["n_grid"]
    xs = np.arange(n) * (meta["Lx"] / n)
    ys = np.arange(n) * (meta["Ly"] / n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    values = np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape)
    if len(op.grid_shape) == 3:
        return np.repeat(values.ravel(), n)
    return values.ravel().copy()


def gauge_check(model: ContactModel, h: FourierSeries, n_grid: int, m: int = 0, count: int = 20) -> "GaugeReport":
    """Compare Delta_{mu2}, mu2 = h^2 Popp, with Delta_Popp + W on one grid.

    The mu2 operator uses link densities h_a*h_b, for which
    Q2(psi/h) = Q_Popp(psi) + sum_a |psi_a|^2 V_a, V_a = sum_links w (h_b - h_a)/h_a,
    holds exactly; W = V / mass. Both sides are diagonalized densely.

    This endpoint-density operator is not the one build_sector_operator
    assembles for model.with_density(h), which weights links by h(midpoint)^2.
    The two agree to second order in the grid spacing; max_midpoint_gap reports their distance on
    the same eigenvalue window.
    """
    from app.schemas.reports import GaugeReport

    _check_grid(n_grid)
    base = _checked(replace(model, density_h=None))
    _, _, xs, ys = _grid(base, n_grid)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    hv = h(X, Y, base.lattice)
    if hv.min() <= 0.0:
        raise DomainError("gauge function h must be strictly positive on the grid", min_h=float(hv.min()))

    if m != 0:
        _check_flux(base, m)
    popp = _build_plane(base, m, n_grid)
    two = _build_plane(base, m, n_grid, endpoint_density=hv)
    midpoint = _build_plane(_checked(base.with_density(h)), m, n_grid)

    _, mass_p, wx, wy = _weights(base, n_grid)
    V = np.zeros_like(hv)
    right = np.roll(hv, -1, axis=0)
    up = np.roll(hv, -1, axis=1)
    V += wx * (right - hv) / hv
    V += np.roll(wx * (hv - right) / right, 1, axis=0)
    V += wy * (up - hv) / hv
    V += np.roll(wy * (hv - up) / up, 1, axis=1)
    W = (V / mass_p).ravel()

    dense_two = two.matrix.toarray()
    dense_popp = popp.matrix.toarray()
    count = min(count, dense_two.shape[0])
    sel = (0, count - 1)
    ev_two = eigvalsh(dense_two, subset_by_index=sel)
    ev_shifted = eigvalsh(dense_popp + np.diag(W), subset_by_index=sel)
    ev_popp = eigvalsh(dense_popp, subset_by_index=sel)
    ev_midpoint = eigvalsh(midpoint.matrix.toarray(), subset_by_index=sel)

    deviation = float(np.max(np.abs(ev_two - ev_shifted)))
    bound = float(np.max(np.abs(W)))
    shift = float(np.max(np.abs(ev_two - ev_popp)))
    logger.info("gauge check n=%d m=%d: deviation %.3e, max|W| %.3e, popp shift %.3e", n_grid, m, deviation, bound, shift)
    return GaugeReport(
        max_spectral_deviation=deviation,
        max_abs_potential=bound,
        max_popp_shift=shift,
        max_midpoint_gap=float(np.max(np.abs(ev_two - ev_midpoint))),
        shift_within_bound=shift <= bound * (1.0 + 1e-9) + 1e-12,
        n_grid=n_grid,
        m=m,
        count=count,
    )


def sector_range(model: ContactModel, lambda_max: float) -> int:
    """Largest |m| whose lowest perturbed Landau level can lie below lambda_max"""
    return int(np.floor(lambda_max / model.min_frame_product(settings.MODEL_SAMPLE_GRID)))


def write_matrix_market(op: SparseOperator, store, name: str = "operator.mtx"):
    return store.write_matrix_market(name, op)

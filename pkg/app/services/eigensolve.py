import logging
from typing import List, Optional

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal, eigvalsh

from app.core.config import settings
from app.core.deps import get_rng
from app.core.errors import NoConvergenceError, PreconditionError, ResourceLimitError
from app.models.operator import EigenPair, SparseOperator
from app.storage.artifacts import ArtifactStore

logger = logging.getLogger(__name__)

BREAKDOWN = 1e-12


def _start_vector(rng: np.random.Generator, n: int, complex_: bool) -> np.ndarray:
    v = rng.standard_normal(n)
    if complex_:
        v = v + 1j * rng.standard_normal(n)
    return v


def _project_out(w: np.ndarray, *bases: np.ndarray) -> np.ndarray:
    """Classical Gram-Schmidt against each basis, applied twice"""
    for _ in range(2):
        for basis in bases:
            if basis.shape[1]:
                w = w - basis @ (basis.conj().T @ w)
    return w


def _lanczos_cycle(A, start: np.ndarray, locked: np.ndarray, m_dim: int, dtype):
    """One Lanczos run of at most m_dim steps in the complement of `locked`.

    Returns Ritz values, Ritz vectors, residual estimates |beta_J s_J| and the
    number of matrix-vector products used, or None if the start vector lies
    in span(locked).
    """
    n = A.shape[0]
    V = np.zeros((n, m_dim), dtype=dtype)
    alpha = np.zeros(m_dim)
    beta = np.zeros(m_dim)
    v = _project_out(start.astype(dtype), locked)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return None
    V[:, 0] = v / norm
    steps = 0
    for j in range(m_dim):
        w = A @ V[:, j]
        steps += 1
        alpha[j] = np.real(np.vdot(V[:, j], w))
        w = _project_out(w, locked, V[:, : j + 1])
        beta[j] = np.linalg.norm(w)
        if j + 1 == m_dim or beta[j] <= BREAKDOWN * max(abs(alpha[j]), 1.0):
            break
        V[:, j + 1] = w / beta[j]
    J = steps
    if J == 1:
        theta, S = alpha[:1].copy(), np.ones((1, 1))
    else:
        theta, S = eigh_tridiagonal(alpha[:J], beta[: J - 1])
    Y = V[:, :J] @ S
    estimates = np.abs(beta[J - 1] * S[J - 1, :])
    return theta, Y, estimates, steps


def lanczos_lowest(
    op: SparseOperator,
    k: int,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    seed: int = 0,
    krylov_dim: Optional[int] = None,
) -> List[EigenPair]:
    """k lowest eigenpairs by Lanczos with full reorthogonalization.

    Converged Ritz pairs (explicit residual <= tol) are locked and later runs
    are kept orthogonal to them, which recovers degenerate clusters one
    vector at a time. When the Krylov dimension is exhausted the run restarts
    from the lowest unconverged Ritz vector. The iteration stops once k pairs
    are locked and a run in the complement converges to a value no lower than
    the k-th locked one; max_iter bounds the number of matrix-vector products.
    """
    tol = settings.LANCZOS_TOL if tol is None else tol
    max_iter = settings.LANCZOS_MAX_ITER if max_iter is None else max_iter
    krylov_dim = krylov_dim or settings.LANCZOS_KRYLOV_DIM
    if not op.is_hermitian():
        raise PreconditionError("lanczos_lowest needs a hermitian operator")
    n = op.dim
    if k < 1 or k >= n:
        raise PreconditionError("k must satisfy 1 <= k < dim, use dense_eig for the full spectrum", k=k, dim=n)

    A = op.matrix
    complex_ = np.iscomplexobj(A.data)
    dtype = np.complex128 if complex_ else np.float64
    rng = get_rng(seed)

    locked = np.zeros((n, 0), dtype=dtype)
    locked_vals: List[float] = []
    locked_res: List[float] = []
    matvecs = 0
    start = _start_vector(rng, n, complex_)
    best_vals: List[float] = []
    best_res: List[float] = []
    cycles = 0

    while len(locked_vals) < n:
        if matvecs >= max_iter:
            raise NoConvergenceError(
                "Lanczos did not converge within max_iter matrix-vector products",
                ritz_values=[float(v) for v in (sorted(locked_vals) + best_vals)[:k]],
                residuals=[float(r) for r in (locked_res + best_res)[:k]],
                matvecs=matvecs,
                locked=len(locked_vals),
            )
        m_dim = min(krylov_dim, n - len(locked_vals))
        cycle = _lanczos_cycle(A, start, locked, m_dim, dtype)
        if cycle is None:
            start = _start_vector(rng, n, complex_)
            continue
        theta, Y, estimates, steps = cycle
        matvecs += steps
        cycles += 1

        converged = []
        for i in np.argsort(theta):
            if estimates[i] <= tol:
                y = Y[:, i] / np.linalg.norm(Y[:, i])
                residual = float(np.linalg.norm(A @ y - theta[i] * y))
                matvecs += 1
                if residual <= tol:
                    converged.append((float(theta[i]), y, residual))
        lowest = int(np.argmin(theta))
        lowest_converged = bool(converged) and converged[0][0] == float(theta[lowest])
        best_vals = [float(v) for v in np.sort(theta)[:k]]
        best_res = [float(estimates[i]) for i in np.argsort(theta)[:k]]

        if len(locked_vals) >= k and lowest_converged:
            kth = sorted(locked_vals)[k - 1]
            if converged[0][0] >= kth - tol:
                break

        if converged:
            new = np.column_stack([c[1] for c in converged])
            new = _project_out(new, locked)
            q, _ = np.linalg.qr(new)
            locked = np.column_stack([locked, q])
            locked_vals.extend(c[0] for c in converged)
            locked_res.extend(c[2] for c in converged)
            logger.debug("Lanczos cycle %d locked %d pairs (total %d)", cycles, len(converged), len(locked_vals))

        if not lowest_converged:
            start = Y[:, lowest]
        else:
            start = _start_vector(rng, n, complex_)

    order = np.argsort(locked_vals)[:k]
    pairs = []
    for i in order:
        vec = locked[:, i]
        Av = A @ vec
        value = float(np.real(np.vdot(vec, Av)))
        # locked columns were re-orthonormalized, so the residual is taken again
        residual = float(np.linalg.norm(Av - value * vec))
        pairs.append(EigenPair(value=value, vector=vec, residual=residual))
    logger.info("Lanczos found %d pairs of dim %d in %d matvecs", k, n, matvecs)
    return pairs


def _dense(op: SparseOperator) -> np.ndarray:
    if op.dim > settings.DENSE_EIG_MAX_DIM:
        raise ResourceLimitError(
            "operator too large for dense diagonalization",
            dim=op.dim,
            cap=settings.DENSE_EIG_MAX_DIM,
        )
    return op.matrix.toarray()


def dense_eig(op: SparseOperator, count: Optional[int] = None) -> List[EigenPair]:
    """Full (or lowest `count`) spectrum by dense hermitian diagonalization"""
    a = _dense(op)
    if count is None:
        values, vectors = eigh(a)
    else:
        values, vectors = eigh(a, subset_by_index=(0, min(count, a.shape[0]) - 1))
    residuals = np.linalg.norm(a @ vectors - vectors * values, axis=0)
    return [EigenPair(float(v), vectors[:, i], float(residuals[i])) for i, v in enumerate(values)]


def eigenvalues_below(op: SparseOperator, cutoff: float) -> np.ndarray:
    a = _dense(op)
    return eigvalsh(a, subset_by_value=(-np.inf, cutoff))


def solve_lowest(op: SparseOperator, k: int, tol: Optional[float] = None, seed: int = 0) -> List[EigenPair]:
    """Dense when the operator fits under DENSE_EIG_MAX_DIM, Lanczos otherwise"""
    if op.dim <= settings.DENSE_EIG_MAX_DIM:
        return dense_eig(op, count=k)
    return lanczos_lowest(op, k, tol=tol, seed=seed)


def cluster_multiplicities(values, rel_gap: Optional[float] = None) -> List[int]:
    """Sizes of eigenvalue clusters split at relative gaps above rel_gap"""
    rel_gap = settings.CLUSTER_GAP if rel_gap is None else rel_gap
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        return []
    sizes = [1]
    for prev, cur in zip(values[:-1], values[1:]):
        if cur - prev > rel_gap * max(abs(prev), abs(cur)):
            sizes.append(1)
        else:
            sizes[-1] += 1
    return sizes


def write_eigen_csv(pairs: List[EigenPair], store: ArtifactStore, name: str = "eigenvalues.csv"):
    return store.write_csv(
        name,
        ("index", "value", "residual"),
        ((i, p.value, p.residual) for i, p in enumerate(pairs)),
    )


def write_vectors(pairs: List[EigenPair], store: ArtifactStore, name: str = "eigenvectors.bin"):
    return store.write_vectors(name, np.column_stack([p.vector for p in pairs]))

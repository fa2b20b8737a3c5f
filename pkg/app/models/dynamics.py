from dataclasses import dataclass
import enum

import numpy as np


class FlowKind(str, enum.Enum):
    GEODESIC = "geodesic"
    REEB = "reeb"


class Scheme(str, enum.Enum):
    RK4 = "rk4"
    IMPLICIT_MIDPOINT = "implicit-midpoint"


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """Cotangent point (q, p) on the universal cover of the quotient"""

    q: np.ndarray
    p: np.ndarray

    @classmethod
    def of(cls, q, p) -> "PhasePoint":
        return cls(np.asarray(q, dtype=float).copy(), np.asarray(p, dtype=float).copy())

    @classmethod
    def from_state(cls, state: np.ndarray) -> "PhasePoint":
        return cls(np.array(state[:3], dtype=float), np.array(state[3:], dtype=float))

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    """times (T,), states (T, 6) as (x, y, z, p_x, p_y, p_z), invariants (T, 2) as (g*, I).

    I is NaN where |h_Z| fell below the division guard.
    """

    times: np.ndarray
    states: np.ndarray
    invariants: np.ndarray
    truncated: bool = False

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def point(self, idx: int) -> PhasePoint:
        return PhasePoint.from_state(self.states[idx])

    @property
    def gstar(self) -> np.ndarray:
        return self.invariants[:, 0]

    @property
    def adiabatic(self) -> np.ndarray:
        return self.invariants[:, 1]


@dataclass(frozen=True, eq=False)
class HyperbolicState:
    """Point of PSL(2, R) = unit tangent bundle of the upper half-plane.

    The base point is matrix . i; the geodesic flow is right multiplication
    by diag(e^{t/2}, e^{-t/2}).
    """

    matrix: np.ndarray

    @classmethod
    def identity(cls) -> "HyperbolicState":
        return cls(np.eye(2))

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    def normalized(self) -> "HyperbolicState":
        return HyperbolicState(self.matrix / np.sqrt(self.determinant))

    @property
    def base_point(self) -> complex:
        (a, b), (c, d) = self.matrix
        return (a * 1j + b) / (c * 1j + d)

    @property
    def cosh_distance(self) -> float:
        """cosh of the hyperbolic distance from i to the base point"""
        return float(np.sum(self.matrix ** 2) / 2.0)

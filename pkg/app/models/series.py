from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class MatrixElementSeries:
    """Diagonal matrix elements <A phi_n, phi_n> ordered by eigenvalue.

    weights carry multiplicities for exact-model data (one representative
    element per cluster); discretized data use weight 1 per eigenpair.
    """

    eigenvalues: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    label: str = ""
    tags: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.eigenvalues.shape != self.values.shape or self.values.shape != self.weights.shape:
            raise ValueError("series columns must have equal length")
        if self.eigenvalues.size and np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("series eigenvalues must be nondecreasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")

    @classmethod
    def from_values(cls, eigenvalues, values, weights=None, label: str = "", tags=None):
        eigenvalues = np.asarray(eigenvalues, dtype=float)
        values = np.asarray(values, dtype=float)
        weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
        order = np.argsort(eigenvalues, kind="stable")
        tags = None if tags is None else np.asarray(tags)[order]
        return cls(eigenvalues[order], values[order], weights[order], label, tags)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def squared(self) -> "MatrixElementSeries":
        return MatrixElementSeries(self.eigenvalues, self.values ** 2, self.weights, self.label + "^2", self.tags)

    def expanded(self) -> "MatrixElementSeries":
        """One entry per eigenfunction (weights repeated out)"""
        reps = self.weights.astype(int)
        tags = None if self.tags is None else np.repeat(self.tags, reps)
        return MatrixElementSeries(
            np.repeat(self.eigenvalues, reps),
            np.repeat(self.values, reps),
            np.ones(int(reps.sum())),
            self.label,
            tags,
        )


@dataclass(frozen=True, eq=False)
class DensityOneSet:
    kept: np.ndarray
    density_estimate: float
    thresholds: List[int] = field(default_factory=list)
    levels: Optional[np.ndarray] = None

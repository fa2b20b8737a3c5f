from dataclasses import dataclass, field
from typing import Any, Dict, Tuple
import enum

import numpy as np
import scipy.sparse as sp


class Symmetry(str, enum.Enum):
    REAL_SYMMETRIC = "real-symmetric"
    HERMITIAN = "hermitian"


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Symmetric / hermitian sparse discretization of -Delta_sR.

    The stored matrix is M^-1/2 K M^-1/2, where K is the quadratic-form
    (stiffness) matrix and M = diag(mass) the lumped measure; eigenvectors psi
    of the matrix relate to grid functions by phi = psi / sqrt(mass).
    """

    matrix: sp.csr_matrix
    symmetry: Symmetry
    mass: np.ndarray
    grid_shape: Tuple[int, ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_matrix(cls, matrix, grid_shape: Tuple[int, ...] = None, **meta) -> "SparseOperator":
        """Wrap a plain matrix with unit mass (an operator already in l2 form)"""
        matrix = sp.csr_matrix(matrix)
        symmetry = Symmetry.HERMITIAN if np.iscomplexobj(matrix.data) else Symmetry.REAL_SYMMETRIC
        n = matrix.shape[0]
        return cls(matrix, symmetry, np.ones(n), grid_shape or (n,), dict(meta))

    @property
    def is_complex(self) -> bool:
        return self.symmetry == Symmetry.HERMITIAN

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def triplets(self):
        """Row-compressed (row, col, value) triplets"""
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def is_hermitian(self) -> bool:
        """Exact entry-level check, no tolerance"""
        diff = (self.matrix - self.matrix.conj().T).tocsr()
        diff.eliminate_zeros()
        return diff.nnz == 0


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray
    residual: float

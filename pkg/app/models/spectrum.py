from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional
import enum

import numpy as np


class SectorKind(str, enum.Enum):
    OSCILLATOR = "oscillator"
    TORUS = "torus"


@dataclass(frozen=True)
class SpectralDatum:
    """One eigenvalue of the flat Heisenberg quotient with its sector labels.

    Oscillator(l, m) carries eigenvalue (2l+1)|m| with multiplicity |m|;
    Torus(j, k) carries 2*pi*(j^2+k^2) once per lattice point.
    """

    eigenvalue: float
    kind: SectorKind
    multiplicity: int
    l: Optional[int] = None
    m: Optional[int] = None
    j: Optional[int] = None
    k: Optional[int] = None

    @classmethod
    def oscillator(cls, l: int, m: int) -> "SpectralDatum":
        if l < 0 or m == 0:
            raise ValueError("oscillator labels need l >= 0 and m != 0")
        return cls(
            eigenvalue=float((2 * l + 1) * abs(m)),
            kind=SectorKind.OSCILLATOR,
            multiplicity=abs(m),
            l=l,
            m=m,
        )

    @classmethod
    def torus(cls, j: int, k: int) -> "SpectralDatum":
        return cls(
            eigenvalue=2.0 * np.pi * (j * j + k * k),
            kind=SectorKind.TORUS,
            multiplicity=1,
            j=j,
            k=k,
        )


@dataclass(frozen=True, eq=False)
class SpectrumList:
    """Columnar, eigenvalue-sorted spectrum, exhaustive below lambda_max.

    Sector identity is never merged; use aggregate_by_value for the
    multiplicity-by-value view.
    """

    lambda_max: float
    eigenvalues: np.ndarray
    kinds: np.ndarray          # 0 = oscillator, 1 = torus
    l: np.ndarray
    m: np.ndarray
    j: np.ndarray
    k: np.ndarray
    multiplicities: np.ndarray

    def __len__(self) -> int:
        return int(self.eigenvalues.shape[0])

    def __iter__(self) -> Iterator[SpectralDatum]:
        for idx in range(len(self)):
            yield self[idx]

    def __getitem__(self, idx: int) -> SpectralDatum:
        if self.kinds[idx] == 0:
            return SpectralDatum(
                eigenvalue=float(self.eigenvalues[idx]),
                kind=SectorKind.OSCILLATOR,
                multiplicity=int(self.multiplicities[idx]),
                l=int(self.l[idx]),
                m=int(self.m[idx]),
            )
        return SpectralDatum(
            eigenvalue=float(self.eigenvalues[idx]),
            kind=SectorKind.TORUS,
            multiplicity=1,
            j=int(self.j[idx]),
            k=int(self.k[idx]),
        )

    @property
    def is_torus(self) -> np.ndarray:
        return self.kinds == 1

    @cached_property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.multiplicities)

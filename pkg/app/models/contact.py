from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from app.core.errors import ModelInvariantError

SQRT_2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class Lattice:
    """Periods of the Heisenberg quotient Gamma \\ G.

    Gamma = {x, y in sqrt(2 pi) Z, z in 2 pi Z}; the cell volume Lx*Ly*Lz
    is the Popp volume of the flat model.
    """

    Lx: float = SQRT_2PI
    Ly: float = SQRT_2PI
    Lz: float = 2.0 * np.pi

    @property
    def volume(self) -> float:
        return self.Lx * self.Ly * self.Lz

    def flux_quanta(self, m: int) -> float:
        """Flux m*Lx*Ly of the e^{imz} sector in units of 2*pi"""
        return m * self.Lx * self.Ly / (2.0 * np.pi)


@dataclass(frozen=True)
class FourierTerm:
    """amplitude * cos(2*pi*(p*x/Lx + q*y/Ly) + phase)"""

    p: int
    q: int
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class SeriesJet:
    """Value and analytic derivatives up to order two"""

    value: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dxy: np.ndarray
    dyy: np.ndarray


@dataclass(frozen=True)
class FourierSeries:
    """Truncated real Fourier series on the (x, y) torus"""

    terms: Tuple[FourierTerm, ...] = ()

    @classmethod
    def constant(cls, value: float) -> "FourierSeries":
        return cls((FourierTerm(0, 0, value),))

    @classmethod
    def from_pairs(cls, pairs) -> "FourierSeries":
        return cls(tuple(FourierTerm(*pair) for pair in pairs))

    def __call__(self, x, y, lattice: Lattice) -> np.ndarray:
        return self.jet(x, y, lattice).value

    def jet(self, x, y, lattice: Lattice) -> SeriesJet:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        out = [np.zeros(shape) for _ in range(6)]
        for term in self.terms:
            kx = 2.0 * np.pi * term.p / lattice.Lx
            ky = 2.0 * np.pi * term.q / lattice.Ly
            phi = kx * x + ky * y + term.phase
            cos = term.amplitude * np.cos(phi)
            sin = term.amplitude * np.sin(phi)
            out[0] += cos
            out[1] -= kx * sin
            out[2] -= ky * sin
            out[3] -= kx * kx * cos
            out[4] -= kx * ky * cos
            out[5] -= ky * ky * cos
        return SeriesJet(*out)

    @property
    def is_zero(self) -> bool:
        return all(term.amplitude == 0.0 for term in self.terms)


@dataclass(frozen=True)
class FrameJet:
    """Frame factors f = 1 + eps*a, g = 1 + eps*b, c = f*g with derivatives"""

    f: SeriesJet
    g: SeriesJet
    c: SeriesJet


def _product(f: SeriesJet, g: SeriesJet) -> SeriesJet:
    return SeriesJet(
        value=f.value * g.value,
        dx=f.dx * g.value + f.value * g.dx,
        dy=f.dy * g.value + f.value * g.dy,
        dxx=f.dxx * g.value + 2.0 * f.dx * g.dx + f.value * g.dxx,
        dxy=f.dxy * g.value + f.dx * g.dy + f.dy * g.dx + f.value * g.dxy,
        dyy=f.dyy * g.value + 2.0 * f.dy * g.dy + f.value * g.dyy,
    )


@dataclass(frozen=True)
class ContactModel:
    """Contact sub-Riemannian structure on the Heisenberg quotient.

    Orthonormal frame X = (1+eps*a) X_H, Y = (1+eps*b) Y_H with X_H = d/dx,
    Y_H = d/dy - x d/dz. The normalized contact form is
    alpha_g = (dz + x dy) / c with c = (1+eps*a)(1+eps*b), so the Popp
    density is c^-2 dx dy dz. An optional density_h turns the reference
    measure into mu = h^2 * Popp.
    """

    epsilon: float = 0.0
    coeff_a: FourierSeries = field(default_factory=FourierSeries)
    coeff_b: FourierSeries = field(default_factory=FourierSeries)
    lattice: Lattice = field(default_factory=Lattice)
    density_h: Optional[FourierSeries] = None

    @classmethod
    def flat(cls) -> "ContactModel":
        return cls()

    @property
    def is_flat(self) -> bool:
        return self.epsilon == 0.0 or (self.coeff_a.is_zero and self.coeff_b.is_zero)

    def with_density(self, density_h: Optional[FourierSeries]) -> "ContactModel":
        return replace(self, density_h=density_h)

    def frame_jet(self, x, y) -> FrameJet:
        a = self.coeff_a.jet(x, y, self.lattice)
        b = self.coeff_b.jet(x, y, self.lattice)
        eps = self.epsilon
        f = SeriesJet(1.0 + eps * a.value, eps * a.dx, eps * a.dy, eps * a.dxx, eps * a.dxy, eps * a.dyy)
        g = SeriesJet(1.0 + eps * b.value, eps * b.dx, eps * b.dy, eps * b.dxx, eps * b.dxy, eps * b.dyy)
        return FrameJet(f=f, g=g, c=_product(f, g))

    def frame(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        jet = self.frame_jet(x, y)
        return jet.f.value, jet.g.value

    def popp_density(self, x, y) -> np.ndarray:
        f, g = self.frame(x, y)
        return 1.0 / (f * g) ** 2

    def h(self, x, y) -> np.ndarray:
        if self.density_h is None:
            return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return self.density_h(x, y, self.lattice)

    def density(self, x, y) -> np.ndarray:
        """Density of mu with respect to dx dy dz"""
        return self.h(x, y) ** 2 * self.popp_density(x, y)

    def sample_grid(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        xs = np.arange(n) * (self.lattice.Lx / n)
        ys = np.arange(n) * (self.lattice.Ly / n)
        return np.meshgrid(xs, ys, indexing="ij")

    def check_invariants(self, sample_n: int = 64) -> None:
        """Frame factors and density_h must be positive on a dense sample grid"""
        x, y = self.sample_grid(sample_n)
        f, g = self.frame(x, y)
        if f.min() <= 0.0 or g.min() <= 0.0:
            raise ModelInvariantError(
                "frame factor 1+eps*a or 1+eps*b is not positive",
                min_f=float(f.min()),
                min_g=float(g.min()),
            )
        if self.density_h is not None:
            h = self.h(x, y)
            if h.min() <= 0.0:
                raise ModelInvariantError("density_h is not positive", min_h=float(h.min()))

    def min_frame_product(self, sample_n: int = 64) -> float:
        x, y = self.sample_grid(sample_n)
        f, g = self.frame(x, y)
        return float((f * g).min())

"""Exact graded symbols on the model cone.

A symbol is a finite sum of terms c * t^a * s^gamma * u^p v^q with rational
c. Terms are grouped by grade (j, k): k = p + q is the (u, v)-degree (the
vanishing order at the characteristic cone) and gamma = j - k/2 is fixed by
the grade, so the s-power is never stored independently.
"""
from dataclasses import dataclass, field
from math import comb
import re
from typing import Dict, Iterator, Optional, Tuple

from sympy.polys.domains import QQ

from app.core.errors import InvariantError, PreconditionError

ZERO = QQ(0)


def qq(value) -> "QQ.dtype":
    """Coerce ints, (num, den) pairs, strings like '-3/4' to QQ"""
    if isinstance(value, tuple):
        return QQ(*value)
    if isinstance(value, str):
        num, _, den = value.partition("/")
        return QQ(int(num), int(den or 1))
    return QQ.convert(value)


def qq_text(value) -> str:
    num, den = int(value.numerator), int(value.denominator)
    return str(num) if den == 1 else f"{num}/{den}"


@dataclass(frozen=True)
class HomPoly:
    """Homogeneous polynomial of degree k in (u, v); coeffs[i] multiplies u^(k-i) v^i"""

    degree: int
    coeffs: Tuple

    def __post_init__(self):
        if self.degree < 0 or len(self.coeffs) != self.degree + 1:
            raise InvariantError("HomPoly needs degree+1 coefficients", degree=self.degree)

    @classmethod
    def zero(cls, degree: int) -> "HomPoly":
        return cls(degree, (ZERO,) * (degree + 1))

    @classmethod
    def monomial(cls, p: int, q: int, coeff=1) -> "HomPoly":
        coeffs = [ZERO] * (p + q + 1)
        coeffs[q] = qq(coeff)
        return cls(p + q, tuple(coeffs))

    @classmethod
    def from_coeffs(cls, coeffs) -> "HomPoly":
        coeffs = tuple(qq(c) for c in coeffs)
        return cls(len(coeffs) - 1, coeffs)

    @classmethod
    def radial(cls, n: int) -> "HomPoly":
        """(u^2 + v^2)^n"""
        coeffs = [ZERO] * (2 * n + 1)
        for i in range(n + 1):
            coeffs[2 * i] = QQ(comb(n, i))
        return cls(2 * n, tuple(coeffs))

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def __add__(self, other: "HomPoly") -> "HomPoly":
        if other.degree != self.degree:
            raise InvariantError("adding polynomials of different degree", left=self.degree, right=other.degree)
        return HomPoly(self.degree, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "HomPoly":
        return HomPoly(self.degree, tuple(-c for c in self.coeffs))

    def __sub__(self, other: "HomPoly") -> "HomPoly":
        return self + (-other)

    def scale(self, factor) -> "HomPoly":
        factor = qq(factor)
        return HomPoly(self.degree, tuple(factor * c for c in self.coeffs))

    def __mul__(self, other: "HomPoly") -> "HomPoly":
        out = [ZERO] * (self.degree + other.degree + 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                if b != 0:
                    out[i + j] += a * b
        return HomPoly(self.degree + other.degree, tuple(out))

    def du(self) -> Optional["HomPoly"]:
        if self.degree == 0:
            return None
        k = self.degree
        return HomPoly(k - 1, tuple((k - i) * self.coeffs[i] for i in range(k)))

    def dv(self) -> Optional["HomPoly"]:
        if self.degree == 0:
            return None
        return HomPoly(self.degree - 1, tuple(i * self.coeffs[i] for i in range(1, self.degree + 1)))

    def angular(self) -> "HomPoly":
        """A = u d/dv - v d/du, the rotation generator"""
        k = self.degree
        out = [ZERO] * (k + 1)
        for i, c in enumerate(self.coeffs):
            if c == 0:
                continue
            # A(u^(k-i) v^i) = i u^(k-i+1) v^(i-1) - (k-i) u^(k-i-1) v^(i+1)
            if i > 0:
                out[i - 1] += i * c
            if i < k:
                out[i + 1] -= (k - i) * c
        return HomPoly(k, tuple(out))

    def circle_mean(self):
        """Mean of the polynomial over the unit circle"""
        total = ZERO
        for i, c in enumerate(self.coeffs):
            p, q = self.degree - i, i
            if c == 0 or p % 2 or q % 2:
                continue
            total += c * _circle_moment(p, q)
        return total


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _circle_moment(p: int, q: int):
    """Mean of cos^p sin^q over the circle, p and q even"""
    return QQ(_double_factorial(p - 1) * _double_factorial(q - 1), _double_factorial(p + q))


@dataclass(frozen=True)
class BaseCoeff:
    """c(t) * s^(s2/2) with c a rational polynomial in t"""

    t_poly: Tuple
    s2: int

    def __post_init__(self):
        object.__setattr__(self, "t_poly", tuple(qq(c) for c in self.t_poly))


Grade = Tuple[int, int]
TermMap = Dict[Grade, Dict[int, HomPoly]]


@dataclass(frozen=True, eq=False)
class GradedSymbol:
    """Truncated element of the direct sum of F_{j,k}.

    terms[(j, k)][a] is the HomPoly multiplying t^a s^(j - k/2); every grade
    with k above truncation_order is discarded.
    """

    terms: TermMap = field(default_factory=dict)
    truncation_order: int = 8

    def __post_init__(self):
        clean: TermMap = {}
        for (j, k), by_t in self.terms.items():
            if k > self.truncation_order:
                continue
            kept = {}
            for a, poly in by_t.items():
                if poly.degree != k:
                    raise InvariantError("term degree does not match its grade", grade=(j, k), degree=poly.degree)
                if a < 0:
                    raise InvariantError("negative t power", grade=(j, k))
                if not poly.is_zero:
                    kept[a] = poly
            if kept:
                clean[(j, k)] = kept
        object.__setattr__(self, "terms", clean)

    # construction

    @classmethod
    def zero(cls, truncation_order: int = 8) -> "GradedSymbol":
        return cls({}, truncation_order)

    @classmethod
    def term(cls, j: int, poly: HomPoly, t_power: int = 0, truncation_order: int = 8) -> "GradedSymbol":
        return cls({(j, poly.degree): {t_power: poly}}, truncation_order)

    @classmethod
    def from_base(cls, base: BaseCoeff, poly: HomPoly, truncation_order: int = 8) -> "GradedSymbol":
        twice_j = base.s2 + poly.degree
        if twice_j % 2:
            raise InvariantError("s exponent is not j - k/2 for an integer j", s2=base.s2, k=poly.degree)
        j = twice_j // 2
        return cls(
            {(j, poly.degree): {a: poly.scale(c) for a, c in enumerate(base.t_poly) if c != 0}},
            truncation_order,
        )

    @classmethod
    def h2(cls, truncation_order: int = 8) -> "GradedSymbol":
        """H2 = s (u^2 + v^2)"""
        return cls.term(2, HomPoly.radial(1), 0, truncation_order)

    # inspection

    def grades(self):
        return sorted(self.terms)

    def grade(self, j: int, k: int) -> Dict[int, HomPoly]:
        return dict(self.terms.get((j, k), {}))

    def components(self) -> Iterator[Tuple[int, int, int, HomPoly]]:
        for (j, k) in self.grades():
            for a in sorted(self.terms[(j, k)]):
                yield j, k, a, self.terms[(j, k)][a]

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def same_terms(self, other: "GradedSymbol") -> bool:
        return self.terms == other.terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, GradedSymbol):
            return NotImplemented
        return self.terms == other.terms and self.truncation_order == other.truncation_order

    # arithmetic

    def _combine(self, other: "GradedSymbol", sign: int) -> "GradedSymbol":
        order = min(self.truncation_order, other.truncation_order)
        out: TermMap = {g: dict(by_t) for g, by_t in self.terms.items()}
        for g, by_t in other.terms.items():
            slot = out.setdefault(g, {})
            for a, poly in by_t.items():
                poly = poly if sign > 0 else -poly
                slot[a] = slot[a] + poly if a in slot else poly
        return GradedSymbol(out, order)

    def __add__(self, other: "GradedSymbol") -> "GradedSymbol":
        return self._combine(other, 1)

    def __sub__(self, other: "GradedSymbol") -> "GradedSymbol":
        return self._combine(other, -1)

    def __neg__(self) -> "GradedSymbol":
        return self.scale(-1)

    def scale(self, factor) -> "GradedSymbol":
        factor = qq(factor)
        return GradedSymbol(
            {g: {a: p.scale(factor) for a, p in by_t.items()} for g, by_t in self.terms.items()},
            self.truncation_order,
        )

    def with_truncation(self, order: int) -> "GradedSymbol":
        """Re-label the truncation (drops grades above a lower order)"""
        return GradedSymbol(self.terms, order)

    def restrict(self, predicate) -> "GradedSymbol":
        return GradedSymbol(
            {g: by_t for g, by_t in self.terms.items() if predicate(*g)},
            self.truncation_order,
        )

    # canonical text

    def to_text(self) -> str:
        parts = []
        for (j, k) in self.grades():
            s2 = 2 * j - k
            by_t = self.terms[(j, k)]
            for i in range(k + 1):
                for a in sorted(by_t):
                    c = by_t[a].coeffs[i]
                    if c != 0:
                        parts.append(f"{qq_text(c)} * t^{a} * s^({s2}/2) * u^{k - i} v^{i}")
        return " + ".join(parts) if parts else "0"


_TERM = re.compile(
    r"^\s*(?P<c>-?\d+(?:/\d+)?)\s*\*\s*t\^(?P<a>\d+)\s*\*\s*s\^\((?P<g>-?\d+)/2\)"
    r"\s*\*\s*u\^(?P<p>\d+)\s+v\^(?P<q>\d+)\s*$"
)


def parse_symbol(text: str, truncation_order: int = 8) -> GradedSymbol:
    """Inverse of GradedSymbol.to_text"""
    text = text.strip()
    out = GradedSymbol.zero(truncation_order)
    if text in ("", "0"):
        return out
    for chunk in text.split(" + "):
        match = _TERM.match(chunk)
        if match is None:
            raise PreconditionError("cannot parse symbol term", term=chunk)
        p, q = int(match["p"]), int(match["q"])
        base = BaseCoeff((ZERO,) * int(match["a"]) + (qq(match["c"]),), int(match["g"]))
        out = out + GradedSymbol.from_base(base, HomPoly.monomial(p, q), truncation_order)
    return out


@dataclass(frozen=True, eq=False)
class NormalFormResult:
    """Output of a Birkhoff normalization.

    generators are (space, F) pairs in the order they were applied; replaying
    them on the input reproduces normal_form + residual.
    """

    normal_form: GradedSymbol
    generators: Tuple[Tuple[str, GradedSymbol], ...]
    residual: GradedSymbol
    mode: str = "semiglobal"
    order: int = 6

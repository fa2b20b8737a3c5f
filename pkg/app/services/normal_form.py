"""Birkhoff normal form of graded symbols near the characteristic cone.

Coefficients live on a reduced base with canonical pair (t, s), {s, t} = 1,
so for terms a = t^a1 s^g1 P and b = t^a2 s^g2 Q

    {a, b} = (g1 a2 - a1 g2) t^(a1+a2-1) s^(g1+g2-1) P Q
             + t^(a1+a2) s^(g1+g2) (P_u Q_v - P_v Q_u).

The first part lands in grade (j1+j2-1, k1+k2), the second in
(j1+j2-1, k1+k2-2). With H2 = s (u^2 + v^2),

    {H2, t^a s^g P} = a t^(a-1) s^g (u^2+v^2) P + 2 t^a s^(g+1) A P,   A = u d/dv - v d/du,

which is what both cohomological solvers invert. Truncation is by the
(u, v)-degree k; generators sit in j = 1 and therefore preserve j.
"""
import logging
import re
from math import factorial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sympy import Matrix
from sympy.polys.domains import QQ

from app.core.config import settings
from app.core.errors import PreconditionError, ResourceLimitError
from app.models.symbol import GradedSymbol, HomPoly, NormalFormResult, parse_symbol, qq, qq_text

logger = logging.getLogger(__name__)

ZERO_SPACE = "zero"
INVARIANT_SPACE = "invariant"
SPACES = (ZERO_SPACE, INVARIANT_SPACE)


def circle_average(poly: HomPoly) -> HomPoly:
    """Projection onto span{(u^2+v^2)^(k/2)}; zero for odd k"""
    if poly.degree % 2:
        return HomPoly.zero(poly.degree)
    return HomPoly.radial(poly.degree // 2).scale(poly.circle_mean())


def is_invariant_poly(poly: HomPoly) -> bool:
    if poly.degree % 2:
        return poly.is_zero
    return (poly - circle_average(poly)).is_zero


def is_invariant(symbol: GradedSymbol) -> bool:
    return all(is_invariant_poly(p) for _, _, _, p in symbol.components())


def is_zero_average(symbol: GradedSymbol) -> bool:
    return all(poly.circle_mean() == 0 for _, _, _, poly in symbol.components())


def split(symbol: GradedSymbol) -> Tuple[GradedSymbol, GradedSymbol]:
    """(F0 part, Finv part): circle-average-free remainder and the averages"""
    zero: Dict = {}
    inv: Dict = {}
    for j, k, a, poly in symbol.components():
        avg = circle_average(poly)
        zero.setdefault((j, k), {})[a] = poly - avg
        inv.setdefault((j, k), {})[a] = avg
    order = symbol.truncation_order
    return GradedSymbol(zero, order), GradedSymbol(inv, order)


def solve_angular(target: HomPoly) -> HomPoly:
    """q with A q = target and zero circle mean (the kernel of A is spanned by the radial power)"""
    if target.circle_mean() != 0:
        raise PreconditionError("angular equation needs a target with zero circle average", degree=target.degree)
    k = target.degree
    if target.is_zero:
        return HomPoly.zero(k)
    rows = [[0] * (k + 1) for _ in range(k + 1)]
    for i in range(k + 1):
        column = HomPoly.monomial(k - i, i).angular()
        for r, c in enumerate(column.coeffs):
            rows[r][i] = QQ.to_sympy(c)
    rhs = [QQ.to_sympy(c) for c in target.coeffs]
    if k % 2 == 0:
        rows.append([QQ.to_sympy(HomPoly.monomial(k - i, i).circle_mean()) for i in range(k + 1)])
        rhs.append(0)
    try:
        solution, params = Matrix(rows).gauss_jordan_solve(Matrix(rhs))
    except ValueError as exc:
        raise PreconditionError("angular equation has no solution", degree=k) from exc
    if params.shape[0]:
        solution = solution.subs({p: 0 for p in params})
    return HomPoly(k, tuple(QQ.from_sympy(solution[i]) for i in range(k + 1)))


def _bracket_terms(j1, k1, a1, p1: HomPoly, j2, k2, a2, p2: HomPoly, order: int, out: Dict) -> None:
    two_g1, two_g2 = 2 * j1 - k1, 2 * j2 - k2
    base = QQ(two_g1 * a2 - a1 * two_g2, 2)
    j = j1 + j2 - 1
    if base != 0 and k1 + k2 <= order:
        slot = out.setdefault((j, k1 + k2), {})
        term = (p1 * p2).scale(base)
        t = a1 + a2 - 1
        slot[t] = slot[t] + term if t in slot else term
    if p1.degree and p2.degree and k1 + k2 - 2 <= order:
        fiber = p1.du() * p2.dv() - p1.dv() * p2.du()
        if not fiber.is_zero:
            slot = out.setdefault((j, k1 + k2 - 2), {})
            t = a1 + a2
            slot[t] = slot[t] + fiber if t in slot else fiber


def poisson(f: GradedSymbol, g: GradedSymbol) -> GradedSymbol:
    """Exact bracket of two graded symbols, truncated at the smaller order"""
    order = min(f.truncation_order, g.truncation_order)
    out: Dict = {}
    for j1, k1, a1, p1 in f.components():
        for j2, k2, a2, p2 in g.components():
            _bracket_terms(j1, k1, a1, p1, j2, k2, a2, p2, order, out)
    return GradedSymbol(out, order)


def solve_cohomological(target: GradedSymbol, space: str = ZERO_SPACE) -> GradedSymbol:
    """F with the grade-k part of {H2, F} equal to target, grade by grade.

    zero space:      target t^a s^g P with zero circle average gives
                     F = t^a s^(g-1) solve_angular(P) / 2 in F0_{j-1,k}.
    invariant space: target c(t) s^g (u^2+v^2)^(k/2) gives
                     F = b(t) s^g (u^2+v^2)^(k/2-1) with b' = c.
    """
    if space not in SPACES:
        raise PreconditionError("unknown generator space", space=space)
    out: Dict = {}
    for j, k, a, poly in target.components():
        if space == ZERO_SPACE:
            if poly.circle_mean() != 0:
                raise PreconditionError("zero-space target has a nonzero circle average", grade=(j, k), t_power=a)
            out.setdefault((j - 1, k), {})[a] = solve_angular(poly).scale(QQ(1, 2))
        else:
            if k % 2:
                raise PreconditionError("invariant targets need even degree", grade=(j, k))
            if not is_invariant_poly(poly):
                raise PreconditionError("target is not a multiple of the radial power", grade=(j, k))
            if k < 2:
                raise PreconditionError("invariant targets need degree at least 2", grade=(j, k))
            coeff = poly.coeffs[0]
            out.setdefault((j - 1, k - 2), {})[a + 1] = HomPoly.radial(k // 2 - 1).scale(coeff / (a + 1))
    return GradedSymbol(out, target.truncation_order)


def lie_transform(h: GradedSymbol, generator: GradedSymbol, order: Optional[int] = None) -> GradedSymbol:
    """exp(ad_F) h = sum_n ad_F^n h / n!, ad_F(h) = {F, h}.

    With order=None the series runs until it terminates by truncation and
    fails after LIE_MAX_ORDER brackets; an explicit order cuts the series.
    """
    limit = settings.LIE_MAX_ORDER
    if order is not None and order > limit:
        raise ResourceLimitError("Lie series order above the configured maximum", order=order, maximum=limit)
    if any(j != 1 for (j, _) in generator.terms):
        raise PreconditionError("generator must lie in F_{1,k}", grades=generator.grades())
    result = h
    term = h
    n = 0
    while True:
        n += 1
        if order is not None and n > order:
            break
        term = poisson(generator, term)
        if term.is_zero:
            break
        if order is None and n > limit:
            raise ResourceLimitError("Lie series did not terminate within the maximum order", maximum=limit)
        result = result + term.scale(QQ(1, factorial(n)))
    return result


def replay(h: GradedSymbol, generators: Sequence[Tuple[str, GradedSymbol]], truncation: Optional[int] = None) -> GradedSymbol:
    out = h if truncation is None else h.with_truncation(truncation)
    for _, generator in generators:
        out = lie_transform(out, generator)
    return out


def _check_form(h: GradedSymbol) -> None:
    if any(j != 2 for (j, _) in h.terms):
        raise PreconditionError("input must be homogeneous of degree 2 (all grades j = 2)", grades=h.grades())
    if any(k < 2 for (_, k) in h.terms):
        raise PreconditionError("input has terms of degree below 2 in (u, v)", grades=h.grades())
    if h.grade(2, 2) != {0: HomPoly.radial(1)}:
        raise PreconditionError("the degree-2 part must be exactly H2 = s (u^2 + v^2)")


def birkhoff_normalize(h: GradedSymbol, order: int = 6, mode: str = "semiglobal") -> NormalFormResult:
    """Remove F0 components of degree 3..order, then (local mode) the invariant ones.

    semiglobal works at the input truncation and leaves
    H2 + sum w_2n(t, s) (u^2+v^2)^n; degrees above order go to the residual.
    local works at truncation = order and also kills the invariant terms.
    """
    if mode not in ("semiglobal", "local"):
        raise PreconditionError("mode must be semiglobal or local", mode=mode)
    _check_form(h)
    if order < 2:
        raise PreconditionError("order must be at least 2", order=order)

    work = h if mode == "semiglobal" else h.with_truncation(order)
    generators: List[Tuple[str, GradedSymbol]] = []
    top = min(order, work.truncation_order)
    for k in range(3, top + 1):
        zero_part, _ = split(work.restrict(lambda j, kk: kk == k))
        if zero_part.is_zero:
            continue
        generator = solve_cohomological(zero_part, ZERO_SPACE)
        work = lie_transform(work, generator)
        generators.append((ZERO_SPACE, generator))
        logger.debug("removed F0 terms of degree %d", k)

    if mode == "local":
        for k in range(4, top + 1, 2):
            _, inv_part = split(work.restrict(lambda j, kk: kk == k))
            if inv_part.is_zero:
                continue
            generator = solve_cohomological(inv_part, INVARIANT_SPACE)
            work = lie_transform(work, generator)
            generators.append((INVARIANT_SPACE, generator))
            logger.debug("removed invariant terms of degree %d", k)

    normal = work.restrict(lambda j, k: k <= order)
    residual = work.restrict(lambda j, k: k > order)
    logger.info("%s normal form to order %d with %d generators", mode, order, len(generators))
    return NormalFormResult(normal, tuple(generators), residual, mode, order)


def invariant_coefficients(symbol: GradedSymbol) -> Dict[str, str]:
    """w_2n(t) as text, keyed 'w4', 'w6', ... for the radial terms of degree >= 4"""
    out: Dict[str, str] = {}
    for (j, k) in symbol.grades():
        if k < 4 or k % 2:
            continue
        parts = []
        for a, poly in sorted(symbol.grade(j, k).items()):
            if not is_invariant_poly(poly):
                continue
            c = poly.coeffs[0]
            parts.append(qq_text(c) if a == 0 else f"{qq_text(c)}*t^{a}")
        if parts:
            out[f"w{k}"] = " + ".join(parts)
    return out


def random_element(rng: np.random.Generator, j: int, k: int, space: str = "any", t_degree: int = 2, truncation_order: int = 8) -> GradedSymbol:
    """Random rational element of F_{j,k} (or its F0 / Finv part)"""
    by_t = {}
    for a in range(t_degree + 1):
        if space == INVARIANT_SPACE:
            if k % 2:
                break
            c = qq((int(rng.integers(-5, 6)), int(rng.integers(1, 5))))
            poly = HomPoly.radial(k // 2).scale(c)
        else:
            poly = HomPoly.from_coeffs([(int(rng.integers(-5, 6)), int(rng.integers(1, 5))) for _ in range(k + 1)])
            if space == ZERO_SPACE:
                poly = poly - circle_average(poly)
        by_t[a] = poly
    return GradedSymbol({(j, k): by_t}, truncation_order)


_SHORT = re.compile(r"^(?P<sign>-)?(?:(?P<c>\d+(?:/\d+)?)\*?)?(?:u(?P<p>\d+))?(?:v(?P<q>\d+))?$")


def parse_hamiltonian(text: str, truncation_order: int = 8) -> GradedSymbol:
    """Canonical text form, or the shorthand 'H2+u3' / 'H2 + 1/2*u2v1 - v3'.

    Shorthand monomials c*u{p}v{q} are homogeneous of degree 2, i.e. carry
    s^(2 - (p+q)/2).
    """
    if " * t^" in text:
        return parse_symbol(text, truncation_order)
    out = GradedSymbol.zero(truncation_order)
    compact = text.replace(" ", "").replace("-", "+-")
    for token in filter(None, compact.split("+")):
        if token.upper() == "H2":
            out = out + GradedSymbol.h2(truncation_order)
            continue
        match = _SHORT.match(token)
        if match is None or (match["p"] is None and match["q"] is None):
            raise PreconditionError("cannot parse Hamiltonian term", term=token)
        coeff = qq(match["c"] or "1")
        if match["sign"]:
            coeff = -coeff
        poly = HomPoly.monomial(int(match["p"] or 0), int(match["q"] or 0), coeff)
        out = out + GradedSymbol.term(2, poly, 0, truncation_order)
    return out

from pathlib import Path

import pytest

from app.core.errors import PreconditionError, ResourceLimitError
from app.models.symbol import GradedSymbol, HomPoly, parse_symbol, qq
from app.services import normal_form as nf

GOLDEN = Path(__file__).parent / "golden"


def _random_grades(rng, count):
    for _ in range(count):
        yield int(rng.integers(1, 5)), int(rng.integers(1, 9))


def test_bracket_with_h2_on_zero_average_terms(rng):
    h2 = GradedSymbol.h2(10)
    for j, k in _random_grades(rng, 100):
        f = nf.random_element(rng, j, k, nf.ZERO_SPACE, truncation_order=10)
        bracket = nf.poisson(h2, f)
        assert set(bracket.grades()) <= {(j + 1, k), (j + 1, k + 2)}
        assert nf.is_zero_average(bracket)


def test_bracket_with_h2_on_invariant_terms(rng):
    h2 = GradedSymbol.h2(10)
    for j, k in _random_grades(rng, 100):
        f = nf.random_element(rng, j, 2 * (k // 2), nf.INVARIANT_SPACE, truncation_order=10)
        bracket = nf.poisson(h2, f)
        assert set(bracket.grades()) <= {(j + 1, 2 * (k // 2) + 2)}
        assert nf.is_invariant(bracket)


def test_zero_space_solve_is_exact(rng):
    h2 = GradedSymbol.h2(10)
    for j, k in _random_grades(rng, 100):
        target = nf.random_element(rng, j, k, nf.ZERO_SPACE, truncation_order=10)
        solution = nf.solve_cohomological(target, nf.ZERO_SPACE)
        assert set(solution.grades()) <= {(j - 1, k)}
        image = nf.poisson(h2, solution).restrict(lambda jj, kk: kk == k)
        assert image.same_terms(target)


def test_invariant_space_solve_is_exact(rng):
    h2 = GradedSymbol.h2(10)
    for j, k in _random_grades(rng, 100):
        degree = max(2, 2 * (k // 2))
        target = nf.random_element(rng, j, degree, nf.INVARIANT_SPACE, truncation_order=10)
        solution = nf.solve_cohomological(target, nf.INVARIANT_SPACE)
        assert nf.is_invariant(solution)
        assert nf.poisson(h2, solution).same_terms(target)


def test_solver_rejects_wrong_space():
    radial = GradedSymbol.term(2, HomPoly.radial(2))
    with pytest.raises(PreconditionError):
        nf.solve_cohomological(radial, nf.ZERO_SPACE)
    with pytest.raises(PreconditionError):
        nf.solve_cohomological(GradedSymbol.term(2, HomPoly.monomial(3, 0)), nf.INVARIANT_SPACE)
    with pytest.raises(PreconditionError):
        nf.solve_cohomological(radial, "other")


def test_poisson_is_antisymmetric(rng):
    f = nf.random_element(rng, 1, 3, truncation_order=10)
    g = nf.random_element(rng, 2, 4, truncation_order=10)
    assert (nf.poisson(f, g) + nf.poisson(g, f)).is_zero


def test_split_recombines(rng):
    f = nf.random_element(rng, 2, 4)
    zero, inv = nf.split(f)
    assert nf.is_zero_average(zero)
    assert nf.is_invariant(inv)
    assert (zero + inv).same_terms(f)


def test_cubic_generator_matches_golden():
    result = nf.birkhoff_normalize(nf.parse_hamiltonian("H2+u3"), order=6)
    space, generator = result.generators[0]
    assert space == nf.ZERO_SPACE
    assert generator.to_text() == (GOLDEN / "nf_cubic_generator.txt").read_text().strip()


def test_quartic_invariant_coefficient():
    result = nf.birkhoff_normalize(nf.parse_hamiltonian("H2+u3"), order=6)
    assert nf.invariant_coefficients(result.normal_form)["w4"] == "-15/32"


def test_semiglobal_form_has_only_invariant_terms():
    result = nf.birkhoff_normalize(nf.parse_hamiltonian("H2 + u3 + 1/2*u2v1 - v4"), order=6)
    for j, k, _, poly in result.normal_form.components():
        if 3 <= k <= 6:
            assert nf.is_invariant_poly(poly), (j, k)
    assert result.normal_form.grade(2, 2) == {0: HomPoly.radial(1)}
    assert all(k > 6 for _, k in result.residual.grades())


def test_local_form_is_h2():
    h = nf.parse_hamiltonian("H2+u3")
    result = nf.birkhoff_normalize(h, order=6, mode="local")
    assert result.normal_form.same_terms(GradedSymbol.h2(6))
    assert any(space == nf.INVARIANT_SPACE for space, _ in result.generators)
    assert nf.replay(h, result.generators, truncation=6).same_terms(result.normal_form + result.residual)


def test_replay_reproduces_semiglobal_result():
    h = nf.parse_hamiltonian("H2+u3")
    result = nf.birkhoff_normalize(h, order=6)
    assert nf.replay(h, result.generators).same_terms(result.normal_form + result.residual)


def test_lie_transform_limits():
    h = GradedSymbol.h2()
    with pytest.raises(PreconditionError):
        nf.lie_transform(h, GradedSymbol.term(2, HomPoly.monomial(3, 0)))
    with pytest.raises(ResourceLimitError):
        nf.lie_transform(h, GradedSymbol.term(1, HomPoly.monomial(3, 0)), order=11)


def test_normalize_rejects_bad_input():
    with pytest.raises(PreconditionError):
        nf.birkhoff_normalize(nf.parse_hamiltonian("u3"))
    with pytest.raises(PreconditionError):
        nf.birkhoff_normalize(nf.parse_hamiltonian("H2+u3"), mode="global")
    with pytest.raises(PreconditionError):
        nf.parse_hamiltonian("H2+x3")


def test_text_round_trip(rng):
    symbol = nf.random_element(rng, 2, 5) + nf.random_element(rng, 1, 4, t_degree=3)
    assert parse_symbol(symbol.to_text()) == symbol
    assert nf.parse_hamiltonian(symbol.to_text()) == symbol


def test_shorthand_parsing():
    h = nf.parse_hamiltonian("H2 + 1/2*u2v1 - v3")
    assert h.grades() == [(2, 2), (2, 3)]
    assert h.grade(2, 3)[0] == HomPoly.from_coeffs([0, qq("1/2"), 0, -1])


def test_circle_average_of_monomials():
    assert nf.circle_average(HomPoly.monomial(2, 0)) == HomPoly.radial(1).scale(qq("1/2"))
    assert nf.circle_average(HomPoly.monomial(3, 0)).is_zero
    assert nf.circle_average(HomPoly.monomial(2, 2)) == HomPoly.radial(2).scale(qq("1/8"))


def test_solve_angular_small_degrees():
    assert nf.solve_angular(HomPoly.from_coeffs([1, 0, -1])) == HomPoly.monomial(1, 1)
    assert nf.solve_angular(HomPoly.monomial(3, 0)) == HomPoly.from_coeffs([0, 1, 0, qq("2/3")])
    assert nf.solve_angular(HomPoly.zero(4)).is_zero
    with pytest.raises(PreconditionError):
        nf.solve_angular(HomPoly.monomial(2, 0))


def test_solve_angular_inverts_rotation(rng):
    for k in range(1, 9):
        for _, _, _, target in nf.random_element(rng, 2, k, nf.ZERO_SPACE).components():
            solution = nf.solve_angular(target)
            assert solution.angular() == target
            assert solution.circle_mean() == 0


def test_bracket_with_h2():
    h2 = GradedSymbol.h2()
    raised = nf.poisson(h2, GradedSymbol.term(1, HomPoly.radial(1), t_power=1))
    assert raised.same_terms(GradedSymbol.term(2, HomPoly.radial(2)))
    assert nf.poisson(h2, GradedSymbol.term(3, HomPoly.radial(2))).is_zero


def test_cohomological_generators():
    target = GradedSymbol.term(2, HomPoly.monomial(3, 0))
    generator = nf.solve_cohomological(target, nf.ZERO_SPACE)
    assert generator.same_terms(GradedSymbol.term(1, HomPoly.from_coeffs([0, qq("1/2"), 0, qq("1/3")])))
    residual = nf.poisson(GradedSymbol.h2(), generator) - target
    assert all(k == 5 for _, k in residual.grades())

    radial = nf.solve_cohomological(GradedSymbol.term(2, HomPoly.radial(2)), nf.INVARIANT_SPACE)
    assert radial.same_terms(GradedSymbol.term(1, HomPoly.radial(1), t_power=1))
    assert nf.solve_cohomological(GradedSymbol.zero(), nf.ZERO_SPACE).is_zero


def test_general_brackets_respect_grading(rng):
    for _ in range(100):
        (j1, k1), (j2, k2) = _random_grades(rng, 2)
        f = nf.random_element(rng, j1, k1, truncation_order=20)
        g = nf.random_element(rng, j2, k2, truncation_order=20)
        grades = set(nf.poisson(f, g).grades())
        assert grades <= {(j1 + j2 - 1, k1 + k2 - 2), (j1 + j2 - 1, k1 + k2)}


def test_invariant_brackets_stay_invariant(rng):
    for _ in range(100):
        (j1, k1), (j2, k2) = _random_grades(rng, 2)
        f = nf.random_element(rng, j1, 2 * (k1 // 2), nf.INVARIANT_SPACE, truncation_order=20)
        g = nf.random_element(rng, j2, 2 * (k2 // 2), nf.INVARIANT_SPACE, truncation_order=20)
        assert nf.is_invariant(nf.poisson(f, g))


def test_jacobi_identity(rng):
    for _ in range(20):
        f, g, h = (
            nf.random_element(rng, j, k, truncation_order=30)
            for j, k in _random_grades(rng, 3)
        )
        total = (
            nf.poisson(f, nf.poisson(g, h))
            + nf.poisson(g, nf.poisson(h, f))
            + nf.poisson(h, nf.poisson(f, g))
        )
        assert total.is_zero


def test_lie_transform_series():
    h = nf.parse_hamiltonian("H2+u3")
    assert nf.lie_transform(h, GradedSymbol.zero()).same_terms(h)
    generator = GradedSymbol.term(1, HomPoly.monomial(1, 1))
    first = nf.lie_transform(h, generator, order=1)
    assert first.same_terms(h + nf.poisson(generator, h))

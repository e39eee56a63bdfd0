from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branecalc.ainfty import (
    MultilinearOperator,
    TaylorStructure,
    algebra_from_components,
    bimodule_ambients,
    check_action_morphism,
    check_algebra_relations,
    check_bimodule_relations,
    end_to_mix,
    graded_algebra,
    graph_bimodule,
    mix_to_end,
    pairing_bimodule,
    pairing_values,
    solve_linear,
    suspend_sign,
    suspended,
)
from branecalc.geometry import WeightBook, WeightProblem, mc_integrate
from branecalc.graded_core import Ambient, DomainError, GradedElement, Splitting, WeightPoly, basis_elements
from branecalc.koszul import undeformed_bimodule

SMALL_SPLITTINGS = ["0,0,1,0", "0,1,0,0", "0,1,1,0", "1,0,1,1", "1,1,1,1"]


# ---------------------------------------------------------------------------
# pairing


@pytest.mark.parametrize("dims", SMALL_SPLITTINGS)
def test_pairing_matches_canonical_pairing(dims):
    s = Splitting.parse(dims)
    report = pairing_values(pairing_bimodule(s), probe=1)
    assert report["pass"], report["failures"][:3]
    paired = [row for row in report["pairs"] if row["expected"] == 1]
    assert len(paired) == len(s.block("upv")) + len(s.block("uvperp"))


def test_pairing_detects_a_wrong_sign():
    s = Splitting.parse("0,1,1,0")
    good = pairing_bimodule(s)
    comps = dict(good.components)
    comps[(1, 1)] = comps[(1, 1)].scale(-1)
    bad = TaylorStructure("bimodule", comps, good.ambient, good.left, good.right, good.truncation, "flipped")
    assert not pairing_values(bad)["pass"]


# ---------------------------------------------------------------------------
# algebra relations


@pytest.mark.parametrize("kind", ["A", "B", "T"])
@pytest.mark.parametrize("dims", ["0,0,2,0", "1,1,0,1"])
def test_graded_algebras_satisfy_relations_exactly(kind, dims):
    amb = Ambient(kind, Splitting.parse(dims))
    report = check_algebra_relations(graded_algebra(amb), max_arity=3, basis_truncation=1)
    assert report.passed and report.exact


def test_algebra_relations_detect_non_square_zero_differential():
    amb = Ambient("B", Splitting.parse("0,0,1,0"))
    d1 = MultilinearOperator.from_function((amb,), amb, lambda f: f.derivative(0), 0, "d")
    mu = MultilinearOperator.product((amb, amb), amb)
    report = check_algebra_relations(algebra_from_components(amb, {1: d1, 2: mu}), max_arity=1, basis_truncation=2)
    assert not report.passed
    assert report.entries[1].mode == "exact" and report.entries[1].residual > 0


def test_relations_need_a_book_for_symbolic_weights():
    s = Splitting.parse("0,1,1,0")
    A, K, B = bimodule_ambients(s)
    dK, forced = undeformed_bimodule(s, 3)
    assert forced.undetermined
    with pytest.raises(DomainError):
        check_bimodule_relations(graded_algebra(A), graded_algebra(B), dK, (2, 2), (1, 1, 2))


# ---------------------------------------------------------------------------
# bimodule relations and forced weights


def test_pairing_bimodule_relations_at_low_arity():
    s = Splitting.parse("0,1,1,0")
    A, K, B = bimodule_ambients(s)
    report = check_bimodule_relations(graded_algebra(A), graded_algebra(B), pairing_bimodule(s), (1, 1), 2)
    assert report.passed and report.exact


def test_one_dimensional_fan_weights_are_inverse_factorials():
    """j sources all pointing to one right point: the integrand is symmetric in the
    sources, so ordering them cuts the product of j unit integrals by j!."""
    s = Splitting.parse("0,0,1,0")
    _, forced = undeformed_bimodule(s, 5)
    assert forced.consistent and not forced.undetermined
    for j in range(1, 5):
        edges = " ".join(f"{i}>{j + 1}:mp" for i in range(j))
        assert forced.values[f"0 {j + 2} {j} | {edges}"] == Fraction(1, math.factorial(j))


def test_one_dimensional_bimodule_relations_exact():
    s = Splitting.parse("0,0,1,0")
    A, K, B = bimodule_ambients(s)
    dK, _ = undeformed_bimodule(s, 3)
    report = check_bimodule_relations(graded_algebra(A), graded_algebra(B), dK, (2, 2), (1, 1, 3))
    assert report.passed and report.exact


def test_two_dimensional_forced_weights_agree_with_integrals():
    """Weights solved from the relations against direct Monte-Carlo integration."""
    s = Splitting.parse("0,0,2,0")
    _, forced = undeformed_bimodule(s, 4)
    assert forced.consistent and not forced.undetermined
    two_edge = [k for k in forced.values if k.startswith("0 5 2")]
    assert sorted(forced.values[k] for k in two_edge) == sorted(Fraction(v) for v in ("-1/3", "-1/6", "1/6", "1/3"))
    for key in two_edge + ["0 4 1 | 0>2:mp 0>3:mp"]:
        est = mc_integrate(WeightProblem.from_key(key), 60_000, seed=1)
        assert abs(est.value - float(forced.values[key])) <= max(3 * est.stderr, 0.02), key


def test_monte_carlo_bimodule_relations():
    s = Splitting.parse("0,0,2,0")
    A, K, B = bimodule_ambients(s)
    book = WeightBook(samples=60_000, seed=4)
    dK = graph_bimodule(s, (2, 2), book)
    report = check_bimodule_relations(graded_algebra(A), graded_algebra(B), dK, (2, 2), (2, 1, 2), weights=book)
    assert report.passed
    assert any(e.mode == "numeric" for e in report.entries)


# ---------------------------------------------------------------------------
# linear solver


def test_solve_linear_determined_and_free():
    a, b, c = (WeightPoly.symbol(n) for n in "abc")
    solved, free, ok = solve_linear([a * 2 - 1, b + c - 3])
    assert ok and solved == {"a": Fraction(1, 2)} and free == {"b", "c"}


def test_solve_linear_inconsistent():
    a = WeightPoly.symbol("a")
    _, _, ok = solve_linear([a - 1, a - 2])
    assert not ok


def test_solve_linear_rejects_quadratic():
    a = WeightPoly.symbol("a")
    with pytest.raises(DomainError):
        solve_linear([a * a - 1])


# ---------------------------------------------------------------------------
# suspension and comodule maps


def test_suspend_sign_examples():
    assert suspend_sign([1, 1]) == 1
    assert suspend_sign([0, 0]) == -1
    assert suspend_sign([0, 0, 0]) == -1
    assert suspend_sign([2]) == 1


@settings(max_examples=40)
@given(st.sampled_from(["0,0,1,0", "0,1,1,0", "1,0,1,0"]), st.integers(1, 3))
def test_suspension_is_an_involution(dims, arity):
    amb = Ambient("A", Splitting.parse(dims))
    op = MultilinearOperator.product((amb,) * arity, amb)
    back = suspended(suspended(op))
    assert back.agrees_with(op, 1)


@pytest.mark.parametrize("side", ["right", "left"])
def test_derived_actions_are_morphisms(side):
    s = Splitting.parse("0,0,1,0")
    A, K, B = bimodule_ambients(s)
    dK, _ = undeformed_bimodule(s, 3)
    report = check_action_morphism(graded_algebra(A), graded_algebra(B), dK, side, 2, 2, 1)
    assert report.passed and report.exact


def test_mixed_and_end_pictures_roundtrip():
    s = Splitting.parse("0,1,1,0")
    A, K, B = bimodule_ambients(s)
    phi = dict(pairing_bimodule(s).components)
    psi = mix_to_end(phi, K, B)
    back = end_to_mix(psi, A, K, B, 1, 1, 1)
    for sig, op in phi.items():
        assert back[sig].agrees_with(op, 1), sig
    assert back[(0, 0)].agrees_with(MultilinearOperator.zero((K,), K), 1)


def test_end_value_is_the_mixed_component():
    s = Splitting.parse("0,0,1,0")
    A, K, B = bimodule_ambients(s)
    phi = dict(pairing_bimodule(s).components)
    t, x = GradedElement.t(A, 0), GradedElement.x(B, 0)
    one = GradedElement.one(K)
    assert mix_to_end(phi, K, B)(t).component(1, one, [x]) == phi[(1, 1)](t, one, x)
    assert len(basis_elements(K, 2)) == 1

from __future__ import annotations

import random
from fractions import Fraction
from math import comb

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branecalc.ainfty import bimodule_ambients, graded_algebra
from branecalc.graded_core import DomainError, Splitting
from branecalc.koszul import (
    BarComplex,
    ExtClass,
    bar_to_koszul,
    check_keller,
    check_projections,
    diagonal_concentration,
    dual_product,
    ext_algebra,
    koszul_complex,
    undeformed_bimodule,
)


def base_polynomials(n_base: int, weight: int) -> int:
    """Number of monomials of degree ``weight`` in ``n_base`` variables."""
    if n_base == 0:
        return int(weight == 0)
    return comb(weight + n_base - 1, n_base - 1)


# ---------------------------------------------------------------------------
# Koszul complex


@pytest.mark.parametrize("n_base, n_fiber", [(0, 1), (1, 1), (0, 2), (1, 2), (2, 2)])
def test_koszul_resolution_is_acyclic(n_base, n_fiber):
    kc = koszul_complex(n_base, n_fiber, truncation=6)
    for entry in kc.cohomology():
        if entry.degree < 0:
            assert entry.betti == 0, entry
        else:
            assert entry.betti == base_polynomials(n_base, entry.internal_degree), entry


@pytest.mark.parametrize("n_base, n_fiber", [(1, 2), (2, 1)])
def test_euler_characteristic_matches_base_ring(n_base, n_fiber):
    """Alternating sum of the chain dimensions, counted straight from the basis."""
    kc = koszul_complex(n_base, n_fiber)
    for w in range(0, 6):
        chi = sum((-1) ** r * len(kc.basis(r, w)) for r in range(n_fiber + 1))
        assert chi == base_polynomials(n_base, w)


@pytest.mark.parametrize("n_base, n_fiber", [(0, 2), (1, 2), (1, 3)])
def test_homotopy_and_square(n_base, n_fiber):
    kc = koszul_complex(n_base, n_fiber)
    for w in range(0, 5):
        assert kc.homotopy_defect(w) == []
        assert kc.d_squared_defect(w) == []


def test_negative_dimensions_rejected():
    with pytest.raises(DomainError):
        koszul_complex(-1, 1)


def test_quadratic_dual_generators():
    dual = koszul_complex(1, 2).quadratic_dual()
    assert dual["even_generators"] == ["x1"] and dual["odd_generators"] == ["xi1", "xi2"]


# ---------------------------------------------------------------------------
# Ext


@pytest.mark.parametrize("n_base, n_fiber", [(0, 1), (1, 1), (0, 2), (1, 2), (2, 2)])
def test_ext_presentation(n_base, n_fiber):
    ext = ext_algebra(n_base, n_fiber, truncation=4)
    report = ext.check_presentation()
    assert report["isomorphic"], report["failures"]


def test_ext_table_dimensions():
    ext = ext_algebra(1, 2, truncation=3)
    dims = {(r["p"], r["q"]): r["dim"] for r in ext.table()}
    # p odd generators from two, times polynomials of degree q + p in one variable
    assert dims[(0, 0)] == 1 and dims[(1, -1)] == 2 and dims[(2, -2)] == 1 and dims[(1, 1)] == 2


@pytest.mark.parametrize("n_base, n_fiber", [(1, 2), (0, 3)])
def test_contraction_lifts_are_chain_maps(n_base, n_fiber):
    ext = ext_algebra(n_base, n_fiber, truncation=4)
    for p in range(0, n_fiber + 1):
        for q in range(-p, -p + 2):
            for cls in ext.classes(p, q):
                for w in range(0, 4):
                    assert ext.check_lift(cls, w), (cls, w)


def test_yoneda_of_odd_generators_anticommutes():
    ext = ext_algebra(0, 2)
    a, b = ExtClass((), (0,)), ExtClass((), (1,))
    ab, ba = ext.yoneda(a, b), ext.yoneda(b, a)
    assert ab == {k: -v for k, v in ba.items()} and ab
    assert ext.yoneda(a, a) == {}


@settings(max_examples=50)
@given(st.lists(st.integers(0, 2), min_size=3, max_size=3), st.lists(st.integers(0, 2), min_size=3, max_size=3))
def test_dual_product_graded_commutative(u, v):
    """Even parts commute; the odd words pick up the sign of the exchange."""
    a = {((u[0],), tuple(j for j in range(2) if u[1 + j] % 2)): Fraction(1)}
    b = {((v[0],), tuple(j for j in range(2) if v[1 + j] % 2)): Fraction(1)}
    ((_, ja),) = a
    ((_, jb),) = b
    sign = (-1) ** (len(ja) * len(jb))
    assert dual_product(a, b) == {k: c * sign for k, c in dual_product(b, a).items()}


# ---------------------------------------------------------------------------
# bar resolution


def _random_bar(rng: random.Random, bar: BarComplex, p: int) -> dict:
    n = bar.n_base + bar.n_fiber

    def mono():
        return tuple(rng.randint(0, 2) for _ in range(n))

    def nonconstant():
        while True:
            m = mono()
            if any(m):
                return m

    k = tuple(rng.randint(0, 2) for _ in range(bar.n_base)) + (0,) * bar.n_fiber
    return {(k, tuple(nonconstant() for _ in range(p)), mono()): Fraction(rng.randint(1, 3))}


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_bar_differential_squares_to_zero(seed, p):
    bar = BarComplex(1, 2)
    el = _random_bar(random.Random(seed), bar, p)
    assert bar.d(bar.d(el)) == {}


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_bar_to_koszul_is_a_chain_map(seed):
    bar = BarComplex(1, 2)
    kc = koszul_complex(1, 2)
    f0, f1 = bar_to_koszul(1, 2, 0), bar_to_koszul(1, 2, 1)
    rng = random.Random(seed)
    el = _random_bar(rng, bar, 1)
    assert kc.d(f1(el)) == f0(bar.d(el))
    # f0 kills boundaries coming from length two
    el2 = _random_bar(rng, bar, 2)
    assert kc.d(f1(bar.d(el2))) == {}


def test_bar_to_koszul_higher_component_absent():
    with pytest.raises(DomainError):
        bar_to_koszul(1, 1, 2)


# ---------------------------------------------------------------------------
# End complexes and Keller


@pytest.mark.parametrize("dims", ["0,0,1,0", "0,1,1,0"])
@pytest.mark.parametrize("side", ["right", "left"])
def test_diagonal_concentration(dims, side):
    report = diagonal_concentration(Splitting.parse(dims), side, max_length=3, max_weight=4)
    assert report["concentrated"]
    diagonal = [r for r in report["table"] if r["p"] == -r["q"]]
    assert any(r["betti"] for r in diagonal)


@pytest.mark.parametrize("side", ["right", "left"])
def test_keller_one_dimensional(side):
    s = Splitting.parse("0,0,1,0")
    A, K, B = bimodule_ambients(s)
    dK, _ = undeformed_bimodule(s, 4)
    report = check_keller(graded_algebra(A), graded_algebra(B), dK, side, 3)
    assert report.isomorphism
    assert [r["p"] for r in report.rows] == [0, 1, 2, 3]


def test_projection_kernels_acyclic_one_dimensional():
    s = Splitting.parse("0,0,1,0")
    A, K, B = bimodule_ambients(s)
    dK, _ = undeformed_bimodule(s, 4)
    report = check_projections(graded_algebra(A), graded_algebra(B), dK, 3, (0, 1), (-1, 0, 1))
    for name in ("p_A", "p_B"):
        assert report[name]["acyclic"], name
        assert any(e["reliable"] for e in report[name]["entries"])

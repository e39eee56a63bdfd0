from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branecalc.geometry import (
    Configuration,
    SingularConfiguration,
    WeightBook,
    WeightEstimate,
    WeightProblem,
    angle_function,
    boundary_restriction,
    log_derivative,
    mc_integrate,
    normalize_kind,
    orientation_sign,
    problem_seed,
    propagator_form,
    real_axis_form,
    tolerance,
)
from branecalc.graded_core import DomainError, Sign

UNIT_MIXED = WeightProblem(0, 3, ((0, 2, "mp"),), 1)
UNIT_MIXED_MIRROR = WeightProblem(0, 3, ((2, 0, "pm"),), 1)


# ---------------------------------------------------------------------------
# kinds and configurations


def test_kind_aliases():
    assert normalize_kind("+-") == "pm"
    assert normalize_kind("-+") == "mp"
    assert normalize_kind("+") == "plus"
    with pytest.raises(DomainError):
        normalize_kind("++-")


def test_weight_key_roundtrip():
    p = WeightProblem(1, 3, ((0, 2, "pp"), (3, 0, "mm"), (0, 0, "rho")), 1)
    assert WeightProblem.from_key(p.key()) == p
    with pytest.raises(DomainError):
        WeightProblem.from_key("garbage")


def test_four_colored_kinds_need_a_marked_point():
    with pytest.raises(DomainError):
        WeightProblem(0, 3, ((0, 2, "pm"),))


def test_configuration_validation():
    with pytest.raises(DomainError):
        Configuration((1 - 1j,))
    with pytest.raises(DomainError):
        Configuration((), (1.0, 0.0))
    with pytest.raises(SingularConfiguration):
        Configuration((1j, 1j))


# ---------------------------------------------------------------------------
# forms


def _random_h(rng, k):
    return [complex(rng.uniform(-2, 2), rng.uniform(0.2, 2)) for _ in range(k)]


@pytest.mark.parametrize("kind", ["plus", "minus", "pp", "pm", "mp", "mm"])
def test_form_is_differential_of_angle(kind):
    """Exact differentiation agrees with a central difference of the angle function."""
    rng = np.random.default_rng(7)
    h = 1e-6
    for _ in range(10):
        z, w = _random_h(rng, 2)
        dz, dw = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        exact = float(log_derivative(kind, z, w, 0.0).apply(dz, dw))
        hi = angle_function(kind, z + h * dz, w + h * dw, 0.0)
        lo = angle_function(kind, z - h * dz, w - h * dw, 0.0)
        diff = (hi - lo + 0.5) % 1.0 - 0.5
        assert exact == pytest.approx(diff / (2 * h), abs=1e-6)


def test_pp_is_pullback_of_plus():
    rng = np.random.default_rng(3)
    for _ in range(10):
        z, w = _random_h(rng, 2)
        x = float(rng.uniform(-3, 3))
        cfg_marked = Configuration((z, w), (x,), 0)
        cfg_plain = Configuration((z, w))
        tan = [complex(*rng.normal(size=2)), complex(*rng.normal(size=2))]
        a = propagator_form("pp", cfg_marked, (0, 1), tan + [float(rng.normal())])
        b = propagator_form("plus", cfg_plain, (0, 1), tan)
        assert a == pytest.approx(b, abs=1e-12)


def test_coincident_endpoints_are_singular():
    cfg = Configuration((1j,), (0.0,), 0)
    with pytest.raises(SingularConfiguration):
        propagator_form("pm", cfg, (0, 0), [0j, 0.0])


def test_real_points_move_only_along_the_axis():
    cfg = Configuration((1j,), (0.0, 1.0), 0)
    with pytest.raises(DomainError):
        propagator_form("pm", cfg, (0, 2), [0j, 0.0, 1j])


# ---------------------------------------------------------------------------
# boundary restrictions (a few examples; the full table runs in the acceptance suite)


def test_mp_vanishes_on_delta():
    assert boundary_restriction("mp", "delta", (0.7, 1.9), (0.3, -1.2)) == pytest.approx(0.0, abs=1e-9)


def test_pm_on_alpha_is_angle_minus_rho():
    phi, t = 0.4, 1.1
    tangent = (0.8, -0.5)
    expected = (tangent[0] - tangent[1]) / (2 * math.pi)
    assert boundary_restriction("pm", "alpha", (phi, t), tangent) == pytest.approx(expected, abs=1e-6)


def test_plus_vanishes_on_the_eye_lower_lid():
    assert boundary_restriction("plus", "eye_beta", (0.3, 0.9), (1.0, 0.4)) == pytest.approx(0.0, abs=1e-12)


def test_real_axis_restriction_matches_small_eps_interior_value():
    """Both endpoints on the line around the marked point: compare with the interior form at a tiny height."""
    p, q = -1.0, 2.0
    limit = boundary_restriction("pm", "a", (p, q), (1.0, 0.0))
    eps = 1e-12
    interior = float(log_derivative("pm", complex(p, eps), complex(q, eps), 0.0).apply(1.0, 0.0))
    assert limit == pytest.approx(interior, abs=1e-5)
    assert limit == pytest.approx(real_axis_form("pm", p, q, (1.0, 0.0)), abs=1e-6)


def test_unknown_stratum():
    with pytest.raises(DomainError):
        boundary_restriction("pm", "omega", (0.1, 0.2), (1.0, 0.0))
    with pytest.raises(DomainError):
        boundary_restriction("plus", "alpha", (0.1, 0.2), (1.0, 0.0))


def test_orientation_signs():
    assert orientation_sign(("collapse_h",)) == Sign(-1)
    assert orientation_sign(("collapse_real", 1, 2)) == Sign(1)
    assert orientation_sign(("collapse_real", 2, 2)) == Sign(-1)
    with pytest.raises(DomainError):
        orientation_sign(())


# ---------------------------------------------------------------------------
# Monte-Carlo weights


def test_edgeless_point_weight_is_one():
    est = mc_integrate(WeightProblem(0, 2, (), None), 1000)
    assert est.method == "exact" and est.value == 1.0


def test_degree_mismatch_is_exactly_zero():
    est = mc_integrate(WeightProblem(0, 4, ((0, 2, "mp"),), 1), 1000)
    assert est.method == "exact" and est.value == 0.0


def test_estimates_are_deterministic_and_thread_invariant():
    a = mc_integrate(UNIT_MIXED, 60_000, seed=11)
    b = mc_integrate(UNIT_MIXED, 60_000, seed=11)
    c = mc_integrate(UNIT_MIXED, 60_000, seed=11, workers=3)
    assert a == b
    assert (a.value, a.stderr) == (c.value, c.stderr)


def _line_quadrature(kind: str, source_moves: bool) -> float:
    """Integral over a different section: left point at -1, marked point at 0, right point on (0, inf)."""
    u = np.linspace(math.log(1e-10), math.log(1e10), 40001)
    q = np.exp(u)
    if source_moves:
        vals = np.array([real_axis_form(kind, v, -1.0, (1.0, 0.0)) for v in q])
    else:
        vals = np.array([real_axis_form(kind, -1.0, v, (0.0, 1.0)) for v in q])
    return float(np.trapezoid(vals * q, u))


@pytest.mark.parametrize("problem, kind, source_moves", [(UNIT_MIXED, "mp", False), (UNIT_MIXED_MIRROR, "pm", True)])
def test_unit_weight_independent_of_section(problem, kind, source_moves):
    est = mc_integrate(problem, 100_000, seed=5)
    oracle = _line_quadrature(kind, source_moves)
    assert oracle == pytest.approx(1.0, abs=1e-3)
    assert abs(est.value - oracle) <= max(3 * est.stderr, 0.01)


def test_tolerance_rule():
    assert tolerance(WeightEstimate(1.0, 0.001, 10, 0), floor=0.02) == (0.02, "absolute 0.02")
    tol, source = tolerance(WeightEstimate(1.0, 0.1, 10, 0), floor=0.02)
    assert tol == pytest.approx(0.3) and source == "3*stderr"


def test_exact_estimate_has_no_error():
    with pytest.raises(DomainError):
        WeightEstimate(1.0, 0.1, 0, 0, "exact")


def test_weight_book_symbols_and_cache(tmp_path):
    path = tmp_path / "cache.json"
    book = WeightBook(samples=20_000, seed=2, cache_path=str(path))
    sym = book.symbol(UNIT_MIXED)
    assert sym.symbols() == {UNIT_MIXED.key()}
    first = book.estimate(UNIT_MIXED.key())
    book.save()
    again = WeightBook(samples=20_000, seed=2, cache_path=str(path))
    assert again.estimates[UNIT_MIXED.key()] == first
    other_seed = WeightBook(samples=20_000, seed=3, cache_path=str(path))
    assert UNIT_MIXED.key() not in other_seed.estimates


def test_weight_book_exact_injection():
    book = WeightBook(exact={UNIT_MIXED.key(): 1})
    assert book.symbol(UNIT_MIXED) == 1
    assert book.estimate(UNIT_MIXED.key()).method == "exact"


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_per_problem_seeds_differ_between_problems(seed):
    other = WeightProblem(0, 4, ((0, 2, "mp"), (1, 2, "mp")), 2)
    a = problem_seed(seed, UNIT_MIXED.key()).generate_state(2)
    b = problem_seed(seed, other.key()).generate_state(2)
    assert list(a) != list(b)
    assert list(a) == list(problem_seed(seed, UNIT_MIXED.key()).generate_state(2))

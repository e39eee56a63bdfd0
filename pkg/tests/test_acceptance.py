"""Acceptance suite: one test per criterion, each printing a single pass/fail line."""

from __future__ import annotations

import itertools
import math
import random
import time

import numpy as np

from branecalc.ainfty import (
    bimodule_ambients,
    check_algebra_relations,
    check_bimodule_relations,
    graded_algebra,
    graph_bimodule,
    pairing_bimodule,
    pairing_values,
)
from branecalc.geometry import (
    CUBE_STRATA,
    WeightBook,
    WeightProblem,
    boundary_restriction,
    log_derivative,
    mc_integrate,
)
from branecalc.graded_core import Ambient, GradedElement, Splitting, WeightPoly, schouten_bracket
from branecalc.hochschild import MaurerCartanElement, Window, brace, identity_suite
from branecalc.koszul import (
    check_keller,
    check_projections,
    diagonal_concentration,
    ext_algebra,
    koszul_complex,
    undeformed_bimodule,
)
from branecalc.quantize import check_deformed_koszul, poisson_from_json

from test_hochschild import MIXED_CHECK, _agree_with_oracle, _cast
from test_koszul import base_polynomials


def report(capsys, number: int, passed: bool, detail: str, started: float) -> None:
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if passed else 'FAIL'} ({time.perf_counter() - started:.1f}s) {detail}")


# ---------------------------------------------------------------------------
# 1. pairing


def test_criterion_1_pairing_bimodule(capsys):
    start = time.perf_counter()
    failures = []
    count = 0
    for dims in itertools.product(range(2), repeat=4):
        s = Splitting(*dims)
        result = pairing_values(pairing_bimodule(s), probe=1)
        count += 1
        if not result["pass"]:
            failures.append(str(s))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 1.0
    report(capsys, 1, ok, f"{count} splittings, failures={failures}", start)
    assert not failures
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# 2. one-dimensional tower


def _tower_value(dK, j: int):
    s = dK.ambient.splitting
    A, K, B = bimodule_ambients(s)
    x = GradedElement.one(B)
    for _ in range(j):
        x = x * GradedElement.x(B, 0)
    out = dK.component((j, 1))(*([GradedElement.t(A, 0)] * j + [GradedElement.one(K), x]))
    (coeff,) = out.terms.values()
    return coeff


def test_criterion_2_one_dimensional_tower(capsys):
    start = time.perf_counter()
    line = Splitting.parse("0,0,1,0")
    forced, fw = undeformed_bimodule(line, 5)
    exact = {j: _tower_value(forced, j) for j in range(1, 5)}
    exact_ok = fw.consistent and all(v == 1 for v in exact.values())
    book = WeightBook(samples=200_000, seed=0)
    mc = graph_bimodule(line, weights=book, components=[(j, 1) for j in range(1, 5)])
    rows = []
    for j in range(1, 5):
        poly = WeightPoly.lift(_tower_value(mc, j))
        value, err = poly.evaluate(book.values(poly.symbols()))
        rows.append((j, value, err, abs(value - 1) <= max(3 * err, 0.02)))
    ok = exact_ok and all(r[3] for r in rows)
    report(capsys, 2, ok, "exact " + str({j: str(v) for j, v in exact.items()}) + " mc " + ", ".join(f"j={j}: {v:.4f}±{e:.4f}" for j, v, e, _ in rows), start)
    assert exact_ok
    assert all(r[3] for r in rows), rows


# ---------------------------------------------------------------------------
# 3. unit integrals


def test_criterion_3_unit_integrals(capsys):
    start = time.perf_counter()
    rows = []
    for problem in (WeightProblem(0, 3, ((0, 2, "mp"),), 1), WeightProblem(0, 3, ((2, 0, "pm"),), 1)):
        est = mc_integrate(problem, 200_000, seed=0)
        rows.append((problem.key(), est.value, est.stderr, abs(est.value - 1) <= max(3 * est.stderr, 0.01)))
    ok = all(r[3] for r in rows)
    report(capsys, 3, ok, "; ".join(f"{k}: {v:.4f}±{e:.4f}" for k, v, e, _ in rows), start)
    assert ok, rows


# ---------------------------------------------------------------------------
# 4. boundary laws


VANISHING = {
    "delta": ("pp", "pm", "mp"),
    "epsilon": ("pm", "mp", "mm"),
    "eta": ("pm", "mm"),
    "theta": ("pp", "mp"),
    "zeta": ("mp", "mm"),
    "xi": ("pp", "pm"),
}
# on beta/gamma the four-colored form restricts to a two-colored one in the eye coordinates
EYE_RESTRICTION = {
    "beta": {"pp": "plus", "pm": "plus", "mp": "minus", "mm": "minus"},
    "gamma": {"pp": "plus", "pm": "minus", "mp": "plus", "mm": "minus"},
}


def _coords(rng, stratum):
    if stratum == "alpha":
        return [rng.uniform(0, 2 * math.pi), rng.uniform(0.2, math.pi - 0.2)]
    if stratum in ("beta", "gamma"):
        while True:
            r, phi = rng.uniform(0.3, 3), rng.uniform(0, 2 * math.pi)
            if 1 + r * math.sin(phi) > 0.2:
                return [r, phi]
    if stratum in ("delta", "epsilon"):
        return [rng.uniform(0.2, math.pi - 0.2), rng.uniform(0.2, math.pi - 0.2)]
    if stratum == "eye_alpha":
        return [rng.uniform(0, 2 * math.pi)]
    return [rng.uniform(-3, 3), rng.uniform(0.3, 3)]


def _law(kind, stratum, coords, tangent):
    """Expected limit of the propagator on the stratum, or None when no law applies."""
    if stratum in VANISHING:
        return 0.0 if kind in VANISHING[stratum] else None
    if stratum == "alpha":
        a, b = tangent
        return (a - b) / (2 * math.pi) if kind in ("pm", "mp") else a / (2 * math.pi)
    if stratum in EYE_RESTRICTION:
        r, phi = coords
        direction = np.exp(1j * phi)
        moved = tangent[0] * direction + tangent[1] * 1j * r * direction
        return float(log_derivative(EYE_RESTRICTION[stratum][kind], 1j, 1j + r * direction).apply(0, moved))
    if stratum == "eye_alpha":
        return tangent[0] / (2 * math.pi)
    if stratum == "eye_beta":
        return 0.0 if kind == "plus" else None
    if stratum == "eye_gamma":
        return 0.0 if kind == "minus" else None
    raise AssertionError(stratum)


def test_criterion_4_boundary_laws(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    cases = [(k, s) for s in CUBE_STRATA for k in ("pp", "pm", "mp", "mm")]
    cases += [(k, s) for s in ("eye_alpha", "eye_beta", "eye_gamma") for k in ("plus", "minus")]
    worst = 0.0
    checked = 0
    bad = []
    for kind, stratum in cases:
        if _law(kind, stratum, _coords(rng, stratum), [1.0, 0.0]) is None:
            continue
        checked += 1
        for _ in range(100):
            c = _coords(rng, stratum)
            tangent = [1.0] if stratum == "eye_alpha" else list(rng.normal(size=2))
            err = abs(boundary_restriction(kind, stratum, c, tangent) - _law(kind, stratum, c, tangent))
            worst = max(worst, err)
            if err > 1e-6:
                bad.append((kind, stratum))
                break
    ok = not bad
    report(capsys, 4, ok, f"{checked} (kind, stratum) laws x 100 configurations, worst error {worst:.2e}, failing {bad}", start)
    assert ok, bad


# ---------------------------------------------------------------------------
# 5. exact algebra suite


def _random_polyvector(rng: random.Random, s: Splitting, vectors: int) -> GradedElement:
    T = Ambient("T", s)
    out = GradedElement.zero(T)
    for _ in range(rng.randint(1, 3)):
        exps = [rng.randint(0, 2) for _ in range(s.dim)]
        if sum(exps) > 3:
            continue
        odd = tuple(sorted(rng.sample(range(s.dim), vectors)))
        out = out + GradedElement.monomial(T, exps, odd, rng.choice([-2, -1, 1, 2, 3]))
    return out


def test_criterion_5_exact_algebra_suite(capsys):
    start = time.perf_counter()
    rng = random.Random(5)
    cases = 200
    tallies: dict[str, list[int]] = {"schouten_jacobi": [0, 0], "brace_brute_force": [0, 0]}
    splittings = [Splitting(*d) for d in itertools.product(range(2), repeat=4) if 1 <= sum(d) <= 3]
    for _ in range(cases):
        s = rng.choice(splittings)
        a, b, c = (_random_polyvector(rng, s, rng.randint(0, min(3, s.dim))) for _ in range(3))
        da, db = a.degree, b.degree
        lhs = schouten_bracket(a, schouten_bracket(b, c))
        rhs = schouten_bracket(schouten_bracket(a, b), c) + schouten_bracket(b, schouten_bracket(a, c)).scale((-1) ** (da * db))
        tallies["schouten_jacobi"][0] += 1
        tallies["schouten_jacobi"][1] += lhs != rhs
    for i in range(cases):
        pattern = ["rr", "gr", "rg", "rrr", "grr", "rgr"][i % 6]
        cochains = _cast(rng.randrange(10**6), pattern)
        phi, psis = cochains[0], cochains[1:]
        tallies["brace_brute_force"][0] += 1
        tallies["brace_brute_force"][1] += not _agree_with_oracle(brace(phi, *psis), phi, psis, MIXED_CHECK)
    plane = Splitting.parse("0,0,2,0")
    A, K, B = bimodule_ambients(plane)
    dK, _ = undeformed_bimodule(plane, 4)
    gamma = MaurerCartanElement.from_structures(graded_algebra(A), graded_algebra(B), dK)
    cat = gamma.gamma.cat
    suite = identity_suite(gamma, Window(cat, 2, 3), Window(cat, 3, 3), random.Random(6), cases=cases)
    for name, t in suite.items():
        tallies[name] = [t["cases"], t["failures"]]
    ok = all(n >= cases and f == 0 for n, f in tallies.values())
    report(capsys, 5, ok, ", ".join(f"{k}: {f}/{n} failures" for k, (n, f) in tallies.items()), start)
    assert ok, tallies


# ---------------------------------------------------------------------------
# 6. relation residuals


def test_criterion_6_relation_residuals(capsys):
    start = time.perf_counter()
    failures = []
    numeric = 0
    splittings = [Splitting(*d) for d in itertools.product(range(3), repeat=4) if 1 <= sum(d) <= 2]
    for s in splittings:
        A, K, B = bimodule_ambients(s)
        for amb in (A, B):
            rep = check_algebra_relations(graded_algebra(amb), max_arity=4, basis_truncation=1)
            if not rep.passed:
                failures.append(f"algebra {amb}")
        book = WeightBook(samples=200_000, seed=0)
        dK = graph_bimodule(s, (2, 2), book)
        rep = check_bimodule_relations(graded_algebra(A), graded_algebra(B), dK, (2, 2), (2, 1, 2), weights=book)
        numeric += sum(e.mode == "numeric" for e in rep.entries)
        if not rep.passed:
            worst = rep.worst()
            failures.append(f"bimodule {s} {worst.arity} residual {worst.residual:.3g} > {worst.tolerance:.3g}")
    ok = not failures
    report(capsys, 6, ok, f"{len(splittings)} splittings, {numeric} numeric relation entries, failures={failures}", start)
    assert ok, failures


# ---------------------------------------------------------------------------
# 7. Koszul suite


def test_criterion_7_koszul_suite(capsys):
    start = time.perf_counter()
    problems = []
    for n_base, n_fiber in itertools.product(range(3), range(1, 3)):
        for entry in koszul_complex(n_base, n_fiber, truncation=6).cohomology():
            expected = base_polynomials(n_base, entry.internal_degree) if entry.degree == 0 else 0
            if entry.betti != expected:
                problems.append(f"H^{entry.degree} weight {entry.internal_degree} for ({n_base},{n_fiber})")
        pres = ext_algebra(n_base, n_fiber, truncation=6).check_presentation()
        if not pres["isomorphic"]:
            problems.append(f"presentation ({n_base},{n_fiber}): {pres['failures'][:2]}")
    for dims in ("0,0,1,0", "0,0,2,0"):
        for side in ("right", "left"):
            if not diagonal_concentration(Splitting.parse(dims), side, max_length=4, max_weight=6)["concentrated"]:
                problems.append(f"concentration {dims} {side}")
    ok = not problems
    report(capsys, 7, ok, f"acyclicity, presentation and concentration, problems={problems}", start)
    assert ok, problems


# ---------------------------------------------------------------------------
# 8. Keller and projections


def test_criterion_8_keller_and_projections(capsys):
    start = time.perf_counter()
    problems = []
    reliable = 0
    for dims, total, size in (("0,0,1,0", 5, 4), ("0,0,2,0", 4, 5)):
        s = Splitting.parse(dims)
        A, K, B = bimodule_ambients(s)
        dK, _ = undeformed_bimodule(s, total)
        dA, dB = graded_algebra(A), graded_algebra(B)
        for side in ("right", "left"):
            if not check_keller(dA, dB, dK, side, 3).isomorphism:
                problems.append(f"keller {dims} {side}")
        proj = check_projections(dA, dB, dK, size, (0, 1, 2), (-1, 0, 1))
        for name, entry in proj.items():
            reliable += sum(e["reliable"] for e in entry["entries"])
            if not entry["acyclic"]:
                problems.append(f"{name} {dims}")
    ok = not problems and reliable > 0
    report(capsys, 8, ok, f"{reliable} reliable window entries, problems={problems}", start)
    assert ok, problems


# ---------------------------------------------------------------------------
# 9. quantization


def test_criterion_9_quantization(capsys):
    start = time.perf_counter()
    pi = poisson_from_json({"coeffs": [{"i": 1, "j": 2, "monomial": [1, 1], "coeff": 1}]}, Splitting.parse("0,0,2,0"), 1)
    result = check_deformed_koszul(pi, 1, WeightBook(samples=200_000, seed=0))
    summary = ", ".join(f"{c['check']}={'ok' if c['pass'] else 'FAIL'}" for c in result["checks"])
    report(capsys, 9, result["pass"], summary, start)
    assert result["pass"], result["checks"]

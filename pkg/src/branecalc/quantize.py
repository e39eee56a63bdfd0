"""Truncated deformation quantization: star products and the deformed bimodule.

A Poisson structure is a formal series ``pi = hbar pi_1 + hbar^2 pi_2 + ...``
of bivector fields (elements of the polyvector ambient with two odd
factors).  Its images under the formality morphism are assembled graph by
graph: the order-``k`` part of a structure map with ``M`` real arguments is
``sum (1/n!) U_n(pi_{i_1}, ..., pi_{i_n})`` over ``i_1 + ... + i_n = k``.

Deformed structures keep ``hbar`` as a symbol inside the
:class:`~branecalc.graded_core.WeightPoly` coefficients, so relations can
be truncated order by order with :func:`hbar_part`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

from .ainfty import (
    Category,
    MultilinearOperator,
    RelationEntry,
    RelationReport,
    ResidualCollector,
    TaylorStructure,
    bimodule_ambients,
    derived_left_action,
    graded_algebra,
    graph_bimodule,
    relation_value,
)
from .geometry import WeightBook
from .graded_core import (
    Ambient,
    DomainError,
    GradedElement,
    Monomial,
    Splitting,
    WeightPoly,
    basis_elements,
    is_zero,
    schouten_bracket,
)
from .graphs import compile_graph, enumerate_formality_graphs

HBAR = "hbar"
DEFAULT_ORDER_CAP = 2


def hbar_part(c: Any, k: int) -> Any:
    """Coefficient of ``hbar^k`` in a scalar (constants count as order zero)."""
    if not isinstance(c, WeightPoly):
        return c if k == 0 else Fraction(0)
    out: dict[tuple[str, ...], Fraction] = {}
    for key, v in c.terms.items():
        if key.count(HBAR) == k:
            out[tuple(s for s in key if s != HBAR)] = v
    p = WeightPoly(out)
    return p.constant() if p.is_constant() else p


def element_hbar_part(x: GradedElement, k: int) -> GradedElement:
    return x.map_coeffs(lambda c: hbar_part(c, k))


# ---------------------------------------------------------------------------
# formal series


@dataclass
class FormalSeries:
    """Coefficients of ``hbar^0 .. hbar^order``; missing entries are zero."""

    coefficients: list[Any]
    order: int

    def __post_init__(self) -> None:
        if self.order < 0:
            raise DomainError("order must be non-negative")
        self.coefficients = list(self.coefficients[: self.order + 1])

    def __getitem__(self, k: int) -> Any:
        return self.coefficients[k] if 0 <= k < len(self.coefficients) else None

    def truncate(self, order: int) -> "FormalSeries":
        return FormalSeries(self.coefficients[: order + 1], min(order, self.order))

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        order = min(self.order, other.order)
        out = []
        for k in range(order + 1):
            a, b = self[k], other[k]
            out.append(b if a is None else a if b is None else a + b)
        return FormalSeries(out, order)

    def scale_hbar(self, lam: Fraction) -> "FormalSeries":
        """Rescale ``hbar`` by ``lam``: the order-``k`` coefficient picks up ``lam^k``."""
        out = []
        for k, c in enumerate(self.coefficients):
            out.append(None if c is None else c.scale(Fraction(lam) ** k) if hasattr(c, "scale") else c * Fraction(lam) ** k)
        return FormalSeries(out, self.order)

    def product(self, other: "FormalSeries", mul) -> "FormalSeries":
        """Cauchy product with a bilinear ``mul``, truncated at the smaller order."""
        order = min(self.order, other.order)
        out: list[Any] = []
        for k in range(order + 1):
            acc = None
            for i in range(k + 1):
                a, b = self[i], other[k - i]
                if a is None or b is None:
                    continue
                t = mul(a, b)
                acc = t if acc is None else acc + t
            out.append(acc)
        return FormalSeries(out, order)


def poisson_from_json(data: Mapping[str, Any] | str, splitting: Splitting, order: int = 1) -> FormalSeries:
    """Bivector series from ``{coeffs: [{i, j, monomial, coeff, order?}]}``.

    ``i`` and ``j`` are 1-based coordinate indices, ``monomial`` the list of
    exponents of the coefficient, ``order`` the power of ``hbar`` (default 1).
    Each entry contributes ``coeff * x^monomial d_i ^ d_j``.
    """
    if isinstance(data, str):
        data = json.loads(data)
    T = Ambient("T", splitting)
    dim = splitting.dim
    coeffs = [GradedElement.zero(T) for _ in range(order + 1)]
    for entry in data.get("coeffs", []):
        i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
        if not (0 <= i < dim and 0 <= j < dim):
            raise DomainError(f"bivector index out of range: {entry}")
        exps = list(entry.get("monomial", [0] * dim))
        exps = exps + [0] * (dim - len(exps))
        k = int(entry.get("order", 1))
        if k < 1:
            raise DomainError("a Poisson series starts at order hbar^1")
        if k > order:
            continue
        c = Fraction(str(entry.get("coeff", 1)))
        coeffs[k] = coeffs[k] + bivector(T, exps, i, j, c)
    coeffs[0] = GradedElement.zero(T)
    return FormalSeries(coeffs, order)


def bivector(T: Ambient, exps: Sequence[int], i: int, j: int, coeff: Any = 1) -> GradedElement:
    """``coeff * x^exps d_i ^ d_j`` with ``d_i`` represented by the odd generator ``t_i``."""
    if i == j:
        return GradedElement.zero(T)
    x = GradedElement.monomial(T, exps, (), coeff)
    return x * GradedElement.t(T, i) * GradedElement.t(T, j)


def check_maurer_cartan(pi: FormalSeries, order: int | None = None) -> RelationReport:
    """``[pi, pi] = 0`` order by order (exact Schouten brackets)."""
    order = pi.order if order is None else min(order, pi.order)
    rep = RelationReport()
    for k in range(0, order + 1):
        acc = None
        for i in range(1, k):
            a, b = pi[i], pi[k - i]
            if a is None or b is None:
                continue
            t = schouten_bracket(a, b)
            acc = t if acc is None else acc + t
        bad = acc is not None and not acc.is_zero()
        worst = acc.to_text() if bad else ""
        resid = float(max((abs(Fraction(c)) for c in acc.terms.values()), default=0)) if bad else 0.0
        rep.entries.append(RelationEntry("maurer_cartan", k, "exact", resid, 0.0, not bad, 1, (), worst, "exact"))
    return rep


def is_bivector(x: GradedElement) -> bool:
    return all(m.odd_count == 2 for m in x.terms)


# ---------------------------------------------------------------------------
# graph sums


def _orders(k: int) -> list[tuple[int, ...]]:
    """Ordered tuples of positive integers summing to ``k``."""
    out = []
    for n in range(1, k + 1):
        for combo in itertools.product(range(1, k + 1), repeat=n):
            if sum(combo) == k:
                out.append(combo)
    return out


def _graph_terms(splitting: Splitting, n: int, real: int, target: str, book: WeightBook, special: int | None = None):
    if target == "K":
        graphs = enumerate_formality_graphs(n, real, "K", splitting, special)
    else:
        graphs = enumerate_formality_graphs(n, real, target, splitting)
    terms = []
    for g in graphs:
        for op in compile_graph(g, splitting, target):
            w = book.symbol(op.weight_problem())
            if not is_zero(w):
                terms.append((w, op))
    return terms


def taylor_sign(polyvector_degrees: Sequence[int], real: int) -> int:
    """``(-1)^{(sum |gamma_i| - 1) * real}`` with shifted polyvector degrees."""
    return -1 if ((sum(polyvector_degrees) - 1) * real) % 2 else 1


def formality_component(
    pis: Sequence[GradedElement],
    real_ambients: Sequence[Ambient],
    out: Ambient,
    book: WeightBook,
    special: int | None = None,
    name: str = "",
) -> MultilinearOperator:
    """``U_n(pi_1, ..., pi_n)`` as an operator on the real arguments (no ``1/n!``)."""
    splitting = out.splitting
    n = len(pis)
    target = out.kind
    terms = _graph_terms(splitting, n, len(real_ambients), target, book, special)
    sign = taylor_sign([1] * n, len(real_ambients))

    def kernel(key: tuple[Monomial, ...]) -> dict[Monomial, Any]:
        res: dict[Monomial, Any] = {}
        for combo in itertools.product(*(p.terms.items() for p in pis)):
            pmonos = tuple(m for m, _ in combo)
            pc = Fraction(sign)
            for _, c in combo:
                pc = pc * c
            for w, op in terms:
                for mono, v in op.apply_monomials(pmonos + key).items():
                    add = w * v * pc if isinstance(w, WeightPoly) else v * pc * w
                    res[mono] = res[mono] + add if mono in res else add
        return {m: c for m, c in res.items() if not is_zero(c)}

    return MultilinearOperator(tuple(real_ambients), out, kernel, None, name)


def order_component(
    pi: FormalSeries,
    k: int,
    real_ambients: Sequence[Ambient],
    out: Ambient,
    book: WeightBook,
    special: int | None = None,
) -> MultilinearOperator | None:
    """Order-``hbar^k`` part: ``sum 1/n! U_n(pi_{i_1}..pi_{i_n})`` over ordered ``i`` summing to ``k``."""
    acc = None
    for combo in _orders(k):
        pis = [pi[i] for i in combo]
        if any(p is None or p.is_zero() for p in pis):
            continue
        op = formality_component(pis, real_ambients, out, book, special, f"U{len(combo)}")
        op = op.scale(Fraction(1, math.factorial(len(combo))))
        acc = op if acc is None else acc + op
    return acc


# ---------------------------------------------------------------------------
# deformed structures


@dataclass
class DeformedStructure:
    """A base structure plus per-order corrections of its components.

    ``corrections[sig]`` is a list indexed by the ``hbar`` order (entry 0
    is unused); ``modes[sig]`` is ``"exact"`` when no Monte-Carlo weight
    enters and ``"mc"`` otherwise.
    """

    base: TaylorStructure
    corrections: dict[Any, list[MultilinearOperator | None]]
    order: int
    book: WeightBook
    modes: dict[Any, str] = field(default_factory=dict)

    def reduce(self) -> TaylorStructure:
        """The ``hbar = 0`` structure (the base itself)."""
        return self.base

    def correction(self, sig: Any, k: int) -> MultilinearOperator | None:
        lst = self.corrections.get(sig, [])
        return lst[k] if k < len(lst) else None

    def structure(self, order: int | None = None) -> TaylorStructure:
        """Components with ``hbar`` kept as a symbol, truncated at ``order``."""
        order = self.order if order is None else min(order, self.order)
        comps = dict(self.base.components)
        h = WeightPoly.symbol(HBAR)
        for sig, lst in self.corrections.items():
            for k in range(1, min(order, len(lst) - 1) + 1):
                op = lst[k]
                if op is None:
                    continue
                term = op.scale(_hpow(h, k))
                comps[sig] = comps[sig] + term if sig in comps else term
        return TaylorStructure(self.base.kind, comps, self.base.ambient, self.base.left, self.base.right, self.base.truncation, self.base.name + "_hbar")

    def weight_symbols(self) -> set[str]:
        out: set[str] = set()
        for sig, lst in self.corrections.items():
            for op in lst:
                if op is not None:
                    out |= _op_symbols(op)
        return out


def _hpow(h: WeightPoly, k: int) -> WeightPoly:
    out = WeightPoly.const(1)
    for _ in range(k):
        out = out * h
    return out


def _op_symbols(op: MultilinearOperator, probe: int = 2) -> set[str]:
    out: set[str] = set()
    keys = itertools.product(*(basis_elements(a, probe) for a in op.in_ambients))
    for args in keys:
        for c in op(*args).terms.values():
            if isinstance(c, WeightPoly):
                out |= c.symbols()
    return out


def _check_order(order: int) -> None:
    if order < 0:
        raise DomainError("order must be non-negative")
    if order > DEFAULT_ORDER_CAP:
        raise DomainError(f"orders above {DEFAULT_ORDER_CAP} are not supported")


def _order_mode(pi: FormalSeries, k: int, real: int, target: str, book: WeightBook, special: int | None = None) -> str:
    """``"mc"`` when some graph of the order-``k`` sum has a weight that is not known exactly."""
    splitting = pi[1].ambient.splitting
    for combo in _orders(k):
        if any(pi[i] is None or pi[i].is_zero() for i in combo):
            continue
        for w, _ in _graph_terms(splitting, len(combo), real, target, book, special):
            if isinstance(w, WeightPoly):
                return "mc"
    return "exact"


def star_product(pi: FormalSeries, target: str, order: int = 1, book: WeightBook | None = None) -> DeformedStructure:
    """Deformed product on ``A`` or ``B``: ``mu + sum_k hbar^k sum 1/n! U_n(pi..)`` with two real arguments."""
    _check_order(order)
    if target not in ("A", "B"):
        raise DomainError("star products live on A or B")
    book = book or WeightBook()
    for k in range(1, min(order, pi.order) + 1):
        if pi[k] is not None and not is_bivector(pi[k]):
            raise DomainError("Poisson coefficients must be bivectors")
    if not check_maurer_cartan(pi, order).passed:
        raise DomainError("the bivector series fails the Maurer-Cartan equation")
    splitting = pi[1].ambient.splitting if pi[1] is not None else None
    if splitting is None:
        raise DomainError("empty Poisson series")
    amb = Ambient(target, splitting)
    base = graded_algebra(amb)
    corr: list[MultilinearOperator | None] = [None]
    for k in range(1, order + 1):
        corr.append(order_component(pi, k, (amb, amb), amb, book))
    modes = {2: "mc" if any(_order_mode(pi, k, 2, target, book) == "mc" for k in range(1, order + 1)) else "exact"}
    return DeformedStructure(base, {2: corr}, order, book, modes)


def curvature_series(pi: FormalSeries, order: int = 1, book: WeightBook | None = None, target: str = "A") -> FormalSeries:
    """Curvature of the deformed algebra: the graph sums with no real argument."""
    _check_order(order)
    book = book or WeightBook()
    splitting = pi[1].ambient.splitting
    amb = Ambient(target, splitting)
    out: list[Any] = [GradedElement.zero(amb)]
    for k in range(1, order + 1):
        op = order_component(pi, k, (), amb, book)
        out.append(GradedElement.zero(amb) if op is None else op())
    return FormalSeries(out, order)


def deformed_bimodule(
    pi: FormalSeries,
    order: int = 1,
    book: WeightBook | None = None,
    max_arity: tuple[int, int] = (2, 2),
    base: TaylorStructure | None = None,
    reading: str = "mn",
) -> DeformedStructure:
    """``d_K^{m,n}`` plus the order-``hbar^k`` graph sums with marked point at position ``m``.

    ``base`` defaults to the graph bimodule with weights from ``book``.
    Components ``(m, 0)`` and ``(0, n)`` with ``m, n >= 2`` must vanish;
    this is asserted on a small basis.

    ``reading="nm"`` pairs the correction of signature ``(m, n)`` with the
    undeformed component of signature ``(n, m)``.  The two only share
    input types when ``m == n``, so any other signature raises :class:`DomainError` under that reading.
    """
    _check_order(order)
    if reading not in ("mn", "nm"):
        raise DomainError("reading must be 'mn' or 'nm'")
    book = book or WeightBook()
    splitting = pi[1].ambient.splitting
    A, K, B = bimodule_ambients(splitting)
    if base is None:
        base = graph_bimodule(splitting, max_arity, book)
    if reading == "nm":
        base = _transposed(base)
    corrections: dict[Any, list[MultilinearOperator | None]] = {}
    modes = {}
    for m in range(max_arity[0] + 1):
        for n in range(max_arity[1] + 1):
            if (m, n) == (0, 0):
                continue
            ins = (A,) * m + (K,) + (B,) * n
            lst: list[MultilinearOperator | None] = [None]
            for k in range(1, order + 1):
                lst.append(order_component(pi, k, ins, K, book, special=m))
            corrections[(m, n)] = lst
            modes[(m, n)] = "mc" if any(_order_mode(pi, k, m + 1 + n, "K", book, m) == "mc" for k in range(1, order + 1)) else "exact"
    ds = DeformedStructure(base, corrections, order, book, modes)
    bad = triviality_violations(ds)
    if bad:
        raise DomainError(f"triviality conditions fail for components {bad}")
    return ds


def _transposed(base: TaylorStructure) -> TaylorStructure:
    comps = {}
    for (m, n), op in base.components.items():
        if m != n:
            raise DomainError(f"component ({n}, {m}) cannot stand in for ({m}, {n}): input types differ")
        comps[(m, n)] = base.components[(n, m)] if (n, m) in base.components else op
    return TaylorStructure(base.kind, comps, base.ambient, base.left, base.right, base.truncation, base.name)


def triviality_violations(ds: DeformedStructure, probe: int = 2) -> list[tuple[int, int]]:
    """Components ``(m, 0)`` / ``(0, n)`` with ``m, n >= 2`` whose corrections do not vanish."""
    bad = []
    for sig, lst in ds.corrections.items():
        m, n = sig
        if not ((m >= 2 and n == 0) or (n >= 2 and m == 0)):
            continue
        for op in lst[1:]:
            if op is None:
                continue
            for args in itertools.product(*(basis_elements(a, probe) for a in op.in_ambients)):
                if not op(*args).is_zero():
                    bad.append(sig)
                    break
            if sig in bad:
                break
    return bad


# ---------------------------------------------------------------------------
# checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    mode: str
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"check": self.name, "pass": self.passed, "mode": self.mode, **self.detail}


def _size(m: Monomial) -> int:
    return m.poly_degree + m.odd_count


def grading_check(pi: FormalSeries, target: str, order: int = 1, probe: int = 2) -> CheckResult:
    """Every compiled graph of the star product preserves the natural grading (size of monomials).

    Exact and graph by graph: the output size equals the sum of the input
    sizes for every basis pair up to ``probe`` and every term of ``pi``.
    """
    splitting = pi[1].ambient.splitting
    amb = Ambient(target, splitting)
    book = WeightBook()
    failures = []
    graphs = 0
    for k in range(1, order + 1):
        for combo in _orders(k):
            pis = [pi[i] for i in combo]
            if any(p is None or p.is_zero() for p in pis):
                continue
            for _, op in _graph_terms(splitting, len(combo), 2, target, book):
                graphs += 1
                for pmonos in itertools.product(*(p.terms for p in pis)):
                    shift = sum(m.poly_degree - m.odd_count for m in pmonos)
                    for a in basis_elements(amb, probe):
                        for b in basis_elements(amb, probe):
                            (ma,), (mb,) = a.terms, b.terms
                            for mono in op.apply_monomials(pmonos + (ma, mb)):
                                if _size(mono) != _size(ma) + _size(mb) + shift:
                                    failures.append(op.weight_problem().key())
                # the grading is preserved when each bivector term has size shift zero
    quadratic = all(m.poly_degree == 2 for k in range(1, order + 1) if pi[k] is not None for m in pi[k].terms)
    return CheckResult(f"grading_{target}", not failures and quadratic, "exact", {"graphs": graphs, "failures": sorted(set(failures)), "quadratic": quadratic})


def poisson_bracket(pi1: GradedElement, f: GradedElement, g: GradedElement) -> GradedElement:
    """``{f, g} = sum pi^{ij} d_i f d_j g`` with ``pi = sum_{i<j} pi^{ij} t_i t_j``."""
    out = GradedElement.zero(f.ambient)
    for mono, c in pi1.terms.items():
        i, j = mono.odd
        coef = GradedElement({Monomial(mono.exps, ()): c}, f.ambient, check=False)
        out = out + coef * (f.derivative(i) * g.derivative(j) - f.derivative(j) * g.derivative(i))
    return out


def bracket_check(pi: FormalSeries, book: WeightBook | None = None, probe: int = 2) -> CheckResult:
    """Antisymmetric part of the order-one product on ``B`` against the Poisson bracket.

    ``B_1(f, g) - B_1(g, f) = 2 w {f, g}`` exactly, with ``w`` the weight of
    the wedge graph; reports the normalization and its estimate.
    """
    book = book or WeightBook()
    ds = star_product(pi, "B", 1, book)
    B1 = ds.correction(2, 1)
    amb = ds.base.ambient
    ratios = set()
    failures = []
    for f in basis_elements(amb, probe):
        for g in basis_elements(amb, probe):
            anti = B1(f, g) - B1(g, f)
            pb = poisson_bracket(pi[1], f, g)
            if pb.is_zero():
                if not anti.is_zero():
                    failures.append(f"{f.to_text()}, {g.to_text()}")
                continue
            for mono, c in pb.terms.items():
                ratios.add(_ratio(anti.terms.get(mono, 0), c))
            for mono in anti.terms:
                if mono not in pb.terms:
                    failures.append(f"{f.to_text()}, {g.to_text()}")
    ok = not failures and len(ratios) == 1
    detail: dict = {"failures": failures}
    if len(ratios) == 1:
        r = next(iter(ratios))
        detail["normalization"] = WeightPoly.lift(r).to_text()
        symbols = WeightPoly.lift(r).symbols()
        if symbols:
            val, err = WeightPoly.lift(r).evaluate(book.values(symbols))
            detail["normalization_estimate"] = {"value": val / 2, "stderr": err / 2, "meaning": "weight of the wedge graph"}
    return CheckResult("bracket", ok, "exact", detail)


def _ratio(a: Any, b: Any) -> Any:
    return WeightPoly.lift(a) * WeightPoly.const(1 / Fraction(b))


def associativity_check(pi: FormalSeries, target: str = "B", order: int = 1, book: WeightBook | None = None, probe: int = 1, multiple: float = 3.0) -> CheckResult:
    """``(f*g)*h - f*(g*h)`` per order up to ``order``; exact when the defect vanishes identically."""
    book = book or WeightBook()
    ds = star_product(pi, target, order, book)
    mu = ds.structure(order).components[2]
    amb = ds.base.ambient
    col = ResidualCollector()
    elems = basis_elements(amb, probe)
    per_order = {}
    for k in range(0, order + 1):
        col = ResidualCollector()
        for f, g, h in itertools.product(elems, repeat=3):
            d = mu(mu(f, g), h) - mu(f, mu(g, h))
            col.add(element_hbar_part(d, k), f"{f.to_text()}, {g.to_text()}, {h.to_text()}")
        per_order[k] = col.entry("associativity", k, book, multiple)
    ok = all(e.passed for e in per_order.values())
    return CheckResult(
        f"associativity_{target}",
        ok,
        "exact" if all(e.mode == "exact" for e in per_order.values()) else "numeric",
        {"orders": {str(k): e.to_json() | {"tolerance_source": e.tolerance_source} for k, e in per_order.items()}},
    )


def curvature_check(pi: FormalSeries, order: int = 1, book: WeightBook | None = None) -> CheckResult:
    F = curvature_series(pi, order, book)
    vals = {str(k): F[k].to_text() for k in range(1, order + 1)}
    return CheckResult("curvature", all(F[k].is_zero() for k in range(1, order + 1)), "exact", {"coefficients": vals})


def curvature_defect(
    pi: FormalSeries,
    b1: GradedElement,
    b2: GradedElement,
    k: GradedElement | None = None,
    order: int = 1,
    book: WeightBook | None = None,
    dK: TaylorStructure | None = None,
) -> tuple[GradedElement, GradedElement]:
    """Both sides of ``(k.b1).b2 - k.(b1 * b2) = -d_K^{1,2}(F | k | b1 | b2)`` at order ``hbar^order``.

    The left side uses the deformed product and the undeformed right action
    (multiplication followed by restriction); the right side pairs the
    curvature ``F`` with the two arguments through ``d_K^{1,2}``.  The sign
    comes from the bimodule relation of signature ``(0, 2)`` with a
    curvature insertion in front.
    """
    book = book or WeightBook()
    splitting = b1.ambient.splitting
    A, K, B = bimodule_ambients(splitting)
    k = k if k is not None else GradedElement.one(K)
    if dK is None:
        dK = graph_bimodule(splitting, (1, 2), book, components=[(1, 0), (0, 1), (1, 1), (1, 2)])
    ds = star_product(pi, "B", order, book)
    mu = ds.structure(order).components[2]
    act = dK.component((0, 1))
    lhs = element_hbar_part(act(act(k, b1), b2) - act(k, mu(b1, b2)), order)
    F = curvature_series(pi, order, book)
    d12 = dK.component((1, 2))
    rhs = -d12(F[order], k, b1, b2)
    return lhs, rhs


def concentration_check(ds: DeformedStructure, max_n: int = 2, probe: int = 2, multiple: float = 3.0) -> CheckResult:
    """Order-one part of ``L_{A_hbar}`` on generators lies in bidegree ``(1, -1)``.

    A component ``d^{1,n}(t_i | k | b_1..b_n)`` with output ``c`` has bar
    length ``n`` and weight ``size(c) - size(k) - sum size(b)``; every
    coefficient outside ``(1, -1)`` must vanish within tolerance.
    """
    A, K, B = bimodule_ambients(ds.base.ambient.splitting)
    book = ds.book
    col = ResidualCollector()
    inside = 0
    gens = [GradedElement.t(A, i) for i in A.odd_indices]
    bK = basis_elements(K, probe)
    bB = [b for b in basis_elements(B, probe) if any(_size(m) for m in b.terms)]
    for n in range(1, max_n + 1):
        op = ds.correction((1, n), 1)
        if op is None:
            continue
        for a in gens:
            for kk in bK:
                for bs in itertools.product(bB, repeat=n):
                    val = op(a, kk, *bs)
                    size_in = sum(_size(m) for x in (kk, *bs) for m in x.terms)
                    for mono, c in val.terms.items():
                        w = _size(mono) - size_in
                        if (n, w) == (1, -1):
                            inside += 1
                            continue
                        col.add(GradedElement({mono: c}, K, check=False), f"n={n} {a.to_text()}|{kk.to_text()}|{'|'.join(b.to_text() for b in bs)}")
    e = col.entry("concentration", (1, max_n), book, multiple)
    return CheckResult("concentration", e.passed, e.mode, {"residual": e.residual, "tolerance": e.tolerance, "tolerance_source": e.tolerance_source, "in_bidegree_terms": inside})


def check_deformed_relations(ds: DeformedStructure, dA: DeformedStructure, dB: DeformedStructure, order: int = 1, max_arity: tuple[int, int] = (2, 2), basis_truncation: int = 1, multiple: float = 3.0) -> RelationReport:
    """Bimodule relations of the deformed structures, coefficient of ``hbar^order``."""
    K = ds.structure(order)
    cat = Category(dA.structure(order), dB.structure(order), K)
    A, Kam, B = bimodule_ambients(ds.base.ambient.splitting)
    bA, bK, bB = (basis_elements(x, basis_truncation) for x in (A, Kam, B))
    rep = RelationReport()
    for m in range(max_arity[0] + 1):
        for n in range(max_arity[1] + 1):
            col = ResidualCollector()
            for a_s in itertools.product(bA, repeat=m):
                for k in bK:
                    for b_s in itertools.product(bB, repeat=n):
                        xs = [(a, "A") for a in a_s] + [(k, "K")] + [(b, "B") for b in b_s]
                        val = element_hbar_part(relation_value(cat, xs, "K"), order)
                        col.add(val, " | ".join(x.to_text() for x, _ in xs))
            rep.entries.append(col.entry("bimodule", (m, n), ds.book, multiple))
    return rep


def check_deformed_koszul(pi: FormalSeries, order: int = 1, book: WeightBook | None = None, max_n: int = 2, multiple: float = 3.0) -> dict:
    """Grading, bracket, curvature, associativity and concentration checks at order ``order``.

    Order zero reduces to the undeformed duality (see :mod:`branecalc.koszul`).
    """
    book = book or WeightBook()
    results = [
        grading_check(pi, "B", order),
        grading_check(pi, "A", order),
        bracket_check(pi, book),
        curvature_check(pi, order, book),
        associativity_check(pi, "B", order, book, multiple=multiple),
        associativity_check(pi, "A", order, book, multiple=multiple),
    ]
    if order >= 1:
        ds = deformed_bimodule(pi, 1, book, (1, max_n), base=None)
        results.append(concentration_check(ds, max_n, multiple=multiple))
    return {"order": order, "pass": all(r.passed for r in results), "checks": [r.to_json() for r in results]}


# ---------------------------------------------------------------------------
# deformed Koszul duality over k[hbar]/hbar^2


def _split_order_one(c: Any, values: Mapping[str, Fraction]) -> tuple[Fraction, Fraction]:
    """``(c_0, c_1)`` with ``c = c_0 + hbar c_1`` after substituting the weight ``values``."""
    out = []
    for k in (0, 1):
        part = hbar_part(c, k)
        if isinstance(part, WeightPoly):
            part = part.substitute(values)
            if not part.is_constant():
                raise DomainError(f"unsubstituted weights {sorted(part.symbols())}")
            part = part.constant()
        out.append(Fraction(part))
    return out[0], out[1]


def _double_rows(rows: Sequence[Mapping[int, Any]], n_src: int, values: Mapping[str, Fraction]) -> list[dict[int, Fraction]]:
    """Rows of ``d_0 + hbar d_1`` acting on ``V + hbar V`` (columns ``j`` and ``n_src + j``)."""
    out = []
    for row in rows:
        top: dict[int, Fraction] = {}
        bottom: dict[int, Fraction] = {}
        for j, c in row.items():
            c0, c1 = _split_order_one(c, values)
            if c0:
                top[j] = c0
                bottom[n_src + j] = c0
            if c1:
                bottom[j] = c1
        out.extend(r for r in (top, bottom) if r)
    return out


def _rational(v: float) -> Fraction:
    return Fraction(v).limit_denominator(10**6)


def deformed_keller(
    pi: FormalSeries,
    book: WeightBook | None = None,
    p_max: int = 2,
    multiple: float = 3.0,
) -> dict:
    """``L_{A_hbar}`` against ``End_{-B_hbar}(K_hbar)`` at first order in ``hbar``.

    Over ``k[hbar]/hbar^2`` a map between free modules is an isomorphism
    exactly when its reduction at ``hbar = 0`` is one.  So the check has three parts:
    the deformed End cohomology at ``(p, -p)`` is free (twice the
    undeformed dimension over ``k``), off-diagonal bidegrees stay acyclic,
    and the order-one cocycle condition of each ``L_{A_hbar}(a)`` holds
    within the Monte-Carlo tolerance.  Weight symbols in the differential
    are replaced by rational approximations of their estimates (any
    nonzero value gives the same ranks, by rescaling ``hbar``).
    """
    from .koszul import EndComplex, _source_basis, undeformed_bimodule

    book = book or WeightBook()
    splitting = pi[1].ambient.splitting
    base, _ = undeformed_bimodule(splitting, max(p_max + 1, 2))
    # graph weights of the base are exact; corrections use the book
    dsK = deformed_bimodule(pi, 1, book, (p_max, p_max), base=_restrict(base, p_max))
    dA = star_product(pi, "A", 1, book)
    dB = star_product(pi, "B", 1, book)
    E0 = EndComplex(dA.reduce(), dB.reduce(), dsK.reduce(), "right")
    E1 = EndComplex(dA.structure(1), dB.structure(1), dsK.structure(1), "right")
    act = derived_left_action(dsK.structure(1))
    rows_out = []
    symbols: set[str] = set()
    for p in range(0, p_max + 1):
        for l in range(0, p + 1):
            for t in E1.degrees(l, -p):
                for r in E1.q1_matrix(l, -p, t):
                    for c in r.values():
                        if isinstance(c, WeightPoly):
                            symbols |= {s for s in c.symbols() if s != HBAR}
    estimates = book.values(symbols) if symbols else {}
    values = {s: _rational(v) for s, (v, _) in estimates.items()}
    ok = True
    for p in range(0, p_max + 1):
        w = -p
        h0 = {l: E0.cohomology(l, w)["betti"] for l in range(0, p + 1)}
        h1 = {}
        for l in range(0, p + 1):
            betti = 0
            for t in E1.degrees(l, w):
                n = len(E1.basis(l, w, t))
                r_out = _rank(_double_rows(E1.q1_matrix(l, w, t), n, values))
                n_prev = len(E1.basis(l - 1, w, t - 1)) if l >= 1 else 0
                r_in = _rank(_double_rows(E1.q1_matrix(l - 1, w, t - 1), n_prev, values)) if l >= 1 else 0
                betti += 2 * n - r_in - r_out
            h1[l] = betti
        flat = all(h1[l] == 2 * h0[l] for l in h1)
        off = [l for l in range(0, p) if h1[l]]
        # cocycle residual of the order-one part of L(a)
        col = ResidualCollector()
        if p >= 1:
            for a in _source_basis(dA.base.ambient, p):
                phi = act(a)
                q = E1.end.Q1(phi)
                for t in E1.degrees(p + 1, w):
                    basis = E1.basis(p + 1, w, t)
                    for i, c in E1.vector(q, basis, p + 1).items():
                        part = hbar_part(c, 1)
                        col.add(GradedElement({basis[i].output: part}, E1.K, check=False), a.to_text())
        entry = col.entry("cocycle", p, book, multiple)
        row_ok = flat and not off and entry.passed
        ok = ok and row_ok
        rows_out.append(
            {
                "p": p,
                "q": w,
                "undeformed_dim": h0[p],
                "deformed_dim_over_k": h1[p],
                "free": flat,
                "off_diagonal": off,
                "cocycle_residual": entry.residual,
                "tolerance": entry.tolerance,
                "tolerance_source": entry.tolerance_source,
                "iso": row_ok,
            }
        )
    return {"pass": ok, "rows": rows_out, "weights": {k: float(v) for k, v in values.items()}}


def _rank(rows: Sequence[Mapping[int, Fraction]]) -> int:
    from .hochschild import rank

    return rank(rows)


def _restrict(base: TaylorStructure, p_max: int) -> TaylorStructure:
    comps = {sig: op for sig, op in base.components.items() if sig[0] <= p_max and sig[1] <= p_max}
    return TaylorStructure(base.kind, comps, base.ambient, base.left, base.right, (p_max, p_max), base.name)

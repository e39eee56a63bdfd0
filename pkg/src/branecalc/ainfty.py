"""A-infinity structures as families of Taylor components.

Components are stored desuspended: an arity-``N`` component acts on
unshifted elements and has degree ``2 - N`` (algebras) or ``1 - m - n``
(bimodules, counted as a change in odd degree).  All quadratic relations
are instances of one rule: inserting an arity-``l`` component at position
``p`` (1-based) of ``x_1, ..., x_N`` carries the sign

    (-1) ** (l * (|x_1| + ... + |x_{p-1}|) + p * (l + 1))

with ``|x|`` the unshifted degree.  For a bimodule ``K`` over ``A`` and ``B``
the same rule runs over composable chains ``a_1..a_m | k | b_1..b_n``.

Comodule endomorphisms (the End algebras and the derived actions) use the
suspended convention instead, evaluated on representatives: an element of
``X[1]`` is written as the element of ``X`` it comes from and carries
degree ``|x| - 1``.  :func:`suspend_sign` converts between the two.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

from .graded_core import (
    Ambient,
    DomainError,
    GradedElement,
    Monomial,
    Splitting,
    Tensor,
    WeightPoly,
    basis_elements,
    is_zero,
)

Coeff = Any
Kernel = Callable[[tuple[Monomial, ...]], Mapping[Monomial, Coeff]]


def _sgn(e: int) -> int:
    return -1 if e % 2 else 1


def _mono_degree(m: Monomial, amb: Ambient) -> int:
    return len(m.odd) + amb.degree_shift


# ---------------------------------------------------------------------------
# multilinear operators


class MultilinearOperator:
    """Multilinear map between ambients, defined by its values on monomials.

    ``kernel`` maps a tuple of input monomials to ``{monomial: coeff}`` in
    the output ambient; values are cached.  ``degree`` is the change in
    (unshifted) degree from inputs to output, when known.
    """

    def __init__(
        self,
        in_ambients: Sequence[Ambient],
        out_ambient: Ambient,
        kernel: Kernel,
        degree: int | None = None,
        name: str = "",
    ):
        self.in_ambients = tuple(in_ambients)
        self.out_ambient = out_ambient
        self._kernel = kernel
        self.degree = degree
        self.name = name
        self._cache: dict[tuple[Monomial, ...], dict[Monomial, Coeff]] = {}

    @property
    def arity(self) -> int:
        return len(self.in_ambients)

    def __repr__(self) -> str:
        return f"MultilinearOperator({self.name or '?'}, arity={self.arity}, degree={self.degree})"

    def on_monomials(self, key: tuple[Monomial, ...]) -> dict[Monomial, Coeff]:
        hit = self._cache.get(key)
        if hit is None:
            raw = self._kernel(key)
            hit = {m: c for m, c in raw.items() if not is_zero(c)}
            self._cache[key] = hit
        return hit

    def __call__(self, *args: GradedElement) -> GradedElement:
        if len(args) != self.arity:
            raise DomainError(f"{self.name or 'operator'} takes {self.arity} arguments, got {len(args)}")
        for a, amb in zip(args, self.in_ambients):
            if a.ambient != amb:
                raise DomainError(f"argument in {a.ambient}, expected {amb}")
        out: dict[Monomial, Coeff] = {}
        for combo in itertools.product(*(a.terms.items() for a in args)):
            key = tuple(m for m, _ in combo)
            vals = self.on_monomials(key)
            if not vals:
                continue
            c: Coeff = Fraction(1)
            for _, v in combo:
                c = c * v
            for mono, val in vals.items():
                add = val * c
                out[mono] = out[mono] + add if mono in out else add
        return GradedElement(out, self.out_ambient, check=False)

    # algebra of operators
    def __add__(self, other: "MultilinearOperator") -> "MultilinearOperator":
        if other.in_ambients != self.in_ambients or other.out_ambient != self.out_ambient:
            raise DomainError("operators with different shapes")
        a, b = self, other

        def kern(key):
            out = dict(a.on_monomials(key))
            for m, c in b.on_monomials(key).items():
                out[m] = out[m] + c if m in out else c
            return out

        deg = self.degree if self.degree == other.degree else None
        return MultilinearOperator(self.in_ambients, self.out_ambient, kern, deg, f"({a.name}+{b.name})")

    def scale(self, c: Coeff) -> "MultilinearOperator":
        src = self

        def kern(key):
            return {m: v * c for m, v in src.on_monomials(key).items()}

        return MultilinearOperator(self.in_ambients, self.out_ambient, kern, self.degree, f"{c}*{self.name}")

    def map_coeffs(self, f: Callable[[Coeff], Coeff]) -> "MultilinearOperator":
        src = self

        def kern(key):
            return {m: f(v) for m, v in src.on_monomials(key).items()}

        return MultilinearOperator(self.in_ambients, self.out_ambient, kern, self.degree, self.name)

    def is_numeric(self, max_poly: int = 2) -> bool:
        for key in basis_keys(self.in_ambients, max_poly):
            for v in self.on_monomials(key).values():
                if isinstance(v, WeightPoly) and not v.is_constant():
                    return True
        return False

    def agrees_with(self, other: "MultilinearOperator", max_poly: int) -> bool:
        """Extensional equality on the monomial basis up to ``max_poly``."""
        if other.in_ambients != self.in_ambients or other.out_ambient != self.out_ambient:
            return False
        for key in basis_keys(self.in_ambients, max_poly):
            a = self.on_monomials(key)
            b = other.on_monomials(key)
            for m in set(a) | set(b):
                if not is_zero(a.get(m, 0) - b.get(m, 0)):
                    return False
        return True

    def check_degree(self, max_poly: int) -> bool:
        if self.degree is None:
            return True
        for key in basis_keys(self.in_ambients, max_poly):
            din = sum(_mono_degree(m, a) for m, a in zip(key, self.in_ambients))
            for m in self.on_monomials(key):
                if _mono_degree(m, self.out_ambient) - din != self.degree:
                    return False
        return True

    # constructors
    @classmethod
    def zero(cls, in_ambients: Sequence[Ambient], out_ambient: Ambient, degree: int | None = None) -> "MultilinearOperator":
        return cls(in_ambients, out_ambient, lambda key: {}, degree, "0")

    @classmethod
    def constant(cls, element: GradedElement, name: str = "const") -> "MultilinearOperator":
        terms = dict(element.terms)
        return cls((), element.ambient, lambda key: terms, None, name)

    @classmethod
    def product(cls, ambients: Sequence[Ambient], out_ambient: Ambient, name: str = "mu") -> "MultilinearOperator":
        """Ordered product of the inputs followed by restriction to ``out_ambient``."""

        def kern(key):
            return Tensor({key: Fraction(1)}, tuple(ambients)).contract_product(out_ambient).terms

        return cls(ambients, out_ambient, kern, 0, name)

    @classmethod
    def from_function(
        cls,
        in_ambients: Sequence[Ambient],
        out_ambient: Ambient,
        fn: Callable[..., GradedElement],
        degree: int | None = None,
        name: str = "",
    ) -> "MultilinearOperator":
        """Wrap a function of :class:`GradedElement` arguments."""
        ins = tuple(in_ambients)

        def kern(key):
            args = [GradedElement({m: Fraction(1)}, a, check=False) for m, a in zip(key, ins)]
            return fn(*args).terms

        return cls(ins, out_ambient, kern, degree, name)

    @classmethod
    def from_compiled(
        cls,
        terms: Sequence[tuple[Coeff, Any]],
        in_ambients: Sequence[Ambient],
        out_ambient: Ambient,
        degree: int | None = None,
        name: str = "",
    ) -> "MultilinearOperator":
        """Weighted sum of compiled graph operators ``[(weight, op), ...]``."""
        items = [(w, op) for w, op in terms if not is_zero(w)]

        def kern(key):
            out: dict[Monomial, Coeff] = {}
            for w, op in items:
                for m, v in op.apply_monomials(key).items():
                    add = v * w if not isinstance(w, WeightPoly) else w * v
                    out[m] = out[m] + add if m in out else add
            return out

        return cls(in_ambients, out_ambient, kern, degree, name)


def basis_keys(ambients: Sequence[Ambient], max_poly: int | Sequence[int]) -> Iterable[tuple[Monomial, ...]]:
    if isinstance(max_poly, int):
        polys = [max_poly] * len(ambients)
    else:
        polys = list(max_poly)
    bases = [[next(iter(e.terms)) for e in basis_elements(a, p)] for a, p in zip(ambients, polys)]
    return itertools.product(*bases)


# ---------------------------------------------------------------------------
# structures


@dataclass
class TaylorStructure:
    """Taylor components of an algebra, a bimodule or a morphism.

    ``components`` maps ``k`` (algebra: arity; morphism: arity) or ``(m, n)``
    (bimodule) to desuspended operators; ``ambient`` is the algebra (or the
    module ``K``); ``left``/``right`` hold ``A`` and ``B`` for bimodules.
    """

    kind: str
    components: dict
    ambient: Ambient
    left: Ambient | None = None
    right: Ambient | None = None
    truncation: Any = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("algebra", "bimodule", "morphism"):
            raise DomainError(f"unknown structure kind {self.kind!r}")
        if self.kind == "bimodule" and (self.left is None or self.right is None):
            raise DomainError("bimodule structures need left and right algebras")

    def component(self, sig) -> MultilinearOperator | None:
        return self.components.get(sig)

    def shape_of(self, sig) -> tuple[str, ...]:
        if self.kind == "bimodule":
            m, n = sig
            return ("A",) * m + ("K",) + ("B",) * n
        return (self.ambient.kind,) * sig

    @property
    def curvature_element(self) -> GradedElement:
        op = self.components.get(0)
        if op is None:
            return GradedElement.zero(self.ambient)
        return op()

    def is_numeric(self, max_poly: int = 2) -> bool:
        return any(op.is_numeric(max_poly) for op in self.components.values())

    def map_coeffs(self, f: Callable[[Coeff], Coeff]) -> "TaylorStructure":
        comps = {k: op.map_coeffs(f) for k, op in self.components.items()}
        return TaylorStructure(self.kind, comps, self.ambient, self.left, self.right, self.truncation, self.name)


def graded_algebra(ambient: Ambient) -> TaylorStructure:
    """The (graded-commutative) product as the only component."""
    mu = MultilinearOperator.product((ambient, ambient), ambient, f"mu_{ambient.kind}")
    return TaylorStructure("algebra", {2: mu}, ambient, truncation=2, name=f"{ambient.kind}")


def algebra_from_components(ambient: Ambient, components: Mapping[int, MultilinearOperator], name: str = "") -> TaylorStructure:
    return TaylorStructure("algebra", dict(components), ambient, truncation=max(components, default=0), name=name)


def curvature(d: TaylorStructure) -> GradedElement:
    """The arity-zero component evaluated on the empty input (zero if absent)."""
    if d.kind != "algebra":
        raise DomainError("curvature is defined for algebra structures")
    return d.curvature_element


# ---------------------------------------------------------------------------
# the bimodule built from graphs


def bimodule_ambients(splitting: Splitting) -> tuple[Ambient, Ambient, Ambient]:
    return Ambient("A", splitting), Ambient("K", splitting), Ambient("B", splitting)


def graph_bimodule(
    splitting: Splitting,
    max_arity: tuple[int, int] = (2, 2),
    weights: Any = None,
    components: Iterable[tuple[int, int]] | None = None,
) -> TaylorStructure:
    """Bimodule components as sums over admissible graphs.

    ``weights`` is a :class:`~branecalc.geometry.WeightBook` (or anything
    with ``symbol(problem)``); coefficients become weight symbols unless
    the weight is exact.
    """
    from .geometry import WeightBook
    from .graphs import compile_graph, enumerate_bimodule_graphs

    book = weights if weights is not None else WeightBook()
    A, K, B = bimodule_ambients(splitting)
    sigs = (
        list(components)
        if components is not None
        else [(m, n) for m in range(max_arity[0] + 1) for n in range(max_arity[1] + 1) if (m, n) != (0, 0)]
    )
    comps = {}
    for m, n in sigs:
        terms = []
        for g in enumerate_bimodule_graphs(m, n, splitting):
            for op in compile_graph(g, splitting, "bimodule"):
                terms.append((book.symbol(op.weight_problem()), op))
        ins = (A,) * m + (K,) + (B,) * n
        comps[(m, n)] = MultilinearOperator.from_compiled(terms, ins, K, 1 - m - n, f"dK^{m},{n}")
    return TaylorStructure("bimodule", comps, K, A, B, max_arity, "dK")


def pairing_bimodule(splitting: Splitting) -> TaylorStructure:
    """Products ``d^{1,0}``, ``d^{0,1}`` and the pairing ``d^{1,1}`` only (unit weight)."""
    from .graphs import AdmissibleGraph, compile_graph

    A, K, B = bimodule_ambients(splitting)
    comps = {
        (1, 0): MultilinearOperator.product((A, K), K, "dK^1,0"),
        (0, 1): MultilinearOperator.product((K, B), K, "dK^0,1"),
    }
    terms = []
    for g in (AdmissibleGraph(0, 3, 1, ((0, 2),)), AdmissibleGraph(0, 3, 1, ((2, 0),))):
        for op in compile_graph(g, splitting, "bimodule"):
            terms.append((Fraction(1), op))
    comps[(1, 1)] = MultilinearOperator.from_compiled(terms, (A, K, B), K, -1, "dK^1,1")
    return TaylorStructure("bimodule", comps, K, A, B, (1, 1), "pairing")


def pairing_values(dK: TaylorStructure, probe: int = 1) -> dict:
    """``d^{1,1}(v | k | u)`` on every pair of generators against the canonical pairing.

    Generators of ``A`` are ``x_i`` and ``t_i`` for its even and odd
    indices, likewise for ``B``.  The pairs expected to pair to one are
    ``(t_i, x_i)`` with ``i`` in the ``upv`` block and ``(x_i, t_i)`` with
    ``i`` in ``uvperp``; every other pair must give zero.  The expected
    output is ``(-1)^{|k||u|} <v, u> k`` (moving ``u`` next to ``v``), checked
    for every ``k`` in the basis of ``K`` up to polynomial degree ``probe``.
    """
    A, K, B = dK.left, dK.ambient, dK.right
    sp = A.splitting
    op = dK.component((1, 1))
    if op is None:
        raise DomainError("the bimodule has no (1, 1) component")
    gens_a = [("x", i, GradedElement.x(A, i)) for i in A.even_indices] + [("t", i, GradedElement.t(A, i)) for i in A.odd_indices]
    gens_b = [("x", i, GradedElement.x(B, i)) for i in B.even_indices] + [("t", i, GradedElement.t(B, i)) for i in B.odd_indices]
    upv, uvperp = set(sp.block("upv")), set(sp.block("uvperp"))
    rows, failures = [], []
    for va, i, v in gens_a:
        for vb, j, u in gens_b:
            paired = i == j and ((va, vb) == ("t", "x") and i in upv or (va, vb) == ("x", "t") and i in uvperp)
            expected = 1 if paired else 0
            values = set()
            for k in basis_elements(K, probe):
                out = op(v, k, u)
                sign = -1 if (k.degree * u.degree) % 2 else 1
                target = k.scale(Fraction(sign * expected))
                if not (out - target).is_zero():
                    failures.append(f"{v.to_text()} | {k.to_text()} | {u.to_text()}")
                # k is a basis monomial with coefficient one
                values.add(sum(out.terms.values(), Fraction(0)) * sign if len(out.terms) <= 1 else None)
            if paired or values - {0}:
                rows.append({"v": v.to_text(), "u": u.to_text(), "expected": expected, "values": sorted(str(x) for x in values)})
    return {"pairs": rows, "failures": failures, "pass": not failures}


# ---------------------------------------------------------------------------
# relation evaluation


Labeled = tuple[GradedElement, str]


@dataclass
class Category:
    """Lookup of components by input shape for the two-object category."""

    A: TaylorStructure | None
    B: TaylorStructure | None
    K: TaylorStructure | None

    def op(self, shape: tuple[str, ...]) -> MultilinearOperator | None:
        if "K" in shape:
            if self.K is None or shape.count("K") != 1:
                return None
            i = shape.index("K")
            if any(s != "A" for s in shape[:i]) or any(s != "B" for s in shape[i + 1 :]):
                return None
            return self.K.component((i, len(shape) - i - 1))
        if not shape:
            return None
        lab = shape[0]
        if any(s != lab for s in shape):
            return None
        st = self.A if lab == "A" else self.B
        return None if st is None else st.component(len(shape))

    def curvature_op(self, lab: str) -> MultilinearOperator | None:
        st = self.A if lab == "A" else self.B
        return None if st is None else st.component(0)

    def ambient(self, lab: str) -> Ambient:
        st = {"A": self.A, "B": self.B, "K": self.K}[lab]
        return st.ambient


def _out_label(shape: Sequence[str], fallback: str) -> str:
    if "K" in shape:
        return "K"
    return shape[0] if shape else fallback


def relation_value(cat: Category, xs: Sequence[Labeled], out_label: str) -> GradedElement:
    """Sum over all insertions of one component into another (desuspended signs)."""
    N = len(xs)
    labels = tuple(l for _, l in xs)
    degs = [x.degree for x, _ in xs]
    total = GradedElement.zero(cat.ambient(out_label))
    prefix = [0]
    for d in degs:
        prefix.append(prefix[-1] + d)
    for p in range(1, N + 2):
        for l in range(0, N - p + 2):
            seg = labels[p - 1 : p - 1 + l]
            if l == 0:
                # curvature insertions: keep those giving a composable chain
                cands = ("A", "B")
                for lab in cands:
                    op = cat.curvature_op(lab)
                    if op is None:
                        continue
                    y = op()
                    if y.is_zero():
                        continue
                    new_shape = labels[: p - 1] + (lab,) + labels[p - 1 :]
                    outer = cat.op(new_shape)
                    if outer is None:
                        continue
                    args = [x for x, _ in xs[: p - 1]] + [y] + [x for x, _ in xs[p - 1 :]]
                    sign = _sgn(p)
                    val = outer(*args)
                    total = total + (val if sign > 0 else -val)
                continue
            inner = cat.op(seg)
            if inner is None:
                continue
            y = inner(*[x for x, _ in xs[p - 1 : p - 1 + l]])
            if y.is_zero():
                continue
            ylab = _out_label(seg, out_label)
            new_shape = labels[: p - 1] + (ylab,) + labels[p - 1 + l :]
            outer = cat.op(new_shape)
            if outer is None:
                continue
            args = [x for x, _ in xs[: p - 1]] + [y] + [x for x, _ in xs[p - 1 + l :]]
            sign = _sgn(l * prefix[p - 1] + p * (l + 1))
            val = outer(*args)
            total = total + (val if sign > 0 else -val)
    return total


# ---------------------------------------------------------------------------
# reports


@dataclass
class RelationEntry:
    relation: str
    arity: Any
    mode: str
    residual: float
    tolerance: float
    passed: bool
    cases: int = 0
    missing: tuple = ()
    worst: str = ""
    tolerance_source: str = ""

    def to_json(self) -> dict:
        ar = list(self.arity) if isinstance(self.arity, tuple) else self.arity
        return {
            "relation": self.relation,
            "arity": ar,
            "mode": self.mode,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


@dataclass
class RelationReport:
    entries: list[RelationEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def exact(self) -> bool:
        return all(e.mode == "exact" for e in self.entries)

    def worst(self) -> RelationEntry | None:
        if not self.entries:
            return None

        def excess(e):
            if e.mode == "exact":
                return 0.0 if e.passed else float("inf")
            return e.residual - e.tolerance

        return max(self.entries, key=excess)

    def to_json(self) -> list[dict]:
        return [e.to_json() for e in self.entries]


class ResidualCollector:
    """Accumulates residual coefficients and classifies them exact/numeric."""

    def __init__(self):
        self.exact_bad: list[str] = []
        self.exact_max = Fraction(0)
        self.polys: dict[WeightPoly, str] = {}
        self.cases = 0

    def add(self, value: GradedElement, label: str) -> None:
        self.cases += 1
        for m, c in value.terms.items():
            if isinstance(c, WeightPoly) and not c.is_constant():
                key = c.normalized()
                if key not in self.polys and (-key) not in self.polys:
                    self.polys[key] = label
            else:
                cc = c.constant() if isinstance(c, WeightPoly) else c
                if cc != 0:
                    self.exact_bad.append(label)
                    self.exact_max = max(self.exact_max, abs(Fraction(cc)))

    def entry(self, relation: str, arity, weights: Any = None, multiple: float = 3.0, missing=()) -> RelationEntry:
        if self.exact_bad:
            return RelationEntry(relation, arity, "exact", float(self.exact_max), 0.0, False, self.cases, tuple(missing), self.exact_bad[0], "exact")
        if not self.polys:
            return RelationEntry(relation, arity, "exact", 0.0, 0.0, True, self.cases, tuple(missing), "", "exact")
        if weights is None:
            raise DomainError("numeric residuals need a weight book to evaluate")
        worst_excess = -float("inf")
        res_w, tol_w, label_w = 0.0, 0.0, ""
        ok = True
        for poly, label in self.polys.items():
            vals = weights.values(poly.symbols())
            v, s = poly.evaluate(vals)
            tol = multiple * s + 1e-12
            if abs(v) > tol:
                ok = False
            if abs(v) - tol > worst_excess:
                worst_excess = abs(v) - tol
                res_w, tol_w, label_w = abs(v), tol, label
        return RelationEntry(relation, arity, "numeric", res_w, tol_w, ok, self.cases, tuple(missing), label_w, f"{multiple:g}*stderr")


def _elements(amb: Ambient, max_poly: int) -> list[GradedElement]:
    return basis_elements(amb, max_poly)


def check_algebra_relations(
    d: TaylorStructure,
    max_arity: int = 4,
    basis_truncation: int = 2,
    weights: Any = None,
    multiple: float = 3.0,
) -> RelationReport:
    """Quadratic relations of an algebra structure for arities ``0..max_arity``."""
    if d.kind != "algebra":
        raise DomainError("check_algebra_relations needs an algebra structure")
    lab = d.ambient.kind
    cat = Category(d if lab == "A" else None, d if lab != "A" else None, None)
    if lab not in ("A", "B"):
        cat = Category(d, None, None)
        lab = "A"
    basis = _elements(d.ambient, basis_truncation)
    report = RelationReport()
    for k in range(0, max_arity + 1):
        col = ResidualCollector()
        missing = [a for a in range(0, k + 2) if a not in d.components]
        for args in itertools.product(basis, repeat=k):
            xs = [(a, lab) for a in args]
            val = relation_value(cat, xs, lab)
            col.add(val, " | ".join(a.to_text() for a in args) or "()")
        report.entries.append(col.entry("algebra", k, weights, multiple, missing))
    return report


def check_bimodule_relations(
    dA: TaylorStructure,
    dB: TaylorStructure,
    dK: TaylorStructure,
    max: tuple[int, int] = (2, 2),
    basis_truncation: int | tuple[int, int, int] = 2,
    weights: Any = None,
    multiple: float = 3.0,
) -> RelationReport:
    """Bimodule relations for all ``(m, n)`` up to ``max``."""
    if dK.kind != "bimodule":
        raise DomainError("dK must be a bimodule structure")
    if dA.kind != "algebra" or dB.kind != "algebra":
        raise DomainError("dA and dB must be algebra structures")
    ta, tk, tb = (basis_truncation,) * 3 if isinstance(basis_truncation, int) else basis_truncation
    cat = Category(dA, dB, dK)
    bA = _elements(dA.ambient, ta)
    bK = _elements(dK.ambient, tk)
    bB = _elements(dB.ambient, tb)
    report = RelationReport()
    for m in range(max[0] + 1):
        for n in range(max[1] + 1):
            col = ResidualCollector()
            missing = [s for s in [(m - 1, n), (m, n - 1)] if min(s) >= 0 and s != (0, 0) and s not in dK.components]
            for a_s in itertools.product(bA, repeat=m):
                for k in bK:
                    for b_s in itertools.product(bB, repeat=n):
                        xs = [(a, "A") for a in a_s] + [(k, "K")] + [(b, "B") for b in b_s]
                        val = relation_value(cat, xs, "K")
                        col.add(val, " | ".join(x.to_text() for x, _ in xs))
            report.entries.append(col.entry("bimodule", (m, n), weights, multiple, missing))
    return report


# ---------------------------------------------------------------------------
# suspended convention and comodule endomorphisms


def suspend_sign(degrees: Sequence[int]) -> int:
    """Sign relating desuspended and suspended values on representatives.

    ``desuspended(x) = suspend_sign(|x|) * suspended(x)`` with the sign
    ``(-1) ** sum_j (N - j) (|x_j| - 1)``, which turns the desuspended
    relations into the plain Koszul-signed ones for the shifted degrees.
    """
    N = len(degrees)
    return _sgn(sum((N - 1 - j) * (d - 1) for j, d in enumerate(degrees)))


def suspended(op: MultilinearOperator) -> MultilinearOperator:
    """The suspended representative of a desuspended operator (and back: it is an involution)."""
    ins = op.in_ambients

    def kern(key):
        s = suspend_sign([_mono_degree(m, a) for m, a in zip(key, ins)])
        vals = op.on_monomials(key)
        return vals if s > 0 else {m: -c for m, c in vals.items()}

    deg = None if op.degree is None else op.degree + op.arity - 1
    return MultilinearOperator(ins, op.out_ambient, kern, deg, f"s({op.name})")


def _shifted(x: GradedElement) -> int:
    return x.degree - 1


class ComoduleMap:
    """Comodule endomorphism given by components ``n -> (K, B^n) -> K``.

    ``side="right"``: endomorphisms of ``K[1] ⊗ T(B[1])`` (components take
    ``k, b_1..b_n``); ``side="left"``: of ``T(A[1]) ⊗ K[1]`` (components take
    ``a_1..a_n, k``).  Components are suspended maps on representatives;
    ``degree`` is the suspended degree (None if inhomogeneous/unknown).
    """

    def __init__(self, side: str, components: Mapping[int, Callable[..., GradedElement]], K: Ambient, other: Ambient, degree: int | None = None, max_arity: int = 2):
        if side not in ("left", "right"):
            raise DomainError("side is 'left' or 'right'")
        self.side = side
        self.components = dict(components)
        self.K = K
        self.other = other
        self.degree = degree
        self.max_arity = max_arity

    def component(self, n: int, k: GradedElement, bs: Sequence[GradedElement]) -> GradedElement:
        f = self.components.get(n)
        if f is None:
            return GradedElement.zero(self.K)
        if self.side == "right":
            return f(k, *bs)
        return f(*bs, k)

    def __call__(self, n: int, *args: GradedElement) -> GradedElement:
        """Evaluate component ``n`` on its natural argument order."""
        if self.side == "right":
            return self.component(n, args[0], args[1:])
        return self.component(n, args[-1], args[:-1])


def compose(f: ComoduleMap, g: ComoduleMap) -> ComoduleMap:
    """Composition ``f ∘ g`` of comodule maps (no Koszul sign for the right side)."""
    if f.side != g.side:
        raise DomainError("cannot compose maps of different sides")
    side = f.side
    hi = f.max_arity + g.max_arity

    def make(n):
        def comp(*args):
            if side == "right":
                k, bs = args[0], args[1:]
                tot = GradedElement.zero(f.K)
                for j in range(n + 1):
                    inner = g.component(j, k, bs[:j])
                    if inner.is_zero():
                        continue
                    tot = tot + f.component(n - j, inner, bs[j:])
                return tot
            as_, k = args[:-1], args[-1]
            tot = GradedElement.zero(f.K)
            for j in range(n + 1):
                inner = g.component(n - j, k, as_[j:])
                if inner.is_zero():
                    continue
                passed = sum(_shifted(a) for a in as_[:j])
                s = _sgn((g.degree or 0) * passed) if g.degree is not None else _sgn(_inhomog_degree(g, n - j, k, as_[j:]) * passed)
                val = f.component(j, inner, as_[:j])
                tot = tot + (val if s > 0 else -val)
            return tot

        return comp

    deg = None if f.degree is None or g.degree is None else f.degree + g.degree
    return ComoduleMap(side, {n: make(n) for n in range(hi + 1)}, f.K, f.other, deg, hi)


def _inhomog_degree(g: ComoduleMap, n: int, k: GradedElement, as_: Sequence[GradedElement]) -> int:
    out = g.component(n, k, as_)
    if out.is_zero():
        return 0
    return (out.degree - 1) - (k.degree - 1) - sum(_shifted(a) for a in as_)


def coderivation_restriction(dK: TaylorStructure, dOther: TaylorStructure, side: str) -> Callable[[int, GradedElement, Sequence[GradedElement]], list[tuple[int, GradedElement, list[GradedElement]]]]:
    """Action of ``d_{K,B}`` (or ``d_{A,K}``) on a tensor ``k|b_1..b_n``.

    Returns a function producing the list of resulting tensors as
    ``(sign, new_k, new_bs)`` triples (with the new ``k`` possibly a sum).
    """
    sK = {sig: suspended(op) for sig, op in dK.components.items()}
    sO = {a: suspended(op) for a, op in dOther.components.items()}

    def act(k: GradedElement, bs: Sequence[GradedElement]):
        out = []
        n = len(bs)
        if side == "right":
            for j in range(n + 1):
                op = sK.get((0, j))
                if op is None:
                    continue
                y = op(k, *bs[:j])
                if not y.is_zero():
                    out.append((1, y, list(bs[j:])))
            passed = _shifted(k)
            for i in range(n + 1):
                for l in range(0, n - i + 1):
                    op = sO.get(l)
                    if op is None:
                        continue
                    y = op(*bs[i : i + l])
                    if y.is_zero():
                        continue
                    s = _sgn(sum(_shifted(b) for b in bs[:i]) + passed)
                    out.append((s, k, list(bs[:i]) + [y] + list(bs[i + l :])))
        else:
            # left: tensors a_1..a_n | k stored as (k, as)
            for j in range(n + 1):
                op = sK.get((j, 0))
                if op is None:
                    continue
                y = op(*bs[n - j :], k)
                if not y.is_zero():
                    s = _sgn(sum(_shifted(a) for a in bs[: n - j]))
                    out.append((s, y, list(bs[: n - j])))
            for i in range(n + 1):
                for l in range(0, n - i + 1):
                    op = sO.get(l)
                    if op is None:
                        continue
                    y = op(*bs[i : i + l])
                    if y.is_zero():
                        continue
                    s = _sgn(sum(_shifted(a) for a in bs[:i]))
                    out.append((s, k, list(bs[:i]) + [y] + list(bs[i + l :])))
        return out

    return act


def commutator_with_d(dK: TaylorStructure, dOther: TaylorStructure, phi: ComoduleMap) -> ComoduleMap:
    """``[d_{K,B}, phi] = d∘phi - (-1)^{|phi|} phi∘d`` on components (right or left side)."""
    side = phi.side
    act = coderivation_restriction(dK, dOther, side)
    sK = {sig: suspended(op) for sig, op in dK.components.items()}
    if phi.degree is None:
        raise DomainError("commutator needs a homogeneous map")
    sphi = _sgn(phi.degree)

    def make(n):
        def comp(*args):
            if side == "right":
                k, bs = args[0], list(args[1:])
            else:
                k, bs = args[-1], list(args[:-1])
            tot = GradedElement.zero(phi.K)
            # d ∘ phi, projected to K[1]
            for j in range(n + 1):
                if side == "right":
                    y = phi.component(j, k, bs[:j])
                    if y.is_zero():
                        continue
                    op = sK.get((0, n - j))
                    if op is None:
                        continue
                    tot = tot + op(y, *bs[j:])
                else:
                    y = phi.component(j, k, bs[n - j :])
                    if y.is_zero():
                        continue
                    op = sK.get((n - j, 0))
                    if op is None:
                        continue
                    s = _sgn(phi.degree * sum(_shifted(a) for a in bs[: n - j]))
                    val = op(*bs[: n - j], y)
                    tot = tot + (val if s > 0 else -val)
            # phi ∘ d
            for s, y, rest in act(k, bs):
                val = phi.component(len(rest), y, rest)
                if val.is_zero():
                    continue
                if s * sphi > 0:
                    tot = tot - val
                else:
                    tot = tot + val
            return tot

        return comp

    return ComoduleMap(side, {n: make(n) for n in range(phi.max_arity + 2)}, phi.K, phi.other, phi.degree + 1, phi.max_arity + 1)


def derived_left_action(dK: TaylorStructure) -> Callable[..., ComoduleMap]:
    """``L_A``: ``(a_1..a_m) -> `` the right comodule map with components ``d_K^{m,n}(a|k|b)``.

    Returns a function of the ``a``'s (at least one).  Components are the
    suspended representatives of the stored desuspended maps.
    """
    if dK.kind != "bimodule":
        raise DomainError("derived_left_action needs a bimodule")
    sK = {sig: suspended(op) for sig, op in dK.components.items()}
    nmax = max((n for (_, n) in dK.components), default=0)

    def L(*as_: GradedElement) -> ComoduleMap:
        m = len(as_)
        if m == 0:
            raise DomainError("L_A has components of arity >= 1 only")
        comps = {}
        for n in range(nmax + 1):
            op = sK.get((m, n))
            if op is None:
                continue
            comps[n] = (lambda op: (lambda k, *bs: op(*as_, k, *bs)))(op)
        deg = 1 + sum(_shifted(a) for a in as_)
        return ComoduleMap("right", comps, dK.ambient, dK.right, deg, nmax)

    return L


def _right_component(op: MultilinearOperator, bs: Sequence[GradedElement]) -> Callable[..., GradedElement]:
    shift_b = sum(_shifted(b) for b in bs)

    def comp(*ak: GradedElement) -> GradedElement:
        # the b's travel to the front past everything before them
        passed = sum(_shifted(x) for x in ak)
        val = op(*ak, *bs)
        return val if (shift_b * passed) % 2 == 0 else -val

    return comp


def derived_right_action(dK: TaylorStructure) -> Callable[..., ComoduleMap]:
    """``R_B``: ``(b_1..b_n) ->`` the left comodule map ``(a|k) -> d_K^{m,n}(a|k|b)``."""
    if dK.kind != "bimodule":
        raise DomainError("derived_right_action needs a bimodule")
    sK = {sig: suspended(op) for sig, op in dK.components.items()}
    mmax = max((m for (m, _) in dK.components), default=0)

    def R(*bs: GradedElement) -> ComoduleMap:
        n = len(bs)
        if n == 0:
            raise DomainError("R_B has components of arity >= 1 only")
        comps = {}
        for m in range(mmax + 1):
            op = sK.get((m, n))
            if op is None:
                continue
            comps[m] = _right_component(op, bs)
        deg = 1 + sum(_shifted(b) for b in bs)
        return ComoduleMap("left", comps, dK.ambient, dK.left, deg, mmax)

    return R


@dataclass
class EndAlgebra:
    """The End algebra of one side, with its curvature and its operations."""

    side: str
    dK: TaylorStructure
    dA: TaylorStructure
    dB: TaylorStructure

    @property
    def _other(self) -> TaylorStructure:
        return self.dB if self.side == "right" else self.dA

    def Q0(self) -> ComoduleMap | None:
        """``L_A^1(d_A^0(1))`` (right side) or ``R_B^1(d_B^0(1))`` (left side); None when flat."""
        src = self.dA if self.side == "right" else self.dB
        F = src.component(0)
        if F is None:
            return None
        y = F()
        if y.is_zero():
            return None
        act = derived_left_action(self.dK) if self.side == "right" else derived_right_action(self.dK)
        return act(y)

    def Q1(self, phi: ComoduleMap) -> ComoduleMap:
        c = commutator_with_d(self.dK, self._other, phi)
        return ComoduleMap(c.side, {n: (lambda f: (lambda *a: -f(*a)))(f) for n, f in c.components.items()}, c.K, c.other, c.degree, c.max_arity)

    def Q2(self, f: ComoduleMap, g: ComoduleMap) -> ComoduleMap:
        """``(-1)^{|f|} f∘g`` on the right side.

        The left side uses the opposite product
        ``(-1)^{(|f|-1)(|g|-1) + |g|} g∘f``.
        """
        fd, gd = f.degree or 0, g.degree or 0
        if self.side == "right":
            c = compose(f, g)
            s = _sgn(fd)
        else:
            c = compose(g, f)
            s = _sgn((fd - 1) * (gd - 1) + gd)
        if s > 0:
            return c
        return ComoduleMap(c.side, {n: (lambda h: (lambda *a: -h(*a)))(h) for n, h in c.components.items()}, c.K, c.other, c.degree, c.max_arity)


def end_dga(dK: TaylorStructure, dA: TaylorStructure, dB: TaylorStructure, side: str = "right") -> EndAlgebra:
    if side not in ("left", "right"):
        raise DomainError("side is 'left' or 'right'")
    return EndAlgebra(side, dK, dA, dB)


def identity_map(K: Ambient, other: Ambient, side: str = "right") -> ComoduleMap:
    return ComoduleMap(side, {0: lambda k: k}, K, other, 0, 0)


def maps_agree(f: ComoduleMap, g: ComoduleMap, max_arity: int, max_poly: int) -> Any:
    """Return a difference witness (or None) comparing components on the truncated basis."""
    bK = basis_elements(f.K, max_poly)
    bO = basis_elements(f.other, max_poly)
    for n in range(max_arity + 1):
        for k in bK:
            for bs in itertools.product(bO, repeat=n):
                a = f.component(n, k, bs)
                b = g.component(n, k, bs)
                if not (a - b).is_zero():
                    return (n, k, bs, a - b)
    return None


def action_morphism_residual(
    dA: TaylorStructure,
    dB: TaylorStructure,
    dK: TaylorStructure,
    side: str,
    xs: Sequence[GradedElement],
    n: int,
    k: GradedElement,
    ys: Sequence[GradedElement],
) -> GradedElement:
    """Morphism identity of ``L_A`` (side ``"right"``) or ``R_B`` (side ``"left"``) on one input.

    ``xs`` are the arguments of the action, ``n``/``k``/``ys`` the input of
    the resulting component.  The identity is
    ``sum F(..d(..)..) = Q1(F(x)) + sum Q2(F(x'), F(x''))`` (plus ``Q0``
    through the curvature insertions on the left).
    """
    act = derived_left_action(dK) if side == "right" else derived_right_action(dK)
    src = dA if side == "right" else dB
    s_src = {a: suspended(op) for a, op in src.components.items()}
    m = len(xs)
    lhs = GradedElement.zero(dK.ambient)
    for kk, op in s_src.items():
        for i in range(1, m - kk + 2):
            y = op(*xs[i - 1 : i - 1 + kk])
            if y.is_zero():
                continue
            new = list(xs[: i - 1]) + [y] + list(xs[i - 1 + kk :])
            s = _sgn(sum(_shifted(a) for a in xs[: i - 1]))
            val = act(*new).component(n, k, ys)
            lhs = lhs + (val if s > 0 else -val)
    end = end_dga(dK, dA, dB, side)
    rhs = end.Q1(act(*xs)).component(n, k, ys)
    for m1 in range(1, m):
        rhs = rhs + end.Q2(act(*xs[:m1]), act(*xs[m1:])).component(n, k, ys)
    return lhs - rhs


def check_action_morphism(
    dA: TaylorStructure,
    dB: TaylorStructure,
    dK: TaylorStructure,
    side: str = "right",
    max_arity: int = 2,
    max_n: int = 2,
    basis_truncation: int = 1,
    weights: Any = None,
    multiple: float = 3.0,
) -> RelationReport:
    """Morphism identities of ``L_A`` (``side="right"``) or ``R_B`` (``side="left"``)."""
    src, tgt = (dA, dB) if side == "right" else (dB, dA)
    bX = basis_elements(src.ambient, basis_truncation)
    bK = basis_elements(dK.ambient, basis_truncation)
    bY = basis_elements(tgt.ambient, basis_truncation)
    name = "left-action-morphism" if side == "right" else "right-action-morphism"
    report = RelationReport()
    for m in range(1, max_arity + 1):
        col = ResidualCollector()
        for xs in itertools.product(bX, repeat=m):
            for n in range(max_n + 1):
                for k in bK:
                    for ys in itertools.product(bY, repeat=n):
                        r = action_morphism_residual(dA, dB, dK, side, xs, n, k, ys)
                        col.add(r, f"{[x.to_text() for x in xs]} n={n}")
        report.entries.append(col.entry(name, m, weights, multiple))
    return report


# ---------------------------------------------------------------------------
# mixed Hochschild cochains: C(A,B,K) versus C(A, End_{-B}(K))


def mix_to_end(phi: Mapping[tuple[int, int], MultilinearOperator], K: Ambient, B: Ambient, degree: int | None = None) -> Callable[..., ComoduleMap]:
    """Regroup components ``phi^{m,n}`` as ``a_1..a_m -> (k|b.. -> phi^{m,n}(a|k|b))``."""
    nmax = max((n for (_, n) in phi), default=0)

    def psi(*as_: GradedElement) -> ComoduleMap:
        m = len(as_)
        comps = {}
        for n in range(nmax + 1):
            op = phi.get((m, n))
            if op is not None:
                comps[n] = (lambda op: (lambda k, *bs: op(*as_, k, *bs)))(op)
        deg = None if degree is None else degree + sum(_shifted(a) for a in as_)
        return ComoduleMap("right", comps, K, B, deg, nmax)

    return psi


def end_to_mix(psi: Callable[..., ComoduleMap], A: Ambient, K: Ambient, B: Ambient, max_m: int, max_n: int, max_poly: int) -> dict[tuple[int, int], MultilinearOperator]:
    """Inverse of :func:`mix_to_end` on the truncated basis."""
    out = {}
    for m in range(max_m + 1):
        for n in range(max_n + 1):
            def kern(key, m=m, n=n):
                els = [GradedElement({mono: Fraction(1)}, amb, check=False) for mono, amb in zip(key, (A,) * m + (K,) + (B,) * n)]
                return psi(*els[:m]).component(n, els[m], els[m + 1 :]).terms

            out[(m, n)] = MultilinearOperator((A,) * m + (K,) + (B,) * n, K, kern, None, f"phi^{m},{n}")
    return out


# ---------------------------------------------------------------------------
# weights forced by the relations


def solve_linear(equations: Sequence[WeightPoly]) -> tuple[dict[str, Fraction], set[str], bool]:
    """Exact solution of ``p = 0`` for polynomials of degree at most one.

    Returns ``(determined values, undetermined symbols, consistent)``; a
    symbol counts as determined when every solution gives it the same value.
    """
    rows: list[dict[str, Fraction]] = []
    consts: list[Fraction] = []
    names: set[str] = set()
    for eq in equations:
        row: dict[str, Fraction] = {}
        c0 = Fraction(0)
        for mono, c in eq.terms.items():
            if len(mono) == 0:
                c0 += c
            elif len(mono) == 1:
                row[mono[0]] = row.get(mono[0], Fraction(0)) + c
            else:
                raise DomainError("nonlinear equation")
        row = {k: v for k, v in row.items() if v}
        names.update(row)
        rows.append(row)
        consts.append(-c0)
    order = sorted(names)
    col = {n: i for i, n in enumerate(order)}
    mat = [[r.get(n, Fraction(0)) for n in order] + [c] for r, c in zip(rows, consts)]
    pivots: list[int] = []
    r = 0
    for c in range(len(order)):
        piv = next((i for i in range(r, len(mat)) if mat[i][c] != 0), None)
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        inv = 1 / mat[r][c]
        mat[r] = [v * inv for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
    consistent = all(any(v != 0 for v in row[:-1]) or row[-1] == 0 for row in mat)
    solved: dict[str, Fraction] = {}
    for i, c in enumerate(pivots):
        if all(mat[i][j] == 0 for j in range(len(order)) if j != c):
            solved[order[c]] = mat[i][-1]
    return solved, set(order) - set(solved), consistent


def _iota(x: GradedElement) -> int:
    (m,) = x.terms
    return m.poly_degree - m.odd_count


def _weight_range(amb: Ambient) -> tuple[int, int | None]:
    """Possible values of ``poly degree - odd count`` in ``amb``.

    Every structure map preserves this weight, so inputs outside the range
    give vanishing relations.
    """
    lo = -len(amb.odd_indices)
    return lo, (None if amb.even_indices else 0)


def weighted_tuples(lists: Sequence[Sequence[GradedElement]], lo: int, hi: int | None) -> Iterable[tuple[GradedElement, ...]]:
    """Tuples from ``lists`` whose total weight lies in ``[lo, hi]`` (monomial elements)."""
    weighted = [[(_iota(x), x) for x in lst] for lst in lists]
    mins = [min((w for w, _ in lst), default=0) for lst in weighted]
    maxs = [max((w for w, _ in lst), default=0) for lst in weighted]
    rest_min = [sum(mins[i:]) for i in range(len(lists) + 1)]
    rest_max = [sum(maxs[i:]) for i in range(len(lists) + 1)]

    def rec(i: int, acc: int, prefix: tuple):
        if i == len(weighted):
            if acc >= lo and (hi is None or acc <= hi):
                yield prefix
            return
        for w, x in weighted[i]:
            tot = acc + w
            if tot + rest_max[i + 1] < lo:
                continue
            if hi is not None and tot + rest_min[i + 1] > hi:
                continue
            yield from rec(i + 1, tot, prefix + (x,))

    if any(not lst for lst in lists):
        return iter(())
    return rec(0, 0, ())


@dataclass
class ForcedWeights:
    values: dict[str, Fraction]
    undetermined: set[str]
    consistent: bool
    rounds: int

    def to_json(self) -> dict:
        return {
            "values": {k: str(v) for k, v in sorted(self.values.items())},
            "undetermined": sorted(self.undetermined),
            "consistent": self.consistent,
        }


def forced_weights(
    splitting: Splitting,
    relations: Sequence[tuple[int, int]],
    components: Sequence[tuple[int, int]],
    known: Mapping[str, Any],
    basis_truncation: int | tuple[int, int, int] = 2,
    max_rounds: int = 10,
) -> ForcedWeights:
    """Determine graph weights from the bimodule relations, starting from ``known``.

    Residuals of the listed relations are polynomials in the unknown
    weights; the linear ones are solved exactly and the process repeats
    until nothing new is determined.
    """
    from .geometry import WeightBook

    values = {k: Fraction(v) for k, v in known.items()}
    consistent = True
    rounds = 0
    unknown: set[str] = set()
    for rounds in range(1, max_rounds + 1):
        book = WeightBook(exact=values)
        A, K, B = bimodule_ambients(splitting)
        G = graph_bimodule(splitting, weights=book, components=components)
        cat = Category(graded_algebra(A), graded_algebra(B), G)
        ta, tk, tb = (basis_truncation,) * 3 if isinstance(basis_truncation, int) else basis_truncation
        bA, bK, bB = basis_elements(A, ta), basis_elements(K, tk), basis_elements(B, tb)
        eqs: dict[WeightPoly, None] = {}
        lo, hi = _weight_range(K)
        for m, n in relations:
            lists = [bA] * m + [bK] + [bB] * n
            for tup in weighted_tuples(lists, lo, hi):
                xs = [(x, "A") for x in tup[:m]] + [(tup[m], "K")] + [(x, "B") for x in tup[m + 1 :]]
                for c in relation_value(cat, xs, "K").terms.values():
                    p = WeightPoly.lift(c)
                    if p.degree <= 1:
                        eqs[p.normalized()] = None
                    if not p.is_constant():
                        unknown |= p.symbols()
                    elif p.constant() != 0:
                        consistent = False
        solved, _, ok = solve_linear([e for e in eqs if not e.is_constant()])
        consistent = consistent and ok
        new = {k: v for k, v in solved.items() if k not in values}
        if not new:
            break
        values.update(new)
    return ForcedWeights(values, unknown - set(values), consistent, rounds)

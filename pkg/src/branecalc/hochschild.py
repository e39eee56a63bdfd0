"""Hochschild cochains of the two-object category built from ``A``, ``K`` and ``B``.

A cochain is a family of multilinear maps indexed by composable input
shapes: words in ``A`` (output ``A``), words in ``B`` (output ``B``) and
words ``A..A K B..B`` (output ``K``).  Cochains are stored as suspended
representatives, so braces carry plain Koszul signs in the shifted degrees
``|x| - 1`` and the cochain degree is the degree of the map between shifted
spaces.  :func:`desuspend` and :func:`from_desuspended` translate to the
desuspended storage used for structures in :mod:`branecalc.ainfty`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from .ainfty import MultilinearOperator, TaylorStructure, suspend_sign, suspended
from .graded_core import (
    Ambient,
    DomainError,
    GradedElement,
    Monomial,
    Splitting,
    WeightPoly,
    is_zero,
    monomial_basis,
)

Shape = tuple[str, ...]
PartKey = tuple[Shape, str]


def _sgn(e: int) -> int:
    return -1 if e % 2 else 1


def out_label(shape: Shape, fallback: str | None = None) -> str:
    if "K" in shape:
        return "K"
    if shape:
        return shape[0]
    if fallback is None:
        raise DomainError("arity-zero parts need an explicit output label")
    return fallback


def composable(shape: Shape) -> bool:
    """Words ``A^m K B^n`` or pure words in one object."""
    if "K" in shape:
        if shape.count("K") != 1:
            return False
        i = shape.index("K")
        return all(s == "A" for s in shape[:i]) and all(s == "B" for s in shape[i + 1 :])
    return len(set(shape)) <= 1


def iota(mono: Monomial) -> int:
    """Internal weight ``poly degree - odd count``, preserved by every structure map."""
    return mono.poly_degree - mono.odd_count


def size(mono: Monomial) -> int:
    return mono.poly_degree + mono.odd_count


@dataclass(frozen=True)
class CategoryAmbients:
    A: Ambient
    K: Ambient
    B: Ambient

    @classmethod
    def of(cls, splitting: Splitting) -> "CategoryAmbients":
        return cls(Ambient("A", splitting), Ambient("K", splitting), Ambient("B", splitting))

    def __getitem__(self, label: str) -> Ambient:
        return {"A": self.A, "K": self.K, "B": self.B}[label]

    @property
    def splitting(self) -> Splitting:
        return self.A.splitting


class Cochain:
    """Suspended cochain given by operators on parts ``(input shape, output label)``.

    ``degree`` is the (suspended) cochain degree when homogeneous.  Parts
    may also be produced lazily by ``factory(key)``; missing parts are zero.
    """

    def __init__(
        self,
        cat: CategoryAmbients,
        parts: Mapping[PartKey, MultilinearOperator] | None = None,
        degree: int | None = None,
        factory: Callable[[PartKey], MultilinearOperator | None] | None = None,
        name: str = "",
    ):
        self.cat = cat
        self._parts: dict[PartKey, MultilinearOperator | None] = dict(parts or {})
        self._explicit = factory is None
        self.degree = degree
        self._factory = factory
        self.name = name

    def op(self, shape: Shape, label: str | None = None) -> MultilinearOperator | None:
        if not composable(shape):
            return None
        lab = label if label is not None else out_label(shape, None) if shape else None
        if lab is None:
            return None
        key = (tuple(shape), lab)
        if key in self._parts:
            return self._parts[key]
        if self._factory is None:
            return None
        op = self._factory(key)
        self._parts[key] = op
        return op

    def curvature_labels(self) -> list[str]:
        if self._explicit:
            return [lab for (sh, lab), op in self._parts.items() if not sh and op is not None]
        return ["A", "B"]

    @property
    def parts(self) -> dict[PartKey, MultilinearOperator]:
        return {k: v for k, v in self._parts.items() if v is not None}

    def __call__(self, labels: Sequence[str], *args: GradedElement, label: str | None = None) -> GradedElement:
        op = self.op(tuple(labels), label)
        if op is None:
            lab = label or out_label(tuple(labels), "A")
            return GradedElement.zero(self.cat[lab])
        return op(*args)

    # linear structure
    def _combine(self, other: "Cochain", f: Callable[[Any, Any], Any]) -> "Cochain":
        a, b = self, other

        def factory(key):
            opa, opb = a.op(*key), b.op(*key)
            if opa is None and opb is None:
                return None
            ins = tuple(self.cat[s] for s in key[0])
            out = self.cat[key[1]]

            def kern(mk):
                va = opa.on_monomials(mk) if opa is not None else {}
                vb = opb.on_monomials(mk) if opb is not None else {}
                res = {}
                for m in set(va) | set(vb):
                    res[m] = f(va.get(m, 0), vb.get(m, 0))
                return res

            return MultilinearOperator(ins, out, kern)

        deg = self.degree if self.degree == other.degree else None
        c = Cochain(self.cat, {}, deg, factory)
        if self._explicit and other._explicit:
            c._explicit = True
            for key in set(self.parts) | set(other.parts):
                c._parts[key] = factory(key)
        return c

    def __add__(self, other: "Cochain") -> "Cochain":
        return self._combine(other, lambda x, y: x + y)

    def __sub__(self, other: "Cochain") -> "Cochain":
        return self._combine(other, lambda x, y: x - y)

    def scale(self, c: Any) -> "Cochain":
        src = self

        def factory(key):
            op = src.op(*key)
            return None if op is None else op.scale(c)

        out = Cochain(self.cat, {}, self.degree, factory)
        if self._explicit:
            out._explicit = True
            for key in self.parts:
                out._parts[key] = factory(key)
        return out

    def __neg__(self) -> "Cochain":
        return self.scale(Fraction(-1))

    def restrict(self, which: str) -> "Cochain":
        """The ``A``, ``B`` or ``K`` (mixed) part as a cochain of its own."""
        src = self

        def keep(key):
            sh, lab = key
            if which == "K":
                return lab == "K"
            return lab == which and "K" not in sh

        def factory(key):
            return src.op(*key) if keep(key) else None

        out = Cochain(self.cat, {}, self.degree, factory)
        if self._explicit:
            out._explicit = True
            for key in self.parts:
                if keep(key):
                    out._parts[key] = self.parts[key]
        return out

    @property
    def phi_A(self) -> "Cochain":
        return self.restrict("A")

    @property
    def phi_B(self) -> "Cochain":
        return self.restrict("B")

    @property
    def phi_K(self) -> "Cochain":
        return self.restrict("K")

    def agrees_with(self, other: "Cochain", window: "Window") -> bool:
        return not differing_inputs(self, other, window, first=True)


def differing_inputs(f: Cochain, g: Cochain, window: "Window", first: bool = False) -> list:
    bad = []
    for shape, lab, key in window.input_keys():
        opf, opg = f.op(shape, lab), g.op(shape, lab)
        vf = opf.on_monomials(key) if opf is not None else {}
        vg = opg.on_monomials(key) if opg is not None else {}
        for m in set(vf) | set(vg):
            if not is_zero(vf.get(m, 0) - vg.get(m, 0)):
                bad.append((shape, key, m))
                if first:
                    return bad
    return bad


# ---------------------------------------------------------------------------
# conversions


def from_structures(
    cat: CategoryAmbients,
    dA: TaylorStructure | None = None,
    dB: TaylorStructure | None = None,
    dK: TaylorStructure | None = None,
) -> Cochain:
    """The degree-one cochain of a category structure (suspended representatives)."""
    parts: dict[PartKey, MultilinearOperator] = {}
    for st, lab in ((dA, "A"), (dB, "B")):
        if st is None:
            continue
        for k, op in st.components.items():
            parts[((lab,) * k, lab)] = suspended(op)
    if dK is not None:
        for (m, n), op in dK.components.items():
            parts[(("A",) * m + ("K",) + ("B",) * n, "K")] = suspended(op)
    return Cochain(cat, parts, 1, name="gamma")


def from_desuspended(cat: CategoryAmbients, parts: Mapping[PartKey, MultilinearOperator], degree: int | None = None) -> Cochain:
    """Suspended cochain from desuspended parts (``degree`` is the suspended degree)."""
    return Cochain(cat, {k: suspended(v) for k, v in parts.items()}, degree)


def desuspend(c: Cochain, shape: Shape, label: str | None = None) -> MultilinearOperator | None:
    op = c.op(shape, label)
    return None if op is None else suspended(op)


# ---------------------------------------------------------------------------
# braces and the Gerstenhaber bracket


def _segments(N: int, k: int) -> Iterator[list[tuple[int, int]]]:
    """Ordered disjoint segments ``[s, e)`` (possibly empty) in ``0..N``."""
    if k == 0:
        yield []
        return

    def rec(start: int, left: int):
        if left == 0:
            yield []
            return
        for s in range(start, N + 1):
            for e in range(s, N + 1):
                for rest in rec(e, left - 1):
                    yield [(s, e)] + rest

    yield from rec(0, k)


def brace(phi: Cochain, *psis: Cochain) -> Cochain:
    """Brace operation ``phi{psi_1, ..., psi_k}`` with Koszul signs.

    ``phi{psi}(x) = sum (-1)^{sum_i |psi_i| (|x_1|' + ... )} phi(.., psi_1(..), .., psi_k(..), ..)``
    where ``|x|'`` is the shifted degree of the inputs standing before ``psi_i``.
    """
    for p in psis:
        if p.degree is None:
            raise DomainError("braces need homogeneous inner cochains")
    cat = phi.cat
    k = len(psis)

    def factory(key: PartKey) -> MultilinearOperator | None:
        shape, lab = key
        N = len(shape)
        ins = tuple(cat[s] for s in shape)

        # candidate placements: list of (segments, inner labels)
        placements = []
        for segs in _segments(N, k):
            # adjacent empty segments at the same spot keep their order: fine
            inner = []
            ok = True
            for (s, e), psi in zip(segs, psis):
                seg = shape[s:e]
                if seg:
                    if not composable(seg):
                        ok = False
                        break
                    ilab = out_label(seg)
                    if psi.op(seg) is None:
                        ok = False
                        break
                    inner.append((s, e, seg, ilab))
                else:
                    # curvature part: choose label fitting the chain
                    inner.append((s, e, seg, None))
            if not ok:
                continue
            # resolve empty-segment labels
            choices = []
            for (s, e, seg, ilab), psi in zip(inner, psis):
                if ilab is None:
                    labs = [l for l in psi.curvature_labels() if psi.op((), l) is not None]
                    choices.append(labs)
                else:
                    choices.append([ilab])
            for labs in itertools.product(*choices):
                new_shape: list[str] = []
                pos = 0
                for (s, e, seg, _), l in zip(inner, labs):
                    new_shape.extend(shape[pos:s])
                    new_shape.append(l)
                    pos = e
                new_shape.extend(shape[pos:])
                ns = tuple(new_shape)
                if not composable(ns) or out_label(ns, lab) != lab:
                    continue
                if phi.op(ns, lab) is None:
                    continue
                placements.append((segs, labs, ns))
        if not placements:
            return None

        def kern(mk: tuple[Monomial, ...]):
            els = [GradedElement({m: Fraction(1)}, a, check=False) for m, a in zip(mk, ins)]
            shifted = [len(m.odd) - 1 for m in mk]
            total = GradedElement.zero(cat[lab])
            for segs, labs, ns in placements:
                args: list[GradedElement] = []
                pos = 0
                expo = 0
                zero = False
                for ((s, e), psi, l) in zip(segs, psis, labs):
                    args.extend(els[pos:s])
                    expo += psi.degree * sum(shifted[:s])
                    y = psi(shape[s:e], *els[s:e], label=l)
                    if y.is_zero():
                        zero = True
                        break
                    args.append(y)
                    pos = e
                if zero:
                    continue
                args.extend(els[pos:])
                val = phi.op(ns, lab)(*args)
                total = total + (val if expo % 2 == 0 else -val)
            return total.terms

        return MultilinearOperator(ins, cat[lab], kern)

    deg = None if phi.degree is None else phi.degree + sum(p.degree for p in psis)
    return Cochain(cat, {}, deg, factory, name="brace")


def gerstenhaber(phi: Cochain, psi: Cochain) -> Cochain:
    """``[phi, psi] = phi{psi} - (-1)^{|phi||psi|} psi{phi}``."""
    if phi.degree is None or psi.degree is None:
        raise DomainError("the bracket needs homogeneous cochains")
    a = brace(phi, psi)
    b = brace(psi, phi)
    return a - b if (phi.degree * psi.degree) % 2 == 0 else a + b


@dataclass
class MaurerCartanElement:
    """A degree-one cochain ``gamma`` with ``gamma{gamma} = 0`` (checked on windows)."""

    gamma: Cochain

    def __post_init__(self) -> None:
        if self.gamma.degree != 1:
            raise DomainError("Maurer-Cartan elements have degree one")

    @classmethod
    def from_structures(cls, dA=None, dB=None, dK=None) -> "MaurerCartanElement":
        amb = next(st for st in (dA, dB, dK) if st is not None).ambient.splitting
        return cls(from_structures(CategoryAmbients.of(amb), dA, dB, dK))

    def defect(self) -> Cochain:
        return brace(self.gamma, self.gamma)

    def check(self, window: "Window") -> list:
        zero = Cochain(self.gamma.cat, {}, 2)
        return differing_inputs(self.defect(), zero, window)


def differential(gamma: Cochain | MaurerCartanElement, phi: Cochain) -> Cochain:
    """``d_gamma phi = [gamma, phi]``."""
    g = gamma.gamma if isinstance(gamma, MaurerCartanElement) else gamma
    return gerstenhaber(g, phi)


def differential_parts(gamma: Cochain | MaurerCartanElement, phi: Cochain) -> dict[str, Cochain]:
    """The five pieces of ``d_gamma``.

    ``"A"``: the Hochschild differential of ``A`` on ``phi_A``; ``"B"``: of
    ``B`` on ``phi_B``; ``"mix"``: the part of ``[gamma, phi_K]``;
    ``"LA"``: ``gamma_K{phi_A}`` and ``"RB"``: ``gamma_K{phi_B}``, the
    contributions of the pure parts to the mixed output.
    """
    g = gamma.gamma if isinstance(gamma, MaurerCartanElement) else gamma
    gK = g.restrict("K")
    return {
        "A": differential(g.restrict("A"), phi.phi_A).restrict("A"),
        "B": differential(g.restrict("B"), phi.phi_B).restrict("B"),
        "mix": differential(g, phi.phi_K).restrict("K"),
        "LA": brace(gK, phi.phi_A).restrict("K"),
        "RB": brace(gK, phi.phi_B).restrict("K"),
    }


def project(phi: Cochain, side: str) -> Cochain:
    """``p_A`` or ``p_B``: forget everything but the pure part."""
    if side not in ("A", "B"):
        raise DomainError("project to 'A' or 'B'")
    return phi.restrict(side)


# ---------------------------------------------------------------------------
# windows and elementary cochains


@dataclass(frozen=True)
class Window:
    """Finite set of inputs: shapes up to ``max_arity`` and inputs of total size ``<= max_size``.

    The size of a monomial is its polynomial degree plus its odd count.
    Inputs from ``A`` and ``B`` are normalized (no constants); ``K``
    inputs are arbitrary.  ``parts`` selects among ``"A"``, ``"B"``, ``"K"``.
    """

    cat: CategoryAmbients
    max_size: int
    max_arity: int = 6
    parts: tuple[str, ...] = ("A", "B", "K")
    normalized: bool = True

    def shapes(self) -> Iterator[PartKey]:
        for N in range(0, self.max_arity + 1):
            for lab in ("A", "B"):
                if lab in self.parts:
                    yield (lab,) * N, lab
            if "K" in self.parts:
                for m in range(N):
                    yield ("A",) * m + ("K",) + ("B",) * (N - 1 - m), "K"

    def _monos(self, label: str) -> list[Monomial]:
        amb = self.cat[label]
        monos = monomial_basis(amb, self.max_size)
        if self.normalized and label != "K":
            monos = [m for m in monos if size(m) > 0]
        return [m for m in monos if size(m) <= self.max_size]

    def input_keys(self, shape_filter: Callable[[Shape], bool] | None = None) -> Iterator[tuple[Shape, str, tuple[Monomial, ...]]]:
        cache = {lab: self._monos(lab) for lab in "AKB"}
        for shape, lab in self.shapes():
            if shape_filter is not None and not shape_filter(shape):
                continue
            for key in _bounded_products([cache[s] for s in shape], self.max_size):
                yield shape, lab, key

    def outputs(self, label: str, weight: int, inputs: Sequence[Monomial]) -> list[Monomial]:
        """Output monomials with ``iota(out) - sum iota(in) = weight``."""
        target = weight + sum(iota(m) for m in inputs)
        amb = self.cat[label]
        odd = len(amb.odd_indices)
        return [m for m in monomial_basis(amb, max(0, target + odd)) if iota(m) == target]


def _bounded_products(lists: Sequence[list[Monomial]], budget: int) -> Iterator[tuple[Monomial, ...]]:
    if not lists:
        yield ()
        return
    head, rest = lists[0], lists[1:]
    for m in head:
        s = size(m)
        if s > budget:
            continue
        for tail in _bounded_products(rest, budget - s):
            yield (m,) + tail


@dataclass(frozen=True)
class Elementary:
    """Basis cochain sending one input monomial tuple to one output monomial."""

    shape: Shape
    inputs: tuple[Monomial, ...]
    output: Monomial
    label: str

    def degree(self, cat: CategoryAmbients) -> int:
        d_out = len(self.output.odd) - 1
        return d_out - sum(len(m.odd) - 1 for m in self.inputs)

    def weight(self) -> int:
        return iota(self.output) - sum(iota(m) for m in self.inputs)


def elementary_basis(window: Window, degree: int, weight: int) -> list[Elementary]:
    out = []
    for shape, lab, key in window.input_keys():
        for o in window.outputs(lab, weight, key):
            e = Elementary(shape, key, o, lab)
            if e.degree(window.cat) == degree:
                out.append(e)
    return out


def generic_cochain(cat: CategoryAmbients, basis: Sequence[Elementary], degree: int) -> Cochain:
    """Cochain whose value on each basis element is a formal symbol ``"e<i>"``."""
    table: dict[tuple[Shape, tuple[Monomial, ...]], dict[Monomial, WeightPoly]] = {}
    for i, e in enumerate(basis):
        table.setdefault((e.shape, e.label, e.inputs), {})[e.output] = WeightPoly.symbol(f"e{i:06d}")
    keys = {(e.shape, e.label) for e in basis}

    def factory(key):
        shape, lab = key
        if key not in keys:
            return None
        ins = tuple(cat[s] for s in shape)
        return MultilinearOperator(ins, cat[lab], lambda mk, key=key: table.get(key + (mk,), {}))

    return Cochain(cat, {}, degree, factory, name="generic")


def cochain_from_vector(cat: CategoryAmbients, basis: Sequence[Elementary], vec: Sequence[Any], degree: int) -> Cochain:
    table: dict[tuple[Shape, tuple[Monomial, ...]], dict[Monomial, Any]] = {}
    for e, c in zip(basis, vec):
        if not is_zero(c):
            table.setdefault((e.shape, e.label, e.inputs), {})[e.output] = c
    keys = {(e.shape, e.label) for e in basis}

    def factory(key):
        shape, lab = key
        if key not in keys:
            return None
        ins = tuple(cat[s] for s in shape)
        return MultilinearOperator(ins, cat[lab], lambda mk, key=key: table.get(key + (mk,), {}))

    return Cochain(cat, {}, degree, factory)


# ---------------------------------------------------------------------------
# exact linear algebra


def rank(rows: Sequence[Mapping[int, Fraction]]) -> int:
    """Rank of a sparse matrix given as rows ``{column: value}`` (exact)."""
    pivots: dict[int, dict[int, Fraction]] = {}
    r = 0
    for row in rows:
        v = {k: Fraction(x) for k, x in row.items() if x != 0}
        while v:
            c = min(v)
            p = pivots.get(c)
            if p is None:
                inv = 1 / v[c]
                pivots[c] = {k: x * inv for k, x in v.items()}
                r += 1
                break
            f = v[c]
            for k, x in p.items():
                nv = v.get(k, Fraction(0)) - f * x
                if nv:
                    v[k] = nv
                else:
                    v.pop(k, None)
    return r


def differential_matrix(
    gamma: Cochain,
    window: Window,
    source: Sequence[Elementary],
    target: Sequence[Elementary],
    degree: int,
) -> list[dict[int, Fraction]]:
    """Rows of ``d_gamma`` from ``span(source)`` to ``span(target)`` (target rows only)."""
    cat = window.cat
    generic = generic_cochain(cat, source, degree)
    dphi = differential(gamma, generic)
    by_input: dict[tuple[Shape, str, tuple[Monomial, ...]], list[Elementary]] = {}
    for e in target:
        by_input.setdefault((e.shape, e.label, e.inputs), []).append(e)
    rows: list[dict[int, Fraction]] = []
    for (shape, lab, key), es in by_input.items():
        op = dphi.op(shape, lab)
        vals = op.on_monomials(key) if op is not None else {}
        for e in es:
            c = vals.get(e.output, 0)
            row: dict[int, Fraction] = {}
            if isinstance(c, WeightPoly):
                for mono, v in c.terms.items():
                    if len(mono) != 1:
                        raise DomainError("differential matrix entry is not linear")
                    row[int(mono[0][1:])] = v
            elif c != 0:
                raise DomainError("constant term in a linear differential")
            rows.append(row)
    return rows


@dataclass
class RankEntry:
    degree: int
    internal_degree: int
    dim: int
    rank_d_in: int
    rank_d_out: int
    betti: int
    reliable: bool

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "internal_degree": self.internal_degree,
            "dim": self.dim,
            "rank_d_in": self.rank_d_in,
            "rank_d_out": self.rank_d_out,
            "betti": self.betti,
            "reliable": self.reliable,
        }


def _window_ranks(gamma: Cochain, window: Window, degrees: Sequence[int], weight: int) -> dict:
    lo, hi = min(degrees) - 1, max(degrees) + 1
    bases = {t: elementary_basis(window, t, weight) for t in range(lo, hi + 1)}
    ranks = {}
    for t in range(lo, hi):
        if not bases[t] or not bases[t + 1]:
            ranks[t] = 0
            continue
        ranks[t] = rank(differential_matrix(gamma, window, bases[t], bases[t + 1], t))
    out = {}
    for t in degrees:
        dim = len(bases[t])
        rin, rout = ranks.get(t - 1, 0), ranks.get(t, 0)
        out[t] = (dim, rin, rout)
        out[("next", t)] = len(bases[t + 1])
    return out


def _has_basis(window: Window, degree: int, weight: int) -> bool:
    for shape, lab, key in window.input_keys():
        for o in window.outputs(lab, weight, key):
            if Elementary(shape, key, o, lab).degree(window.cat) == degree:
                return True
    return False


def cohomology_ranks(
    gamma: Cochain | MaurerCartanElement,
    degrees: Sequence[int],
    weights: Sequence[int],
    max_size: int,
    parts: tuple[str, ...] = ("A", "B", "K"),
    max_arity: int = 6,
    lookahead: int = 2,
) -> list[RankEntry]:
    """Betti numbers of the window complex of ``d_gamma`` restricted to ``parts``.

    Truncating by total input size gives a quotient complex (the
    differential never lowers the input size).  A degree is reported
    reliable when its Betti number agrees with the one at size
    ``max_size + 1`` and the differential leaving it is not cut off: if the
    next degree has no basis element in the window but has some within
    ``lookahead`` more units of size, the cocycle condition was never
    tested and the entry is flagged.
    """
    g = gamma.gamma if isinstance(gamma, MaurerCartanElement) else gamma
    out = []
    for w in weights:
        w0 = _window_ranks(g, Window(g.cat, max_size, max_arity, parts), degrees, w)
        w1 = _window_ranks(g, Window(g.cat, max_size + 1, max_arity, parts), degrees, w)
        wide = Window(g.cat, max_size + lookahead, max_arity, parts)
        for t in degrees:
            dim, rin, rout = w0[t]
            betti = dim - rin - rout
            d1, i1, o1 = w1[t]
            cut = dim > 0 and w0.get(("next", t), 0) == 0 and _has_basis(wide, t + 1, w)
            out.append(RankEntry(t, w, dim, rin, rout, betti, betti == d1 - i1 - o1 and not cut))
    return out


# ---------------------------------------------------------------------------
# randomized identity checks


def random_cochain(window: Window, degree: int, weight: int, rng, terms: int = 3, bound: int = 3) -> Cochain:
    """A cochain with a few random integer entries on the elementary basis of ``window``."""
    basis = elementary_basis(window, degree, weight)
    vec: list[Any] = [0] * len(basis)
    for i in rng.sample(range(len(basis)), min(terms, len(basis))):
        vec[i] = Fraction(rng.choice([c for c in range(-bound, bound + 1) if c]))
    return cochain_from_vector(window.cat, basis, vec, degree)


def _signed(x: Cochain, y: Cochain, exponent: int) -> Cochain:
    return x + y if exponent % 2 == 0 else x - y


def identity_suite(
    gamma: Cochain | MaurerCartanElement,
    source: Window,
    check: Window,
    rng,
    cases: int = 200,
    degrees: Sequence[int] = (-1, 0, 1),
    weights: Sequence[int] = (-1, 0, 1),
) -> dict[str, dict]:
    """Bracket identities and ``d^2 = 0``, plus the projections being chain maps.

    Random cochains are drawn on ``source`` and identities compared on the
    inputs of ``check``.  Each identity is tried ``cases`` times; the
    result maps the identity name to ``{"cases", "failures"}``.
    """
    g = gamma.gamma if isinstance(gamma, MaurerCartanElement) else gamma
    zero = Cochain(g.cat, {}, None)
    tallies = {name: {"cases": 0, "failures": 0} for name in ("antisymmetry", "jacobi", "d_squared", "projection_A", "projection_B")}

    def draw() -> Cochain:
        return random_cochain(source, rng.choice(list(degrees)), rng.choice(list(weights)), rng)

    def record(name: str, ok: bool) -> None:
        tallies[name]["cases"] += 1
        tallies[name]["failures"] += 0 if ok else 1

    for _ in range(cases):
        f, h, k = draw(), draw(), draw()
        a, b = f.degree, h.degree
        # [f, h] = -(-1)^{ab} [h, f]
        record("antisymmetry", gerstenhaber(f, h).agrees_with(_signed(zero, gerstenhaber(h, f), a * b + 1), check))
        # [f, [h, k]] = [[f, h], k] + (-1)^{ab} [h, [f, k]]
        lhs = gerstenhaber(f, gerstenhaber(h, k))
        rhs = _signed(gerstenhaber(gerstenhaber(f, h), k), gerstenhaber(h, gerstenhaber(f, k)), a * b)
        record("jacobi", lhs.agrees_with(rhs, check))
        record("d_squared", differential(g, differential(g, f)).agrees_with(zero, check))
        for side in ("A", "B"):
            projected = project(differential(g, f), side)
            pure = differential(g.restrict(side), project(f, side)).restrict(side)
            record(f"projection_{side}", projected.agrees_with(pure, check))
    return tallies

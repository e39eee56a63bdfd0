"""Koszul complexes of relative polynomial algebras and their Ext algebras, plus the Keller checks.

The relative setting: ``A = S(Y*)`` with ``Y = X_1 + X_2``, base variables
``x_i`` (from ``X_1``) and fiber variables ``y_j`` (from ``X_2``); the
Koszul complex adds odd generators ``theta_j`` paired with the ``y_j``.
Cohomological degree is ``-(number of thetas)``; the internal weight counts
every generator (``x``, ``y`` and ``theta``) once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .ainfty import (
    ComoduleMap,
    MultilinearOperator,
    TaylorStructure,
    derived_left_action,
    derived_right_action,
    end_dga,
    graded_algebra,
)
from .graded_core import (
    Ambient,
    DomainError,
    GradedElement,
    Monomial,
    Splitting,
    WeightPoly,
    merge_odd,
    monomial_basis,
)
from .hochschild import RankEntry, cohomology_ranks, rank

# an element of the Koszul complex: {(x exponents, y exponents, thetas): coeff}
KMono = tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
KElem = dict[KMono, Fraction]


def _add(out: KElem, key: KMono, c: Fraction) -> None:
    v = out.get(key, Fraction(0)) + c
    if v:
        out[key] = v
    else:
        out.pop(key, None)


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class KoszulComplex:
    """Koszul complex ``S(Y*) ⊗ S(X_2*[1])`` with ``d = y_j d/dtheta_j`` and ``d_dR = theta_j d/dy_j``."""

    n_base: int
    n_fiber: int
    truncation: int = 6

    def basis(self, r: int, weight: int) -> list[KMono]:
        """Monomials with ``r`` thetas and internal weight ``weight``."""
        poly = weight - r
        if poly < 0 or r > self.n_fiber:
            return []
        out = []
        for thetas in itertools.combinations(range(self.n_fiber), r):
            for exps in _compositions(poly, self.n_base + self.n_fiber):
                out.append((exps[: self.n_base], exps[self.n_base :], thetas))
        return out

    def d(self, el: Mapping[KMono, Fraction]) -> KElem:
        out: KElem = {}
        for (xe, ye, th), c in el.items():
            for pos, j in enumerate(th):
                # left derivative in theta_j, then multiply by the even y_j
                sign = -1 if pos % 2 else 1
                nth = th[:pos] + th[pos + 1 :]
                ny = ye[:j] + (ye[j] + 1,) + ye[j + 1 :]
                _add(out, (xe, ny, nth), c * sign)
        return out

    def d_dR(self, el: Mapping[KMono, Fraction]) -> KElem:
        out: KElem = {}
        for (xe, ye, th), c in el.items():
            for j, e in enumerate(ye):
                if not e or j in th:
                    continue
                ny = ye[:j] + (e - 1,) + ye[j + 1 :]
                res = merge_odd((j,), th)
                if res is None:
                    continue
                sign, nth = res
                _add(out, (xe, ny, nth), c * e * sign)
        return out

    def euler(self, el: Mapping[KMono, Fraction]) -> KElem:
        """Fiber Euler operator: counts ``y`` and ``theta`` factors."""
        out: KElem = {}
        for (xe, ye, th), c in el.items():
            _add(out, (xe, ye, th), c * (sum(ye) + len(th)))
        return out

    def homotopy_defect(self, weight: int) -> list[KMono]:
        """Basis monomials where ``d_dR d + d d_dR`` differs from the Euler operator."""
        bad = []
        for r in range(0, self.n_fiber + 1):
            for m in self.basis(r, weight):
                el = {m: Fraction(1)}
                lhs = self.d_dR(self.d(el))
                for k, v in self.d(self.d_dR(el)).items():
                    _add(lhs, k, v)
                rhs = self.euler(el)
                if lhs != rhs:
                    bad.append(m)
        return bad

    def d_squared_defect(self, weight: int) -> list[KMono]:
        bad = []
        for r in range(0, self.n_fiber + 1):
            for m in self.basis(r, weight):
                if self.d(self.d({m: Fraction(1)})):
                    bad.append(m)
        return bad

    def _matrix(self, r: int, weight: int) -> list[dict[int, Fraction]]:
        """Rows of ``d: K^{-r} -> K^{-r+1}`` at fixed weight."""
        target = {m: i for i, m in enumerate(self.basis(r - 1, weight))}
        rows_by_target: dict[int, dict[int, Fraction]] = {}
        for j, m in enumerate(self.basis(r, weight)):
            for k, v in self.d({m: Fraction(1)}).items():
                rows_by_target.setdefault(target[k], {})[j] = v
        return list(rows_by_target.values())

    def cohomology(self, weights: Iterable[int] | None = None) -> list[RankEntry]:
        """Betti numbers in degrees ``-r`` for every weight up to the truncation (all exact)."""
        ws = list(weights) if weights is not None else list(range(0, self.truncation + 1))
        out = []
        for w in ws:
            ranks = {r: rank(self._matrix(r, w)) for r in range(1, self.n_fiber + 2)}
            for r in range(0, self.n_fiber + 1):
                dim = len(self.basis(r, w))
                r_out = ranks.get(r, 0) if r >= 1 else 0
                r_in = ranks.get(r + 1, 0)
                out.append(RankEntry(-r, w, dim, r_in, r_out, dim - r_in - r_out, True))
        return out

    def quadratic_dual(self) -> dict:
        """``S(X_1*) ⊗ Λ(X_2)``: even generators from the base, odd ones from the fiber."""
        return {
            "even_generators": [f"x{i + 1}" for i in range(self.n_base)],
            "odd_generators": [f"xi{j + 1}" for j in range(self.n_fiber)],
            "relations": "graded commutativity",
        }


def koszul_complex(n_base: int, n_fiber: int, truncation: int = 6) -> KoszulComplex:
    if n_base < 0 or n_fiber < 0:
        raise DomainError("dimensions must be non-negative")
    return KoszulComplex(n_base, n_fiber, truncation)


# ---------------------------------------------------------------------------
# Ext through the Koszul resolution


# element of the quadratic dual: {(x exponents, xi indices): coeff}
DMono = tuple[tuple[int, ...], tuple[int, ...]]


def dual_product(a: Mapping[DMono, Fraction], b: Mapping[DMono, Fraction]) -> dict[DMono, Fraction]:
    out: dict[DMono, Fraction] = {}
    for (xa, ja), ca in a.items():
        for (xb, jb), cb in b.items():
            res = merge_odd(ja, jb)
            if res is None:
                continue
            s, j = res
            key = (tuple(p + q for p, q in zip(xa, xb)), j)
            v = out.get(key, Fraction(0)) + ca * cb * s
            if v:
                out[key] = v
            else:
                out.pop(key, None)
    return out


@dataclass(frozen=True)
class ExtClass:
    """``x^c xi_J`` seen as a cochain on ``K^{-|J|}``: contract the thetas, then set ``y = 0``."""

    xexp: tuple[int, ...]
    odd: tuple[int, ...]

    @property
    def bidegree(self) -> tuple[int, int]:
        p = len(self.odd)
        return p, sum(self.xexp) - p

    def contract(self, el: Mapping[KMono, Fraction]) -> KElem:
        """Lift acting on the whole complex: left derivatives in ``theta_J`` (last index first), times ``x^c``."""
        cur: KElem = dict(el)
        for j in reversed(self.odd):
            nxt: KElem = {}
            for (xe, ye, th), c in cur.items():
                if j in th:
                    pos = th.index(j)
                    sign = -1 if pos % 2 else 1
                    _add(nxt, (xe, ye, th[:pos] + th[pos + 1 :]), c * sign)
            cur = nxt
        out: KElem = {}
        for (xe, ye, th), c in cur.items():
            _add(out, (tuple(a + b for a, b in zip(xe, self.xexp)), ye, th), c)
        return out

    def evaluate(self, el: Mapping[KMono, Fraction]) -> dict[tuple[int, ...], Fraction]:
        """Value in ``A_0``: contract and set the fiber coordinates to zero."""
        out: dict[tuple[int, ...], Fraction] = {}
        for (xe, ye, th), c in self.contract(el).items():
            if any(ye) or th:
                continue
            out[xe] = out.get(xe, Fraction(0)) + c
        return {k: v for k, v in out.items() if v}


@dataclass
class ExtAlgebra:
    complex: KoszulComplex
    max_weight: int

    def classes(self, p: int, q: int) -> list[ExtClass]:
        poly = q + p
        if poly < 0 or p > self.complex.n_fiber:
            return []
        return [
            ExtClass(x, j)
            for j in itertools.combinations(range(self.complex.n_fiber), p)
            for x in _compositions(poly, self.complex.n_base)
        ]

    def table(self) -> list[dict]:
        """Nonzero bidegrees ``(p, q)`` with ``p + (q + p) <= max_weight``."""
        rows = []
        for p in range(0, self.complex.n_fiber + 1):
            for poly in range(0, self.max_weight + 1):
                q = poly - p
                cls = self.classes(p, q)
                if cls:
                    rows.append(
                        {
                            "p": p,
                            "q": q,
                            "dim": len(cls),
                            "generators": [_dual_text(c.xexp, c.odd) for c in cls],
                        }
                    )
        return rows

    def _unit(self, J: tuple[int, ...]) -> KElem:
        c = self.complex
        return {((0,) * c.n_base, (0,) * c.n_fiber, J): Fraction(1)}

    def read_back(self, cochain) -> dict[DMono, Fraction]:
        """Coordinates in the quadratic dual of a cochain on ``K^{-p}`` (given as a callable).

        The basis cochain of ``x^c xi_J`` takes the value ``±x^c`` on
        ``theta_J`` and vanishes on the other ``theta_K``; the sign is read
        off the contraction itself.
        """
        out: dict[DMono, Fraction] = {}
        for p in range(0, self.complex.n_fiber + 1):
            for J in itertools.combinations(range(self.complex.n_fiber), p):
                norm = ExtClass((0,) * self.complex.n_base, J).evaluate(self._unit(J))[(0,) * self.complex.n_base]
                for xe, c in cochain(self._unit(J)).items():
                    out[(xe, J)] = c / norm
        return {k: v for k, v in out.items() if v}

    def yoneda(self, alpha: ExtClass, beta: ExtClass) -> dict[DMono, Fraction]:
        """``(-1)^{(m1+n1)(m2+n2)} beta ∘ alpha_lift`` read back in the quadratic dual.

        The generators sit in degree zero, so a class of cohomological
        degree ``m`` has internal degree ``-m`` and the sign is trivial; it is
        kept to make the convention explicit.
        """
        m1, m2 = len(alpha.odd), len(beta.odd)
        n1, n2 = -m1, -m2
        sign = -1 if ((m1 + n1) * (m2 + n2)) % 2 else 1
        vals = self.read_back(lambda el: beta.evaluate(alpha.contract(el)))
        return {k: v * sign for k, v in vals.items()}

    def check_lift(self, alpha: ExtClass, weight: int) -> bool:
        """The contraction lift commutes with ``d`` up to the sign ``(-1)^p``."""
        p = len(alpha.odd)
        s = -1 if p % 2 else 1
        for r in range(0, self.complex.n_fiber + 1):
            for m in self.complex.basis(r, weight):
                el = {m: Fraction(1)}
                lhs = self.complex.d(alpha.contract(el))
                rhs = {k: v * s for k, v in alpha.contract(self.complex.d(el)).items()}
                if lhs != rhs:
                    return False
        return True

    def check_presentation(self) -> dict:
        """Compare Ext (opposite Yoneda product) with the quadratic dual on generators and relations."""
        c = self.complex
        gens_odd = [ExtClass((0,) * c.n_base, (j,)) for j in range(c.n_fiber)]
        gens_even = [ExtClass(tuple(int(k == i) for k in range(c.n_base)), ()) for i in range(c.n_base)]
        failures = []
        gens = gens_even + gens_odd
        for a in gens:
            for b in gens:
                got = self.yoneda(a, b)
                want = dual_product({(b.xexp, b.odd): Fraction(1)}, {(a.xexp, a.odd): Fraction(1)})
                if got != want:
                    failures.append(f"{_dual_text(a.xexp, a.odd)} * {_dual_text(b.xexp, b.odd)}")
        # relations: odd generators anticommute and square to zero, even ones are central
        for a in gens:
            for b in gens:
                ab = self.yoneda(a, b)
                ba = self.yoneda(b, a)
                s = -1 if (len(a.odd) * len(b.odd)) % 2 else 1
                if ab != {k: v * s for k, v in ba.items()}:
                    failures.append(f"commutation {_dual_text(a.xexp, a.odd)}, {_dual_text(b.xexp, b.odd)}")
        for a in gens_odd:
            if self.yoneda(a, a):
                failures.append(f"square {_dual_text(a.xexp, a.odd)}")
        # dimensions bidegree by bidegree against the Hilbert series of the dual
        dims_ok = True
        for row in self.table():
            p, q = row["p"], row["q"]
            expected = comb(c.n_fiber, p) * comb(q + p + c.n_base - 1, c.n_base - 1) if c.n_base else comb(c.n_fiber, p) * (q + p == 0)
            if row["dim"] != expected:
                dims_ok = False
        return {"isomorphic": not failures and dims_ok, "failures": failures, "dimensions_match": dims_ok}


def _dual_text(xexp: Sequence[int], odd: Sequence[int]) -> str:
    parts = [f"x{i + 1}^{e}" if e > 1 else f"x{i + 1}" for i, e in enumerate(xexp) if e]
    parts += [f"xi{j + 1}" for j in odd]
    return "*".join(parts) or "1"


def ext_algebra(n_base: int, n_fiber: int, truncation: int = 6) -> ExtAlgebra:
    return ExtAlgebra(koszul_complex(n_base, n_fiber, truncation), truncation)


# ---------------------------------------------------------------------------
# bar resolution to Koszul resolution


@dataclass(frozen=True)
class BarComplex:
    """Normalized bar resolution ``K ⊗ B_+^{⊗p} ⊗ B`` of ``K = S(X_1*)`` over ``B = S(Y*)``.

    Elements are ``{(k, (b_1..b_p), b): coeff}`` with monomials as exponent
    tuples of length ``n_base + n_fiber``; ``K`` uses only base variables.
    """

    n_base: int
    n_fiber: int
    p_max: int = 4

    def augment(self, mono: tuple[int, ...]) -> bool:
        return not any(mono[self.n_base :])

    def d(self, el: Mapping[tuple, Fraction]) -> dict[tuple, Fraction]:
        out: dict[tuple, Fraction] = {}

        def add(key, c):
            v = out.get(key, Fraction(0)) + c
            if v:
                out[key] = v
            else:
                out.pop(key, None)

        for (k, bs, b), c in el.items():
            p = len(bs)
            if p == 0:
                continue
            # i = 0: act on k (K is a quotient: the fiber part must vanish)
            s0 = -1
            if self.augment(bs[0]):
                nk = tuple(x + y for x, y in zip(k, bs[0]))
                add((nk, bs[1:], b), c * s0)
            for i in range(1, p):
                prod = tuple(x + y for x, y in zip(bs[i - 1], bs[i]))
                add((k, bs[: i - 1] + (prod,) + bs[i + 1 :], b), c * (-1 if (i + 1) % 2 else 1))
            last = tuple(x + y for x, y in zip(bs[-1], b))
            add((k, bs[:-1], last), c * (-1 if (p + 1) % 2 else 1))
        # normalized: drop terms with a constant bar entry
        return {key: v for key, v in out.items() if all(any(m) for m in key[1])}


def bar_to_koszul(n_base: int, n_fiber: int, p: int):
    """Chain map component from the bar to the Koszul resolution (``p`` is 0 or 1).

    ``p = 0``: ``(k|b) -> k b``.  ``p = 1``:
    ``(k|b_1|b_2) -> (-1)^{|k|} k (theta_i ∫_0^1 (d b_1/dy_i)(t y) dt) b_2``, with
    ``∫_0^1 t^m dt = 1/(m+1)`` on the fiber degree ``m`` of each term.
    All of ``k``, ``b`` are even here, so ``(-1)^{|k|} = 1``.
    """
    if p not in (0, 1):
        raise DomainError("only the components p = 0 and p = 1 are provided")
    nb = n_base

    def split(m: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return m[:nb], m[nb:]

    def f0(el: Mapping[tuple, Fraction]) -> KElem:
        out: KElem = {}
        for (k, bs, b), c in el.items():
            if bs:
                continue
            xe, ye = split(tuple(x + y for x, y in zip(k, b)))
            _add(out, (xe, ye, ()), c)
        return out

    def f1(el: Mapping[tuple, Fraction]) -> KElem:
        out: KElem = {}
        for (k, bs, b), c in el.items():
            if len(bs) != 1:
                continue
            b1 = bs[0]
            fiber_deg = sum(b1[nb:]) - 1
            for i in range(n_fiber):
                e = b1[nb + i]
                if not e:
                    continue
                der = b1[: nb + i] + (e - 1,) + b1[nb + i + 1 :]
                coeff = c * e * Fraction(1, fiber_deg + 1)
                xe, ye = split(tuple(x + y + z for x, y, z in zip(k, der, b)))
                _add(out, (xe, ye, (i,)), coeff)
        return out

    return f0 if p == 0 else f1


# ---------------------------------------------------------------------------
# End complexes and the Keller checks


@dataclass(frozen=True)
class EndBasis:
    """Elementary component of a comodule map: inputs (in argument order) to one output."""

    inputs: tuple[Monomial, ...]
    output: Monomial


def _size(m: Monomial) -> int:
    return m.poly_degree + m.odd_count


class EndComplex:
    """Normalized comodule-map complex of ``End_{-B}(K)`` (side ``"right"``) or ``End_{A-}(K)`` (``"left"``).

    Graded by bar length ``l`` and weight ``w = size(out) - size(inputs)``
    (size = polynomial degree + odd count), and split by the suspended
    degree so ``Q1`` is homogeneous.  ``k_size`` bounds ``K`` monomials.
    """

    def __init__(self, dA: TaylorStructure, dB: TaylorStructure, dK: TaylorStructure, side: str = "right", k_size: int = 0):
        self.dA, self.dB, self.dK = dA, dB, dK
        self.side = side
        self.end = end_dga(dK, dA, dB, side)
        self.K = dK.ambient
        self.other = dB.ambient if side == "right" else dA.ambient
        self.k_size = k_size
        self._k_monos = [m for m in monomial_basis(self.K, k_size) if _size(m) <= k_size]
        self._cache: dict = {}

    def _degree(self, e: EndBasis) -> int:
        return (len(e.output.odd) - 1) - sum(len(m.odd) - 1 for m in e.inputs)

    def basis(self, length: int, weight: int, degree: int | None = None) -> list[EndBasis]:
        key = (length, weight, degree)
        if key in self._cache:
            return self._cache[key]
        budget = -weight
        other = [m for m in monomial_basis(self.other, max(budget, 0)) if 0 < _size(m) <= max(budget, 0) + self.k_size]
        out = []
        for k in self._k_monos:
            for ins in itertools.product(other, repeat=length):
                s_in = _size(k) + sum(_size(m) for m in ins)
                s_out = s_in + weight
                if s_out < 0 or s_out > self.k_size:
                    continue
                for o in self._k_monos:
                    if _size(o) != s_out:
                        continue
                    inputs = (k,) + ins if self.side == "right" else ins + (k,)
                    e = EndBasis(inputs, o)
                    if degree is None or self._degree(e) == degree:
                        out.append(e)
        self._cache[key] = out
        return out

    def degrees(self, length: int, weight: int) -> list[int]:
        return sorted({self._degree(e) for e in self.basis(length, weight)})

    def _map_from_table(self, table: Mapping[tuple[Monomial, ...], Mapping[Monomial, Any]], length: int, degree: int) -> ComoduleMap:
        ins = (self.K,) + (self.other,) * length if self.side == "right" else (self.other,) * length + (self.K,)
        op = MultilinearOperator(ins, self.K, lambda key: table.get(key, {}))
        return ComoduleMap(self.side, {length: op}, self.K, self.other, degree, length)

    def vector(self, phi: ComoduleMap, basis: Sequence[EndBasis], length: int) -> dict[int, Any]:
        """Coordinates of the length-``length`` component of ``phi`` on ``basis``."""
        vals: dict[int, Any] = {}
        by_in: dict[tuple[Monomial, ...], list[int]] = {}
        for i, e in enumerate(basis):
            by_in.setdefault(e.inputs, []).append(i)
        for inputs, idx in by_in.items():
            els = [GradedElement({m: Fraction(1)}, self.K if j == (0 if self.side == "right" else len(inputs) - 1) else self.other, check=False) for j, m in enumerate(inputs)]
            if self.side == "right":
                res = phi.component(length, els[0], els[1:])
            else:
                res = phi.component(length, els[-1], els[:-1])
            for i in idx:
                c = res.terms.get(basis[i].output, 0)
                if c != 0:
                    vals[i] = c
        return vals

    def q1_matrix(self, length: int, weight: int, degree: int) -> list[dict[int, Any]]:
        """Rows of ``Q1`` from ``(l, w, t)`` to ``(l + 1, w, t + 1)``.

        Entries are rationals, or weight polynomials when the structures
        carry symbols (graph weights, ``hbar``).
        """
        src = self.basis(length, weight, degree)
        tgt = self.basis(length + 1, weight, degree + 1)
        if not src or not tgt:
            return []
        table: dict[tuple[Monomial, ...], dict[Monomial, WeightPoly]] = {}
        for i, e in enumerate(src):
            table.setdefault(e.inputs, {})[e.output] = WeightPoly.symbol(f"e{i:06d}")
        generic = self._map_from_table(table, length, degree)
        image = self.end.Q1(generic)
        vec = self.vector(image, tgt, length + 1)
        rows: dict[int, dict[int, Any]] = {}
        for i, c in vec.items():
            row = rows.setdefault(i, {})
            for mono, v in WeightPoly.lift(c).terms.items():
                syms = [s for s in mono if s.startswith("e") and s[1:].isdigit()]
                if len(syms) != 1:
                    raise DomainError("nonlinear entry in the End differential")
                col = int(syms[0][1:])
                rest = tuple(s for s in mono if s != syms[0])
                term = WeightPoly({rest: v}) if rest else Fraction(v)
                row[col] = row[col] + term if col in row else term
        return [{j: (c.constant() if isinstance(c, WeightPoly) and c.is_constant() else c) for j, c in r.items()} for r in rows.values()]

    def cohomology(self, length: int, weight: int) -> dict:
        """Betti number at ``(l, w)`` summed over suspended degrees."""
        total = {"dim": 0, "rank_d_in": 0, "rank_d_out": 0, "betti": 0}
        for t in self.degrees(length, weight):
            dim = len(self.basis(length, weight, t))
            r_out = rank(self.q1_matrix(length, weight, t))
            r_in = rank(self.q1_matrix(length - 1, weight, t - 1)) if length >= 1 else 0
            total["dim"] += dim
            total["rank_d_in"] += r_in
            total["rank_d_out"] += r_out
            total["betti"] += dim - r_in - r_out
        return total

    def class_rank(self, maps: Sequence[ComoduleMap], length: int, weight: int) -> dict:
        """Rank of the classes of ``maps`` in ``H^{(l, w)}`` (maps must be cocycles there)."""
        out = {"rank": 0, "cocycles": True}
        for t in self.degrees(length, weight):
            basis = self.basis(length, weight, t)
            vecs = [self.vector(m, basis, length) for m in maps if m.degree == t]
            vecs = [v for v in vecs if v]
            if not vecs:
                continue
            boundary_rows = _columns_to_rows(self.q1_matrix(length - 1, weight, t - 1)) if length >= 1 else []
            out["rank"] += rank(boundary_rows + vecs) - rank(boundary_rows)
            # cocycle check: Q1 applied to each map vanishes on the next basis
            tgt = self.basis(length + 1, weight, t + 1)
            for m in maps:
                if m.degree != t:
                    continue
                if self.vector(self.end.Q1(m), tgt, length + 1):
                    out["cocycles"] = False
        return out


def _columns_to_rows(rows: Sequence[Mapping[int, Fraction]]) -> list[dict[int, Fraction]]:
    """Transpose a sparse row list: image vectors are the columns of the matrix."""
    cols: dict[int, dict[int, Fraction]] = {}
    for i, row in enumerate(rows):
        for j, v in row.items():
            cols.setdefault(j, {})[i] = v
    return list(cols.values())


def _pure_module(splitting: Splitting) -> tuple[TaylorStructure, TaylorStructure, TaylorStructure]:
    A, K, B = Ambient("A", splitting), Ambient("K", splitting), Ambient("B", splitting)
    dK = TaylorStructure(
        "bimodule",
        {(1, 0): MultilinearOperator.product((A, K), K), (0, 1): MultilinearOperator.product((K, B), K)},
        K,
        A,
        B,
        (1, 1),
        "products",
    )
    return graded_algebra(A), graded_algebra(B), dK


def diagonal_concentration(splitting: Splitting, side: str = "right", max_length: int = 4, max_weight: int = 6) -> dict:
    """Ext of ``B`` (side ``"right"``) or ``A`` (``"left"``) with coefficients in ``K``, by bar length and weight.

    Uses the module structure given by the products alone.  Returns the
    table of Betti numbers and whether every class sits at ``w = -l``.
    """
    dA, dB, dK = _pure_module(splitting)
    E = EndComplex(dA, dB, dK, side)
    rows = []
    ok = True
    for w in range(0, -max_weight - 1, -1):
        for l in range(0, min(max_length, -w) + 1):
            h = E.cohomology(l, w)
            rows.append({"p": l, "q": w, **h})
            if h["betti"] and l != -w:
                ok = False
    return {"concentrated": ok, "table": rows}


@dataclass
class KellerReport:
    side: str
    rows: list[dict] = field(default_factory=list)

    @property
    def isomorphism(self) -> bool:
        return all(r["iso"] for r in self.rows if r["reliable"])

    def to_json(self) -> dict:
        return {"side": self.side, "isomorphism": self.isomorphism, "rows": self.rows}


def _source_basis(amb: Ambient, p: int) -> list[GradedElement]:
    """Monomials of the acting algebra in bidegree ``(p, -p)``: size ``p`` with weight ``-p`` on the End side."""
    out = []
    for m in monomial_basis(amb, p):
        # the action consumes every odd factor and every polynomial factor once
        if _size(m) == p and (m.odd_count == p if amb.kind == "A" else m.poly_degree == p):
            out.append(GradedElement({m: Fraction(1)}, amb, check=False))
    return out


def check_keller(dA: TaylorStructure, dB: TaylorStructure, dK: TaylorStructure, side: str = "right", p_max: int = 3) -> KellerReport:
    """Map induced by ``L_A`` (side ``"right"``) or ``R_B`` (``"left"``) on cohomology in bidegrees ``(p, -p)``.

    For each ``p`` reports the dimension of the source, of the cohomology
    of the End complex, the rank of the induced map, and whether the End
    cohomology vanishes off the diagonal at weight ``-p``.
    """
    E = EndComplex(dA, dB, dK, side)
    src_amb = dA.ambient if side == "right" else dB.ambient
    act = derived_left_action(dK) if side == "right" else derived_right_action(dK)
    rep = KellerReport(side)
    for p in range(0, p_max + 1):
        src = _source_basis(src_amb, p)
        h = E.cohomology(p, -p)
        if p == 0:
            maps = [_identity(E)]
        else:
            maps = [act(a) for a in src]
        cr = E.class_rank(maps, p, -p)
        off = [l for l in range(0, p) if E.cohomology(l, -p)["betti"]]
        rep.rows.append(
            {
                "p": p,
                "q": -p,
                "source_dim": 1 if p == 0 else len(src),
                "target_dim": h["betti"],
                "image_rank": cr["rank"],
                "cocycles": cr["cocycles"],
                "off_diagonal": off,
                "iso": cr["cocycles"] and cr["rank"] == h["betti"] == (1 if p == 0 else len(src)) and not off,
                "reliable": True,
            }
        )
    return rep


def _identity(E: EndComplex) -> ComoduleMap:
    return ComoduleMap(E.side, {0: lambda k: k}, E.K, E.other, 0, 0)


PAIRING_WEIGHTS = {"0 3 1 | 0>2:mp": Fraction(1), "0 3 1 | 2>0:pm": Fraction(1)}


def undeformed_bimodule(splitting: Splitting, total_arity: int = 4, basis_truncation: tuple[int, int, int] | None = None) -> tuple[TaylorStructure, Any]:
    """Bimodule with components ``m + n <= total_arity``, weights forced by the relations.

    Starts from the unit pairing weights; returns the structure and the
    :class:`~branecalc.ainfty.ForcedWeights` record.
    """
    from .ainfty import forced_weights, graph_bimodule
    from .geometry import WeightBook

    comps = [(m, n) for m in range(total_arity + 1) for n in range(total_arity + 1) if (m, n) != (0, 0) and m + n <= total_arity]
    rels = [(m, n) for m in range(total_arity + 1) for n in range(total_arity + 2) if m + n <= total_arity + 1]
    trunc = basis_truncation or (2, 2, total_arity)
    fw = forced_weights(splitting, rels, comps, PAIRING_WEIGHTS, trunc)
    book = WeightBook(exact=fw.values)
    return graph_bimodule(splitting, weights=book, components=comps), fw


def check_projections(
    dA: TaylorStructure,
    dB: TaylorStructure,
    dK: TaylorStructure,
    max_size: int = 3,
    degrees: Sequence[int] = (0, 1, 2),
    weights: Sequence[int] = (-1, 0, 1),
) -> dict:
    """Acyclicity of the kernels of the projections of the category cochains onto ``A`` and ``B``.

    ``p_B`` is a quasi-isomorphism exactly when the cochains supported on
    ``A`` and ``K`` form an acyclic subcomplex, and symmetrically for ``p_A``.
    Entries carry the reliability flag of the size window.
    """
    from .hochschild import MaurerCartanElement

    mc = MaurerCartanElement.from_structures(dA, dB, dK)
    out = {}
    for name, parts in (("p_B", ("A", "K")), ("p_A", ("B", "K"))):
        entries = cohomology_ranks(mc, list(degrees), list(weights), max_size, parts=parts)
        out[name] = {
            "kernel_parts": list(parts),
            "acyclic": all(e.betti == 0 for e in entries if e.reliable),
            "all_reliable": all(e.reliable for e in entries),
            "entries": [e.to_json() for e in entries],
        }
    return out

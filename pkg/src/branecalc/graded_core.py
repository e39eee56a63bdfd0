"""Exact graded-commutative algebra over the rationals.

Everything lives inside one supercommutative polynomial ring in even
coordinates ``x_0..x_{d-1}`` and odd generators ``t_0..t_{d-1}``, where
``t_k`` stands for the coordinate vector field along ``x_k``.  The algebras
``A``, ``B``, ``K`` attached to a pair of coordinate subspaces and the
polyvector fields ``T`` are subrings picked out by index classes.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Iterable, Iterator, Mapping, NamedTuple, Sequence


class DomainError(ValueError):
    """Raised when an operation receives inputs outside its domain."""


# ---------------------------------------------------------------------------
# splittings and index classes

CLASS_NAMES = ("uv", "uvperp", "upv", "perp")


@dataclass(frozen=True)
class Splitting:
    """Block dimensions of ``X = (U∩V) ⊕ (U∩V^⊥) ⊕ (U^⊥∩V) ⊕ (U+V)^⊥``.

    Coordinates are numbered block by block in the field order, so the
    first ``d_uv`` indices span ``U∩V`` and so on.
    """

    d_uv: int = 0
    d_uvperp: int = 0
    d_upv: int = 0
    d_perp: int = 0

    def __post_init__(self) -> None:
        for v in (self.d_uv, self.d_uvperp, self.d_upv, self.d_perp):
            if not isinstance(v, int) or v < 0:
                raise DomainError(f"block dimensions must be non-negative integers, got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "Splitting":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise DomainError(f"expected four comma-separated dimensions, got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise DomainError(f"bad dimension list {text!r}") from exc

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.d_uv, self.d_uvperp, self.d_upv, self.d_perp)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    def block(self, name: str) -> tuple[int, ...]:
        """Indices of one of the four blocks ``uv``, ``uvperp``, ``upv``, ``perp``."""
        if name not in CLASS_NAMES:
            raise DomainError(f"unknown block {name!r}")
        start = 0
        for n, size in zip(CLASS_NAMES, self.dims):
            if n == name:
                return tuple(range(start, start + size))
            start += size
        raise AssertionError("unreachable")

    def union(self, *names: str) -> tuple[int, ...]:
        return tuple(sorted(i for n in names for i in self.block(n)))

    # I1 = coordinates of U, I2 = coordinates of V
    @property
    def in_u(self) -> tuple[int, ...]:
        return self.union("uv", "uvperp")

    @property
    def in_v(self) -> tuple[int, ...]:
        return self.union("uv", "upv")

    def block_of(self, index: int) -> str:
        for n in CLASS_NAMES:
            if index in self.block(n):
                return n
        raise DomainError(f"index {index} outside dimension {self.dim}")

    def __str__(self) -> str:
        return ",".join(str(v) for v in self.dims)


@dataclass(frozen=True)
class Ambient:
    """One of the algebras ``A``, ``B``, ``K`` or ``T`` over a splitting."""

    kind: str
    splitting: Splitting

    def __post_init__(self) -> None:
        if self.kind not in ("A", "B", "K", "T"):
            raise DomainError(f"unknown ambient kind {self.kind!r}")

    @property
    def even_indices(self) -> tuple[int, ...]:
        s = self.splitting
        return {
            "A": s.union("uv", "uvperp"),
            "B": s.union("uv", "upv"),
            "K": s.union("uv"),
            "T": tuple(range(s.dim)),
        }[self.kind]

    @property
    def odd_indices(self) -> tuple[int, ...]:
        s = self.splitting
        return {
            "A": s.union("upv", "perp"),
            "B": s.union("uvperp", "perp"),
            "K": s.union("perp"),
            "T": tuple(range(s.dim)),
        }[self.kind]

    @property
    def degree_shift(self) -> int:
        """Polyvector fields carry the shifted degree ``#odd - 1``."""
        return -1 if self.kind == "T" else 0

    def admits(self, mono: "Monomial") -> bool:
        even = set(self.even_indices)
        odd = set(self.odd_indices)
        return all(e == 0 or i in even for i, e in enumerate(mono.exps)) and all(
            k in odd for k in mono.odd
        )

    def __str__(self) -> str:
        return f"{self.kind}[{self.splitting}]"


# ---------------------------------------------------------------------------
# monomials and signs


class Monomial(NamedTuple):
    """``x^exps * t_{odd[0]} * t_{odd[1]} * ...`` with ``odd`` strictly increasing."""

    exps: tuple[int, ...]
    odd: tuple[int, ...]

    @property
    def poly_degree(self) -> int:
        return sum(self.exps)

    @property
    def odd_count(self) -> int:
        return len(self.odd)


@dataclass(frozen=True)
class Sign:
    value: int

    def __post_init__(self) -> None:
        if self.value not in (1, -1):
            raise DomainError("a sign is +1 or -1")

    def __mul__(self, other: "Sign") -> "Sign":
        return Sign(self.value * other.value)

    def __int__(self) -> int:
        return self.value


def sort_odd(indices: Sequence[int]) -> tuple[int, tuple[int, ...]] | None:
    """Sort a word in odd generators; return ``(sign, sorted)`` or ``None`` if it vanishes."""
    if len(set(indices)) != len(indices):
        return None
    inv = sum(1 for a, b in itertools.combinations(indices, 2) if a > b)
    return (-1 if inv % 2 else 1), tuple(sorted(indices))


def merge_odd(left: tuple[int, ...], right: tuple[int, ...]) -> tuple[int, tuple[int, ...]] | None:
    """Product of two sorted odd words, as ``(sign, merged)`` or ``None``."""
    if not left or not right:
        return 1, left + right
    rs = set(right)
    if any(k in rs for k in left):
        return None
    # each pair (l in left, r in right) with l > r costs one transposition
    inv = 0
    j = 0
    for l in left:
        while j < len(right) and right[j] < l:
            j += 1
        inv += j
    return (-1 if inv % 2 else 1), tuple(sorted(left + right))


def shuffle_sign(perm: Sequence[int], degrees: Sequence[int]) -> Sign:
    """Koszul sign of ``v_1...v_n -> v_{perm(1)}...v_{perm(n)}``.

    ``perm`` lists the new order as 0-based positions of the old factors.
    Each pair of factors whose relative order flips contributes the product
    of their degrees.
    """
    n = len(perm)
    if len(degrees) != n:
        raise DomainError("permutation and degree list differ in length")
    if sorted(perm) != list(range(n)):
        raise DomainError(f"{perm!r} is not a permutation of range({n})")
    parity = 0
    for a in range(n):
        for b in range(a + 1, n):
            if perm[a] > perm[b]:
                parity += degrees[perm[a]] * degrees[perm[b]]
    return Sign(-1 if parity % 2 else 1)


# ---------------------------------------------------------------------------
# coefficient helpers


def is_zero(c: Any) -> bool:
    return c == 0


def as_coeff(c: Any) -> Any:
    if isinstance(c, int) and not isinstance(c, bool):
        return Fraction(c)
    return c


class WeightPoly:
    """Polynomial with rational coefficients in named symbols (graph weights).

    Stored as ``{sorted tuple of symbol names: Fraction}``; a symbol may
    repeat inside a key to express powers.  Works as a coefficient ring for
    :class:`GradedElement`.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple[str, ...], Any] | None = None):
        clean: dict[tuple[str, ...], Fraction] = {}
        for k, v in (terms or {}).items():
            v = Fraction(v)
            if v:
                key = tuple(sorted(k))
                clean[key] = clean.get(key, Fraction(0)) + v
                if not clean[key]:
                    del clean[key]
        self.terms = clean

    @classmethod
    def symbol(cls, name: str) -> "WeightPoly":
        return cls({(name,): Fraction(1)})

    @classmethod
    def const(cls, c: Any) -> "WeightPoly":
        return cls({(): Fraction(c)})

    @staticmethod
    def lift(c: Any) -> "WeightPoly":
        return c if isinstance(c, WeightPoly) else WeightPoly.const(c)

    def symbols(self) -> set[str]:
        return {s for k in self.terms for s in k}

    @property
    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    def is_constant(self) -> bool:
        return all(not k for k in self.terms)

    def constant(self) -> Fraction:
        return self.terms.get((), Fraction(0))

    def __repr__(self) -> str:
        return f"WeightPoly({self.to_text()})"

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for k in sorted(self.terms, key=lambda k: (len(k), k)):
            c = self.terms[k]
            parts.append(f"{c}" + "".join(f"*[{s}]" for s in k))
        return " + ".join(parts)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, WeightPoly):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self.terms == WeightPoly.const(other).terms
        return NotImplemented

    def __hash__(self) -> int:
        return hash(frozenset(self.terms.items()))

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __add__(self, other: Any) -> "WeightPoly":
        if not isinstance(other, (WeightPoly, int, Fraction)):
            return NotImplemented
        o = WeightPoly.lift(other)
        out = dict(self.terms)
        for k, v in o.terms.items():
            out[k] = out.get(k, Fraction(0)) + v
        return WeightPoly(out)

    __radd__ = __add__

    def __neg__(self) -> "WeightPoly":
        return WeightPoly({k: -v for k, v in self.terms.items()})

    def __sub__(self, other: Any) -> "WeightPoly":
        return self + (-WeightPoly.lift(other))

    def __rsub__(self, other: Any) -> "WeightPoly":
        return WeightPoly.lift(other) + (-self)

    def __mul__(self, other: Any) -> "WeightPoly":
        if isinstance(other, (int, Fraction)):
            c = Fraction(other)
            return WeightPoly({k: v * c for k, v in self.terms.items()})
        if not isinstance(other, WeightPoly):
            return NotImplemented
        out: dict[tuple[str, ...], Fraction] = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(sorted(k1 + k2))
                out[k] = out.get(k, Fraction(0)) + v1 * v2
        return WeightPoly(out)

    __rmul__ = __mul__

    def substitute(self, values: Mapping[str, Any]) -> "WeightPoly":
        """Replace some symbols by exact rational values."""
        out = WeightPoly()
        for k, v in self.terms.items():
            term = WeightPoly.const(v)
            for s in k:
                term = term * (WeightPoly.lift(values[s]) if s in values else WeightPoly.symbol(s))
            out = out + term
        return out

    def evaluate(self, values: Mapping[str, tuple[float, float]]) -> tuple[float, float]:
        """Value and linearized standard error given ``{symbol: (value, stderr)}``.

        Symbols are treated as independent estimates.
        """
        val = 0.0
        grads: dict[str, float] = {}
        for k, c in self.terms.items():
            cf = float(c)
            prod = cf
            for s in k:
                prod *= values[s][0]
            val += prod
            for i, s in enumerate(k):
                g = cf
                for j, s2 in enumerate(k):
                    if j != i:
                        g *= values[s2][0]
                grads[s] = grads.get(s, 0.0) + g
        var = sum((g * values[s][1]) ** 2 for s, g in grads.items())
        return val, var**0.5

    def normalized(self) -> "WeightPoly":
        """Scale so the first term (in a fixed order) has coefficient 1."""
        if not self.terms:
            return self
        k0 = min(self.terms, key=lambda k: (len(k), k))
        return self * (1 / self.terms[k0])


def coeff_is_numeric(c: Any) -> bool:
    return isinstance(c, WeightPoly) and not c.is_constant()


# ---------------------------------------------------------------------------
# graded elements


class GradedElement:
    """Finite linear combination of monomials in a fixed ambient algebra.

    Coefficients are ``Fraction`` by default; any commutative ring element
    supporting ``+``, ``*`` and comparison with ``0`` works (the numeric
    layers use polynomials in graph weights).
    """

    __slots__ = ("terms", "ambient")

    def __init__(self, terms: Mapping[Monomial, Any], ambient: Ambient, check: bool = True):
        clean: dict[Monomial, Any] = {}
        for mono, c in terms.items():
            if is_zero(c):
                continue
            if check:
                if len(mono.exps) != ambient.splitting.dim:
                    raise DomainError("monomial length differs from ambient dimension")
                if list(mono.odd) != sorted(set(mono.odd)):
                    raise DomainError(f"odd factors {mono.odd} not strictly increasing")
                if not ambient.admits(mono):
                    raise DomainError(f"monomial {mono} does not belong to {ambient}")
            clean[mono] = as_coeff(c)
        self.terms = clean
        self.ambient = ambient

    # constructors
    @classmethod
    def zero(cls, ambient: Ambient) -> "GradedElement":
        return cls({}, ambient)

    @classmethod
    def one(cls, ambient: Ambient) -> "GradedElement":
        return cls({Monomial((0,) * ambient.splitting.dim, ()): Fraction(1)}, ambient)

    @classmethod
    def monomial(cls, ambient: Ambient, exps: Sequence[int] = (), odd: Sequence[int] = (), coeff: Any = 1) -> "GradedElement":
        d = ambient.splitting.dim
        e = tuple(exps) if exps else (0,) * d
        res = sort_odd(list(odd))
        if res is None:
            return cls.zero(ambient)
        sign, o = res
        return cls({Monomial(e, o): as_coeff(coeff) * sign}, ambient)

    @classmethod
    def x(cls, ambient: Ambient, i: int) -> "GradedElement":
        e = [0] * ambient.splitting.dim
        e[i] = 1
        return cls.monomial(ambient, e)

    @classmethod
    def t(cls, ambient: Ambient, i: int) -> "GradedElement":
        return cls.monomial(ambient, (), (i,))

    # basic protocol
    def __repr__(self) -> str:
        return f"GradedElement({self.to_text()!r}, {self.ambient})"

    def __eq__(self, other: object) -> bool:
        if isinstance(other, GradedElement):
            return self.ambient.splitting == other.ambient.splitting and self.terms == other.terms
        if other == 0:
            return not self.terms
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.ambient, frozenset(self.terms.items())))

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def _same(self, other: "GradedElement") -> None:
        if self.ambient != other.ambient:
            raise DomainError(f"ambient mismatch: {self.ambient} vs {other.ambient}")

    def __add__(self, other: "GradedElement") -> "GradedElement":
        self._same(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out[m] + c if m in out else c
        return GradedElement(out, self.ambient, check=False)

    def __neg__(self) -> "GradedElement":
        return GradedElement({m: -c for m, c in self.terms.items()}, self.ambient, check=False)

    def __sub__(self, other: "GradedElement") -> "GradedElement":
        return self + (-other)

    def scale(self, c: Any) -> "GradedElement":
        c = as_coeff(c)
        return GradedElement({m: c * v for m, v in self.terms.items()}, self.ambient, check=False)

    def __mul__(self, other: Any) -> "GradedElement":
        if isinstance(other, GradedElement):
            return multiply(self, other)
        return self.scale(other)

    def __rmul__(self, other: Any) -> "GradedElement":
        return self.scale(other)

    # gradings
    def degrees(self) -> set[int]:
        sh = self.ambient.degree_shift
        return {m.odd_count + sh for m in self.terms}

    @property
    def degree(self) -> int:
        """Degree of a homogeneous element (zero counts as degree 0)."""
        ds = self.degrees()
        if not ds:
            return 0
        if len(ds) != 1:
            raise DomainError("element is not homogeneous")
        return ds.pop()

    def poly_degrees(self) -> set[int]:
        return {m.poly_degree for m in self.terms}

    def homogeneous_parts(self) -> dict[int, "GradedElement"]:
        parts: dict[int, dict[Monomial, Any]] = {}
        sh = self.ambient.degree_shift
        for m, c in self.terms.items():
            parts.setdefault(m.odd_count + sh, {})[m] = c
        return {k: GradedElement(v, self.ambient, check=False) for k, v in parts.items()}

    # coercions between ambients
    def restrict(self, kind: str) -> "GradedElement":
        """Set absent coordinates to zero and drop absent odd generators."""
        target = Ambient(kind, self.ambient.splitting)
        return GradedElement(
            {m: c for m, c in self.terms.items() if target.admits(m)}, target, check=False
        )

    def include(self, kind: str = "T") -> "GradedElement":
        """View the element inside a larger ambient (no change of terms)."""
        return GradedElement(self.terms, Ambient(kind, self.ambient.splitting))

    # derivations
    def derivative(self, i: int) -> "GradedElement":
        out: dict[Monomial, Any] = {}
        for m, c in self.terms.items():
            e = m.exps[i]
            if e:
                exps = m.exps[:i] + (e - 1,) + m.exps[i + 1 :]
                out[Monomial(exps, m.odd)] = c * e
        return GradedElement(out, self.ambient, check=False)

    def contract(self, k: int) -> "GradedElement":
        """Left derivative with respect to the odd generator ``t_k``."""
        out: dict[Monomial, Any] = {}
        for m, c in self.terms.items():
            if k in m.odd:
                pos = m.odd.index(k)
                odd = m.odd[:pos] + m.odd[pos + 1 :]
                out[Monomial(m.exps, odd)] = -c if pos % 2 else c
        return GradedElement(out, self.ambient, check=False)

    def map_coeffs(self, f: Callable[[Any], Any]) -> "GradedElement":
        return GradedElement({m: f(c) for m, c in self.terms.items()}, self.ambient, check=False)

    # text form
    def to_text(self) -> str:
        if not self.terms:
            return "0"
        pieces = []
        for m in sorted(self.terms, key=monomial_sort_key):
            factors = [f"x{i + 1}^{e}" if e > 1 else f"x{i + 1}" for i, e in enumerate(m.exps) if e]
            factors += [f"t{k + 1}" for k in m.odd]
            pieces.append(f"{self.terms[m]} * " + " * ".join(factors) if factors else f"{self.terms[m]}")
        return " + ".join(pieces)

    @classmethod
    def parse(cls, text: str, ambient: Ambient) -> "GradedElement":
        """Inverse of :meth:`to_text` for rational coefficients."""
        text = text.strip()
        if text == "0":
            return cls.zero(ambient)
        out = cls.zero(ambient)
        d = ambient.splitting.dim
        for chunk in re.split(r"\s\+\s", text):
            fields = [f.strip() for f in chunk.split("*")]
            coeff = Fraction(fields[0])
            exps = [0] * d
            odd: list[int] = []
            for f in fields[1:]:
                mo = re.fullmatch(r"x(\d+)(?:\^(\d+))?", f)
                if mo:
                    exps[int(mo.group(1)) - 1] += int(mo.group(2) or 1)
                    continue
                mo = re.fullmatch(r"t(\d+)", f)
                if not mo:
                    raise DomainError(f"cannot parse factor {f!r}")
                odd.append(int(mo.group(1)) - 1)
            out = out + cls.monomial(ambient, exps, odd, coeff)
        return out


def monomial_sort_key(m: Monomial) -> tuple:
    """Graded-lex on even exponents, then the odd index list."""
    return (m.poly_degree, tuple(-e for e in m.exps), len(m.odd), m.odd)


def multiply(a: GradedElement, b: GradedElement) -> GradedElement:
    """Graded-commutative product with Koszul signs."""
    if a.ambient != b.ambient:
        raise DomainError(f"ambient mismatch: {a.ambient} vs {b.ambient}")
    out: dict[Monomial, Any] = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            res = merge_odd(ma.odd, mb.odd)
            if res is None:
                continue
            sign, odd = res
            m = Monomial(tuple(x + y for x, y in zip(ma.exps, mb.exps)), odd)
            c = ca * cb
            c = -c if sign < 0 else c
            out[m] = out[m] + c if m in out else c
    return GradedElement(out, a.ambient, check=False)


def product(elements: Sequence[GradedElement], ambient: Ambient | None = None) -> GradedElement:
    if not elements:
        if ambient is None:
            raise DomainError("empty product needs an ambient")
        return GradedElement.one(ambient)
    out = elements[0]
    for e in elements[1:]:
        out = multiply(out, e)
    return out


# ---------------------------------------------------------------------------
# Schouten-Nijenhuis bracket


def _require_poly(g: GradedElement) -> None:
    if g.ambient.kind != "T":
        raise DomainError(f"expected a polyvector field, got ambient {g.ambient}")


def compose_dot(p: GradedElement, q: GradedElement) -> GradedElement:
    """``p • q``: contract one vector slot of ``p`` into a derivative of ``q``."""
    out = GradedElement.zero(p.ambient)
    for i in range(p.ambient.splitting.dim):
        dp = p.contract(i)
        if dp.is_zero():
            continue
        dq = q.derivative(i)
        if dq.is_zero():
            continue
        out = out + multiply(dp, dq)
    return out


def quadratic_bracket(p: GradedElement, q: GradedElement) -> GradedElement:
    """Symmetric two-bracket ``p•q + (-1)^{kp kq} q•p`` with ``k`` the number of vector slots."""
    out = GradedElement.zero(p.ambient)
    for kp, pp in p.homogeneous_parts().items():
        for kq, qq in q.homogeneous_parts().items():
            a, b = kp + 1, kq + 1
            term = compose_dot(pp, qq)
            other = compose_dot(qq, pp)
            out = out + term + (other if (a * b) % 2 == 0 else -other)
    return out


def schouten_bracket(g1: GradedElement, g2: GradedElement) -> GradedElement:
    """Schouten-Nijenhuis bracket, graded antisymmetric in shifted degree.

    On vector fields it is the Lie bracket, e.g.
    ``[d1, x1 x2 d1^d2] = x2 d1^d2``.
    """
    _require_poly(g1)
    _require_poly(g2)
    if g1.ambient != g2.ambient:
        raise DomainError("polyvector fields over different splittings")
    out = GradedElement.zero(g1.ambient)
    for s1, p1 in g1.homogeneous_parts().items():
        for s2, p2 in g2.homogeneous_parts().items():
            k1, k2 = s1 + 1, s2 + 1
            val = quadratic_bracket(p2, p1)
            out = out + (val if ((k2 - 1) * k1) % 2 else -val)
    return out


# ---------------------------------------------------------------------------
# tensors and edge operators


class Tensor:
    """Element of ``T^{⊗n}`` stored as ``{(mono_1, ..., mono_n): coeff}``."""

    __slots__ = ("terms", "ambients")

    def __init__(self, terms: Mapping[tuple[Monomial, ...], Any], ambients: tuple[Ambient, ...]):
        self.terms = {k: as_coeff(v) for k, v in terms.items() if not is_zero(v)}
        self.ambients = ambients

    @classmethod
    def from_elements(cls, elements: Sequence[GradedElement]) -> "Tensor":
        terms: dict[tuple[Monomial, ...], Any] = {(): Fraction(1)}
        for el in elements:
            new: dict[tuple[Monomial, ...], Any] = {}
            for key, c in terms.items():
                for m, v in el.terms.items():
                    new[key + (m,)] = c * v
            terms = new
        return cls(terms, tuple(e.ambient for e in elements))

    @property
    def arity(self) -> int:
        return len(self.ambients)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.terms == other.terms

    def __add__(self, other: "Tensor") -> "Tensor":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return Tensor(out, self.ambients)

    def __repr__(self) -> str:
        return f"Tensor({len(self.terms)} terms, arity {self.arity})"

    def is_zero(self) -> bool:
        return not self.terms

    def contract_product(self, ambient: Ambient) -> GradedElement:
        """Multiply the tensor factors in order and restrict to ``ambient``."""
        out: dict[Monomial, Any] = {}
        d = ambient.splitting.dim
        for key, c in self.terms.items():
            exps = [0] * d
            odd: list[int] = []
            for m in key:
                for i, e in enumerate(m.exps):
                    exps[i] += e
                odd.extend(m.odd)
            res = sort_odd(odd)
            if res is None:
                continue
            sign, o = res
            mono = Monomial(tuple(exps), o)
            if not ambient.admits(mono):
                continue
            val = c if sign > 0 else -c
            out[mono] = out[mono] + val if mono in out else val
        return GradedElement(out, ambient, check=False)


def apply_edge(
    tensor_terms: Mapping[tuple[Monomial, ...], Any],
    index_class: Iterable[int],
    source: int,
    target: int,
) -> dict[tuple[Monomial, ...], Any]:
    """Apply ``sum_k iota_k`` at ``source`` and ``d/dx_k`` at ``target`` to tensor terms.

    The contraction is odd, so it picks up the parity of the odd factors
    standing to the left of the source slot.
    """
    out: dict[tuple[Monomial, ...], Any] = {}
    idx = tuple(index_class)
    for key, c in tensor_terms.items():
        src = key[source]
        passed = sum(len(key[s].odd) for s in range(source))
        for k in idx:
            if k not in src.odd:
                continue
            tgt = key[target]
            e = tgt.exps[k]
            if e == 0:
                continue
            pos = src.odd.index(k)
            sign = -1 if (pos + passed) % 2 else 1
            new_src = Monomial(src.exps, src.odd[:pos] + src.odd[pos + 1 :])
            new_tgt = Monomial(tgt.exps[:k] + (e - 1,) + tgt.exps[k + 1 :], tgt.odd)
            new_key = list(key)
            new_key[source] = new_src
            new_key[target] = new_tgt
            if source == target:
                raise DomainError("edge with equal endpoints; use a divergence operator")
            nk = tuple(new_key)
            val = c * e if sign > 0 else -(c * e)
            out[nk] = out[nk] + val if nk in out else val
    return {k: v for k, v in out.items() if not is_zero(v)}


def apply_divergence(
    tensor_terms: Mapping[tuple[Monomial, ...], Any],
    index_class: Iterable[int],
    slot: int,
) -> dict[tuple[Monomial, ...], Any]:
    """Apply ``sum_k d/dx_k iota_k`` at one slot (the operator attached to a loop)."""
    out: dict[tuple[Monomial, ...], Any] = {}
    idx = tuple(index_class)
    for key, c in tensor_terms.items():
        m = key[slot]
        passed = sum(len(key[s].odd) for s in range(slot))
        for k in idx:
            if k not in m.odd or m.exps[k] == 0:
                continue
            pos = m.odd.index(k)
            sign = -1 if (pos + passed) % 2 else 1
            e = m.exps[k]
            nm = Monomial(m.exps[:k] + (e - 1,) + m.exps[k + 1 :], m.odd[:pos] + m.odd[pos + 1 :])
            nk = key[:slot] + (nm,) + key[slot + 1 :]
            val = c * e if sign > 0 else -(c * e)
            out[nk] = out[nk] + val if nk in out else val
    return {k: v for k, v in out.items() if not is_zero(v)}


@dataclass(frozen=True)
class EdgeOperator:
    """Degree ``-1`` operator on ``T^{⊗arity}``: contraction at the source, derivative at the target."""

    index_class: tuple[int, ...]
    source: int
    target: int
    arity: int

    def __call__(self, arg: Tensor | Sequence[GradedElement]) -> Tensor:
        t = arg if isinstance(arg, Tensor) else Tensor.from_elements(arg)
        if t.arity != self.arity:
            raise DomainError(f"operator of arity {self.arity} applied to {t.arity} factors")
        return Tensor(apply_edge(t.terms, self.index_class, self.source, self.target), t.ambients)

    @property
    def degree(self) -> int:
        return -1


def edge_operator(index_class: Iterable[int], source_slot: int, target_slot: int, arity: int) -> EdgeOperator:
    """Build the edge operator for 0-based slots ``source_slot -> target_slot``."""
    if not (0 <= source_slot < arity and 0 <= target_slot < arity):
        raise DomainError(f"slots ({source_slot}, {target_slot}) outside arity {arity}")
    if source_slot == target_slot:
        raise DomainError("source and target slots must differ")
    return EdgeOperator(tuple(sorted(set(index_class))), source_slot, target_slot, arity)


# ---------------------------------------------------------------------------
# bases


def even_exponents(indices: Sequence[int], dim: int, degree: int) -> Iterator[tuple[int, ...]]:
    """All exponent vectors of total ``degree`` supported on ``indices``."""
    for combo in itertools.combinations_with_replacement(indices, degree):
        e = [0] * dim
        for i in combo:
            e[i] += 1
        yield tuple(e)


def monomial_basis(ambient: Ambient, max_poly: int, odd_counts: Iterable[int] | None = None) -> list[Monomial]:
    """Monomials of polynomial degree ``<= max_poly`` in ``ambient``."""
    d = ambient.splitting.dim
    odd_idx = ambient.odd_indices
    counts = range(len(odd_idx) + 1) if odd_counts is None else odd_counts
    out: list[Monomial] = []
    for k in counts:
        if k > len(odd_idx):
            continue
        for odd in itertools.combinations(odd_idx, k):
            for deg in range(max_poly + 1):
                for e in even_exponents(ambient.even_indices, d, deg):
                    out.append(Monomial(e, odd))
    return out


def basis_elements(ambient: Ambient, max_poly: int, odd_counts: Iterable[int] | None = None) -> list[GradedElement]:
    return [GradedElement({m: Fraction(1)}, ambient, check=False) for m in monomial_basis(ambient, max_poly, odd_counts)]

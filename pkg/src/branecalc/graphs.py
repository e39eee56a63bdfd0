"""Admissible graphs: enumeration, pruning, canonical encoding and compilation.

Vertices are numbered globally: first-type (upper half-plane) vertices
``0..n-1``, then second-type (real) vertices ``n..n+m-1`` in their order on
the line.  For graphs with a marked real vertex, real vertices left of it
carry elements of ``A`` and those right of it elements of ``B``.
"""

from __future__ import annotations

import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Iterator, Sequence

from .graded_core import (
    Ambient,
    DomainError,
    GradedElement,
    Monomial,
    Splitting,
    Tensor,
    apply_divergence,
    apply_edge,
)
from .geometry import FOUR_COLORED, WeightProblem

# propagator kind -> block names of the index class it carries, per target
FOUR_COLOR_CLASS = {"pp": ("uv",), "pm": ("uvperp",), "mp": ("upv",), "mm": ("perp",)}
A_COLOR_CLASS = {"plus": ("uv", "uvperp"), "minus": ("upv", "perp")}
B_COLOR_CLASS = {"plus": ("uv", "upv"), "minus": ("uvperp", "perp")}
LOOP_CLASS = ("uv", "perp")
MAX_MULTIPLICITY = 4


@dataclass(frozen=True)
class AdmissibleGraph:
    n: int
    m: int
    special: int | None = None
    edges: tuple[tuple[int, int], ...] = ()
    loops: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        total = self.n + self.m
        object.__setattr__(self, "edges", tuple(sorted(tuple(e) for e in self.edges)))
        object.__setattr__(self, "loops", tuple(sorted(self.loops)))
        for s, t in self.edges:
            if not (0 <= s < total and 0 <= t < total):
                raise DomainError(f"edge {s}>{t} outside {total} vertices")
            if s == t:
                raise DomainError("self-edges are stored as loops")
        for v in self.loops:
            if not 0 <= v < self.n:
                raise DomainError("loops sit at first-type vertices only")
        if self.special is not None and not 0 <= self.special < self.m:
            raise DomainError("special vertex index outside the real vertices")

    # vertex bookkeeping
    @property
    def vertex_count(self) -> int:
        return self.n + self.m

    def is_real(self, v: int) -> bool:
        return v >= self.n

    @property
    def special_vertex(self) -> int | None:
        return None if self.special is None else self.n + self.special

    def side(self, v: int) -> str:
        """``"h"``, ``"left"``, ``"right"``, ``"special"`` or ``"real"`` (no marked point)."""
        if v < self.n:
            return "h"
        if self.special is None:
            return "real"
        sv = self.n + self.special
        if v == sv:
            return "special"
        return "left" if v < sv else "right"

    @property
    def dimension(self) -> int:
        return 2 * self.n + self.m - 2

    @property
    def edge_count(self) -> int:
        return len(self.edges) + len(self.loops)

    def multiplicities(self) -> Counter:
        return Counter(self.edges)

    def valence(self, v: int) -> int:
        return sum((s == v) + (t == v) for s, t in self.edges) + 2 * self.loops.count(v)

    # text format ``n m s | i>j ... | loops: v ...``
    def to_text(self) -> str:
        sp = "-" if self.special is None else str(self.special)
        es = " ".join(f"{s}>{t}" for s, t in self.edges)
        tail = " | loops: " + " ".join(str(v) for v in self.loops) if self.loops else " |"
        return f"{self.n} {self.m} {sp} | {es}{tail}".replace("|  |", "| |")

    @classmethod
    def parse(cls, text: str) -> "AdmissibleGraph":
        parts = [p.strip() for p in text.split("|")]
        if len(parts) < 2:
            raise DomainError(f"cannot parse graph {text!r}")
        head = parts[0].split()
        if len(head) != 3:
            raise DomainError(f"graph header must be 'n m s', got {parts[0]!r}")
        n, m = int(head[0]), int(head[1])
        special = None if head[2] == "-" else int(head[2])
        edges = []
        for tok in parts[1].split():
            mo = re.fullmatch(r"(\d+)>(\d+)", tok)
            if not mo:
                raise DomainError(f"bad edge token {tok!r}")
            edges.append((int(mo.group(1)), int(mo.group(2))))
        loops: list[int] = []
        if len(parts) > 2 and parts[2]:
            body = parts[2]
            if body.startswith("loops:"):
                body = body[len("loops:") :]
            loops = [int(v) for v in body.split()]
        return cls(n, m, special, tuple(edges), tuple(loops))

    def relabel(self, perm: Sequence[int]) -> "AdmissibleGraph":
        """Relabel first-type vertices: vertex ``i`` becomes ``perm[i]``."""
        mp = {i: perm[i] for i in range(self.n)}
        f = lambda v: mp.get(v, v)
        return AdmissibleGraph(
            self.n, self.m, self.special, tuple((f(s), f(t)) for s, t in self.edges), tuple(f(v) for v in self.loops)
        )

    def weight_problem(self, coloring: Sequence[str] | None = None) -> WeightProblem:
        """Integration problem for one coloring (edge kinds in sorted edge order, then loops)."""
        if coloring is None:
            cols = list(default_coloring(self))
        else:
            cols = list(coloring)
        if len(cols) != len(self.edges):
            raise DomainError("coloring length differs from edge count")
        es = tuple((s, t, k) for (s, t), k in zip(self.edges, cols)) + tuple((v, v, "rho") for v in self.loops)
        return WeightProblem(self.n, self.m, es, self.special)


def default_coloring(g: AdmissibleGraph) -> tuple[str, ...]:
    """The unique non-vanishing coloring of a real-real graph with a marked vertex."""
    out = []
    for s, t in g.edges:
        kinds = edge_kinds(g, s, t, "K")
        if len(kinds) != 1:
            raise DomainError(f"edge {s}>{t} has no unique coloring: {kinds}")
        out.append(kinds[0])
    return tuple(out)


def canonical_encode(g: AdmissibleGraph) -> str:
    """Encoding invariant under relabeling of first-type vertices."""
    best = None
    for perm in itertools.permutations(range(g.n)):
        txt = g.relabel(perm).to_text()
        if best is None or txt < best:
            best = txt
    return best if best is not None else g.to_text()


# ---------------------------------------------------------------------------
# vanishing rules


def edge_kinds(g: AdmissibleGraph, s: int, t: int, target: str) -> list[str]:
    """Propagator kinds that do not vanish identically on an edge ``s -> t``.

    Uses the boundary behaviour of the forms: the ``+`` half vanishes when
    the source lies on the line, the ``-`` half when the target does, and
    the mixed four-colored kinds vanish unless they cross the marked point
    in their own direction.
    """
    ss, ts = g.side(s), g.side(t)
    if target in ("A", "B"):
        out = []
        if ss == "h":
            out.append("plus")
        if ts == "h":
            out.append("minus")
        return out
    out = []
    if ss == "h":
        out.append("pp")
    if ts == "h":
        out.append("mm")
    if ss in ("h", "right") and ts in ("h", "left"):
        out.append("pm")
    if ss in ("h", "left") and ts in ("h", "right"):
        out.append("mp")
    return [k for k in ("pp", "pm", "mp", "mm") if k in out]


def kind_class(kind: str, target: str, splitting: Splitting) -> tuple[int, ...]:
    table = {"A": A_COLOR_CLASS, "B": B_COLOR_CLASS, "K": FOUR_COLOR_CLASS}[target]
    return splitting.union(*table[kind])


def _form_key(g: AdmissibleGraph, s: int, t: int, kind: str) -> tuple:
    """Key identifying equal forms: ``minus(s,t) = plus(t,s)`` and so on."""
    if kind == "minus":
        return ("plus", t, s)
    if kind == "mm":
        return ("pp", t, s)
    if kind == "pm" and g.is_real(s) and g.is_real(t):
        return ("mp", t, s)
    return (kind, s, t)


def colorings(g: AdmissibleGraph, target: str, splitting: Splitting | None = None) -> list[tuple[str, ...]]:
    """Non-vanishing colorings, one representative per multiset on multiple edges."""
    groups: list[tuple[tuple[int, int], int]] = []
    for e, k in sorted(g.multiplicities().items()):
        groups.append((e, k))
    choices_per_group = []
    for (s, t), k in groups:
        kinds = edge_kinds(g, s, t, target)
        if splitting is not None:
            kinds = [c for c in kinds if kind_class(c, target, splitting)]
        choices_per_group.append(list(itertools.combinations(kinds, k)))
    out = []
    for combo in itertools.product(*choices_per_group):
        col: list[str] = []
        keys = set()
        ok = True
        for ((s, t), _), kinds in zip(groups, combo):
            for kd in kinds:
                key = _form_key(g, s, t, kd)
                if key in keys:
                    ok = False
                keys.add(key)
                col.append(kd)
        if ok:
            out.append(tuple(col))
    return out


@dataclass(frozen=True)
class PruneResult:
    keep: bool
    reason: str = ""


def prune(g: AdmissibleGraph, target: str, splitting: Splitting | None = None) -> PruneResult:
    """Decide whether a graph is identically zero, with a machine-readable reason."""
    mult = g.multiplicities()
    if target == "bimodule":
        if g.n != 0 or g.special is None:
            return PruneResult(False, "not a bimodule graph")
        if g.loops:
            return PruneResult(False, "loop in bimodule graph")
        pairs = Counter(frozenset(e) for e in g.edges)
        if any(v > 1 for v in pairs.values()):
            return PruneResult(False, "square of 1-form")
        for s, t in g.edges:
            if not edge_kinds(g, s, t, "K"):
                return PruneResult(False, "non-crossing edge")
        if len(g.edges) != g.dimension:
            return PruneResult(False, "edge count differs from dimension")
        if splitting is not None and not colorings(g, "K", splitting):
            return PruneResult(False, "empty index class")
        return PruneResult(True)
    if target not in ("A", "B", "K"):
        raise DomainError(f"unknown target {target!r}")
    loops = Counter(g.loops)
    if any(v > 1 for v in loops.values()):
        return PruneResult(False, "square of rho")
    if g.loops and target != "K":
        return PruneResult(False, "loop outside K target")
    if any(v > MAX_MULTIPLICITY for v in mult.values()):
        return PruneResult(False, "multiplicity > 4")
    if g.edge_count != g.dimension:
        return PruneResult(False, "edge count differs from dimension")
    if target == "K" and g.special is None:
        return PruneResult(False, "K target needs a marked vertex")
    if target in ("A", "B") and g.special is not None:
        return PruneResult(False, "marked vertex outside K target")
    if g.dimension > 0:
        for v in range(g.n, g.n + g.m):
            if v != g.special_vertex and g.valence(v) == 0:
                return PruneResult(False, "0-valent second-type vertex")
    if g.loops and splitting is not None and not splitting.union(*LOOP_CLASS):
        return PruneResult(False, "loops vanish when U+V=X")
    if splitting is not None:
        live = sum(1 for c in ({"A": A_COLOR_CLASS, "B": B_COLOR_CLASS, "K": FOUR_COLOR_CLASS}[target]) if kind_class(c, target, splitting))
        if any(v > live for v in mult.values()):
            return PruneResult(False, "multiplicity exceeds live index classes")
    if not colorings(g, target, splitting):
        return PruneResult(False, "no non-vanishing coloring")
    return PruneResult(True)


# ---------------------------------------------------------------------------
# enumeration


def enumerate_bimodule_graphs(m: int, n: int, splitting: Splitting | None = None) -> list[AdmissibleGraph]:
    """Graphs of type ``(0, m+1+n)`` with ``m+n-1`` crossing edges and no repeated pair."""
    if m < 0 or n < 0:
        raise DomainError("arities must be non-negative")
    E = m + n - 1
    if E < 0:
        return []
    left = range(m)
    right = range(m + 1, m + 1 + n)
    pairs = [(a, b) for a in left for b in right]
    out = []
    for chosen in itertools.combinations(pairs, E):
        for dirs in itertools.product((0, 1), repeat=E):
            edges = tuple((a, b) if d == 0 else (b, a) for (a, b), d in zip(chosen, dirs))
            g = AdmissibleGraph(0, m + 1 + n, m, edges)
            if prune(g, "bimodule", splitting).keep:
                out.append(g)
    return sorted(out, key=lambda g: g.to_text())


def _all_edge_multisets(vertices: int, n_h: int, count: int, allow_loops: bool) -> Iterator[tuple[tuple, tuple]]:
    pairs = [(s, t) for s in range(vertices) for t in range(vertices) if s != t]
    slots: list[tuple] = [("e", p) for p in pairs]
    if allow_loops:
        slots += [("l", v) for v in range(n_h)]
    for combo in itertools.combinations_with_replacement(range(len(slots)), count):
        es = tuple(slots[i][1] for i in combo if slots[i][0] == "e")
        ls = tuple(slots[i][1] for i in combo if slots[i][0] == "l")
        yield es, ls


def enumerate_formality_graphs(
    n: int, m: int, target: str, splitting: Splitting | None = None, special: int | None = None
) -> list[AdmissibleGraph]:
    """Labeled graphs of type ``(n, m)`` with ``2n+m-2`` edges surviving :func:`prune`.

    For target ``K`` the marked vertex index ``special`` (among the real
    vertices) is required.  First-type vertices carry bivectors here, so
    each has at most two outgoing non-loop edges.
    """
    if 2 * n + m - 2 < 0:
        raise DomainError("negative configuration-space dimension")
    if target == "K" and special is None:
        raise DomainError("K target needs the marked vertex index")
    E = 2 * n + m - 2
    out = []
    seen = set()
    for es, ls in _all_edge_multisets(n + m, n, E, target == "K"):
        if any(sum(1 for s, _ in es if s == v) + ls.count(v) > 2 for v in range(n)):
            continue
        g = AdmissibleGraph(n, m, special if target == "K" else None, es, ls)
        if g.to_text() in seen:
            continue
        seen.add(g.to_text())
        if prune(g, target, splitting).keep:
            out.append(g)
    return sorted(out, key=lambda g: g.to_text())


# ---------------------------------------------------------------------------
# compilation


@dataclass(frozen=True)
class CompiledOperator:
    """Operator of one colored graph: ``sign * mu(tau_1 ... tau_E (args))``.

    ``sign`` is the reordering sign ``(-1)^{E(E-1)/2}`` separating the
    wedge of forms from the composite of edge operators.
    """

    graph: AdmissibleGraph
    coloring: tuple[str, ...]
    target_ambient: Ambient
    classes: tuple[tuple[int, ...], ...]
    loop_class: tuple[int, ...]
    sign: int
    prefactor: Fraction = Fraction(1)

    @property
    def degree(self) -> int:
        return -self.graph.edge_count

    def weight_problem(self) -> WeightProblem:
        return self.graph.weight_problem(self.coloring)

    def apply_monomials(self, key: tuple[Monomial, ...]) -> dict[Monomial, Any]:
        terms: dict[tuple[Monomial, ...], Any] = {key: Fraction(self.sign) * self.prefactor}
        for v in reversed(self.graph.loops):
            terms = apply_divergence(terms, self.loop_class, v)
            if not terms:
                return {}
        for (s, t), cls in reversed(list(zip(self.graph.edges, self.classes))):
            terms = apply_edge(terms, cls, s, t)
            if not terms:
                return {}
        amb = self.target_ambient
        return Tensor(terms, (amb,) * len(key)).contract_product(amb).terms

    def __call__(self, *args: GradedElement) -> GradedElement:
        if len(args) != self.graph.vertex_count:
            raise DomainError(f"graph operator takes {self.graph.vertex_count} arguments")
        amb = self.target_ambient
        out: dict[Monomial, Any] = {}
        for combo in itertools.product(*(a.terms.items() for a in args)):
            key = tuple(m for m, _ in combo)
            c = Fraction(1)
            for _, v in combo:
                c = c * v
            for mono, val in self.apply_monomials(key).items():
                add = c * val
                out[mono] = out[mono] + add if mono in out else add
        return GradedElement(out, amb, check=False)


def compile_graph(
    g: AdmissibleGraph,
    splitting: Splitting,
    target: str,
    coloring: Sequence[str] | None = None,
) -> list[CompiledOperator]:
    """Compile a graph into one operator per non-vanishing coloring.

    ``target`` is ``"A"``, ``"B"``, ``"K"`` or ``"bimodule"`` (the latter
    compiles into ``K`` with the forced crossing coloring).
    """
    tgt = "K" if target == "bimodule" else target
    cols = [tuple(coloring)] if coloring is not None else colorings(g, tgt, splitting)
    E = g.edge_count
    sign = -1 if (E * (E - 1) // 2) % 2 else 1
    out = []
    for col in cols:
        classes = tuple(kind_class(k, tgt, splitting) for k in col)
        if any(not c for c in classes):
            continue
        out.append(
            CompiledOperator(
                g, tuple(col), Ambient(tgt, splitting), classes, splitting.union(*LOOP_CLASS), sign
            )
        )
    return out

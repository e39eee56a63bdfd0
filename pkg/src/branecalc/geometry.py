"""Colored propagators on configuration spaces, with Monte-Carlo graph weights.

Points are complex numbers: upper half-plane points have positive imaginary
part, real points have zero imaginary part.  Every propagator is ``1/2π``
times ``d arg F`` for an explicit rational expression ``F`` in the points
(or in square roots ``sqrt(p - x)`` relative to a marked real point ``x``),
so forms are evaluated through the exact logarithmic derivative of ``F``.
"""

from __future__ import annotations

import json
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .graded_core import DomainError, Sign, WeightPoly

TWO_PI = 2.0 * math.pi

KINDS = ("plus", "minus", "pp", "pm", "mp", "mm", "rho")
KIND_ALIASES = {
    "+": "plus",
    "-": "minus",
    "++": "pp",
    "+-": "pm",
    "-+": "mp",
    "--": "mm",
}
FOUR_COLORED = ("pp", "pm", "mp", "mm")


def normalize_kind(kind: str) -> str:
    k = KIND_ALIASES.get(kind, kind)
    if k not in KINDS:
        raise DomainError(f"unknown propagator kind {kind!r}")
    return k


class SingularConfiguration(DomainError):
    """Raised when a form is evaluated at coincident points."""


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class Configuration:
    """Points in ``H`` and ordered points on ``R``; slot order is H points, then real points."""

    h_points: tuple[complex, ...] = ()
    r_points: tuple[float, ...] = ()
    special: int | None = None
    gauge: str = "none"

    def __post_init__(self) -> None:
        for z in self.h_points:
            if not complex(z).imag > 0:
                raise DomainError(f"point {z} is not in the upper half-plane")
        if len(set(complex(z) for z in self.h_points)) != len(self.h_points):
            raise SingularConfiguration("coincident upper half-plane points")
        r = list(self.r_points)
        if any(b <= a for a, b in zip(r, r[1:])):
            raise DomainError("real points must be strictly increasing")
        if self.special is not None and not 0 <= self.special < len(r):
            raise DomainError("special index outside the real points")

    @property
    def n(self) -> int:
        return len(self.h_points)

    @property
    def m(self) -> int:
        return len(self.r_points)

    @property
    def dimension(self) -> int:
        return 2 * self.n + self.m - 2

    def points(self) -> np.ndarray:
        return np.array([complex(z) for z in self.h_points] + [complex(x) for x in self.r_points])

    def marked(self) -> float:
        if self.special is None:
            raise DomainError("configuration has no marked real point")
        return float(self.r_points[self.special])


# ---------------------------------------------------------------------------
# logarithmic derivatives of the propagator arguments


def sqrt_branch(p: np.ndarray, x: np.ndarray | float) -> np.ndarray:
    """``sqrt(p - x)`` on the closed upper half-plane, principal branch.

    Real points left of ``x`` map to the positive imaginary axis, matching
    the limit from ``H``.
    """
    q = np.asarray(p, dtype=complex) - x
    out = np.sqrt(q)
    on_axis = (q.imag == 0) & (q.real < 0)
    if np.any(on_axis):
        out = np.where(on_axis, 1j * np.sqrt(np.abs(q.real)), out)
    return out


@dataclass
class LogDerivative:
    """Coefficients of ``d log F = Az dz + Bz dz̄ + Aw dw + Bw dw̄ + Ax dx``."""

    az: np.ndarray
    bz: np.ndarray
    aw: np.ndarray
    bw: np.ndarray
    ax: np.ndarray

    def apply(self, dz, dw, dx=0.0) -> np.ndarray:
        val = self.az * dz + self.bz * np.conj(dz) + self.aw * dw + self.bw * np.conj(dw) + self.ax * dx
        return np.imag(val) / TWO_PI


def log_derivative(kind: str, z, w, x=0.0) -> LogDerivative:
    """Exact differential data of the propagator ``kind`` from ``z`` to ``w``.

    ``x`` is the marked real point for four-colored kinds and for ``rho``
    (where ``w`` is ignored).
    """
    kind = normalize_kind(kind)
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    zero = np.zeros(np.broadcast(z, w).shape, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind in ("plus", "pp"):
            az = 1.0 / (z - w)
            bz = -1.0 / (np.conj(z) - w)
            aw = -az - bz
            return LogDerivative(az + zero, bz + zero, aw + zero, zero, zero)
        if kind in ("minus", "mm"):
            aw = 1.0 / (w - z)
            bw = -1.0 / (np.conj(w) - z)
            az = -aw - bw
            return LogDerivative(az + zero, zero, aw + zero, bw + zero, zero)
        if kind == "rho":
            az = 1.0 / (z - x)
            return LogDerivative(az + zero, zero, zero, zero, -az + zero)
        s = sqrt_branch(z, x)
        t = sqrt_branch(w, x)
        tb = np.conj(t)
        if kind == "pm":
            gs = 1 / (s - t) - 1 / (s - tb) + 1 / (s + tb) - 1 / (s + t)
            gt = -1 / (s - t) - 1 / (s + t)
            gtb = 1 / (s - tb) + 1 / (s + tb)
        else:  # "mp"
            gs = 1 / (s - t) - 1 / (s + tb) + 1 / (s - tb) - 1 / (s + t)
            gt = -1 / (s - t) - 1 / (s + t)
            gtb = -1 / (s + tb) - 1 / (s - tb)
        az = gs / (2 * s)
        aw = gt / (2 * t)
        bw = gtb / (2 * tb)
        ax = -(az + aw + bw)
        return LogDerivative(az + zero, zero, aw + zero, bw + zero, ax + zero)


def angle_function(kind: str, z, w, x=0.0) -> np.ndarray:
    """The normalized angle whose differential is the propagator (defined up to constants)."""
    kind = normalize_kind(kind)
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if kind in ("plus", "pp"):
        f = (z - w) / (np.conj(z) - w)
    elif kind in ("minus", "mm"):
        f = (w - z) / (np.conj(w) - z)
    elif kind == "rho":
        f = z - x
    else:
        s = sqrt_branch(z, x)
        t = sqrt_branch(w, x)
        tb = np.conj(t)
        if kind == "pm":
            f = (s - t) / (s - tb) * (s + tb) / (s + t)
        else:
            f = (s - t) / (s + tb) * (s - tb) / (s + t)
    return np.angle(f) / TWO_PI


def propagator_form(kind: str, cfg: Configuration, edge: tuple[int, int], tangent: Sequence[complex]) -> float:
    """Evaluate a propagator 1-form on a tangent vector.

    ``edge`` holds slot indices (H points first, then real points); for
    ``rho`` both entries name the same H point.  ``tangent`` gives one
    displacement per slot; real slots must carry real displacements.
    """
    kind = normalize_kind(kind)
    pts = cfg.points()
    if len(tangent) != len(pts):
        raise DomainError(f"tangent has {len(tangent)} entries, expected {len(pts)}")
    s, t = edge
    for slot in (s, t):
        if not 0 <= slot < len(pts):
            raise DomainError(f"slot {slot} outside configuration")
    tan = np.array([complex(v) for v in tangent])
    for j in range(cfg.n, len(pts)):
        if tan[j].imag != 0:
            raise DomainError("real points only move along the real axis")
    needs_mark = kind in FOUR_COLORED or kind == "rho"
    x = cfg.marked() if needs_mark else 0.0
    xslot = cfg.n + cfg.special if needs_mark else None
    if kind == "rho":
        if s != t or s >= cfg.n:
            raise DomainError("rho is attached to a single upper half-plane point")
        if abs(pts[s] - x) == 0:
            raise SingularConfiguration("point at the marked point")
        ld = log_derivative(kind, pts[s], pts[s], x)
        dx = tan[xslot].real
        return float(np.imag(ld.az * (tan[s] - dx)) / TWO_PI)
    if s == t or pts[s] == pts[t]:
        raise SingularConfiguration("propagator between coincident points")
    if needs_mark and (pts[s] == x or pts[t] == x):
        raise SingularConfiguration("endpoint at the marked point")
    ld = log_derivative(kind, pts[s], pts[t], x)
    dx = tan[xslot].real if needs_mark else 0.0
    if needs_mark and xslot in (s, t):
        raise SingularConfiguration("endpoint at the marked point")
    return float(ld.apply(tan[s], tan[t], dx))


# ---------------------------------------------------------------------------
# boundary strata of the two-point spaces


def neville_zero(hs: Sequence[float], fs: Sequence[float]) -> float:
    """Polynomial extrapolation of ``f(h)`` to ``h = 0`` (Neville's scheme)."""
    p = [float(f) for f in fs]
    h = [float(v) for v in hs]
    n = len(p)
    for k in range(1, n):
        for i in range(n - k):
            p[i] = (h[i] * p[i + 1] - h[i + k] * p[i]) / (h[i] - h[i + k])
    return p[0]


DEFAULT_LADDER = tuple(10.0 ** (-k) for k in range(3, 9))

# I-cube strata: first point z (edge source), second point w (edge target), marked x = 0
CUBE_STRATA = ("alpha", "beta", "gamma", "delta", "epsilon", "eta", "theta", "zeta", "xi")
EYE_STRATA = ("eye_alpha", "eye_beta", "eye_gamma")
BIMODULE_STRATA = ("a", "e")


def _cube_point(stratum: str, coords: Sequence[float], eps: float):
    """Interior point near a stratum and its derivative matrix in the stratum coordinates.

    Returns ``(z, w, dz, dw)`` where ``dz``/``dw`` list derivatives along
    each stratum coordinate.
    """
    if stratum == "alpha":
        phi, t = coords
        z = np.exp(1j * t)
        w = z + eps * np.exp(1j * phi)
        return z, w, [0.0, 1j * z], [1j * eps * np.exp(1j * phi), 1j * z]
    if stratum in ("beta", "gamma"):
        # eye coordinates: z~ = i, w~ = i + r e^{i phi}
        r, phi = coords
        y = -1.0 if stratum == "beta" else 1.0
        zt = 1j
        wt = 1j + r * np.exp(1j * phi)
        dwt = [np.exp(1j * phi), 1j * r * np.exp(1j * phi)]
        return y + eps * zt, y + eps * wt, [0.0, 0.0], [eps * v for v in dwt]
    if stratum == "delta":
        s, t = coords
        return eps * np.exp(1j * s), np.exp(1j * t), [1j * eps * np.exp(1j * s), 0.0], [0.0, 1j * np.exp(1j * t)]
    if stratum == "epsilon":
        s, t = coords
        return np.exp(1j * s), eps * np.exp(1j * t), [1j * np.exp(1j * s), 0.0], [0.0, 1j * eps * np.exp(1j * t)]
    if stratum in ("eta", "theta", "zeta", "xi"):
        u, v = coords
        q = u + 1j * v
        end = (1.0 if stratum in ("eta", "theta") else -1.0) + 1j * eps
        if stratum in ("eta", "zeta"):
            return q, end, [1.0, 1j], [0.0, 0.0]
        return end, q, [0.0, 0.0], [1.0, 1j]
    raise DomainError(f"unknown stratum {stratum!r}")


def _eye_point(stratum: str, coords: Sequence[float], eps: float):
    if stratum == "eye_alpha":
        (phi,) = coords
        z = 1j
        w = 1j + eps * np.exp(1j * phi)
        return z, w, [0.0], [1j * eps * np.exp(1j * phi)]
    if stratum == "eye_beta":
        # first point to the real axis: z = eps i, w = 1 + i v ... parametrized by w
        u, v = coords
        return 1j * eps, u + 1j * v, [0.0, 0.0], [1.0, 1j]
    if stratum == "eye_gamma":
        u, v = coords
        return u + 1j * v, 1j * eps, [1.0, 1j], [0.0, 0.0]
    raise DomainError(f"unknown stratum {stratum!r}")


def boundary_restriction(
    kind: str,
    stratum: str,
    coords: Sequence[float],
    tangent: Sequence[float],
    ladder: Sequence[float] = DEFAULT_LADDER,
) -> float:
    """Limit of a propagator on a boundary stratum, by extrapolation in ``sqrt(eps)``.

    ``coords`` are the stratum coordinates (see :func:`_cube_point`) and
    ``tangent`` a tangent vector in those coordinates.  Strata of the
    bimodule shape ``"a"``/``"e"`` take ``coords = (p, q)`` with both
    endpoints on the real axis around the marked point ``0``.
    """
    kind = normalize_kind(kind)
    if stratum in BIMODULE_STRATA:
        p, q = coords
        src, dst = (p, q)
        values = []
        for eps in ladder:
            ld = log_derivative(kind, complex(src, eps), complex(dst, eps), 0.0)
            values.append(float(ld.apply(tangent[0], tangent[1])))
        return neville_zero([math.sqrt(e) for e in ladder], values)
    if stratum in EYE_STRATA:
        if kind not in ("plus", "minus"):
            raise DomainError("eye strata carry the two-colored kinds")
        point = _eye_point
    elif stratum in CUBE_STRATA:
        if kind not in FOUR_COLORED:
            raise DomainError("I-cube strata carry the four-colored kinds")
        point = _cube_point
    else:
        raise DomainError(f"unknown stratum {stratum!r}")
    values = []
    for eps in ladder:
        z, w, dz, dw = point(stratum, coords, eps)
        tz = sum(c * v for c, v in zip(tangent, dz))
        tw = sum(c * v for c, v in zip(tangent, dw))
        ld = log_derivative(kind, z, w, 0.0)
        values.append(float(ld.apply(tz, tw)))
    return neville_zero([math.sqrt(e) for e in ladder], values)


def real_axis_form(kind: str, p: float, q: float, tangent: tuple[float, float], x: float = 0.0) -> float:
    """Closed form of a four-colored propagator with both endpoints on the real axis."""
    kind = normalize_kind(kind)
    if p == x or q == x or p == q:
        raise SingularConfiguration("degenerate real configuration")
    ld = log_derivative(kind, complex(p), complex(q), x)
    return float(ld.apply(tangent[0], tangent[1]))


def orientation_sign(stratum: tuple) -> Sign:
    """Comparison sign between induced and product orientations of a boundary stratum.

    ``("collapse_real", j, size)``: points ``j .. j+size-1`` on the real
    axis (with any H points) collapse; ``("collapse_h",)``: H points
    collapse inside ``H``.
    """
    if not stratum:
        raise DomainError("empty stratum descriptor")
    if stratum[0] == "collapse_h":
        return Sign(-1)
    if stratum[0] == "collapse_real":
        _, j, size = stratum
        return Sign(-1 if (j * (size + 1) - 1) % 2 else 1)
    raise DomainError(f"unknown stratum type {stratum[0]!r}")


# ---------------------------------------------------------------------------
# weight problems and Monte-Carlo integration


@dataclass(frozen=True)
class WeightProblem:
    """Integral of a wedge of propagators over ``C_{n,m}^+``.

    Slots ``0..n-1`` are H points, ``n..n+m-1`` real points in order.
    ``edges`` are ``(source, target, kind)``; loops are ``(v, v, "rho")``.
    """

    n: int
    m: int
    edges: tuple[tuple[int, int, str], ...]
    special: int | None = None

    def __post_init__(self) -> None:
        for s, t, k in self.edges:
            if normalize_kind(k) != k:
                raise DomainError("store normalized kinds")
            if not (0 <= s < self.n + self.m and 0 <= t < self.n + self.m):
                raise DomainError("edge slot out of range")
        if (any(k in FOUR_COLORED or k == "rho" for _, _, k in self.edges)) and self.special is None:
            raise DomainError("four-colored kinds need a marked real point")

    @property
    def dimension(self) -> int:
        return 2 * self.n + self.m - 2

    def key(self) -> str:
        es = " ".join(f"{s}>{t}:{k}" for s, t, k in self.edges)
        sp = "-" if self.special is None else str(self.special)
        return f"{self.n} {self.m} {sp} | {es}"

    @classmethod
    def from_key(cls, key: str) -> "WeightProblem":
        """Inverse of :meth:`key`."""
        try:
            head, body = key.split("|")
            n, m, sp = head.split()
            edges = []
            for tok in body.split():
                st, kind = tok.split(":")
                s, t = st.split(">")
                edges.append((int(s), int(t), normalize_kind(kind)))
            return cls(int(n), int(m), tuple(edges), None if sp == "-" else int(sp))
        except ValueError as exc:
            raise DomainError(f"malformed weight key {key!r}") from exc


@dataclass(frozen=True)
class WeightEstimate:
    value: float
    stderr: float
    samples: int
    seed: int
    method: str = "mc"
    rejected: int = 0
    flagged: bool = False

    def __post_init__(self) -> None:
        if self.stderr < 0:
            raise DomainError("negative standard error")
        if self.method == "exact" and self.stderr != 0:
            raise DomainError("exact weights carry zero error")

    @classmethod
    def exact(cls, value: float) -> "WeightEstimate":
        return cls(float(value), 0.0, 0, 0, "exact")

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "samples": self.samples,
            "seed": self.seed,
            "method": self.method,
            "rejected": self.rejected,
            "flagged": self.flagged,
        }


def _half_line(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``r = (s/(1-s))^2`` on ``(0, inf)`` and its Jacobian."""
    q = s / (1.0 - s)
    r = q * q
    jac = 2.0 * q / (1.0 - s) ** 2
    return r, jac


def _interval(s: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Cosine map onto ``(lo, hi)``; the Jacobian vanishes at both ends."""
    c = 0.5 * (1.0 - np.cos(math.pi * s))
    return lo + (hi - lo) * c, (hi - lo) * 0.5 * math.pi * np.sin(math.pi * s)


@dataclass(frozen=True)
class _Coordinate:
    slot: int
    part: str  # "x" real position, "u"/"v" real/imag part, "arg" angle on the unit circle


class Sampler:
    """Gauge slice of ``C_{n,m}^+`` with an unbiased sampling map from the unit cube."""

    def __init__(self, problem: WeightProblem):
        self.problem = problem
        n, m = problem.n, problem.m
        if 2 * n + m - 2 < 0:
            raise DomainError("configuration space has negative dimension")
        self.simplex = problem.special is not None and n == 0 and m >= 3
        self.fixed: dict[int, complex] = {}
        if self.simplex:
            self._init_simplex()
            return
        self.coords: list[_Coordinate] = []
        # groups of real slots sharing an interval: (slots, lo, hi)
        self.groups: list[tuple[list[int], float | None, float | None]] = []
        self.h_free: list[int] = []
        self.h_arg: int | None = None
        real_slots = list(range(n, n + m))
        if problem.special is not None:
            anchor = n + problem.special
            self.fixed[anchor] = 0.0
            pos = problem.special
            if pos > 0:
                self.fixed[real_slots[pos - 1]] = -1.0
            elif pos < m - 1:
                self.fixed[real_slots[pos + 1]] = 1.0
            elif n > 0:
                self.h_arg = 0
            # else a single real point: zero-dimensional only if n = 0 and m = 2
        else:
            if n > 0:
                self.fixed[0] = 1j
            elif m >= 2:
                self.fixed[real_slots[0]] = 0.0
                self.fixed[real_slots[1]] = 1.0
        # real groups between fixed anchors
        anchors = [(i, self.fixed[s].real) for i, s in enumerate(real_slots) if s in self.fixed]
        bounds = [(-1, None)] + anchors + [(m, None)]
        for (ia, va), (ib, vb) in zip(bounds, bounds[1:]):
            free = [real_slots[i] for i in range(ia + 1, ib)]
            if free:
                self.groups.append((free, va, vb))
        for slot in range(n):
            if slot in self.fixed:
                continue
            if slot == self.h_arg:
                self.coords.append(_Coordinate(slot, "arg"))
            else:
                self.coords.append(_Coordinate(slot, "u"))
                self.coords.append(_Coordinate(slot, "v"))
                self.h_free.append(slot)
        for slots, _, _ in self.groups:
            for s in slots:
                self.coords.append(_Coordinate(s, "x"))
        if len(self.coords) != problem.dimension:
            raise AssertionError("gauge slice dimension mismatch")
        self.orientation = self._orientation()

    def _init_simplex(self) -> None:
        """Scale gauge for marked real configurations.

        The marked point sits at 0 and the distances of the other real
        points to it sum to 1.  Distances are drawn from a symmetric
        Dirichlet law with parameter 1/2, whose density cancels the
        square-root behaviour of the forms at the marked point.
        """
        p = self.problem
        self.fixed = {p.special: 0.0}
        others = [s for s in range(p.m) if s != p.special]
        self.simplex_slots = others
        self.coords = [_Coordinate(s, "x") for s in others[:-1]]
        self.orientation = self._orientation()

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def draw(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sample ``size`` configurations; same return convention as :meth:`sample`."""
        if not self.simplex:
            cube = np.clip(rng.random((size, self.dimension)), 1e-15, 1 - 1e-15)
            return self.sample(cube)
        p = self.problem
        n_left = p.special
        n_right = p.m - 1 - p.special
        k = p.m - 1
        alphas = (0.5, 0.5 / k)
        pick = rng.random(size) < 0.5
        g = np.where(pick[:, None], rng.dirichlet([alphas[0]] * k, size), rng.dirichlet([alphas[1]] * k, size))
        g = np.clip(g, 1e-300, None)
        g = g / g.sum(axis=1, keepdims=True)
        left = -np.sort(g[:, :n_left], axis=1)[:, ::-1] if n_left else np.zeros((size, 0))
        right = np.sort(g[:, n_left:], axis=1)
        pts = np.zeros((size, p.m), dtype=complex)
        pts[:, : p.special] = np.sort(left, axis=1)
        pts[:, p.special + 1 :] = right
        dist = np.abs(pts[:, self.simplex_slots].real)
        logs = np.sum(np.log(dist), axis=1)
        pdf = np.zeros(size)
        for a in alphas:
            pdf += 0.5 * np.exp(math.lgamma(a * k) - k * math.lgamma(a) + (a - 1.0) * logs)
        weight = 1.0 / (pdf * math.factorial(n_left) * math.factorial(n_right))
        dpts = np.zeros((size, self.dimension, p.m), dtype=complex)
        last = self.simplex_slots[-1]
        sgn = lambda s: -1.0 if s < p.special else 1.0
        for c, co in enumerate(self.coords):
            dpts[:, c, co.slot] = sgn(co.slot)
            dpts[:, c, last] = -sgn(last)
        return pts, dpts, weight

    def _orientation(self) -> int:
        """Sign of ``Ω_Conf(∂_b, ∂_a, slice tangents)`` at a reference point."""
        if self.dimension == 0:
            return 1
        rng = np.random.default_rng(12345)
        pts, dpts, _ = self.draw(rng, 1)
        p = pts[0]
        n, m = self.problem.n, self.problem.m
        size = 2 * n + m

        def real_vec(vals: np.ndarray) -> np.ndarray:
            out = np.zeros(size)
            for s in range(n):
                out[2 * s] = vals[s].real
                out[2 * s + 1] = vals[s].imag
            for s in range(n, n + m):
                out[2 * n + (s - n)] = vals[s].real
            return out

        trans = np.array([1.0] * n + [1.0] * m, dtype=complex)
        scale = p.copy()
        cols = [real_vec(trans), real_vec(scale)]
        for k in range(self.dimension):
            cols.append(real_vec(dpts[0, k]))
        det = np.linalg.det(np.array(cols).T)
        if det == 0 or not np.isfinite(det):
            raise AssertionError("degenerate gauge slice")
        return 1 if det > 0 else -1

    def sample(self, cube: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map cube samples to points.

        Returns ``(points[N, slots], dpoints[N, dim, slots], weight[N])`` where
        ``dpoints[:, k, s]`` is the derivative of slot ``s`` along coordinate
        ``k`` and ``weight`` is ``1/density`` of the induced sampling law.
        """
        N = cube.shape[0]
        n, m = self.problem.n, self.problem.m
        pts = np.zeros((N, n + m), dtype=complex)
        for s, v in self.fixed.items():
            pts[:, s] = v
        weight = np.ones(N)
        col = 0
        values: dict[tuple[int, str], np.ndarray] = {}
        for c in self.coords:
            if c.part in ("u", "v", "arg"):
                s = cube[:, col]
                if c.part == "u":
                    w = 2.0 * s - 1.0
                    r, jac = _half_line(np.abs(w))
                    values[(c.slot, "u")] = np.sign(w) * r
                    weight *= 2.0 * jac
                elif c.part == "v":
                    r, jac = _half_line(s)
                    values[(c.slot, "v")] = r
                    weight *= jac
                else:
                    a, jac = _interval(s, 0.0, math.pi)
                    values[(c.slot, "arg")] = a
                    weight *= jac
                col += 1
        for slots, lo, hi in self.groups:
            k = len(slots)
            block = cube[:, col : col + k]
            col += k
            if lo is None and hi is None:
                w = 2.0 * block - 1.0
                r, jac = _half_line(np.abs(w))
                xs, jac = np.sign(w) * r, 2.0 * jac
            elif lo is None:
                r, jac = _half_line(block)
                xs = hi - r
            elif hi is None:
                r, jac = _half_line(block)
                xs = lo + r
            else:
                xs, jac = _interval(block, lo, hi)
            order = np.argsort(xs, axis=1)
            xs = np.take_along_axis(xs, order, axis=1)
            weight *= np.prod(jac, axis=1) / math.factorial(k)
            for i, s in enumerate(slots):
                values[(s, "x")] = xs[:, i]
        for (s, part), v in values.items():
            if part == "x":
                pts[:, s] = v
        for s in self.h_free:
            pts[:, s] = values[(s, "u")] + 1j * values[(s, "v")]
        if self.h_arg is not None:
            pts[:, self.h_arg] = np.exp(1j * values[(self.h_arg, "arg")])
        dpts = np.zeros((N, self.dimension, n + m), dtype=complex)
        for k, c in enumerate(self.coords):
            if c.part in ("x", "u"):
                dpts[:, k, c.slot] = 1.0
            elif c.part == "v":
                dpts[:, k, c.slot] = 1j
            else:
                dpts[:, k, c.slot] = 1j * pts[:, c.slot]
        return pts, dpts, weight


def form_matrix(problem: WeightProblem, pts: np.ndarray, dpts: np.ndarray) -> np.ndarray:
    """Matrix ``M[N, e, k]`` of edge forms evaluated on coordinate directions."""
    N, D, _ = dpts.shape
    E = len(problem.edges)
    M = np.zeros((N, E, D))
    x = 0.0
    if problem.special is not None:
        x = pts[:, problem.n + problem.special].real
    for e, (s, t, kind) in enumerate(problem.edges):
        ld = log_derivative(kind, pts[:, s], pts[:, t], x)
        for k in range(D):
            dz = dpts[:, k, s]
            if kind == "rho":
                M[:, e, k] = np.imag(ld.az * dz) / TWO_PI
            else:
                M[:, e, k] = ld.apply(dz, dpts[:, k, t])
    return M


def _chunk_estimate(problem: WeightProblem, sampler: Sampler, size: int, seq: np.random.SeedSequence):
    rng = np.random.default_rng(seq)
    pts, dpts, weight = sampler.draw(rng, size)
    M = form_matrix(problem, pts, dpts)
    with np.errstate(invalid="ignore", over="ignore"):
        vals = np.linalg.det(M) * weight * sampler.orientation
    good = np.isfinite(vals)
    vals = np.where(good, vals, 0.0)
    return float(np.sum(vals)), float(np.sum(vals * vals)), int(size - good.sum())


CHUNK = 25_000


def mc_integrate(
    problem: WeightProblem,
    samples: int = 200_000,
    seed: int = 0,
    workers: int = 1,
    reject_threshold: float = 1e-3,
) -> WeightEstimate:
    """Plain Monte-Carlo estimate of the weight integral.

    Forms of total degree different from the dimension integrate to zero
    exactly; a zero-dimensional space with no edges has weight 1.
    """
    D = problem.dimension
    if D < 0:
        raise DomainError("configuration space has negative dimension")
    if len(problem.edges) != D:
        return WeightEstimate.exact(0.0)
    if D == 0:
        return WeightEstimate.exact(1.0)
    sampler = Sampler(problem)
    nchunks = max(1, -(-samples // CHUNK))
    sizes = [CHUNK] * (nchunks - 1) + [samples - CHUNK * (nchunks - 1)]
    seqs = np.random.SeedSequence(seed).spawn(nchunks)
    jobs = list(zip(sizes, seqs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _chunk_estimate(problem, sampler, j[0], j[1]), jobs))
    else:
        results = [_chunk_estimate(problem, sampler, sz, sq) for sz, sq in jobs]
    total = math.fsum(r[0] for r in results)
    total_sq = math.fsum(r[1] for r in results)
    rejected = sum(r[2] for r in results)
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    stderr = math.sqrt(var / max(samples - 1, 1))
    return WeightEstimate(mean, stderr, samples, seed, "mc", rejected, rejected > reject_threshold * samples)


def mc_weight(graph_or_problem, splitting=None, samples: int = 200_000, seed: int = 0, workers: int = 1, **kw) -> WeightEstimate:
    """Estimate the weight of a graph (anything with ``weight_problem()``) or a raw problem."""
    problem = graph_or_problem
    if not isinstance(problem, WeightProblem):
        problem = graph_or_problem.weight_problem(**kw)
    return mc_integrate(problem, samples=samples, seed=seed, workers=workers)


def tolerance(est: WeightEstimate, floor: float = 0.02, multiple: float = 3.0) -> tuple[float, str]:
    """Acceptance tolerance: the larger of ``multiple * stderr`` and an absolute floor."""
    a = multiple * est.stderr
    if a >= floor:
        return a, f"{multiple:g}*stderr"
    return floor, f"absolute {floor:g}"


def problem_seed(seed: int, key: str) -> np.random.SeedSequence:
    """Deterministic per-problem seed derived from a base seed and the problem key."""
    return np.random.SeedSequence([int(seed), zlib.crc32(key.encode())])


class WeightBook:
    """Registry of weight symbols with lazy Monte-Carlo estimation.

    ``symbol(problem)`` returns an exact ``Fraction`` when the weight is
    known exactly (dimension zero, degree mismatch, or an injected exact
    value) and a :class:`WeightPoly` symbol otherwise.  Estimates are made
    on first use and cached, optionally in a JSON file.
    """

    def __init__(
        self,
        samples: int = 200_000,
        seed: int = 0,
        workers: int = 1,
        exact: Mapping[str, Any] | None = None,
        cache_path: str | None = None,
    ):
        self.samples = samples
        self.seed = seed
        self.workers = workers
        self.exact = {k: Fraction(v) for k, v in (exact or {}).items()}
        self.problems: dict[str, WeightProblem] = {}
        self.estimates: dict[str, WeightEstimate] = {}
        self.cache_path = cache_path
        if cache_path and os.path.exists(cache_path):
            with open(cache_path) as fh:
                data = json.load(fh)
            for k, v in data.get("weights", {}).items():
                if v.get("samples") == samples and v.get("seed") == seed:
                    self.estimates[k] = WeightEstimate(**v)

    def symbol(self, problem: WeightProblem) -> Any:
        key = problem.key()
        if key in self.exact:
            return self.exact[key]
        D = problem.dimension
        if len(problem.edges) != D:
            return Fraction(0)
        if D == 0:
            return Fraction(1)
        self.problems[key] = problem
        return WeightPoly.symbol(key)

    def estimate(self, key: str) -> WeightEstimate:
        if key in self.exact:
            return WeightEstimate.exact(float(self.exact[key]))
        if key not in self.estimates:
            problem = self.problems[key]
            ss = problem_seed(self.seed, key)
            sub = int(ss.generate_state(1)[0])
            est = mc_integrate(problem, self.samples, sub, self.workers)
            self.estimates[key] = WeightEstimate(est.value, est.stderr, est.samples, self.seed, est.method, est.rejected, est.flagged)
        return self.estimates[key]

    def values(self, symbols) -> dict[str, tuple[float, float]]:
        out = {}
        for s in symbols:
            e = self.estimate(s)
            out[s] = (e.value, e.stderr)
        return out

    def save(self) -> None:
        if not self.cache_path:
            return
        payload = {"schema_version": 1, "weights": {k: e.to_json() for k, e in self.estimates.items()}}
        with open(self.cache_path, "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)

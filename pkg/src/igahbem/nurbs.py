"""Univariate B-spline / NURBS machinery.

Knot vectors are clamped (open). Curves live in the plane and carry
positive weights; every routine treats them in homogeneous coordinates
where it matters (knot insertion, Bezier extraction).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class KnotVector:
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 0:
            raise ValueError("degree must be >= 0")
        if knots.ndim != 1 or np.any(np.diff(knots) < 0):
            raise ValueError("knots must be a non-decreasing 1D sequence")
        if len(knots) - p - 1 < p + 1:
            raise ValueError("need at least p+1 basis functions")
        if np.any(knots[: p + 1] != knots[0]) or np.any(knots[-p - 1:] != knots[-1]):
            raise ValueError("knot vector must be clamped (end multiplicity p+1)")
        if len(knots) > p + 1 and (knots[p + 1] == knots[0] or knots[-p - 2] == knots[-1]):
            raise ValueError("end knots must have multiplicity exactly p+1")
        _, counts = np.unique(knots, return_counts=True)
        if np.any(counts > p + 1):
            raise ValueError("knot multiplicity exceeds p+1")

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    def multiplicity(self, u: float) -> int:
        return int(np.count_nonzero(self.knots == u))

    def find_span(self, u):
        """Index i with knots[i] <= u < knots[i+1]; the right end maps to the last span."""
        u = np.asarray(u, dtype=float)
        p, n = self.degree, self.n
        span = np.searchsorted(self.knots, u, side="right") - 1
        return np.clip(span, p, n - 1)

    def __eq__(self, other):
        return (isinstance(other, KnotVector) and self.degree == other.degree
                and np.array_equal(self.knots, other.knots))

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))


def _check_range(kv: KnotVector, u: np.ndarray):
    a, b = kv.domain
    if np.any(u < a) or np.any(u > b) or np.any(~np.isfinite(u)):
        raise ValueError(f"parameter outside knot range [{a}, {b}]")


def _basis_on_span(knots, p, span, u):
    # Piegl & Tiller A2.2, vectorized over u; denominators never vanish on a valid span
    m = u.shape[0]
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = u - knots[span + 1 - j]
        right[:, j] = knots[span + j] - u
        saved = np.zeros(m)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.divide(N[:, r], denom, out=np.zeros(m), where=denom != 0)
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def basis_funs(kv: KnotVector, u, derivative: bool = False, span=None):
    """Nonzero basis values at an array of parameters.

    Returns ``spans`` (m,) and ``N`` (m, p+1) where ``N[:, a]`` is the value of
    function ``spans - p + a``. With ``derivative=True`` also returns ``dN``.
    A fixed ``span`` evaluates that span's polynomial pieces (used to stay on
    one side of a knot).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    _check_range(kv, u)
    p, knots = kv.degree, kv.knots
    span = kv.find_span(u) if span is None else np.broadcast_to(np.asarray(span, int), u.shape)
    N = _basis_on_span(knots, p, span, u)
    if not derivative:
        return span, N
    dN = np.zeros_like(N)
    if p > 0:
        M = _basis_on_span(knots, p - 1, span, u)  # functions span-p+1 .. span
        for a in range(p + 1):
            if a >= 1:
                d = knots[span + a] - knots[span - p + a]
                dN[:, a] += p * np.divide(M[:, a - 1], d, out=np.zeros_like(d), where=d != 0)
            if a <= p - 1:
                d = knots[span + a + 1] - knots[span - p + a + 1]
                dN[:, a] -= p * np.divide(M[:, a], d, out=np.zeros_like(d), where=d != 0)
    return span, N, dN


def eval_basis(kv: KnotVector, u: float) -> tuple[int, np.ndarray]:
    """Span index and the p+1 nonzero B-spline values at a single parameter."""
    span, N = basis_funs(kv, [u])
    return int(span[0]), N[0]


@dataclass(frozen=True)
class NurbsCurve:
    knot_vector: KnotVector
    control_points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        P = np.asarray(self.control_points, dtype=float)
        n = self.knot_vector.n
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if P.shape != (n, 2):
            raise ValueError(f"expected {n} control points in 2D, got shape {P.shape}")
        if w.shape != (n,):
            raise ValueError(f"expected {n} weights")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "control_points", P)
        object.__setattr__(self, "weights", w)

    @property
    def degree(self) -> int:
        return self.knot_vector.degree

    @property
    def n(self) -> int:
        return self.knot_vector.n

    def homogeneous(self) -> np.ndarray:
        return np.column_stack([self.control_points * self.weights[:, None], self.weights])

    @classmethod
    def from_homogeneous(cls, kv: KnotVector, Pw: np.ndarray) -> "NurbsCurve":
        return cls(kv, Pw[:, :2] / Pw[:, 2:], Pw[:, 2].copy())

    def evaluate(self, u, span=None):
        """Points, tangents and rational basis values at an array of parameters.

        Returns ``(points (m,2), tangents (m,2), spans (m,), R (m,p+1))``.
        """
        span, N, dN = basis_funs(self.knot_vector, u, derivative=True, span=span)
        p = self.degree
        idx = span[:, None] - p + np.arange(p + 1)
        w = self.weights[idx]
        P = self.control_points[idx]
        Nw, dNw = N * w, dN * w
        W, dW = Nw.sum(axis=1), dNw.sum(axis=1)
        R = Nw / W[:, None]
        A = np.einsum("ma,mak->mk", Nw, P)
        dA = np.einsum("ma,mak->mk", dNw, P)
        pts = A / W[:, None]
        tangents = (dA * W[:, None] - A * dW[:, None]) / (W ** 2)[:, None]
        return pts, tangents, span, R

    def rational_basis(self, u, derivative: bool = False, span=None):
        return rational_basis(self.knot_vector, self.weights, u, derivative, span)

    def __call__(self, u):
        return self.evaluate(u)[0]


def rational_basis(kv: KnotVector, weights: np.ndarray, u, derivative: bool = False, span=None):
    """Nonzero rational basis values (and parametric derivatives) at parameters."""
    span, N, dN = basis_funs(kv, u, derivative=True, span=span)
    p = kv.degree
    w = weights[span[:, None] - p + np.arange(p + 1)]
    Nw, dNw = N * w, dN * w
    W, dW = Nw.sum(axis=1, keepdims=True), dNw.sum(axis=1, keepdims=True)
    R = Nw / W
    if not derivative:
        return span, R
    return span, R, (dNw * W - Nw * dW) / W ** 2


def eval_nurbs(curve: NurbsCurve, u: float):
    """Point, tangent and the p+1 rational basis values at one parameter."""
    pts, tan, _, R = curve.evaluate([u])
    return pts[0], tan[0], R[0]


def insert_knot(curve: NurbsCurve, u: float) -> NurbsCurve:
    """Boehm single knot insertion; the traced curve is unchanged."""
    kv = curve.knot_vector
    p, U = kv.degree, kv.knots
    a, b = kv.domain
    if not a < u < b:
        raise ValueError("inserted knot must lie strictly inside the parametric range")
    s = kv.multiplicity(u)
    if s + 1 > p:
        raise ValueError(f"inserting {u} would raise its multiplicity above p={p}")
    k = int(kv.find_span(u))
    Pw = curve.homogeneous()
    n = kv.n
    Q = np.empty((n + 1, 3))
    Q[: k - p + 1] = Pw[: k - p + 1]
    Q[k - s + 1:] = Pw[k - s:]
    for i in range(k - p + 1, k - s + 1):
        alpha = (u - U[i]) / (U[i + p] - U[i])
        Q[i] = alpha * Pw[i] + (1.0 - alpha) * Pw[i - 1]
    new_kv = KnotVector(np.insert(U, k + 1, u), p)
    return NurbsCurve.from_homogeneous(new_kv, Q)


def insert_knots(curve: NurbsCurve, knots: Sequence[float]) -> NurbsCurve:
    for u in knots:
        curve = insert_knot(curve, float(u))
    return curve


def refine_uniform(curve: NurbsCurve, levels: int) -> NurbsCurve:
    """Bisect every nonempty knot span ``levels`` times."""
    for _ in range(levels):
        br = curve.knot_vector.breakpoints()
        curve = insert_knots(curve, 0.5 * (br[:-1] + br[1:]))
    return curve


def raise_to_multiplicity(curve: NurbsCurve, breaks: Sequence[float], mult: int) -> NurbsCurve:
    """Insert each interior break until it reaches multiplicity ``mult``."""
    a, b = curve.knot_vector.domain
    for u in breaks:
        u = float(u)
        if a < u < b:
            for _ in range(mult - curve.knot_vector.multiplicity(u)):
                curve = insert_knot(curve, u)
    return curve


def bezier_extract(curve: NurbsCurve, extra_breaks: Sequence[float] = ()):
    """Split the curve into Bezier segments by knot insertion.

    Every interior breakpoint (plus ``extra_breaks``) is raised to
    multiplicity p. Returns a list of ``(control_points, weights)`` pairs,
    one per nonempty span, each with p+1 entries.
    """
    p = curve.degree
    br = np.union1d(curve.knot_vector.breakpoints(), np.asarray(extra_breaks, dtype=float))
    ext = raise_to_multiplicity(curve, br, p)
    nseg = len(np.unique(ext.knot_vector.knots)) - 1
    segs = []
    for e in range(nseg):
        sl = slice(e * p, e * p + p + 1)
        segs.append((ext.control_points[sl].copy(), ext.weights[sl].copy()))
    return segs


def greville_abscissae(kv: KnotVector) -> np.ndarray:
    p = kv.degree
    if p == 0:
        raise ValueError("Greville abscissae are undefined for p = 0")
    U = kv.knots
    return np.array([U[i + 1: i + p + 1].mean() for i in range(kv.n)])


def accumulated_knot_vector(kv_u: KnotVector, kv_t: KnotVector) -> KnotVector:
    """Union of two knot vectors taking the maximum multiplicity per breakpoint."""
    if kv_u.domain != kv_t.domain:
        raise ValueError("knot vectors have different parametric ranges")
    p = max(kv_u.degree, kv_t.degree)
    a, b = kv_u.domain
    knots = [a] * (p + 1)
    for u in np.union1d(kv_u.breakpoints(), kv_t.breakpoints()):
        if a < u < b:
            knots += [u] * max(kv_u.multiplicity(u), kv_t.multiplicity(u))
    knots += [b] * (p + 1)
    return KnotVector(np.array(knots), p)


@dataclass(frozen=True)
class BoundingBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(lo > hi):
            raise ValueError("bounding box with lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def of_points(cls, pts) -> "BoundingBox":
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return cls(pts.min(axis=0), pts.max(axis=0))

    @classmethod
    def union(cls, boxes) -> "BoundingBox":
        boxes = list(boxes)
        return cls(np.min([b.lo for b in boxes], axis=0), np.max([b.hi for b in boxes], axis=0))

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


def curve_from_degree_elevated_line(p0, p1, degree: int = 1) -> NurbsCurve:
    """Straight segment as a single Bezier patch of the given degree."""
    t = np.linspace(0.0, 1.0, degree + 1)[:, None]
    pts = (1 - t) * np.asarray(p0, float) + t * np.asarray(p1, float)
    kv = KnotVector(np.r_[np.zeros(degree + 1), np.ones(degree + 1)], degree)
    return NurbsCurve(kv, pts)


@dataclass
class BasisSpace:
    """Global index set of NURBS basis functions over a chain of patches.

    ``continuous`` spaces share the end functions of neighbouring patches of a
    closed loop (C^0 coupling); discontinuous spaces keep every patch apart.
    ``breaks[e]`` are the cell breakpoints of patch ``e`` (the accumulated knot
    vector), used for support boxes and quadrature.
    """

    geometry: list
    knot_vectors: list
    weights: list
    continuous: bool
    breaks: list = None
    closed: bool = True

    def __post_init__(self):
        if self.breaks is None:
            self.breaks = [kv.breakpoints() for kv in self.knot_vectors]
        self.local_to_global = []
        g = 0
        E = len(self.knot_vectors)
        for e, kv in enumerate(self.knot_vectors):
            n = kv.n
            if self.continuous and e > 0:
                ids = np.arange(g - 1, g - 1 + n)
                g += n - 1
            else:
                ids = np.arange(g, g + n)
                g += n
            self.local_to_global.append(ids)
        if self.continuous and self.closed and E > 0:
            total = g - 1
            self.local_to_global[-1][-1] = 0
            g = total
        self.n = g
        self.functions = [[] for _ in range(self.n)]
        for e, ids in enumerate(self.local_to_global):
            for a, j in enumerate(ids):
                self.functions[j].append((e, a))
        self._cell_boxes = {}

    @property
    def continuity_class(self) -> str:
        return "continuous" if self.continuous else "patchwise_discontinuous"

    @property
    def degree(self) -> int:
        return self.knot_vectors[0].degree

    @property
    def entries(self):
        """``(patch_id, knot_vector, function_index, continuity_class)`` per local function."""
        out = []
        for j, locs in enumerate(self.functions):
            for e, a in locs:
                out.append((j, e, self.knot_vectors[e], a, self.continuity_class))
        return out

    def basis(self, e: int, u, derivative: bool = False, span=None):
        """Local rational basis of patch ``e``: ``(global ids (m,p+1), values, [derivs])``."""
        kv = self.knot_vectors[e]
        res = rational_basis(kv, self.weights[e], u, derivative, span)
        ids = self.local_to_global[e][res[0][:, None] - kv.degree + np.arange(kv.degree + 1)]
        return (ids,) + tuple(res[1:])

    def local_support(self, e: int, a: int) -> tuple[float, float]:
        U = self.knot_vectors[e].knots
        return float(U[a]), float(U[a + self.knot_vectors[e].degree + 1])

    def cell_boxes(self, e: int) -> list:
        """Bezier hull boxes of the geometry on each cell of patch ``e``."""
        if e not in self._cell_boxes:
            segs = bezier_extract(self.geometry[e], self.breaks[e])
            self._cell_boxes[e] = [BoundingBox.of_points(P) for P, _ in segs]
        return self._cell_boxes[e]

    def support_cells(self, j: int):
        """``(patch, cell index)`` pairs covering the support of function ``j``."""
        out = []
        for e, a in self.functions[j]:
            lo, hi = self.local_support(e, a)
            br = self.breaks[e]
            for c in range(len(br) - 1):
                if br[c] >= lo and br[c + 1] <= hi:
                    out.append((e, c))
        return out


def basis_support_bbox(space: BasisSpace, j: int) -> BoundingBox:
    """Axis-aligned box around the support of global function ``j``.

    Built from the Bezier-extracted control points of the geometry on the
    cells of the support; by the convex hull property it contains the image
    of the whole support.
    """
    boxes = [space.cell_boxes(e)[c] for e, c in space.support_cells(j)]
    return BoundingBox.union(boxes)

"""Boundary discretization: patches, Cauchy-data spaces and integration cells.

The boundary is a closed, counter-clockwise chain of NURBS patches; the
outward normal of a counter-clockwise loop is the tangent rotated clockwise.
Displacements live in a continuous space, tractions in a patchwise
discontinuous one. Integration cells are the spans of the accumulated knot
vector of geometry, displacement and traction knots on each patch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nurbs import (BasisSpace, BoundingBox, KnotVector, basis_support_bbox,
                    greville_abscissae, refine_uniform)
from .quadrature import QuadratureConfig, gauss_legendre

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class GeometryError(ValueError):
    """Invalid boundary description (open loop, bad tags, ...)."""


def space_knot_vector(geo: KnotVector, p: int, level: int) -> KnotVector:
    """Degree-p clamped knot vector on the geometry breakpoints, bisected ``level`` times.

    Interior geometry knots keep their continuity C^(p_geo - m) where possible.
    """
    a, b = geo.domain
    knots = [a] * (p + 1)
    for u in geo.breakpoints()[1:-1]:
        cont = geo.degree - geo.multiplicity(u)
        knots += [u] * int(np.clip(p - cont, 1, p))
    knots += [b] * (p + 1)
    kv = KnotVector(np.array(knots), p)
    for _ in range(level):
        br = kv.breakpoints()
        kv = KnotVector(np.sort(np.r_[kv.knots, 0.5 * (br[:-1] + br[1:])]), p)
    return kv


def check_closed_loop(curves, tol: float = 1e-10):
    for e, c in enumerate(curves):
        nxt = curves[(e + 1) % len(curves)]
        end, start = c(np.array([1.0]))[0], nxt(np.array([0.0]))[0]
        if np.linalg.norm(end - start) > tol:
            raise GeometryError(f"patch {e} does not connect to patch {(e + 1) % len(curves)}")


def signed_area(curves) -> float:
    area = 0.0
    x, w = gauss_legendre(16)
    for c in curves:
        for a, b in zip(c.knot_vector.breakpoints()[:-1], c.knot_vector.breakpoints()[1:]):
            u = a + (b - a) * x
            pts, tan, _, _ = c.evaluate(u)
            area += 0.5 * np.sum((b - a) * w * (pts[:, 0] * tan[:, 1] - pts[:, 1] * tan[:, 0]))
    return area


@dataclass
class SpaceCells:
    """Per-cell view of a basis space: active function ids and Gauss values."""

    space: BasisSpace
    ids: np.ndarray        # (ncell, p+1) global ids active on the cell
    vals: np.ndarray       # (ncell, q, p+1) values at the regular Gauss points
    spans: np.ndarray      # (ncell,) knot span index of the cell in its patch
    fn_cells: list = field(default_factory=list)  # sorted cell ids per function


class Discretization:
    """Geometry plus displacement (``'u'``) and traction (``'t'``) spaces.

    Parameters
    ----------
    curves : list of NurbsCurve
        Patches of a closed counter-clockwise loop, parameters in [0, 1].
    bcs : list of str
        ``'dirichlet'`` or ``'neumann'`` per patch.
    p : int, optional
        Degree of the Cauchy-data spaces; defaults to the geometry degree, in
        which case the refined geometry NURBS basis is used (isogeometric).
    level, t_level : int
        Uniform bisection levels of the displacement / traction spaces.
    """

    def __init__(self, curves, bcs=None, p=None, level=0, t_level=None,
                 quad: QuadratureConfig = QuadratureConfig(), closed: bool = True):
        self.curves = list(curves)
        E = len(self.curves)
        self.bcs = list(bcs) if bcs is not None else [DIRICHLET] * E
        if len(self.bcs) != E or any(b not in (DIRICHLET, NEUMANN) for b in self.bcs):
            raise GeometryError("every patch needs exactly one bc tag (dirichlet|neumann)")
        for e, c in enumerate(self.curves):
            if c.knot_vector.domain != (0.0, 1.0):
                raise GeometryError(f"patch {e}: parametric domain must be [0, 1]")
        self.closed = closed
        if closed:
            check_closed_loop(self.curves)
        self.quad = quad
        self.level = level
        self.t_level = level if t_level is None else t_level
        self.spaces = {
            "u": self._make_space(p, level, continuous=True),
            "t": self._make_space(p, self.t_level, continuous=False),
        }
        breaks = []
        for e, c in enumerate(self.curves):
            br = np.union1d(c.knot_vector.breakpoints(), self.spaces["u"].knot_vectors[e].breakpoints())
            breaks.append(np.union1d(br, self.spaces["t"].knot_vectors[e].breakpoints()))
        for sp in self.spaces.values():
            sp.breaks = breaks
        self.breaks = breaks
        self._build_cells()

    @property
    def space_u(self) -> BasisSpace:
        return self.spaces["u"]

    @property
    def space_t(self) -> BasisSpace:
        return self.spaces["t"]

    def _make_space(self, p, level, continuous):
        kvs, ws = [], []
        for c in self.curves:
            if p is None or p == c.degree:
                ref = refine_uniform(c, level)
                kvs.append(ref.knot_vector)
                ws.append(ref.weights)
            else:
                kv = space_knot_vector(c.knot_vector, p, level)
                kvs.append(kv)
                ws.append(np.ones(kv.n))
        return BasisSpace(self.curves, kvs, ws, continuous, closed=self.closed and continuous)

    # ------------------------------------------------------------------ cells
    def _build_cells(self):
        q = self.quad.gauss_order_regular
        gx, gw = gauss_legendre(q)
        patch, a, b = [], [], []
        for e, br in enumerate(self.breaks):
            patch += [e] * (len(br) - 1)
            a += list(br[:-1])
            b += list(br[1:])
        self.cell_patch = np.array(patch)
        self.cell_a = np.array(a)
        self.cell_b = np.array(b)
        nc = len(patch)
        self.ncell = nc
        self.patch_cells = [np.flatnonzero(self.cell_patch == e) for e in range(len(self.curves))]
        params = self.cell_a[:, None] + (self.cell_b - self.cell_a)[:, None] * gx
        self.qp_param = params
        self.qp_x = np.empty((nc, q, 2))
        self.qp_n = np.empty((nc, q, 2))
        self.qp_w = np.empty((nc, q))
        self.cell_lo = np.empty((nc, 2))
        self.cell_hi = np.empty((nc, 2))
        span_sets = {k: np.empty(nc, int) for k in self.spaces}
        for e in range(len(self.curves)):
            cells = self.patch_cells[e]
            x, n, jac = self.geometry_at(e, params[cells].ravel())
            self.qp_x[cells] = x.reshape(len(cells), q, 2)
            self.qp_n[cells] = n.reshape(len(cells), q, 2)
            self.qp_w[cells] = (jac.reshape(len(cells), q) * gw * (self.cell_b - self.cell_a)[cells, None])
            boxes = self.space_u.cell_boxes(e)
            self.cell_lo[cells] = [bx.lo for bx in boxes]
            self.cell_hi[cells] = [bx.hi for bx in boxes]
            mid = 0.5 * (self.cell_a[cells] + self.cell_b[cells])
            for k, sp in self.spaces.items():
                span_sets[k][cells] = sp.knot_vectors[e].find_span(mid)
        self.cell_len = self.qp_w.sum(axis=1)
        self.cells = {}
        for k, sp in self.spaces.items():
            p = sp.degree
            ids = np.empty((nc, p + 1), int)
            vals = np.empty((nc, q, p + 1))
            for c in range(nc):
                e = self.cell_patch[c]
                i, v = sp.basis(e, params[c], span=span_sets[k][c])
                ids[c] = i[0]
                vals[c] = v
            fn_cells = [[] for _ in range(sp.n)]
            for c in range(nc):
                for j in ids[c]:
                    fn_cells[j].append(c)
            self.cells[k] = SpaceCells(sp, ids, vals, span_sets[k],
                                       [np.array(sorted(set(f)), int) for f in fn_cells])

    def geometry_at(self, e: int, u, span=None):
        """Points, outward unit normals and Jacobians |dx/du| on patch ``e``."""
        pts, tan, _, _ = self.curves[e].evaluate(u, span=span)
        jac = np.linalg.norm(tan, axis=1)
        nrm = np.column_stack([tan[:, 1], -tan[:, 0]]) / jac[:, None]
        return pts, nrm, jac

    def eval_cell(self, c: int, u):
        """Geometry and both spaces' active basis values at parameters inside cell ``c``."""
        e = self.cell_patch[c]
        geo_span = self.curves[e].knot_vector.find_span(0.5 * (self.cell_a[c] + self.cell_b[c]))
        x, n, jac = self.geometry_at(e, u, span=geo_span)
        vals = {}
        for k, sp in self.spaces.items():
            _, v = sp.basis(e, u, span=self.cells[k].spans[c])
            vals[k] = v
        return x, n, jac, vals

    def support_box(self, name: str, j: int) -> BoundingBox:
        return basis_support_bbox(self.spaces[name], j)

    def locate(self, e: int, u: float):
        """Cells whose closure contains the boundary point at (patch e, param u).

        Returns a list of ``(cell, param)`` pairs, including the neighbouring
        patch when the point is a patch junction of a closed loop.
        """
        hits = []
        cells = self.patch_cells[e]
        for c in cells:
            if self.cell_a[c] <= u <= self.cell_b[c]:
                hits.append((int(c), float(u)))
        if self.closed:
            E = len(self.curves)
            if u == 0.0:
                hits.append((int(self.patch_cells[(e - 1) % E][-1]), 1.0))
            if u == 1.0:
                hits.append((int(self.patch_cells[(e + 1) % E][0]), 0.0))
        return hits

    def greville(self, name: str, j: int):
        """(patch, param) of the Greville point of global function ``j``."""
        sp = self.spaces[name]
        e, a = sp.functions[j][0]
        return e, float(greville_abscissae(sp.knot_vectors[e])[a])

    def function_on_dirichlet(self, j: int) -> bool:
        """Whether displacement function ``j`` sits on a Dirichlet patch (known coefficient)."""
        sp = self.space_u
        locs = sp.functions[j]
        if len(locs) > 1:  # junction function: known if any adjacent patch is Dirichlet
            return any(self.bcs[e] == DIRICHLET for e, _ in locs)
        return self.bcs[locs[0][0]] == DIRICHLET

    def traction_on_dirichlet(self, j: int) -> bool:
        return self.bcs[self.space_t.functions[j][0][0]] == DIRICHLET

    def min_span_length(self) -> float:
        return float(self.cell_len.min())

    @property
    def n_u(self) -> int:
        return self.space_u.n

    @property
    def n_t(self) -> int:
        return self.space_t.n

    def refined(self, extra_levels: int) -> "Discretization":
        return Discretization(self.curves, self.bcs, p=self.space_u.degree
                              if self.space_u.degree != self.curves[0].degree else None,
                              level=self.level + extra_levels, t_level=self.t_level + extra_levels,
                              quad=self.quad, closed=self.closed)


@dataclass
class CollocationSet:
    """Collocation points, one per unknown basis function."""

    points: np.ndarray
    patch: np.ndarray
    param: np.ndarray
    indented: np.ndarray
    space: np.ndarray      # 't' or 'u': space of the associated unknown
    function: np.ndarray   # global index of the associated basis function
    singular: list         # per row: [(cell, param), ...] cells touching the point

    def __len__(self):
        return len(self.points)


def build_collocation(disc: Discretization, delta: float = 0.05) -> CollocationSet:
    """Greville collocation; C^-1 traction functions at patch ends are indented inward.

    Rows: traction functions on Dirichlet patches first, then the unknown
    displacement functions on Neumann patches.
    """
    rows = []
    sp_t = disc.space_t
    for e, kv in enumerate(sp_t.knot_vectors):
        if disc.bcs[e] != DIRICHLET:
            continue
        g = greville_abscissae(kv)
        br = kv.breakpoints()
        for a, j in enumerate(sp_t.local_to_global[e]):
            u, ind = float(g[a]), False
            if a == 0:
                u, ind = u + delta * (br[1] - br[0]), True
            elif a == kv.n - 1:
                u, ind = u - delta * (br[-1] - br[-2]), True
            rows.append((e, u, ind, "t", int(j)))
    for j in range(disc.n_u):
        if not disc.function_on_dirichlet(j):
            e, u = disc.greville("u", j)
            rows.append((e, u, False, "u", j))
    if not rows:
        raise GeometryError("no unknowns: pure Neumann problems are not supported")
    patch = np.array([r[0] for r in rows])
    param = np.array([r[1] for r in rows])
    pts = np.empty((len(rows), 2))
    for e in np.unique(patch):
        m = patch == e
        pts[m] = disc.curves[e](param[m])
    _check_distinct(pts)
    singular = [disc.locate(int(e), float(u)) for e, u in zip(patch, param)]
    return CollocationSet(pts, patch, param, np.array([r[2] for r in rows]),
                          np.array([r[3] for r in rows]), np.array([r[4] for r in rows]), singular)


def _check_distinct(pts, tol: float = 1e-12):
    from scipy.spatial import cKDTree

    pairs = cKDTree(pts).query_pairs(tol)
    if pairs:
        i, j = next(iter(pairs))
        raise GeometryError(f"collocation points {i} and {j} coincide")


def greville_points(disc: Discretization, name: str):
    """Greville (patch, param, point) triples for every global function of a space."""
    out = []
    for j in range(disc.spaces[name].n):
        e, u = disc.greville(name, j)
        out.append((e, u))
    patch = np.array([o[0] for o in out])
    param = np.array([o[1] for o in out])
    pts = np.empty((len(out), 2))
    for e in np.unique(patch):
        m = patch == e
        pts[m] = disc.curves[e](param[m])
    return patch, param, pts

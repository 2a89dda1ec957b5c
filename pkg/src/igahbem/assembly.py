"""Collocation assembly of the single (V) and double layer (C+K) operators.

Near-field blocks are integrated entrywise: regular Gauss-Legendre per
integration cell, recursive bisection for nearly singular cells and graded
rules toward the collocation point for cells that contain it. Far-field
blocks come from Chebyshev-Lagrange interpolation of the kernel, giving the
factorization ``A S B^T``. The strongly singular entries of ``C+K`` are never
integrated directly; they are completed from the requirement that rigid
translations are annihilated on a closed boundary.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import clustering as cl
from .discretization import CollocationSet, Discretization
from .hmatrix import HMatrix, LowRankBlock, recompress
from .kernels import InterpolationScheme
from .nurbs import BoundingBox
from .quadrature import QuadratureConfig, rule_on, split_graded_rule

log = logging.getLogger(__name__)

V_OP = "V"
K_OP = "K"
_SPACE = {V_OP: "t", K_OP: "u"}
_ROW_CHUNK_REALS = 4_000_000


class ContractError(RuntimeError):
    """Operation called outside its preconditions."""


@dataclass(frozen=True)
class HConfig:
    """H-matrix assembly parameters."""

    k: int = 6
    eta: float = 1.0
    n_min: int = 16
    recompress_tol: float = 1e-8

    @property
    def cluster(self) -> cl.ClusterConfig:
        return cl.ClusterConfig(self.n_min, self.eta)


@dataclass
class AssemblyStats:
    dense_blocks: int = 0
    lowrank_blocks: int = 0
    refined_cells: int = 0
    accuracy_warnings: list = field(default_factory=list)


def interpolation_factors(kernel, x_rows, box_rows: BoundingBox, box_cols: BoundingBox, k: int):
    """Row factor A (L_nu at the rows, component-expanded) and kernel core S.

    Shared by the single and the double layer operator.
    """
    d = kernel.ncomp
    st = InterpolationScheme(k, box_rows)
    ss = InterpolationScheme(k, box_cols)
    A = np.kron(st.eval(x_rows), np.eye(d))
    xn, yn = st.nodes(), ss.nodes()
    S = kernel.U(xn[:, None, :], yn[None, :, :])  # (k2, k2, d, d)
    S = S.transpose(0, 2, 1, 3).reshape(len(xn) * d, len(yn) * d)
    return A, S, ss


class Assembler:
    """Builds H-matrices of V and K for one discretization, kernel and row set."""

    def __init__(self, disc: Discretization, kernel, rows: CollocationSet,
                 quad: QuadratureConfig | None = None, hcfg: HConfig = HConfig()):
        self.disc = disc
        self.kernel = kernel
        self.rows = rows
        self.quad = quad or disc.quad
        self.hcfg = hcfg
        self.stats = AssemblyStats()
        self._refined = {}
        self._trees = {}
        self._row_sing = [dict(s) for s in rows.singular]

    # ------------------------------------------------------------- quadrature
    def _adaptive_rule(self, c: int, x: np.ndarray):
        disc, q = self.disc, self.quad
        e = disc.cell_patch[c]
        a, b = disc.cell_a[c], disc.cell_b[c]
        xs, ws = [], []
        stack = [(a, b, 0)]
        while stack:
            lo, hi, depth = stack.pop()
            pts = disc.geometry_at(e, np.linspace(lo, hi, 5))[0]
            length = np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1))
            dist = np.min(np.linalg.norm(pts - x, axis=1))
            if depth >= q.near_subdivision_depth or dist >= q.near_factor * length:
                u, w = rule_on(lo, hi, q.gauss_order_regular)
                xs.append(u)
                ws.append(w)
            else:
                mid = 0.5 * (lo + hi)
                stack += [(mid, hi, depth + 1), (lo, mid, depth + 1)]
        return np.concatenate(xs), np.concatenate(ws)

    def cell_rule(self, c: int, x: np.ndarray, s: float | None = None, depth: int | None = None):
        """Parametric rule on cell ``c`` suited to target ``x`` (singular at ``s`` if given)."""
        q = self.quad
        if s is not None:
            return split_graded_rule(self.disc.cell_a[c], self.disc.cell_b[c], s, q.gauss_order_regular,
                                     q.singular_split, q.near_subdivision_depth if depth is None else depth)
        return self._adaptive_rule(c, x)

    def _kernel_on(self, op, x, y, n):
        return self.kernel.U(x, y) if op == V_OP else self.kernel.T(x, y, n)

    def integrate_cell(self, op: str, c: int, x: np.ndarray, s: float | None = None, depth=None):
        """Integrals of kernel times each active basis function on cell ``c``: (p+1, d, d)."""
        u, w = self.cell_rule(c, x, s, depth)
        y, n, jac, vals = self.disc.eval_cell(c, u)
        ker = self._kernel_on(op, x, y, n)  # (q, d, d)
        F = vals[_SPACE[op]] * (w * jac)[:, None]
        return np.einsum("qf,qab->fab", F, ker)

    def refined_contribution(self, op: str, i: int, c: int) -> np.ndarray:
        key = (op, i, c)
        val = self._refined.get(key)
        if val is None:
            x = self.rows.points[i]
            s = self._row_sing[i].get(c)
            val = self.integrate_cell(op, c, x, s)
            if s is not None and op == V_OP:
                finer = self.integrate_cell(op, c, x, s, depth=self.quad.near_subdivision_depth + 1)
                scale = np.abs(finer).max()
                if scale > 0 and np.abs(finer - val).max() > 1e-8 * scale:
                    self.stats.accuracy_warnings.append((op, i, c))
                    log.warning("singular quadrature not converged: row %d cell %d", i, c)
            self.stats.refined_cells += 1
            self._refined[key] = val
        return val

    # --------------------------------------------------------------- near field
    def singular_functions(self, i: int) -> np.ndarray:
        """Displacement functions whose support closure contains collocation point ``i``."""
        ids = self.disc.cells["u"].ids
        return np.unique(np.concatenate([ids[c] for c in self._row_sing[i]] + [np.zeros(0, int)]))

    def dense_block(self, op: str, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Entrywise block (component-expanded). For K, singular pairs are left at 0."""
        disc, d = self.disc, self.kernel.ncomp
        SC = disc.cells[_SPACE[op]]
        cells = np.unique(np.concatenate([SC.fn_cells[j] for j in cols]))
        colpos = np.full(SC.space.n, -1)
        colpos[cols] = np.arange(len(cols))
        out = np.zeros((len(rows), len(cols), d, d))
        Y, N = disc.qp_x[cells], disc.qp_n[cells]
        WF = disc.qp_w[cells][:, :, None] * SC.vals[cells]  # (nc, q, p+1)
        ids = SC.ids[cells]
        npf = WF.shape[2]
        per_row = len(cells) * WF.shape[1] * npf * d * d
        chunk = max(1, _ROW_CHUNK_REALS // per_row)
        near_lim = self.quad.near_factor * disc.cell_len[cells]
        lo, hi = disc.cell_lo[cells], disc.cell_hi[cells]
        for start in range(0, len(rows), chunk):
            rr = rows[start:start + chunk]
            X = self.rows.points[rr]
            with np.errstate(invalid="ignore", divide="ignore"):
                ker = self._kernel_on(op, X[:, None, None, :], Y[None], N[None])  # (r, nc, q, d, d)
            contrib = (ker[:, :, :, None] * WF[None, :, :, :, None, None]).sum(axis=2)
            gap = np.maximum(0.0, np.maximum(lo[None] - X[:, None], X[:, None] - hi[None]))
            near = np.linalg.norm(gap, axis=2) < near_lim[None]
            for a, ci in zip(*np.nonzero(near)):
                i, c = int(rr[a]), int(cells[ci])
                if op == K_OP and c in self._row_sing[i]:
                    contrib[a, ci] = 0.0
                else:
                    contrib[a, ci] = self.refined_contribution(op, i, c)
            blk = out[start:start + chunk]
            for ci in range(len(cells)):
                pos = colpos[ids[ci]]
                ok = pos >= 0
                blk[:, pos[ok]] += contrib[:, ci, ok]
        if op == K_OP:
            for a, i in enumerate(rows):
                sing = colpos[self.singular_functions(int(i))]
                out[a, sing[sing >= 0]] = 0.0
        self.stats.dense_blocks += 1
        return out.transpose(0, 2, 1, 3).reshape(len(rows) * d, len(cols) * d)

    def entry_V(self, i: int, j: int) -> np.ndarray:
        """Single layer entry for row ``i`` and traction function ``j``."""
        d = self.kernel.ncomp
        return self.dense_block(V_OP, np.array([i]), np.array([j])).reshape(d, d)

    def entry_K(self, i: int, j: int) -> np.ndarray:
        """Double layer entry for a non-singular pair."""
        if j in self.singular_functions(i):
            raise ContractError(f"pair ({i}, {j}) is singular; use the rigid-body completion")
        d = self.kernel.ncomp
        return self.dense_block(K_OP, np.array([i]), np.array([j])).reshape(d, d)

    # ---------------------------------------------------------------- far field
    def lowrank_block(self, op: str, rows: np.ndarray, cols: np.ndarray,
                      box_rows: BoundingBox, box_cols: BoundingBox, k: int | None = None) -> LowRankBlock:
        """Kernel-interpolation factors ``A S B^T`` of an admissible block."""
        k = self.hcfg.k if k is None else k
        disc, d = self.disc, self.kernel.ncomp
        X = self.rows.points[rows]
        if cl.bbox_dist(BoundingBox.of_points(X), box_cols) <= 0:
            raise ContractError("low-rank assembly requested for a non-separated block")
        A, S, ss = interpolation_factors(self.kernel, X, box_rows, box_cols, k)
        SC = disc.cells[_SPACE[op]]
        cells = np.unique(np.concatenate([SC.fn_cells[j] for j in cols]))
        colpos = np.full(SC.space.n, -1)
        colpos[cols] = np.arange(len(cols))
        nc, q = len(cells), disc.qp_w.shape[1]
        WF = disc.qp_w[cells][:, :, None] * SC.vals[cells]
        pos = colpos[SC.ids[cells]]  # (nc, p+1)
        rows_idx = np.broadcast_to(pos[:, None, :], WF.shape)
        cols_idx = np.broadcast_to(np.arange(nc * q).reshape(nc, q)[:, :, None], WF.shape)
        ok = rows_idx >= 0
        Phi = sps.csr_matrix((WF[ok], (rows_idx[ok], cols_idx[ok])), shape=(len(cols), nc * q))
        Y = disc.qp_x[cells].reshape(-1, 2)
        k2 = ss.size
        if op == V_OP:
            Bs = Phi @ ss.eval(Y)  # (c, k2)
            B = np.kron(Bs, np.eye(d))
        else:
            Nn = disc.qp_n[cells].reshape(-1, 2)
            M = self.kernel.traction_of_lagrange(ss.gradient(Y), Nn[:, None, :])  # (Q, k2, d, d)
            Bm = (Phi @ M.reshape(len(Y), -1)).reshape(len(cols), k2, d, d)
            B = Bm.transpose(0, 2, 1, 3).reshape(len(cols) * d, k2 * d)
        self.stats.lowrank_blocks += 1
        return LowRankBlock(A, B, S)

    # ----------------------------------------------------------------- trees
    def row_tree(self) -> cl.ClusterTree:
        if "rows" not in self._trees:
            geom = cl.IndexedGeometry.from_points(self.rows.points)
            self._trees["rows"] = cl.build_cluster_tree(geom, self.hcfg.cluster)
        return self._trees["rows"]

    def col_geometry(self, op: str) -> cl.IndexedGeometry:
        name = _SPACE[op]
        sp = self.disc.spaces[name]
        pts = np.empty((sp.n, 2))
        for j in range(sp.n):
            e, u = self.disc.greville(name, j)
            pts[j] = self.disc.curves[e](np.array([u]))[0]
        return cl.IndexedGeometry.from_boxes(pts, [self.disc.support_box(name, j) for j in range(sp.n)])

    def col_tree(self, op: str) -> cl.ClusterTree:
        key = _SPACE[op]
        if key not in self._trees:
            self._trees[key] = cl.build_cluster_tree(self.col_geometry(op), self.hcfg.cluster)
        return self._trees[key]

    # ------------------------------------------------------------- operators
    def assemble(self, op: str, dense: bool = False) -> HMatrix:
        """H-matrix of V or (C+K); ``dense=True`` gives the single-leaf reference."""
        if dense:
            big = cl.ClusterConfig(n_min=10 ** 9, eta=self.hcfg.eta)
            rows = cl.build_cluster_tree(cl.IndexedGeometry.from_points(self.rows.points), big)
            cols = cl.build_cluster_tree(self.col_geometry(op), big)
            tree = cl.build_block_cluster_tree(rows, cols, big)
        else:
            tree = cl.build_block_cluster_tree(self.row_tree(), self.col_tree(op), self.hcfg.cluster)
        H = HMatrix(tree, self.kernel.ncomp)
        for leaf in tree.leaves:
            r = tree.rows.indices(leaf.row)
            c = tree.cols.indices(leaf.col)
            if leaf.admissible:
                blk = recompress(self.lowrank_block(op, r, c, leaf.row.box, leaf.col.box),
                                 self.hcfg.recompress_tol)
                if blk.nreals >= blk.shape[0] * blk.shape[1]:
                    H.set_payload(leaf, blk.to_dense())
                else:
                    H.set_payload(leaf, blk)
            else:
                H.set_payload(leaf, self.dense_block(op, r, c))
        H.check_complete()
        if op == K_OP:
            complete_diagonal(self, H)
        return H


def assemble_operator(op: str, disc: Discretization, kernel, rows: CollocationSet,
                      hcfg: HConfig = HConfig(), dense: bool = False) -> HMatrix:
    """H-matrix of V or of the completed (C+K)."""
    return Assembler(disc, kernel, rows, hcfg=hcfg).assemble(op, dense=dense)


def assemble_lowrank(asm: Assembler, block, op: str, k: int | None = None) -> LowRankBlock:
    """Interpolation factors of an admissible block-tree leaf."""
    if not block.admissible:
        raise ContractError("low-rank assembly requested for an inadmissible block")
    tree_r, tree_c = asm.row_tree(), asm.col_tree(op)
    return asm.lowrank_block(op, tree_r.indices(block.row), tree_c.indices(block.col),
                             block.row.box, block.col.box, k)


def complete_diagonal(asm: Assembler, H: HMatrix) -> None:
    """Fill the singular entries of (C+K) so every row annihilates translations.

    For a singular pair (x_i in the closed support of phi_j) the entry is

        R_ij + P_ij - phi_j(x_i) * (sum_{l nonsingular} K_il + sum_{l singular} P_il)

    where R_ij integrates T (phi_j(y) - phi_j(x_i)) over the cells touching
    x_i (a bounded integrand) and P_ij integrates T phi_j over the remaining
    cells of the support. The nonsingular row sums come from a matvec of the
    H-matrix itself. Row sums vanish by construction.
    """
    disc, d = asm.disc, asm.kernel.ncomp
    if not disc.closed:
        raise ContractError("rigid-body completion needs a closed boundary")
    SC = disc.cells["u"]
    n_rows = len(asm.rows)
    rowsum = np.empty((n_rows, d, d))
    for m in range(d):
        coeff = np.zeros(SC.space.n * d)
        coeff[m::d] = 1.0
        rowsum[:, :, m] = H.matvec(coeff).reshape(n_rows, d)
    entries = {}
    for i in range(n_rows):
        x = asm.rows.points[i]
        sing_cells = asm._row_sing[i]
        S = asm.singular_functions(i)
        spos = {int(j): a for a, j in enumerate(S)}
        ids_x, vals_x = disc.space_u.basis(int(asm.rows.patch[i]), np.array([asm.rows.param[i]]))
        phi_x = np.zeros(len(S))
        for j, v in zip(ids_x[0], vals_x[0]):
            phi_x[spos[int(j)]] += v
        R = np.zeros((len(S), d, d))
        for c, s in sing_cells.items():
            u, w = asm.cell_rule(c, x, s)
            y, n, jac, vals = disc.eval_cell(c, u)
            ker = asm.kernel.T(x, y, n) * (w * jac)[:, None, None]
            F = np.zeros((len(u), len(S)))
            for f, j in enumerate(SC.ids[c]):
                F[:, spos[int(j)]] += vals["u"][:, f]
            R += np.einsum("qs,qab->sab", F - phi_x, ker)
        P = np.zeros((len(S), d, d))
        for a, j in enumerate(S):
            for c in SC.fn_cells[j]:
                if c in sing_cells:
                    continue
                f = int(np.flatnonzero(SC.ids[c] == j)[0])
                P[a] += asm.refined_contribution(K_OP, i, int(c))[f] if _is_near(asm, i, c) \
                    else _regular_contribution(asm, i, int(c))[f]
        total = rowsum[i] + P.sum(axis=0)
        Kij = R + P - phi_x[:, None, None] * total
        for a, j in enumerate(S):
            entries[(i, int(j))] = Kij[a]
    _write_entries(H, entries, d)


assemble_K_diagonal_completion = complete_diagonal


def _is_near(asm: Assembler, i: int, c: int) -> bool:
    disc = asm.disc
    x = asm.rows.points[i]
    gap = np.maximum(0.0, np.maximum(disc.cell_lo[c] - x, x - disc.cell_hi[c]))
    return np.linalg.norm(gap) < asm.quad.near_factor * disc.cell_len[c]


def _regular_contribution(asm: Assembler, i: int, c: int) -> np.ndarray:
    disc = asm.disc
    x = asm.rows.points[i]
    ker = asm.kernel.T(x, disc.qp_x[c], disc.qp_n[c])
    F = disc.cells["u"].vals[c] * disc.qp_w[c][:, None]
    return (ker[:, None] * F[:, :, None, None]).sum(axis=0)


def _write_entries(H: HMatrix, entries: dict, d: int) -> None:
    rinv = H.tree.rows.inverse_perm
    cinv = H.tree.cols.inverse_perm
    by_row = {}
    for (i, j), v in entries.items():
        by_row.setdefault(i, []).append((j, v))
    written = 0
    for leaf in H.tree.leaves:
        P = H.payloads[leaf.id]
        rows = H.tree.rows.indices(leaf.row)
        for i in rows:
            for j, v in by_row.get(int(i), ()):
                pc = cinv[j]
                if leaf.col.start <= pc < leaf.col.stop:
                    if isinstance(P, LowRankBlock):
                        raise ContractError("singular pair inside a low-rank block")
                    ri = (rinv[i] - leaf.row.start) * d
                    ci = (pc - leaf.col.start) * d
                    P[ri:ri + d, ci:ci + d] = v
                    written += 1
    if written != len(entries):
        raise ContractError("not every singular entry found a dense block")

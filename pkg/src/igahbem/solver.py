"""Mixed boundary value problems: data projection, block system, solvers, interior evaluation."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import HConfig, K_OP, V_OP, Assembler
from .discretization import DIRICHLET, NEUMANN, Discretization, GeometryError, build_collocation
from .hmatrix import DENSE_GUARD
from .kernels import ElasticKernel, Material, kelvin_T, kelvin_U

log = logging.getLogger(__name__)

BoundaryFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ConvergenceError(RuntimeError):
    """Krylov solver hit its iteration limit."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


class AccuracyWarning(UserWarning):
    pass


@dataclass
class BvpCase:
    """Discretized boundary plus Dirichlet / Neumann data.

    ``g_D`` and ``g_N`` map ``(points, normals)`` of shape ``(m, 2)`` to values
    ``(m, ncomp)``; each is only evaluated on patches carrying its tag.
    """

    disc: Discretization
    g_D: Optional[BoundaryFunction] = None
    g_N: Optional[BoundaryFunction] = None
    material: Material = field(default_factory=Material)
    kernel: object = None

    def __post_init__(self):
        if self.kernel is None:
            self.kernel = ElasticKernel(self.material)
        if NEUMANN in self.disc.bcs and DIRICHLET not in self.disc.bcs:
            raise GeometryError("pure Neumann problems are not supported (no rigid-body gauge)")


# ------------------------------------------------------------------ manufactured data
def kelvin_field(sources, material: Material):
    """Displacement and traction of unit point forces placed outside the domain.

    ``sources`` is a list of ``(point, force)`` pairs.
    """
    pts = [np.asarray(s, float) for s, _ in sources]
    frc = [np.asarray(f, float) for _, f in sources]

    def u(x, n=None):
        x = np.atleast_2d(x)
        return sum(np.einsum("i,mij->mj", f, kelvin_U(s, x, material)) for s, f in zip(pts, frc))

    def t(x, n):
        x = np.atleast_2d(x)
        return sum(np.einsum("i,mij->mj", f, kelvin_T(s, x, np.atleast_2d(n), material))
                   for s, f in zip(pts, frc))

    return u, t


# ------------------------------------------------------------------ projection
def project_data(disc: Discretization, name: str, g: BoundaryFunction, functions=None) -> np.ndarray:
    """Interpolate ``g`` at Greville points of the selected functions of space ``name``.

    Returns coefficients of shape ``(len(functions), ncomp)``. The restricted
    system is square: every other function vanishes at the selected points.
    """
    sp = disc.spaces[name]
    functions = np.arange(sp.n) if functions is None else np.asarray(functions, int)
    pos = np.full(sp.n, -1)
    pos[functions] = np.arange(len(functions))
    m = len(functions)
    A = np.zeros((m, m))
    pts = np.empty((m, 2))
    nrm = np.empty((m, 2))
    for a, j in enumerate(functions):
        e, u = disc.greville(name, int(j))
        x, n, _ = disc.geometry_at(e, np.array([u]))
        pts[a], nrm[a] = x[0], n[0]
        ids, vals = sp.basis(e, np.array([u]))
        for jj, v in zip(ids[0], vals[0]):
            if pos[jj] >= 0:
                A[a, pos[jj]] += v
            elif abs(v) > 1e-14:
                raise GeometryError("data projection: selected functions do not decouple")
    vals = np.asarray(g(pts, nrm), float).reshape(m, -1)
    try:
        return sla.solve(A, vals)
    except sla.LinAlgError as exc:
        raise GeometryError("singular interpolation matrix in data projection") from exc


# ------------------------------------------------------------------ system
@dataclass
class SystemBlocks:
    """Full H-matrices of V and (C+K) over all rows plus the D/N index split."""

    V: object
    K: object
    t_D: np.ndarray
    t_N: np.ndarray
    u_D: np.ndarray
    u_N: np.ndarray
    ncomp: int

    def _dofs(self, idx):
        d = self.ncomp
        return (d * np.asarray(idx)[:, None] + np.arange(d)).ravel()

    @property
    def n_unknowns(self) -> int:
        return self.ncomp * (len(self.t_D) + len(self.u_N))

    def split(self, z):
        nt = self.ncomp * len(self.t_D)
        return z[:nt], z[nt:]

    def lhs_matvec(self, z: np.ndarray) -> np.ndarray:
        zt, zu = self.split(np.asarray(z, float))
        xt = np.zeros(self.V.shape[1])
        xu = np.zeros(self.K.shape[1])
        xt[self._dofs(self.t_D)] = zt
        xu[self._dofs(self.u_N)] = zu
        return self.V.matvec(xt) - self.K.matvec(xu)

    def lhs_dense(self) -> np.ndarray:
        n = self.n_unknowns
        if n * n > DENSE_GUARD:
            raise ValueError(f"refusing dense solve of size {n} (guard {DENSE_GUARD} entries)")
        return np.hstack([self.V.to_dense()[:, self._dofs(self.t_D)],
                          -self.K.to_dense()[:, self._dofs(self.u_N)]])

    def rhs(self, gu_D: np.ndarray, gt_N: np.ndarray) -> np.ndarray:
        xu = np.zeros(self.K.shape[1])
        xt = np.zeros(self.V.shape[1])
        xu[self._dofs(self.u_D)] = np.ravel(gu_D)
        xt[self._dofs(self.t_N)] = np.ravel(gt_N)
        return self.K.matvec(xu) - self.V.matvec(xt)

    def linear_operator(self) -> spla.LinearOperator:
        n = self.n_unknowns
        return spla.LinearOperator((n, n), matvec=self.lhs_matvec, dtype=float)


@dataclass
class AssembledSystem:
    blocks: SystemBlocks
    rhs: np.ndarray
    gu_D: np.ndarray
    gt_N: np.ndarray
    assembler: Assembler

    def full_coefficients(self, z: np.ndarray):
        """Complete (u, t) coefficient arrays from the unknown vector."""
        b, d = self.blocks, self.blocks.ncomp
        disc = self.assembler.disc
        zt, zu = b.split(z)
        u = np.zeros((disc.n_u, d))
        t = np.zeros((disc.n_t, d))
        u[b.u_D] = self.gu_D.reshape(-1, d)
        u[b.u_N] = zu.reshape(-1, d)
        t[b.t_D] = zt.reshape(-1, d)
        t[b.t_N] = self.gt_N.reshape(-1, d)
        return u, t


def assemble_system(case: BvpCase, hcfg: HConfig = HConfig(), dense: bool = False,
                    delta: float = 0.05) -> AssembledSystem:
    """Operators, known-data coefficients and right-hand side of the mixed problem."""
    disc, d = case.disc, case.kernel.ncomp
    rows = build_collocation(disc, delta)
    asm = Assembler(disc, case.kernel, rows, hcfg=hcfg)
    V = asm.assemble(V_OP, dense=dense)
    K = asm.assemble(K_OP, dense=dense)
    u_known = np.array([disc.function_on_dirichlet(j) for j in range(disc.n_u)], bool)
    t_known = np.array([not disc.traction_on_dirichlet(j) for j in range(disc.n_t)], bool)
    blocks = SystemBlocks(V, K, np.flatnonzero(~t_known), np.flatnonzero(t_known),
                          np.flatnonzero(u_known), np.flatnonzero(~u_known), d)
    gu = np.zeros((0, d))
    gt = np.zeros((0, d))
    if len(blocks.u_D):
        if case.g_D is None:
            raise GeometryError("Dirichlet patches need g_D")
        gu = project_data(disc, "u", case.g_D, blocks.u_D)
    if len(blocks.t_N):
        if case.g_N is None:
            raise GeometryError("Neumann patches need g_N")
        gt = project_data(disc, "t", case.g_N, blocks.t_N)
    rhs = blocks.rhs(gu, gt)
    return AssembledSystem(blocks, rhs, gu, gt, asm)


# ------------------------------------------------------------------ solvers
def solve_dense(lhs, rhs) -> np.ndarray:
    """LU solve of a materialized system (array, or SystemBlocks under the guard)."""
    A = lhs.lhs_dense() if isinstance(lhs, SystemBlocks) else np.asarray(lhs, float)
    if A.size > DENSE_GUARD:
        raise ValueError(f"refusing dense solve of {A.shape} (guard {DENSE_GUARD} entries)")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            return sla.lu_solve(sla.lu_factor(A, check_finite=True), np.asarray(rhs, float))
    except (sla.LinAlgError, sla.LinAlgWarning) as exc:
        raise np.linalg.LinAlgError("singular system matrix") from exc


def solve_iterative(lhs, rhs, tol: float = 1e-8, max_iter: int = 1000, restart: int = 100):
    """Restarted GMRES; returns ``(x, iterations, history)`` of relative residuals."""
    if isinstance(lhs, SystemBlocks):
        op = lhs.linear_operator()
    elif isinstance(lhs, np.ndarray):
        op = spla.aslinearoperator(lhs)
    else:
        op = lhs
    b = np.asarray(rhs, float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0, [0.0]
    history = [1.0]
    x, info = spla.gmres(op, b, rtol=tol, atol=0.0, restart=min(restart, len(b)),
                         maxiter=max(1, -(-max_iter // restart)),
                         callback=history.append, callback_type="pr_norm")
    true_res = np.linalg.norm(b - op.matvec(x)) / bnorm
    if info != 0 or true_res > 10 * tol:
        raise ConvergenceError(f"GMRES did not reach tol {tol} (residual {true_res:.3e})", history)
    return x, len(history) - 1, history


# ------------------------------------------------------------------ post-processing
def eval_interior(points, u_coef, t_coef, case: BvpCase, asm: Assembler | None = None) -> np.ndarray:
    """Displacements at interior points from the discrete Cauchy data."""
    disc, kern = case.disc, case.kernel
    X = np.atleast_2d(np.asarray(points, float))
    hmin = disc.min_span_length()
    if asm is None:
        asm = Assembler(disc, kern, build_collocation(disc))
    Ucell = np.einsum("cqf,cfb->cqb", disc.cells["u"].vals, u_coef[disc.cells["u"].ids])
    Tcell = np.einsum("cqf,cfb->cqb", disc.cells["t"].vals, t_coef[disc.cells["t"].ids])
    out = np.zeros((len(X), kern.ncomp))
    for a, x in enumerate(X):
        gap = np.maximum(0.0, np.maximum(disc.cell_lo - x, x - disc.cell_hi))
        dist = np.linalg.norm(gap, axis=1)
        if np.min(np.linalg.norm(disc.qp_x - x, axis=2)) < 0.1 * hmin:
            warnings.warn(f"interior point {x} is close to the boundary", AccuracyWarning)
        near = dist < asm.quad.near_factor * disc.cell_len
        far = ~near
        Uk = kern.U(x, disc.qp_x[far])
        Tk = kern.T(x, disc.qp_x[far], disc.qp_n[far])
        w = disc.qp_w[far]
        out[a] += np.einsum("cq,cqij,cqj->i", w, Uk, Tcell[far])
        out[a] -= np.einsum("cq,cqij,cqj->i", w, Tk, Ucell[far])
        for c in np.flatnonzero(near):
            u, wq = asm.cell_rule(int(c), x)
            y, n, jac, vals = disc.eval_cell(int(c), u)
            uu = vals["u"] @ u_coef[disc.cells["u"].ids[c]]
            tt = vals["t"] @ t_coef[disc.cells["t"].ids[c]]
            ww = wq * jac
            out[a] += np.einsum("q,qij,qj->i", ww, kern.U(x, y), tt)
            out[a] -= np.einsum("q,qij,qj->i", ww, kern.T(x, y, n), uu)
    return out


@dataclass
class Solution:
    u: np.ndarray
    t: np.ndarray
    iterations: int
    history: list
    system: AssembledSystem


def solve_case(case: BvpCase, hcfg: HConfig = HConfig(), tol: float = 1e-8,
               max_iter: int = 1000, dense: bool = False) -> Solution:
    """Assemble and solve; ``dense=True`` uses the single-leaf operators and LU."""
    sys_ = assemble_system(case, hcfg, dense=dense)
    if dense:
        z, its, hist = solve_dense(sys_.blocks, sys_.rhs), 0, []
    else:
        z, its, hist = solve_iterative(sys_.blocks, sys_.rhs, tol, max_iter)
    u, t = sys_.full_coefficients(z)
    return Solution(u, t, its, hist, sys_)

"""Hierarchical matrix container: dense and low-rank leaves over a block tree.

Scalar cluster indices expand to ``ncomp`` consecutive degrees of freedom
(component-blocked layout), so a leaf of ``r x c`` indices holds an
``(ncomp r) x (ncomp c)`` payload.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .clustering import BlockClusterTree

DENSE_GUARD = 4_000_000
BYTES_PER_REAL = 8


@dataclass
class LowRankBlock:
    """``A @ S @ B.T`` (three-factor) or ``A @ B.T`` when ``S is None``."""

    A: np.ndarray
    B: np.ndarray
    S: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape[0], self.B.shape[0]

    @property
    def rank(self) -> int:
        return self.A.shape[1] if self.S is None else self.S.shape[0]

    @property
    def nreals(self) -> int:
        r, c = self.shape
        k = self.rank
        return k * (r + c + k) if self.S is not None else k * (r + c)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        z = self.B.T @ x
        if self.S is not None:
            z = self.S @ z
        return self.A @ z

    def to_dense(self) -> np.ndarray:
        left = self.A if self.S is None else self.A @ self.S
        return left @ self.B.T


Payload = Union[np.ndarray, LowRankBlock]


def recompress(block: LowRankBlock, tol: float = 1e-8) -> LowRankBlock:
    """Truncated two-factor form via QR of both factors and an SVD of the core.

    Keeps the smallest rank k' with sigma_{k'+1} <= tol * sigma_1. With
    ``tol == 0`` only exactly vanishing singular values are dropped.
    """
    if tol < 0:
        raise ValueError("recompression tolerance must be >= 0")
    left = block.A if block.S is None else block.A @ block.S
    Q1, R1 = np.linalg.qr(left)
    Q2, R2 = np.linalg.qr(block.B)
    W, sigma, Zt = np.linalg.svd(R1 @ R2.T)
    if sigma.size == 0 or sigma[0] == 0:
        k = 0
    else:
        keep = sigma > tol * sigma[0]
        k = int(np.count_nonzero(keep))
    k = min(k, block.rank)
    U = Q1 @ (W[:, :k] * sigma[:k])
    V = Q2 @ Zt[:k].T
    return LowRankBlock(U, V)


class HMatrix:
    def __init__(self, tree: BlockClusterTree, ncomp: int = 1):
        self.tree = tree
        self.ncomp = ncomp
        self.payloads: dict[int, Payload] = {}
        self.row_dofs = self._dofs(tree.rows.perm)
        self.col_dofs = self._dofs(tree.cols.perm)

    def _dofs(self, perm: np.ndarray) -> np.ndarray:
        d = self.ncomp
        return (d * perm[:, None] + np.arange(d)).ravel()

    @property
    def shape(self) -> tuple[int, int]:
        n, m = self.tree.shape
        return n * self.ncomp, m * self.ncomp

    def leaf_slices(self, leaf):
        d = self.ncomp
        return slice(d * leaf.row.start, d * leaf.row.stop), slice(d * leaf.col.start, d * leaf.col.stop)

    def set_payload(self, leaf, payload: Payload):
        rs, cs = self.leaf_slices(leaf)
        shape = (rs.stop - rs.start, cs.stop - cs.start)
        got = payload.shape
        if tuple(got) != shape:
            raise ValueError(f"payload shape {got} does not match block {shape}")
        self.payloads[leaf.id] = payload

    def check_complete(self):
        missing = [b.id for b in self.tree.leaves if b.id not in self.payloads]
        if missing:
            raise ValueError(f"{len(missing)} block leaves without payload")

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"vector length {x.shape[0]} != {self.shape[1]} columns")
        xp = x[self.col_dofs]
        yp = np.zeros((self.shape[0],) + x.shape[1:])
        for leaf in self.tree.leaves:
            rs, cs = self.leaf_slices(leaf)
            P = self.payloads[leaf.id]
            if isinstance(P, LowRankBlock):
                yp[rs] += P.matvec(xp[cs])
            else:
                yp[rs] += P @ xp[cs]
        y = np.empty_like(yp)
        y[self.row_dofs] = yp
        return y

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        n, m = self.shape
        if n * m > DENSE_GUARD:
            raise ValueError(f"refusing to materialize {n}x{m} matrix (guard {DENSE_GUARD} entries)")
        Mp = np.zeros((n, m))
        for leaf in self.tree.leaves:
            rs, cs = self.leaf_slices(leaf)
            P = self.payloads[leaf.id]
            Mp[rs, cs] = P.to_dense() if isinstance(P, LowRankBlock) else P
        M = np.empty_like(Mp)
        M[np.ix_(self.row_dofs, self.col_dofs)] = Mp
        return M

    def storage_report(self) -> "StorageReport":
        reals = 0
        for leaf in self.tree.leaves:
            P = self.payloads[leaf.id]
            reals += P.nreals if isinstance(P, LowRankBlock) else P.size
        n, m = self.shape
        return StorageReport(reals * BYTES_PER_REAL, n * m * BYTES_PER_REAL)

    def leaf_counts(self) -> dict:
        low = sum(isinstance(P, LowRankBlock) for P in self.payloads.values())
        return {"lowrank": low, "dense": len(self.payloads) - low}


@dataclass(frozen=True)
class StorageReport:
    bytes_H: int
    bytes_dense: int

    @property
    def compression_rate(self) -> float:
        return self.bytes_dense / self.bytes_H

    def __iter__(self):
        return iter((self.bytes_H, self.bytes_dense, self.compression_rate))


def storage_report(H: HMatrix) -> StorageReport:
    return H.storage_report()


def matvec(H: HMatrix, x) -> np.ndarray:
    return H.matvec(x)


def to_dense(H: HMatrix) -> np.ndarray:
    return H.to_dense()

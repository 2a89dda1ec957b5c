"""Fundamental solutions and Chebyshev-Lagrange kernel interpolation.

All kernel functions broadcast over leading axes: ``x`` and ``y`` are arrays
of shape ``(..., 2)`` and the result carries two trailing component axes.
Index convention for the elastic kernels: ``U[..., i, j]`` and ``T[..., i, j]``
are the displacement / traction component ``j`` at ``y`` caused by a unit
point force in direction ``i`` at ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .nurbs import BoundingBox


class SingularityError(ValueError):
    """Kernel evaluated at coincident source and field points."""


@dataclass(frozen=True)
class Material:
    lame_lambda: float = 1.5
    shear_mu: float = 1.0

    def __post_init__(self):
        if not (self.lame_lambda > 0 and self.shear_mu > 0):
            raise ValueError("Lame constants must be positive")

    @property
    def poisson_nu(self) -> float:
        return self.lame_lambda / (2.0 * (self.lame_lambda + self.shear_mu))

    @classmethod
    def from_poisson(cls, mu: float, nu: float) -> "Material":
        return cls(2.0 * mu * nu / (1.0 - 2.0 * nu), mu)


def _geometry(x, y, strict: bool = True):
    d = np.asarray(y, float) - np.asarray(x, float)
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        if strict:
            raise SingularityError("kernel evaluated at x == y")
        r = np.where(r == 0, np.nan, r)
    return d / r[..., None], r


def _check_normal(n):
    n = np.asarray(n, float)
    if np.any(np.abs(np.linalg.norm(n, axis=-1) - 1.0) > 1e-10):
        raise ValueError("normal vector must have unit length")
    return n


def kelvin_U(x, y, mat: Material, strict: bool = True) -> np.ndarray:
    """Plane-strain Kelvin displacement kernel."""
    dr, r = _geometry(x, y, strict)
    nu, mu = mat.poisson_nu, mat.shear_mu
    c = 1.0 / (8.0 * np.pi * mu * (1.0 - nu))
    U = dr[..., :, None] * dr[..., None, :]
    U -= (3.0 - 4.0 * nu) * np.log(r)[..., None, None] * np.eye(2)
    return c * U


def kelvin_T(x, y, n, mat: Material, strict: bool = True) -> np.ndarray:
    """Plane-strain Kelvin traction kernel at ``y`` with unit normal ``n``."""
    if strict:
        n = _check_normal(n)
    dr, r = _geometry(x, y, strict)
    nu = mat.poisson_nu
    drdn = np.sum(dr * n, axis=-1)[..., None, None]
    a = 1.0 - 2.0 * nu
    T = drdn * (a * np.eye(2) + 2.0 * dr[..., :, None] * dr[..., None, :])
    T -= a * (dr[..., :, None] * n[..., None, :] - n[..., :, None] * dr[..., None, :])
    return -T / (4.0 * np.pi * (1.0 - nu) * r)[..., None, None]


def laplace_kernels(x, y, n):
    """``G = -ln(r)/(2 pi)`` and its normal derivative with respect to ``y``."""
    dr, r = _geometry(x, y)
    G = -np.log(r) / (2.0 * np.pi)
    dGdn = -np.sum(dr * np.asarray(n, float), axis=-1) / (2.0 * np.pi * r)
    return G, dGdn


def traction_of_gradient(grad, n, mat: Material) -> np.ndarray:
    """Traction of the displacement fields ``L e_m`` given ``grad L`` and the normal.

    Returns ``M[..., i, m]``: component ``i`` of the traction of ``L e_m``.
    """
    g = np.asarray(grad, float)
    n = np.asarray(n, float)
    lam, mu = mat.lame_lambda, mat.shear_mu
    gn = np.sum(g * n, axis=-1)[..., None, None]
    return (lam * n[..., :, None] * g[..., None, :]
            + mu * g[..., :, None] * n[..., None, :]
            + mu * gn * np.eye(2))


class ElasticKernel:
    """Plane-strain Kelvin kernels for two-component elastostatics."""

    ncomp = 2

    def __init__(self, material: Material):
        self.material = material

    def U(self, x, y):
        return kelvin_U(x, y, self.material, strict=False)

    def T(self, x, y, n):
        return kelvin_T(x, y, n, self.material, strict=False)

    def traction_of_lagrange(self, grad, n):
        return traction_of_gradient(grad, n, self.material)


class LaplaceKernel:
    """Scalar potential kernels, shaped as 1x1 component blocks."""

    ncomp = 1

    def U(self, x, y):
        dr, r = _geometry(x, y, strict=False)
        return (-np.log(r) / (2.0 * np.pi))[..., None, None]

    def T(self, x, y, n):
        dr, r = _geometry(x, y, strict=False)
        return (-np.sum(dr * n, axis=-1) / (2.0 * np.pi * r))[..., None, None]

    def traction_of_lagrange(self, grad, n):
        return np.sum(np.asarray(grad) * np.asarray(n), axis=-1)[..., None, None]


def chebyshev_roots(k: int) -> np.ndarray:
    """Roots of the first-kind Chebyshev polynomial of degree k on [-1, 1]."""
    return np.cos((2.0 * np.arange(k) + 1.0) * np.pi / (2.0 * k))


def pad_box(box: BoundingBox, rel: float = 1e-8, floor: float = 1e-8) -> BoundingBox:
    """Give zero-thickness axes a tiny extent so cardinal polynomials stay defined."""
    diam = float(np.linalg.norm(box.hi - box.lo))
    pad = max(floor, rel * diam)
    lo, hi = box.lo.copy(), box.hi.copy()
    thin = (hi - lo) < pad
    lo[thin] -= 0.5 * pad
    hi[thin] += 0.5 * pad
    return BoundingBox(lo, hi)


def _cardinal(nodes: np.ndarray, t: np.ndarray):
    """Values and derivatives of 1D Lagrange cardinal polynomials at ``t``.

    Returns arrays of shape (m, k).
    """
    k = len(nodes)
    diff = t[:, None] - nodes[None, :]  # (m, k)
    denom = np.array([np.prod([nodes[a] - nodes[b] for b in range(k) if b != a]) for a in range(k)])
    val = np.empty((len(t), k))
    der = np.zeros((len(t), k))
    for a in range(k):
        others = [b for b in range(k) if b != a]
        val[:, a] = np.prod(diff[:, others], axis=1) / denom[a]
        for b in others:
            rest = [c for c in others if c != b]
            der[:, a] += np.prod(diff[:, rest], axis=1) / denom[a]
    return val, der


@dataclass(frozen=True)
class InterpolationScheme:
    """Tensor Chebyshev grid of ``order_k`` points per axis on a (padded) box."""

    order_k: int
    box: BoundingBox

    def __post_init__(self):
        if self.order_k < 1:
            raise ValueError("interpolation order must be >= 1")
        object.__setattr__(self, "box", pad_box(self.box))

    @cached_property
    def axis_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        c, h = self.box.center, 0.5 * (self.box.hi - self.box.lo)
        t = chebyshev_roots(self.order_k)
        return c[0] + h[0] * t, c[1] + h[1] * t

    @property
    def size(self) -> int:
        return self.order_k ** 2

    def nodes(self) -> np.ndarray:
        """All k^2 nodes; node ``a*k + b`` has coordinates (x_a, y_b)."""
        nx, ny = self.axis_nodes
        X, Y = np.meshgrid(nx, ny, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def eval(self, x) -> np.ndarray:
        """Cardinal values L_nu(x) for all nu, shape (m, k^2)."""
        x = np.atleast_2d(x)
        nx, ny = self.axis_nodes
        vx, _ = _cardinal(nx, x[:, 0])
        vy, _ = _cardinal(ny, x[:, 1])
        return (vx[:, :, None] * vy[:, None, :]).reshape(len(x), -1)

    def gradient(self, x) -> np.ndarray:
        """Gradients of all cardinal functions, shape (m, k^2, 2)."""
        x = np.atleast_2d(x)
        nx, ny = self.axis_nodes
        vx, dx = _cardinal(nx, x[:, 0])
        vy, dy = _cardinal(ny, x[:, 1])
        gx = (dx[:, :, None] * vy[:, None, :]).reshape(len(x), -1)
        gy = (vx[:, :, None] * dy[:, None, :]).reshape(len(x), -1)
        return np.stack([gx, gy], axis=-1)


def chebyshev_nodes(scheme: InterpolationScheme) -> np.ndarray:
    """k x k grid of Chebyshev nodes, shape (k, k, 2)."""
    k = scheme.order_k
    return scheme.nodes().reshape(k, k, 2)


def _flat(scheme, nu):
    return nu[0] * scheme.order_k + nu[1] if isinstance(nu, tuple) else int(nu)


def lagrange_eval(scheme: InterpolationScheme, nu, x) -> float:
    return float(scheme.eval(np.asarray(x, float)[None])[0, _flat(scheme, nu)])


def lagrange_gradient(scheme: InterpolationScheme, nu, x) -> np.ndarray:
    return scheme.gradient(np.asarray(x, float)[None])[0, _flat(scheme, nu)]


def traction_of_lagrange(scheme: InterpolationScheme, mu_index, y, n, mat: Material) -> np.ndarray:
    """Traction operator applied to ``L_mu e_m``; column ``m`` of the result."""
    n = _check_normal(n)
    return traction_of_gradient(lagrange_gradient(scheme, mu_index, y), n, mat)

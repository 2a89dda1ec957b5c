"""Gauss-Legendre rules on parametric intervals, graded toward singular points."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureConfig:
    gauss_order_regular: int = 12
    near_subdivision_depth: int = 6
    singular_split: float = 0.15
    near_factor: float = 1.0  # a cell counts as near when dist < near_factor * length

    def __post_init__(self):
        if self.gauss_order_regular < 2:
            raise ValueError("Gauss order must be >= 2")
        if not 0 < self.singular_split < 1:
            raise ValueError("graded subdivision ratio must lie in (0, 1)")


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def rule_on(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    return a + (b - a) * x, (b - a) * w


@lru_cache(maxsize=None)
def _graded_unit(n: int, ratio: float, depth: int):
    # cells [ratio^(m+1), ratio^m] plus an innermost [0, ratio^depth] cell
    # integrated through t = eps * s^3, which tames log and 1/r-type endpoints
    xs, ws = [], []
    for m in range(depth):
        x, w = rule_on(ratio ** (m + 1), ratio ** m, n)
        xs.append(x)
        ws.append(w)
    eps = ratio ** depth
    s, w = gauss_legendre(n)
    xs.append(eps * s ** 3)
    ws.append(3.0 * eps * s ** 2 * w)
    return np.concatenate(xs), np.concatenate(ws)


def graded_rule(s: float, b: float, n: int, ratio: float, depth: int):
    """Rule on the interval between ``s`` and ``b``, graded toward ``s``."""
    x, w = _graded_unit(n, ratio, depth)
    h = b - s
    return s + h * x, abs(h) * w


def split_graded_rule(a: float, b: float, s: float, n: int, ratio: float, depth: int):
    """Rule on [a, b] graded toward an interior or end point ``s`` from both sides."""
    xs, ws = [], []
    if s > a:
        x, w = graded_rule(s, a, n, ratio, depth)
        xs.append(x)
        ws.append(w)
    if s < b:
        x, w = graded_rule(s, b, n, ratio, depth)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)

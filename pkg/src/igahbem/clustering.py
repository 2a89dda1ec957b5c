"""Geometric cluster trees and level-synchronous block cluster trees."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .nurbs import BoundingBox


@dataclass(frozen=True)
class ClusterConfig:
    n_min: int = 16
    eta: float = 1.0

    def __post_init__(self):
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


@dataclass
class IndexedGeometry:
    """Characteristic point and box (lo, hi) per index."""

    points: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_points(cls, points) -> "IndexedGeometry":
        pts = np.asarray(points, float)
        return cls(pts, pts.copy(), pts.copy())

    @classmethod
    def from_boxes(cls, points, boxes) -> "IndexedGeometry":
        return cls(np.asarray(points, float),
                   np.array([b.lo for b in boxes]), np.array([b.hi for b in boxes]))

    def __len__(self):
        return len(self.points)


@dataclass
class Cluster:
    start: int
    stop: int
    box: BoundingBox
    level: int
    children: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class ClusterTree:
    root: Cluster
    perm: np.ndarray  # perm[new position] = original index

    def indices(self, c: Cluster) -> np.ndarray:
        return self.perm[c.start:c.stop]

    def clusters(self):
        stack = [self.root]
        while stack:
            c = stack.pop()
            yield c
            stack.extend(reversed(c.children))

    def leaves(self):
        return [c for c in self.clusters() if c.is_leaf]

    @property
    def depth(self) -> int:
        return max(c.level for c in self.clusters())

    @property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(len(self.perm))
        return inv


def _box_of(geom: IndexedGeometry, idx: np.ndarray) -> BoundingBox:
    return BoundingBox(geom.lo[idx].min(axis=0), geom.hi[idx].max(axis=0))


def _split(geom: IndexedGeometry, idx: np.ndarray, box: BoundingBox):
    axis = int(np.argmax(box.hi - box.lo))
    coord = geom.points[idx, axis]
    mid = 0.5 * (box.lo[axis] + box.hi[axis])
    left = coord <= mid
    if left.all() or not left.any():
        # midpoint left one side empty: median split on the same axis
        order = np.argsort(coord, kind="stable")
        coord_sorted = coord[order]
        if coord_sorted[0] == coord_sorted[-1]:
            h = len(idx) // 2
            return idx[:h], idx[h:]
        med = np.median(coord_sorted)
        left = coord <= med
        if left.all():
            left = coord < med
    return idx[left], idx[~left]


def build_cluster_tree(geom: IndexedGeometry, cfg: ClusterConfig) -> ClusterTree:
    """Geometric bisection at the midpoint of the longest box axis."""
    n = len(geom)
    if n < 1:
        raise ValueError("cannot cluster an empty index set")
    perm = np.arange(n)

    def build(idx, start, level):
        box = _box_of(geom, idx)
        node = Cluster(start, start + len(idx), box, level)
        if len(idx) <= cfg.n_min:
            perm[start:start + len(idx)] = idx
            return node
        a, b = _split(geom, idx, box)
        node.children = [build(a, start, level + 1), build(b, start + len(a), level + 1)]
        return node

    root = build(np.arange(n), 0, 0)
    return ClusterTree(root, perm)


def bbox_diam(b: BoundingBox) -> float:
    return float(np.linalg.norm(b.hi - b.lo))


def bbox_dist(a: BoundingBox, b: BoundingBox) -> float:
    gap = np.maximum(0.0, np.maximum(a.lo - b.hi, b.lo - a.hi))
    return float(np.linalg.norm(gap))


def is_admissible(t: Cluster, s: Cluster, eta: float) -> bool:
    """min(diam B_t, diam B_s) <= eta * dist(B_t, B_s), with disjoint boxes."""
    dist = bbox_dist(t.box, s.box)
    return dist > 0 and min(bbox_diam(t.box), bbox_diam(s.box)) <= eta * dist


ADMISSIBLE = "admissible"
INADMISSIBLE_LEAF = "inadmissible_leaf"
SUBDIVIDED = "subdivided"


@dataclass
class BlockCluster:
    row: Cluster
    col: Cluster
    status: str
    children: list = field(default_factory=list)
    id: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.status != SUBDIVIDED

    @property
    def admissible(self) -> bool:
        return self.status == ADMISSIBLE

    @property
    def shape(self) -> tuple[int, int]:
        return self.row.size, self.col.size


@dataclass
class BlockClusterTree:
    root: BlockCluster
    rows: ClusterTree
    cols: ClusterTree
    leaves: list

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows.perm), len(self.cols.perm)


def build_block_cluster_tree(rows: ClusterTree, cols: ClusterTree, cfg: ClusterConfig) -> BlockClusterTree:
    leaves = []

    def build(t, s):
        if is_admissible(t, s, cfg.eta):
            b = BlockCluster(t, s, ADMISSIBLE)
        elif t.children and s.children:
            b = BlockCluster(t, s, SUBDIVIDED)
            b.children = [build(tc, sc) for tc in t.children for sc in s.children]
            return b
        else:
            b = BlockCluster(t, s, INADMISSIBLE_LEAF)
        b.id = len(leaves)
        leaves.append(b)
        return b

    root = build(rows.root, cols.root)
    return BlockClusterTree(root, rows, cols, leaves)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from igahbem.assembly import Assembler
from igahbem.clustering import (ADMISSIBLE, INADMISSIBLE_LEAF, Cluster, ClusterConfig, IndexedGeometry,
                                bbox_diam, bbox_dist, build_block_cluster_tree, build_cluster_tree,
                                is_admissible)
from igahbem.discretization import Discretization, build_collocation
from igahbem.kernels import ElasticKernel
from igahbem.nurbs import BoundingBox

point_sets = st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=120).map(np.array)


def box(lo, hi):
    return BoundingBox(np.array(lo, float), np.array(hi, float))


def cluster(lo, hi):
    return Cluster(0, 1, box(lo, hi), 0)


def test_box_metrics():
    assert bbox_diam(box([0, 0], [1, 1])) == pytest.approx(np.sqrt(2))
    assert bbox_dist(box([0, 0], [1, 1]), box([3, 0], [4, 1])) == 2.0
    assert bbox_dist(box([0, 0], [2, 2]), box([1, 1], [3, 3])) == 0.0


def test_admissibility_examples():
    assert is_admissible(cluster([0, 0], [1, 1]), cluster([3, 0], [4, 1]), 1.0)
    assert not is_admissible(cluster([0, 0], [1, 1]), cluster([1, 0], [2, 1]), 100.0)
    assert is_admissible(cluster([5, 5], [5, 5]), cluster([0, 0], [1, 1]), 1e-3)
    # coincident point clusters are never admissible
    assert not is_admissible(cluster([1, 1], [1, 1]), cluster([1, 1], [1, 1]), 1.0)


def test_collinear_points_split_by_hand():
    tree = build_cluster_tree(IndexedGeometry.from_points([[0, 0], [1, 0], [2, 0], [3, 0]]), ClusterConfig(1))
    left, right = tree.root.children
    assert sorted(tree.indices(left)) == [0, 1] and sorted(tree.indices(right)) == [2, 3]
    assert tree.depth == 2


def test_single_leaf_when_nmin_large():
    tree = build_cluster_tree(IndexedGeometry.from_points(np.random.default_rng(0).random((30, 2))),
                              ClusterConfig(30))
    assert tree.root.is_leaf


def test_coincident_points_terminate():
    tree = build_cluster_tree(IndexedGeometry.from_points(np.ones((50, 2))), ClusterConfig(4))
    assert all(c.size <= 4 for c in tree.leaves())


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        build_cluster_tree(IndexedGeometry.from_points(np.zeros((0, 2))), ClusterConfig())
    with pytest.raises(ValueError):
        ClusterConfig(n_min=0)
    with pytest.raises(ValueError):
        ClusterConfig(eta=0)


@given(point_sets, st.integers(1, 10))
def test_cluster_tree_invariants(pts, nmin):
    geom = IndexedGeometry.from_points(pts)
    tree = build_cluster_tree(geom, ClusterConfig(nmin))
    assert sorted(tree.perm) == list(range(len(pts)))
    for c in tree.clusters():
        idx = tree.indices(c)
        np.testing.assert_array_equal(c.box.lo, pts[idx].min(axis=0))
        np.testing.assert_array_equal(c.box.hi, pts[idx].max(axis=0))
        assert c.is_leaf == (c.size <= nmin)
        if c.children:
            a, b = c.children
            assert (a.start, a.stop, b.start, b.stop) == (c.start, a.stop, a.stop, c.stop)
            assert a.size > 0 and b.size > 0


@given(point_sets, point_sets, st.integers(1, 8), st.sampled_from([0.5, 1.0, 2.0]))
def test_block_tree_tiles_product(p, q, nmin, eta):
    cfg = ClusterConfig(nmin, eta)
    rows = build_cluster_tree(IndexedGeometry.from_points(p), cfg)
    cols = build_cluster_tree(IndexedGeometry.from_points(q), cfg)
    bt = build_block_cluster_tree(rows, cols, cfg)
    cover = np.zeros((len(p), len(q)), int)
    for leaf in bt.leaves:
        cover[leaf.row.start:leaf.row.stop, leaf.col.start:leaf.col.stop] += 1
        if leaf.status == ADMISSIBLE:
            assert is_admissible(leaf.row, leaf.col, eta)
        else:
            assert leaf.status == INADMISSIBLE_LEAF
            assert leaf.row.is_leaf or leaf.col.is_leaf
    assert np.all(cover == 1)


def test_separated_clouds_give_admissible_offdiagonal():
    rng = np.random.default_rng(3)
    pts = np.vstack([rng.random((8, 2)), rng.random((8, 2)) + [10, 0]])
    tree = build_cluster_tree(IndexedGeometry.from_points(pts), ClusterConfig(1))
    bt = build_block_cluster_tree(tree, tree, ClusterConfig(1, 1.0))
    off = [b for b in bt.root.children if b.row is not b.col]
    assert len(off) == 2 and all(b.status == ADMISSIBLE for b in off)


def test_single_leaf_trees_give_one_block():
    geom = IndexedGeometry.from_points(np.random.default_rng(0).random((10, 2)))
    tree = build_cluster_tree(geom, ClusterConfig(20))
    bt = build_block_cluster_tree(tree, tree, ClusterConfig(20))
    assert len(bt.leaves) == 1 and bt.leaves[0].status == INADMISSIBLE_LEAF


def admissible_cells(asm, op, eta):
    cfg = ClusterConfig(16, eta)
    bt = build_block_cluster_tree(asm.row_tree(), asm.col_tree(op), cfg)
    cells = set()
    for leaf in bt.leaves:
        if leaf.admissible:
            cells |= {(i, j) for i in asm.row_tree().indices(leaf.row) for j in asm.col_tree(op).indices(leaf.col)}
    return cells


@pytest.mark.parametrize("name", ["circle", "tunnel2d"])
def test_geometry_trees(name, request):
    geo = request.getfixturevalue("circle" if name == "circle" else "tunnel")
    disc = Discretization(geo.curves, geo.bcs, level=5)
    asm = Assembler(disc, ElasticKernel(geo.material), build_collocation(disc))
    for op in "VK":
        tree = asm.col_tree(op)
        n = len(tree.perm)
        assert tree.depth <= int(np.ceil(np.log2(n / 16))) + 2
        # column boxes contain member support boxes
        for c in tree.clusters():
            for j in tree.indices(c)[:3]:
                b = disc.support_box("t" if op == "V" else "u", j)
                assert np.all(c.box.lo <= b.lo) and np.all(b.hi <= c.box.hi)
    a05, a1, a2 = (admissible_cells(asm, "V", eta) for eta in (0.5, 1.0, 2.0))
    assert a05 <= a1 <= a2

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from igahbem.clustering import ClusterConfig, IndexedGeometry, build_block_cluster_tree, build_cluster_tree
from igahbem.hmatrix import DENSE_GUARD, HMatrix, LowRankBlock, matvec, recompress, storage_report, to_dense


def kernel_matrix(x, y):
    d = np.linalg.norm(x[:, None] - y[None], axis=2)
    return np.log(d + 1e-3)


def make_hmatrix(n=64, ncomp=1, nmin=8, rank=None, seed=0):
    rng = np.random.default_rng(seed)
    t = rng.random(n) * 2 * np.pi
    pts = np.column_stack([np.cos(t), np.sin(t)])
    cfg = ClusterConfig(nmin, 1.0)
    tree = build_cluster_tree(IndexedGeometry.from_points(pts), cfg)
    bt = build_block_cluster_tree(tree, tree, cfg)
    H = HMatrix(bt, ncomp)
    d = ncomp
    for leaf in bt.leaves:
        r, c = leaf.row.size * d, leaf.col.size * d
        if leaf.admissible:
            k = rank or 3
            H.set_payload(leaf, LowRankBlock(rng.normal(size=(r, k)), rng.normal(size=(c, k)),
                                             rng.normal(size=(k, k))))
        else:
            H.set_payload(leaf, rng.normal(size=(r, c)))
    H.check_complete()
    return H


@pytest.mark.parametrize("ncomp", [1, 2])
def test_matvec_matches_dense(ncomp, rng):
    H = make_hmatrix(64, ncomp)
    x = rng.normal(size=H.shape[1])
    assert np.abs(matvec(H, x) - to_dense(H) @ x).max() <= 1e-13 * np.linalg.norm(x) * 10
    np.testing.assert_array_equal(H @ np.zeros(H.shape[1]), 0.0)


def test_matvec_linearity(rng):
    H = make_hmatrix(64, 2)
    x, z = rng.normal(size=(2, H.shape[1]))
    lhs = H.matvec(2.5 * x - 0.5 * z)
    np.testing.assert_allclose(lhs, 2.5 * H.matvec(x) - 0.5 * H.matvec(z), rtol=1e-12, atol=1e-12)


def test_matvec_dimension_mismatch():
    H = make_hmatrix(32)
    with pytest.raises(ValueError):
        H.matvec(np.ones(31))


def test_single_dense_leaf_is_exact(rng):
    pts = rng.random((20, 2))
    tree = build_cluster_tree(IndexedGeometry.from_points(pts), ClusterConfig(100))
    bt = build_block_cluster_tree(tree, tree, ClusterConfig(100))
    D = rng.normal(size=(20, 20))
    H = HMatrix(bt)
    H.set_payload(bt.leaves[0], D[np.ix_(tree.perm, tree.perm)])
    x = rng.normal(size=20)
    y = np.empty(20)
    y[tree.perm] = D[np.ix_(tree.perm, tree.perm)] @ x[tree.perm]
    np.testing.assert_array_equal(H.matvec(x), y)
    np.testing.assert_array_equal(to_dense(H), D)
    assert storage_report(H).compression_rate == 1.0


def test_payload_shape_checked():
    H = make_hmatrix(32)
    with pytest.raises(ValueError):
        H.set_payload(H.tree.leaves[0], np.zeros((1, 1)))


def test_rank_one_block_values():
    b = LowRankBlock(np.ones((4, 1)), np.ones((5, 1)), np.array([[2.0]]))
    np.testing.assert_array_equal(b.to_dense(), 2.0)


def test_storage_formula():
    b = LowRankBlock(np.zeros((100, 9)), np.zeros((100, 9)), np.zeros((9, 9)))
    assert b.nreals == 9 * (100 + 100 + 9) == 1881
    assert LowRankBlock(np.zeros((100, 4)), np.zeros((50, 4))).nreals == 4 * 150


def test_storage_report_counts_payloads():
    H = make_hmatrix(128, nmin=8, rank=2)
    reals = sum(P.nreals if isinstance(P, LowRankBlock) else P.size for P in H.payloads.values())
    bytes_H, bytes_dense, c = storage_report(H)
    assert bytes_H == 8 * reals and bytes_dense == 8 * 128 * 128
    assert c == bytes_dense / bytes_H > 1


def test_to_dense_guard():
    n = int(np.sqrt(DENSE_GUARD)) + 1
    pts = np.column_stack([np.arange(n), np.zeros(n)])
    tree = build_cluster_tree(IndexedGeometry.from_points(pts), ClusterConfig(n))
    bt = build_block_cluster_tree(tree, tree, ClusterConfig(n))
    with pytest.raises(ValueError):
        HMatrix(bt).to_dense()


# ---------------------------------------------------------------- recompression
def test_recompress_exact_rank_one(rng):
    A = rng.normal(size=(30, 1)) @ rng.normal(size=(1, 5))
    blk = LowRankBlock(A, rng.normal(size=(20, 5)), rng.normal(size=(5, 5)))
    r = recompress(blk, 1e-8)
    assert r.rank == 1 and r.S is None
    assert np.linalg.norm(r.to_dense() - blk.to_dense()) <= 1e-12 * np.linalg.norm(blk.to_dense())


def test_recompress_tol_zero_keeps_full_rank(rng):
    blk = LowRankBlock(rng.normal(size=(30, 6)), rng.normal(size=(25, 6)), rng.normal(size=(6, 6)))
    assert recompress(blk, 0.0).rank == 6
    with pytest.raises(ValueError):
        recompress(blk, -1.0)


@given(st.integers(2, 12), st.sampled_from([1e-2, 1e-4, 1e-6, 1e-9]), st.integers(0, 10_000))
def test_recompress_error_and_monotonicity(k, tol, seed):
    rng = np.random.default_rng(seed)
    blk = LowRankBlock(rng.normal(size=(40, k)) * np.logspace(0, -8, k), rng.normal(size=(35, k)),
                       rng.normal(size=(k, k)))
    r = recompress(blk, tol)
    D = blk.to_dense()
    assert r.rank <= blk.rank and r.nreals <= blk.nreals
    assert np.linalg.norm(D - r.to_dense()) <= tol * np.sqrt(k) * np.linalg.norm(D) + 1e-14

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from igahbem.nurbs import (BasisSpace, BoundingBox, KnotVector, NurbsCurve, accumulated_knot_vector,
                           basis_funs, basis_support_bbox, bezier_extract, curve_from_degree_elevated_line,
                           eval_basis, eval_nurbs, greville_abscissae, insert_knot, raise_to_multiplicity,
                           rational_basis, refine_uniform)

S2 = np.sqrt(0.5)


def quarter_circle():
    return NurbsCurve(KnotVector([0, 0, 0, 1, 1, 1], 2), [[1, 0], [1, 1], [0, 1]], [1, S2, 1])


@st.composite
def knot_vectors(draw, max_degree=4):
    p = draw(st.integers(1, max_degree))
    interior = draw(st.lists(st.sampled_from([0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875]),
                             max_size=8))
    knots = sorted(interior)
    for u in set(knots):  # keep multiplicities <= p
        while knots.count(u) > p:
            knots.remove(u)
    return KnotVector(np.r_[np.zeros(p + 1), knots, np.ones(p + 1)], p)


@st.composite
def curves(draw):
    kv = draw(knot_vectors())
    pts = draw(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=kv.n, max_size=kv.n))
    w = draw(st.lists(st.floats(0.2, 3.0), min_size=kv.n, max_size=kv.n))
    return NurbsCurve(kv, np.array(pts), np.array(w))


# ---------------------------------------------------------------- knot vectors
@pytest.mark.parametrize("knots,p", [
    ([0, 0, 1, 0.5, 1, 1], 2),      # decreasing
    ([0, 0, 1, 1], 2),              # too few functions
    ([0, 0, 0.5, 1, 1, 1], 2),      # left end not clamped
    ([0, 0, 0, 0, 1, 1, 1], 2),     # end multiplicity p+2
    ([0, 0, 0.5, 0.5, 0.5, 1, 1], 1),  # interior multiplicity > p+1
])
def test_knot_vector_rejects_invalid(knots, p):
    with pytest.raises(ValueError):
        KnotVector(knots, p)


def test_basis_values_from_hand_evaluation():
    _, N = eval_basis(KnotVector([0, 0, 0, 1, 1, 1], 2), 0.5)
    np.testing.assert_allclose(N, [0.25, 0.5, 0.25], atol=1e-15)
    _, N = eval_basis(KnotVector([0, 0, 0, 1, 1, 1], 2), 0.0)
    np.testing.assert_allclose(N, [1, 0, 0], atol=1e-15)
    _, N = eval_basis(KnotVector([0, 0, 1, 2, 2], 1), 0.5)
    np.testing.assert_allclose(N, [0.5, 0.5], atol=1e-15)


def test_basis_outside_range_raises():
    with pytest.raises(ValueError):
        eval_basis(KnotVector([0, 0, 0, 1, 1, 1], 2), 1.5)


@given(knot_vectors(), st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_partition_of_unity_and_nonnegativity(kv, us):
    _, N = basis_funs(kv, us)
    assert np.all(N >= -1e-15)
    np.testing.assert_allclose(N.sum(axis=1), 1.0, atol=1e-12)


@given(knot_vectors(), st.floats(0, 1))
def test_local_support(kv, u):
    span, N = eval_basis(kv, u)
    p, U = kv.degree, kv.knots
    for a in range(p + 1):
        i = span - p + a
        if N[a] > 0:
            assert U[i] <= u <= U[i + p + 1]


@given(knot_vectors(), st.floats(0.01, 0.99))
def test_basis_derivative_matches_finite_differences(kv, u):
    h = 1e-6
    span, _, dN = basis_funs(kv, [u], derivative=True)
    _, Np = basis_funs(kv, [u + h], span=span)
    _, Nm = basis_funs(kv, [u - h], span=span)
    np.testing.assert_allclose(dN[0], (Np[0] - Nm[0]) / (2 * h), atol=1e-5 * max(1, np.abs(dN).max()))


# ---------------------------------------------------------------- curves
def test_quarter_circle_lies_on_unit_circle():
    c = quarter_circle()
    pts = c(np.linspace(0, 1, 100))
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(eval_nurbs(c, 0.0)[0], [1, 0], atol=1e-15)


def test_curve_rejects_bad_weights():
    with pytest.raises(ValueError):
        NurbsCurve(KnotVector([0, 0, 0, 1, 1, 1], 2), [[1, 0], [1, 1], [0, 1]], [1, 0, 1])
    with pytest.raises(ValueError):
        NurbsCurve(KnotVector([0, 0, 0, 1, 1, 1], 2), [[1, 0], [1, 1]], [1, 1])


@given(knot_vectors(), st.floats(0, 1))
def test_unit_weights_reduce_to_bsplines(kv, u):
    _, N = basis_funs(kv, [u])
    _, R = rational_basis(kv, np.ones(kv.n), [u])
    np.testing.assert_allclose(R, N, atol=1e-14)


@given(curves(), st.floats(0.01, 0.99))
def test_tangent_matches_finite_differences(c, u):
    h = 1e-6
    _, tan, _ = eval_nurbs(c, u)
    fd = (c(np.array([u + h]))[0] - c(np.array([u - h]))[0]) / (2 * h)
    np.testing.assert_allclose(tan, fd, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(tan).max()))


@given(curves(), st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_rational_partition_of_unity(c, us):
    _, _, _, R = c.evaluate(us)
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-12)


@given(curves(), st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]))
def test_knot_insertion_preserves_curve(c, u):
    if c.knot_vector.multiplicity(u) >= c.degree:
        return
    c2 = insert_knot(c, u)
    assert c2.n == c.n + 1
    s = np.linspace(0, 1, 100)
    assert np.abs(c2(s) - c(s)).max() <= 1e-12 * max(1.0, np.abs(c(s)).max())


def test_insertion_on_quarter_circle_and_multiplicity_limit():
    c = quarter_circle()
    s = np.linspace(0, 1, 100)
    assert np.abs(insert_knot(c, 0.5)(s) - c(s)).max() <= 1e-12
    c2 = insert_knot(insert_knot(c, 0.5), 0.5)
    _, _, _, R = c2.evaluate([0.5])
    assert np.count_nonzero(np.abs(R[0]) > 1e-14) == 1
    np.testing.assert_allclose(R[0].max(), 1.0, atol=1e-14)
    with pytest.raises(ValueError):
        insert_knot(c2, 0.5)
    with pytest.raises(ValueError):
        insert_knot(c, 0.0)


def test_linear_insertion_gives_midpoint():
    c = NurbsCurve(KnotVector([0, 0, 1, 1], 1), [[0, 0], [2, 4]])
    c2 = insert_knot(c, 0.5)
    np.testing.assert_allclose(c2.control_points[1], [1, 2])


# ---------------------------------------------------------------- extraction
def test_bezier_extract_single_span_unchanged():
    c = quarter_circle()
    segs = bezier_extract(c)
    assert len(segs) == 1
    np.testing.assert_allclose(segs[0][0], c.control_points)
    np.testing.assert_allclose(segs[0][1], c.weights)


def test_bezier_extract_cubic_two_segments():
    kv = KnotVector([0, 0, 0, 0, 0.5, 1, 1, 1, 1], 3)
    c = NurbsCurve(kv, [[0, 0], [1, 2], [2, -1], [3, 1], [4, 0]])
    segs = bezier_extract(c)
    assert len(segs) == 2 and all(len(P) == 4 for P, _ in segs)
    assert raise_to_multiplicity(c, [0.5], 3).n == 7


@given(curves())
def test_extracted_control_points_bound_the_curve(c):
    pts = c(np.linspace(0, 1, 200))
    allp = np.vstack([P for P, _ in bezier_extract(c)])
    assert np.all(BoundingBox.of_points(allp).contains(pts, tol=1e-12))


# ---------------------------------------------------------------- Greville / union
def test_greville_values():
    np.testing.assert_allclose(greville_abscissae(KnotVector([0, 0, 0, 1, 1, 1], 2)), [0, 0.5, 1])
    np.testing.assert_allclose(greville_abscissae(KnotVector([0, 0, 0, 1, 2, 3, 3, 3], 2)),
                               [0, 0.5, 1.5, 2.5, 3], atol=1e-12)
    np.testing.assert_allclose(greville_abscissae(KnotVector([0, 0, 0.3, 0.6, 1, 1], 1)),
                               [0, 0.3, 0.6, 1])
    with pytest.raises(ValueError):
        greville_abscissae(KnotVector([0, 0.5, 1], 0))


@given(knot_vectors())
def test_greville_monotone_and_clamped(kv):
    g = greville_abscissae(kv)
    assert len(g) == kv.n and g[0] == 0 and g[-1] == 1
    assert np.all(np.diff(g) >= 0)


def test_accumulated_knot_vector_examples():
    a = KnotVector([0, 0, 0, 0.5, 1, 1, 1], 2)
    b = KnotVector([0, 0, 0, 1, 1, 1], 2)
    assert accumulated_knot_vector(a, a) == a
    np.testing.assert_allclose(accumulated_knot_vector(a, b).knots, [0, 0, 0, 0.5, 1, 1, 1])
    c = accumulated_knot_vector(KnotVector([0, 0, 0.5, 1, 1], 1), KnotVector([0, 0, 0.25, 1, 1], 1))
    np.testing.assert_allclose(c.knots, [0, 0, 0.25, 0.5, 1, 1])
    with pytest.raises(ValueError):
        accumulated_knot_vector(a, KnotVector([0, 0, 0, 2, 2, 2], 2))


# ---------------------------------------------------------------- spaces
def circle_space(level, continuous=True):
    curves = []
    for q in range(4):
        R = np.array([[np.cos(q * np.pi / 2), -np.sin(q * np.pi / 2)],
                      [np.sin(q * np.pi / 2), np.cos(q * np.pi / 2)]])
        curves.append(NurbsCurve(KnotVector([0, 0, 0, 1, 1, 1], 2),
                                 np.array([[1, 0], [1, 1], [0, 1]]) @ R.T, [1, S2, 1]))
    ref = [refine_uniform(c, level) for c in curves]
    return BasisSpace(curves, [r.knot_vector for r in ref], [r.weights for r in ref], continuous)


def test_space_function_counts():
    cont = circle_space(2)
    disc = circle_space(2, continuous=False)
    assert cont.n == 4 * 5  # 6 per patch, ends shared around the loop
    assert disc.n == 4 * 6
    assert all(len(f) == 1 for f in disc.functions)
    assert sum(len(f) == 2 for f in cont.functions) == 4


@pytest.mark.parametrize("continuous", [True, False])
def test_support_boxes_contain_support(continuous):
    sp = circle_space(2, continuous)
    for j in range(sp.n):
        box = basis_support_bbox(sp, j)
        for e, a in sp.functions[j]:
            lo, hi = sp.local_support(e, a)
            pts = sp.geometry[e](np.linspace(lo, hi, 200))
            assert np.all(box.contains(pts, tol=1e-12))


def test_straight_patch_box_is_flat():
    c = curve_from_degree_elevated_line([0, 0], [2, 0], 2)
    sp = BasisSpace([c], [c.knot_vector], [c.weights], False, closed=False)
    box = basis_support_bbox(sp, 1)
    assert box.lo[1] == box.hi[1] == 0.0
    np.testing.assert_allclose([box.lo[0], box.hi[0]], [0, 2])

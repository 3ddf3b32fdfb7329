from itertools import combinations

import numpy as np

from tetcorr import box_mesh
from tetcorr.proximity import (closest_on_triangles, closest_on_triangles_brute,
                               project_points_tets, project_points_tets_brute,
                               tet_tree, tree_args, triangle_tree)


def simplex_qp_oracle(q, corners):
    """Exact distance^2 to a simplex by active-subset enumeration.

    Solves min ||q - corners^T w||^2 over the unit simplex by trying every
    nonempty subset of corners with an equality-constrained least-squares
    solve, keeping feasible candidates. Independent of the geometric
    region-classification used by the kernels.
    """
    best = np.inf
    m = len(corners)
    for r in range(1, m + 1):
        for S in combinations(range(m), r):
            C = corners[list(S)]
            G = C @ C.T
            A = np.zeros((r + 1, r + 1))
            A[:r, :r] = G
            A[:r, r] = 1.0
            A[r, :r] = 1.0
            b = np.concatenate([C @ q, [1.0]])
            sol, *_ = np.linalg.lstsq(A, b, rcond=None)
            w = sol[:r]
            if w.min() < -1e-10:
                continue
            d2 = float(np.sum((q - C.T @ w) ** 2))
            best = min(best, d2)
    return best


def _random_tets(rng, n, dim=3):
    corners = rng.normal(size=(n, 4, dim))
    if dim == 3:
        # keep them non-degenerate
        vols = np.linalg.det(corners[:, 1:] - corners[:, :1])
        corners[np.abs(vols) < 1e-3] += rng.normal(size=(1, 4, dim))
    return np.ascontiguousarray(corners)


def test_tet_projection_matches_qp_oracle():
    rng = np.random.default_rng(3)
    tets = _random_tets(rng, 40)
    queries = np.ascontiguousarray(rng.normal(size=(60, 3)) * 1.5)
    d2, tid, w = project_points_tets_brute(queries, tets)
    for k, q in enumerate(queries):
        oracle = min(simplex_qp_oracle(q, tets[t]) for t in range(len(tets)))
        assert d2[k] <= oracle + 1e-9
        # returned weights reconstruct the returned distance
        foot = tets[tid[k]].T @ w[k]
        np.testing.assert_allclose(np.sum((q - foot) ** 2), d2[k], atol=1e-12)
        assert w[k].min() >= -1e-12
        np.testing.assert_allclose(w[k].sum(), 1.0, atol=1e-12)


def test_tet_tree_matches_brute():
    rng = np.random.default_rng(4)
    m = box_mesh(4, 4, 4).normalized()
    tets = np.ascontiguousarray(m.vertices[m.tets])
    queries = np.ascontiguousarray(rng.normal(size=(200, 3)) * 0.8 + 0.5)
    tree = tet_tree(tets)
    n = len(queries)
    d2_t, tid_t, w_t = project_points_tets(
        queries, *tree_args(tree), tets,
        np.full(n, np.inf), np.full(n, -1, dtype=np.int64), np.zeros((n, 4)),
    )
    d2_b, tid_b, w_b = project_points_tets_brute(queries, tets)
    np.testing.assert_allclose(d2_t, d2_b, atol=1e-12)
    # feet agree even when a point is equidistant to two tets
    feet_t = np.einsum("nl,nld->nd", w_t, tets[tid_t])
    feet_b = np.einsum("nl,nld->nd", w_b, tets[tid_b])
    np.testing.assert_allclose(feet_t, feet_b, atol=1e-7)


def test_interior_points_have_zero_distance():
    rng = np.random.default_rng(5)
    m = box_mesh(3, 3, 3).normalized()
    tets = np.ascontiguousarray(m.vertices[m.tets])
    # random interior points: barycentric samples of random tets
    t = rng.integers(0, m.n_tets, size=50)
    w = rng.dirichlet(np.ones(4), size=50)
    queries = np.ascontiguousarray(np.einsum("nl,nld->nd", w, tets[t]))
    d2, tid, wout = project_points_tets_brute(queries, tets)
    np.testing.assert_allclose(d2, 0.0, atol=1e-14)
    feet = np.einsum("nl,nld->nd", wout, tets[tid])
    np.testing.assert_allclose(feet, queries, atol=1e-9)


def test_six_dimensional_projection():
    """The projection kernel is dimension-generic (stacked 6D coordinates)."""
    rng = np.random.default_rng(6)
    tets = _random_tets(rng, 25, dim=6)
    queries = np.ascontiguousarray(rng.normal(size=(40, 6)))
    d2, tid, w = project_points_tets_brute(queries, tets)
    for k, q in enumerate(queries):
        oracle = min(simplex_qp_oracle(q, tets[t]) for t in range(len(tets)))
        assert abs(d2[k] - oracle) <= 1e-9
    tree = tet_tree(tets)
    n = len(queries)
    d2_t, _, _ = project_points_tets(
        queries, *tree_args(tree), tets,
        np.full(n, np.inf), np.full(n, -1, dtype=np.int64), np.zeros((n, 4)),
    )
    np.testing.assert_allclose(d2_t, d2, atol=1e-12)


def test_seeded_projection_keeps_better_current_row():
    """A seed at the optimum must survive; a worse seed must be replaced."""
    rng = np.random.default_rng(7)
    m = box_mesh(2, 2, 2).normalized()
    tets = np.ascontiguousarray(m.vertices[m.tets])
    tree = tet_tree(tets)
    queries = np.ascontiguousarray(rng.normal(size=(30, 3)) * 0.6 + 0.5)
    n = len(queries)
    d2_open, tid_open, w_open = project_points_tets(
        queries, *tree_args(tree), tets,
        np.full(n, np.inf), np.full(n, -1, dtype=np.int64), np.zeros((n, 4)),
    )
    # seed every row with its own optimum: nothing may change
    d2_s, tid_s, w_s = project_points_tets(
        queries, *tree_args(tree), tets,
        d2_open.copy(), tid_open.copy(), w_open.copy(),
    )
    np.testing.assert_array_equal(tid_s, tid_open)
    np.testing.assert_array_equal(w_s, w_open)
    # seed with an inflated distance: must recover the optimum
    d2_w, tid_w, w_w = project_points_tets(
        queries, *tree_args(tree), tets,
        d2_open + 1.0, tid_open.copy(), w_open.copy(),
    )
    np.testing.assert_allclose(d2_w, d2_open, atol=1e-12)


def test_triangle_projection_matches_qp_oracle():
    rng = np.random.default_rng(8)
    tris = np.ascontiguousarray(rng.normal(size=(30, 3, 3)))
    queries = np.ascontiguousarray(rng.normal(size=(50, 3)) * 1.4)
    d2, fid, w = closest_on_triangles_brute(queries, tris)
    for k, q in enumerate(queries):
        oracle = min(simplex_qp_oracle(q, tris[t]) for t in range(len(tris)))
        assert abs(d2[k] - oracle) <= 1e-9
        foot = tris[fid[k]].T @ w[k]
        np.testing.assert_allclose(np.sum((q - foot) ** 2), d2[k], atol=1e-12)


def test_triangle_tree_matches_brute():
    rng = np.random.default_rng(9)
    m = box_mesh(4, 4, 4).normalized()
    tris = np.ascontiguousarray(m.vertices[m.boundary_faces])
    queries = np.ascontiguousarray(rng.normal(size=(150, 3)) * 0.9 + 0.5)
    tree = triangle_tree(tris)
    d2_t, _, _ = closest_on_triangles(queries, *tree_args(tree), tris)
    d2_b, _, _ = closest_on_triangles_brute(queries, tris)
    np.testing.assert_allclose(d2_t, d2_b, atol=1e-12)


def test_degenerate_tet_equals_triangle():
    """A 4-point simplex with a repeated corner projects like its triangle."""
    rng = np.random.default_rng(10)
    tris = np.ascontiguousarray(rng.normal(size=(12, 3, 3)))
    tri_as_tet = np.ascontiguousarray(
        np.concatenate([tris, tris[:, :1]], axis=1)
    )
    queries = np.ascontiguousarray(rng.normal(size=(40, 3)))
    d2_tet, _, _ = project_points_tets_brute(queries, tri_as_tet)
    d2_tri, _, _ = closest_on_triangles_brute(queries, tris)
    np.testing.assert_allclose(d2_tet, d2_tri, atol=1e-10)

"""Exact nearest-primitive queries over triangle and tet sets.

An array-encoded AABB tree provides branch-and-bound pruning; leaf
primitives are resolved with exact closest-point computations (Ericson's
region test for triangles, active-set enumeration over all 15 faces for
tet simplices in any ambient dimension). Brute-force counterparts of each
query exist for oracle testing. All kernels are deterministic: traversal
order is fixed and a candidate replaces the incumbent only when strictly
closer, so ties keep the earlier (or caller-provided) answer.
"""

from collections import namedtuple

import numpy as np
from numba import njit, prange

AabbTree = namedtuple(
    "AabbTree", ["node_lo", "node_hi", "left", "right", "start", "count", "order"]
)

_LEAF_SIZE = 4
_STACK = 128


def build_aabb_tree(prim_lo, prim_hi, leaf_size=_LEAF_SIZE):
    """Build a median-split AABB tree over primitive boxes.

    Parameters
    ----------
    prim_lo, prim_hi : np.ndarray
        Per-primitive box corners, shape (m, d).
    leaf_size : int
        Maximum primitives per leaf.

    Returns
    -------
    AabbTree
        Arrays encoding the tree; ``order`` maps leaf slots to primitive ids.
    """
    prim_lo = np.ascontiguousarray(prim_lo, dtype=np.float64)
    prim_hi = np.ascontiguousarray(prim_hi, dtype=np.float64)
    m = len(prim_lo)
    if m == 0:
        raise ValueError("cannot build a tree over zero primitives")
    centers = 0.5 * (prim_lo + prim_hi)
    order = np.arange(m, dtype=np.int64)

    node_lo, node_hi, left, right, start, count = [], [], [], [], [], []

    def emit(lo, hi, l, r, s, c):
        node_lo.append(lo)
        node_hi.append(hi)
        left.append(l)
        right.append(r)
        start.append(s)
        count.append(c)
        return len(left) - 1

    def build(beg, end):
        ids = order[beg:end]
        lo = prim_lo[ids].min(axis=0)
        hi = prim_hi[ids].max(axis=0)
        if end - beg <= leaf_size:
            return emit(lo, hi, -1, -1, beg, end - beg)
        axis = int(np.argmax(hi - lo))
        mid = (end - beg) // 2
        sel = np.argpartition(centers[ids, axis], mid, kind="introselect")
        order[beg:end] = ids[sel]
        node = emit(lo, hi, -1, -1, beg, end - beg)
        l = build(beg, beg + mid)
        r = build(beg + mid, end)
        left[node] = l
        right[node] = r
        return node

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10000))
    try:
        build(0, m)
    finally:
        sys.setrecursionlimit(old_limit)
    return AabbTree(
        np.ascontiguousarray(node_lo),
        np.ascontiguousarray(node_hi),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64),
        np.array(count, dtype=np.int64),
        order,
    )


def triangle_tree(tri_coords):
    """AABB tree over a (m, 3, 3) triangle coordinate array."""
    return build_aabb_tree(tri_coords.min(axis=1), tri_coords.max(axis=1))


def tet_tree(tet_coords):
    """AABB tree over a (m, 4, d) tet coordinate array."""
    return build_aabb_tree(tet_coords.min(axis=1), tet_coords.max(axis=1))


@njit(cache=True, inline="always")
def _aabb_dist2(q, lo, hi):
    d2 = 0.0
    for k in range(q.shape[0]):
        if q[k] < lo[k]:
            t = lo[k] - q[k]
            d2 += t * t
        elif q[k] > hi[k]:
            t = q[k] - hi[k]
            d2 += t * t
    return d2


@njit(cache=True)
def _closest_point_triangle(p, a, b, c, w):
    """Exact closest point on triangle abc; fills barycentric w, returns dist2."""
    ab0, ab1, ab2 = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    ac0, ac1, ac2 = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    ap0, ap1, ap2 = p[0] - a[0], p[1] - a[1], p[2] - a[2]
    d1 = ab0 * ap0 + ab1 * ap1 + ab2 * ap2
    d2 = ac0 * ap0 + ac1 * ap1 + ac2 * ap2
    if d1 <= 0.0 and d2 <= 0.0:
        w[0], w[1], w[2] = 1.0, 0.0, 0.0
    else:
        bp0, bp1, bp2 = p[0] - b[0], p[1] - b[1], p[2] - b[2]
        d3 = ab0 * bp0 + ab1 * bp1 + ab2 * bp2
        d4 = ac0 * bp0 + ac1 * bp1 + ac2 * bp2
        if d3 >= 0.0 and d4 <= d3:
            w[0], w[1], w[2] = 0.0, 1.0, 0.0
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                t = d1 / (d1 - d3) if d1 != d3 else 0.0
                w[0], w[1], w[2] = 1.0 - t, t, 0.0
            else:
                cp0, cp1, cp2 = p[0] - c[0], p[1] - c[1], p[2] - c[2]
                d5 = ab0 * cp0 + ab1 * cp1 + ab2 * cp2
                d6 = ac0 * cp0 + ac1 * cp1 + ac2 * cp2
                if d6 >= 0.0 and d5 <= d6:
                    w[0], w[1], w[2] = 0.0, 0.0, 1.0
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        t = d2 / (d2 - d6) if d2 != d6 else 0.0
                        w[0], w[1], w[2] = 1.0 - t, 0.0, t
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            denom = (d4 - d3) + (d5 - d6)
                            t = (d4 - d3) / denom if denom != 0.0 else 0.0
                            w[0], w[1], w[2] = 0.0, 1.0 - t, t
                        else:
                            denom = va + vb + vc
                            if denom != 0.0:
                                w[1] = vb / denom
                                w[2] = vc / denom
                                w[0] = 1.0 - w[1] - w[2]
                            else:
                                w[0], w[1], w[2] = 1.0, 0.0, 0.0
    q0 = w[0] * a[0] + w[1] * b[0] + w[2] * c[0]
    q1 = w[0] * a[1] + w[1] * b[1] + w[2] * c[1]
    q2 = w[0] * a[2] + w[1] * b[2] + w[2] * c[2]
    return (p[0] - q0) ** 2 + (p[1] - q1) ** 2 + (p[2] - q2) ** 2


@njit(cache=True)
def _project_point_tet(q, verts, w_out):
    """Exact projection of q onto the convex hull of 4 points in R^d.

    Enumerates all 15 nonempty vertex subsets, solves the affine projection
    on each, keeps feasible candidates (weights >= -1e-12), and returns the
    smallest distance with clamped, renormalized weights in ``w_out``.
    """
    d = q.shape[0]
    best = np.inf
    bw = np.zeros(4)
    members = np.empty(4, dtype=np.int64)
    u = np.zeros(3)
    for mask in range(1, 16):
        k = 0
        for i in range(4):
            if mask & (1 << i):
                members[k] = i
                k += 1
        i0 = members[0]
        feasible = True
        if k == 1:
            for j in range(3):
                u[j] = 0.0
        else:
            # Gram system G u = b for edge matrix D (k-1, d).
            G00 = G01 = G02 = G11 = G12 = G22 = 0.0
            b0 = b1 = b2 = 0.0
            for c in range(d):
                r = q[c] - verts[i0, c]
                e1 = verts[members[1], c] - verts[i0, c]
                G00 += e1 * e1
                b0 += e1 * r
                if k >= 3:
                    e2 = verts[members[2], c] - verts[i0, c]
                    G01 += e1 * e2
                    G11 += e2 * e2
                    b1 += e2 * r
                    if k == 4:
                        e3 = verts[members[3], c] - verts[i0, c]
                        G02 += e1 * e3
                        G12 += e2 * e3
                        G22 += e3 * e3
                        b2 += e3 * r
            if k == 2:
                if G00 <= 1e-12 * G00 + 1e-300:  # G00 == 0 up to underflow
                    continue
                u[0] = b0 / G00
                u[1] = 0.0
                u[2] = 0.0
            elif k == 3:
                det = G00 * G11 - G01 * G01
                if det <= 1e-12 * G00 * G11 + 1e-300:
                    continue
                u[0] = (b0 * G11 - b1 * G01) / det
                u[1] = (G00 * b1 - G01 * b0) / det
                u[2] = 0.0
            else:
                c00 = G11 * G22 - G12 * G12
                c01 = G02 * G12 - G01 * G22
                c02 = G01 * G12 - G02 * G11
                det = G00 * c00 + G01 * c01 + G02 * c02
                if det <= 1e-12 * G00 * G11 * G22 + 1e-300:
                    continue
                c11 = G00 * G22 - G02 * G02
                c12 = G01 * G02 - G00 * G12
                c22 = G00 * G11 - G01 * G01
                u[0] = (c00 * b0 + c01 * b1 + c02 * b2) / det
                u[1] = (c01 * b0 + c11 * b1 + c12 * b2) / det
                u[2] = (c02 * b0 + c12 * b1 + c22 * b2) / det
            rest = 0.0
            for j in range(k - 1):
                if u[j] < -1e-12:
                    feasible = False
                rest += u[j]
            if rest > 1.0 + 1e-12:
                feasible = False
        if not feasible:
            continue
        dist2 = 0.0
        for c in range(d):
            pc = verts[i0, c]
            for j in range(k - 1):
                pc += u[j] * (verts[members[j + 1], c] - verts[i0, c])
            t = q[c] - pc
            dist2 += t * t
        if dist2 < best:
            best = dist2
            for i in range(4):
                bw[i] = 0.0
            s = 0.0
            bw[i0] = 1.0
            for j in range(k - 1):
                val = u[j] if u[j] > 0.0 else 0.0
                bw[members[j + 1]] = val
                s += val
            bw[i0] = 1.0 - s if s < 1.0 else 0.0
    total = bw[0] + bw[1] + bw[2] + bw[3]
    for i in range(4):
        w_out[i] = bw[i] / total
    return best


@njit(cache=True)
def _query_tree_tets(q, node_lo, node_hi, left, right, start, count, order,
                     tet_coords, best, w_best, w_tmp):
    """Branch-and-bound nearest-tet search; returns (dist2, tet_id)."""
    stack = np.empty(_STACK, dtype=np.int64)
    stack[0] = 0
    sp = 1
    best_d2, best_id = best[0], -1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _aabb_dist2(q, node_lo[node], node_hi[node]) > best_d2:
            continue
        if left[node] < 0:
            s, c = start[node], count[node]
            for k in range(s, s + c):
                tid = order[k]
                d2 = _project_point_tet(q, tet_coords[tid], w_tmp)
                if d2 < best_d2:
                    best_d2 = d2
                    best_id = tid
                    for i in range(4):
                        w_best[i] = w_tmp[i]
        else:
            dl = _aabb_dist2(q, node_lo[left[node]], node_hi[left[node]])
            dr = _aabb_dist2(q, node_lo[right[node]], node_hi[right[node]])
            if dl <= dr:
                if dr <= best_d2:
                    stack[sp] = right[node]
                    sp += 1
                if dl <= best_d2:
                    stack[sp] = left[node]
                    sp += 1
            else:
                if dl <= best_d2:
                    stack[sp] = left[node]
                    sp += 1
                if dr <= best_d2:
                    stack[sp] = right[node]
                    sp += 1
    best[0] = best_d2
    return best_id


@njit(cache=True, parallel=True)
def project_points_tets(queries, node_lo, node_hi, left, right, start, count,
                        order, tet_coords, init_dist2, init_tet, init_w):
    """Project each query onto the nearest tet (convex hull) of a tet set.

    ``init_*`` seed the incumbent answer per query; a tree candidate must be
    strictly closer to replace it. Pass +inf / -1 rows to disable seeding.
    """
    n = len(queries)
    out_d2 = np.empty(n)
    out_tet = np.empty(n, dtype=np.int64)
    out_w = np.empty((n, 4))
    for i in prange(n):
        best = np.empty(1)
        best[0] = init_dist2[i]
        w_best = np.empty(4)
        w_tmp = np.empty(4)
        for j in range(4):
            w_best[j] = init_w[i, j]
        tid = _query_tree_tets(
            queries[i], node_lo, node_hi, left, right, start, count, order,
            tet_coords, best, w_best, w_tmp,
        )
        if tid < 0:
            out_tet[i] = init_tet[i]
        else:
            out_tet[i] = tid
        out_d2[i] = best[0]
        for j in range(4):
            out_w[i, j] = w_best[j]
    return out_d2, out_tet, out_w


@njit(cache=True, parallel=True)
def project_points_tets_brute(queries, tet_coords):
    """Exact nearest-tet projection by scanning every tet (oracle path)."""
    n = len(queries)
    out_d2 = np.full(n, np.inf)
    out_tet = np.full(n, -1, dtype=np.int64)
    out_w = np.zeros((n, 4))
    for i in prange(n):
        w_tmp = np.empty(4)
        for tid in range(len(tet_coords)):
            d2 = _project_point_tet(queries[i], tet_coords[tid], w_tmp)
            if d2 < out_d2[i]:
                out_d2[i] = d2
                out_tet[i] = tid
                for j in range(4):
                    out_w[i, j] = w_tmp[j]
    return out_d2, out_tet, out_w


@njit(cache=True)
def _query_tree_triangles(q, node_lo, node_hi, left, right, start, count,
                          order, tri_coords, w_best):
    stack = np.empty(_STACK, dtype=np.int64)
    stack[0] = 0
    sp = 1
    best_d2 = np.inf
    best_id = -1
    w_tmp = np.empty(3)
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _aabb_dist2(q, node_lo[node], node_hi[node]) > best_d2:
            continue
        if left[node] < 0:
            s, c = start[node], count[node]
            for k in range(s, s + c):
                fid = order[k]
                d2 = _closest_point_triangle(
                    q, tri_coords[fid, 0], tri_coords[fid, 1], tri_coords[fid, 2], w_tmp
                )
                if d2 < best_d2:
                    best_d2 = d2
                    best_id = fid
                    for i in range(3):
                        w_best[i] = w_tmp[i]
        else:
            dl = _aabb_dist2(q, node_lo[left[node]], node_hi[left[node]])
            dr = _aabb_dist2(q, node_lo[right[node]], node_hi[right[node]])
            if dl <= dr:
                if dr <= best_d2:
                    stack[sp] = right[node]
                    sp += 1
                if dl <= best_d2:
                    stack[sp] = left[node]
                    sp += 1
            else:
                if dl <= best_d2:
                    stack[sp] = left[node]
                    sp += 1
                if dr <= best_d2:
                    stack[sp] = right[node]
                    sp += 1
    return best_d2, best_id


@njit(cache=True, parallel=True)
def closest_on_triangles(queries, node_lo, node_hi, left, right, start, count,
                         order, tri_coords):
    """Nearest point on a triangle set for each query, via the tree."""
    n = len(queries)
    out_d2 = np.empty(n)
    out_face = np.empty(n, dtype=np.int64)
    out_w = np.empty((n, 3))
    for i in prange(n):
        w_best = np.empty(3)
        d2, fid = _query_tree_triangles(
            queries[i], node_lo, node_hi, left, right, start, count, order,
            tri_coords, w_best,
        )
        out_d2[i] = d2
        out_face[i] = fid
        for j in range(3):
            out_w[i, j] = w_best[j]
    return out_d2, out_face, out_w


@njit(cache=True, parallel=True)
def closest_on_triangles_brute(queries, tri_coords):
    """Nearest point on a triangle set by scanning every triangle."""
    n = len(queries)
    out_d2 = np.full(n, np.inf)
    out_face = np.full(n, -1, dtype=np.int64)
    out_w = np.zeros((n, 3))
    for i in prange(n):
        w_tmp = np.empty(3)
        for fid in range(len(tri_coords)):
            d2 = _closest_point_triangle(
                queries[i], tri_coords[fid, 0], tri_coords[fid, 1],
                tri_coords[fid, 2], w_tmp,
            )
            if d2 < out_d2[i]:
                out_d2[i] = d2
                out_face[i] = fid
                for j in range(3):
                    out_w[i, j] = w_tmp[j]
    return out_d2, out_face, out_w


def tree_args(tree):
    """Positional expansion of an AabbTree for the numba kernels."""
    return (tree.node_lo, tree.node_hi, tree.left, tree.right, tree.start,
            tree.count, tree.order)

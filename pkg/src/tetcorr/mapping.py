"""Piecewise-linear volumetric maps between two tet meshes.

A map from mesh i to mesh j is stored two ways at once:

* a barycentric table (one target tet id + 4 convex weights per source
  vertex), which constrains images to stay inside the target volume, and
* a free vertex-image array (one R^3 point per source vertex), which the
  distortion term optimizes directly.

The solver alternates between the two representations; this module holds
the containers, the per-tet map differentials, and the initializers.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import TetMesh
from .validation import check_barycentric

# Difference stencil turning 4 stacked vertex rows into 3 edge rows.
B_DIFF = np.array(
    [[-1.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 1.0, 0.0], [-1.0, 0.0, 0.0, 1.0]]
)


@dataclass
class BarycentricMap:
    """Rows of a vertex-to-tet barycentric assignment."""

    tet_ids: np.ndarray  # (n,) int64, indices into the target mesh tets
    weights: np.ndarray  # (n, 4) float64, convex weights

    def copy(self):
        return BarycentricMap(self.tet_ids.copy(), self.weights.copy())

    def apply(self, target: TetMesh, coords=None):
        """Map every source vertex: sum of weighted target tet corners.

        ``coords`` overrides the target vertex coordinates (same indexing),
        which evaluates the map against a deformed copy of the target.
        """
        pts = target.vertices if coords is None else coords
        corners = pts[target.tets[self.tet_ids]]  # (n, 4, 3)
        return np.einsum("nl,nlc->nc", self.weights, corners)

    def validate(self, n_source, target: TetMesh):
        if self.tet_ids.shape != (n_source,):
            raise ValueError("barycentric map covers the wrong vertex count")
        if self.tet_ids.min() < 0 or self.tet_ids.max() >= target.n_tets:
            raise ValueError("barycentric map references nonexistent tets")
        check_barycentric(self.weights, 4)


@dataclass
class MapPair:
    """Symmetric state: both barycentric tables and both vertex images."""

    p12: BarycentricMap
    p21: BarycentricMap
    x12: np.ndarray  # (n1, 3) images of mesh-1 vertices in mesh-2 space
    x21: np.ndarray  # (n2, 3)

    def copy(self):
        return MapPair(self.p12.copy(), self.p21.copy(), self.x12.copy(), self.x21.copy())


# -- differentials ------------------------------------------------------------


def edge_matrices(mesh: TetMesh, coords=None):
    """Per-tet edge matrices with rows (v1-v0, v2-v0, v3-v0), shape (m, 3, 3)."""
    pts = mesh.vertices if coords is None else coords
    v = pts[mesh.tets]
    return v[:, 1:] - v[:, :1]


def rest_operators(mesh: TetMesh):
    """Precomputed per-tet factors for map differentials and their gradients.

    Returns
    -------
    inv_rest : (m, 3, 3)
        Inverses of the rest edge matrices.
    grad_op : (m, 4, 3)
        B^T (BV)^-T, the linear operator scattering a 3x3 differential
        gradient onto the 4 tet vertex rows.
    """
    rest = edge_matrices(mesh)
    inv_rest = np.linalg.inv(rest)
    grad_op = np.matmul(B_DIFF.T[None, :, :], np.transpose(inv_rest, (0, 2, 1)))
    return inv_rest, grad_op


def jacobians(mesh: TetMesh, images, inv_rest=None):
    """Map differential per tet for vertex images ``images`` (n, 3).

    Computed as (BV)^-1 (BX): the transpose of the deformation gradient,
    with identical singular values and determinant.
    """
    if inv_rest is None:
        inv_rest = np.linalg.inv(edge_matrices(mesh))
    img = images[mesh.tets]
    return np.matmul(inv_rest, img[:, 1:] - img[:, :1])


def count_inversions(mesh: TetMesh, images, inv_rest=None):
    """Number of tets whose map differential has nonpositive determinant."""
    dets = np.linalg.det(jacobians(mesh, images, inv_rest))
    return int(np.count_nonzero(dets <= 0.0))


# -- landmark and boundary-map resolution --------------------------------------


def face_point_to_tet(mesh: TetMesh, face_id, bary3):
    """Express a boundary-face point as (tet_id, bary4) in the owning tet."""
    faces = mesh.boundary_faces
    if not 0 <= face_id < len(faces):
        raise ValueError(f"boundary face {face_id} out of range")
    tet_id = int(mesh.boundary_face_tets[face_id])
    tet = mesh.tets[tet_id]
    w = np.zeros(4)
    for corner, wl in zip(faces[face_id], bary3):
        (slot,) = np.nonzero(tet == corner)[0]
        w[slot] = wl
    return tet_id, w


def resolve_point(mesh: TetMesh, kind, index, bary):
    """Resolve a (kind, index, bary) reference into (tet_id, bary4, xyz)."""
    if kind == "face":
        tet_id, w = face_point_to_tet(mesh, index, np.asarray(bary, dtype=np.float64))
    elif kind == "tet":
        if not 0 <= index < mesh.n_tets:
            raise ValueError(f"tet {index} out of range")
        tet_id = int(index)
        w = np.asarray(bary, dtype=np.float64).copy()
    else:
        raise ValueError(f"unknown landmark kind '{kind}'")
    xyz = mesh.vertices[mesh.tets[tet_id]].T @ w
    return tet_id, w, xyz


# -- initializations -------------------------------------------------------------


def _nearest_index(points, targets):
    """Index of the nearest target for every point (first wins on ties)."""
    d2 = ((points[:, None, :] - targets[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _landmark_direction(src: TetMesh, dst: TetMesh, src_pts, dst_rows):
    tet_ids = np.empty(src.n_vertices, dtype=np.int64)
    weights = np.empty((src.n_vertices, 4))
    nearest = _nearest_index(src.vertices, src_pts)
    for v in range(src.n_vertices):
        tid, w = dst_rows[nearest[v]]
        tet_ids[v] = tid
        weights[v] = w
    p = BarycentricMap(tet_ids, weights)
    return p, p.apply(dst)


def init_from_landmarks(m1: TetMesh, m2: TetMesh, pairs):
    """Initialize both directions by copying each vertex's closest landmark.

    ``pairs`` is a list of ((kind, index, bary), (kind, index, bary))
    tuples, the first element on mesh 1 and the second on mesh 2.
    """
    if not pairs:
        raise ValueError("landmark initialization needs at least one pair")
    pts1, rows1, pts2, rows2 = [], [], [], []
    for a, b in pairs:
        t1, w1, x1 = resolve_point(m1, *a)
        t2, w2, x2 = resolve_point(m2, *b)
        pts1.append(x1)
        rows1.append((t1, w1))
        pts2.append(x2)
        rows2.append((t2, w2))
    pts1 = np.array(pts1)
    pts2 = np.array(pts2)
    p12, x12 = _landmark_direction(m1, m2, pts1, rows2)
    p21, x21 = _landmark_direction(m2, m1, pts2, rows1)
    return MapPair(p12, p21, x12, x21)


def _surface_direction(src: TetMesh, dst: TetMesh, entries):
    bverts = src.boundary_vertices
    bset = set(int(v) for v in bverts)
    rows = {}
    for vertex_id, face_id, bary in entries:
        if vertex_id not in bset:
            raise ValueError(f"vertex {vertex_id} is not on the source boundary")
        tid, w = face_point_to_tet(dst, face_id, bary)
        rows[int(vertex_id)] = (tid, w)
    missing = [int(v) for v in bverts if int(v) not in rows]
    if missing:
        raise ValueError(
            f"surface map misses {len(missing)} boundary vertices (first: {missing[0]})"
        )
    tet_ids = np.empty(src.n_vertices, dtype=np.int64)
    weights = np.empty((src.n_vertices, 4))
    for v in bverts:
        tid, w = rows[int(v)]
        tet_ids[v] = tid
        weights[v] = w
    interior = np.setdiff1d(
        np.arange(src.n_vertices, dtype=np.int64), bverts, assume_unique=False
    )
    if len(interior):
        nearest = _nearest_index(src.vertices[interior], src.vertices[bverts])
        for v, nb in zip(interior, bverts[nearest]):
            tid, w = rows[int(nb)]
            tet_ids[v] = tid
            weights[v] = w
    p = BarycentricMap(tet_ids, weights)
    return p, p.apply(dst)


def init_from_surface_map(m1: TetMesh, m2: TetMesh, surface_map):
    """Initialize from a full boundary-vertex map (every boundary vertex pinned).

    ``surface_map`` is a dict with keys 1 and 2 listing
    (vertex_id, face_id, bary3) entries; interior vertices copy the row of
    their nearest boundary vertex.
    """
    p12, x12 = _surface_direction(m1, m2, surface_map[1])
    p21, x21 = _surface_direction(m2, m1, surface_map[2])
    return MapPair(p12, p21, x12, x21)


def identity_init(mesh: TetMesh):
    """Self-map pair: each vertex sits in its first incident tet with weight 1."""
    offsets, incident = mesh.vertex_tets
    tet_ids = incident[offsets[:-1]]
    weights = np.zeros((mesh.n_vertices, 4))
    for v in range(mesh.n_vertices):
        (slot,) = np.nonzero(mesh.tets[tet_ids[v]] == v)[0]
        weights[v, slot] = 1.0
    def one():
        return BarycentricMap(tet_ids.copy(), weights.copy())
    return MapPair(one(), one(), mesh.vertices.copy(), mesh.vertices.copy())

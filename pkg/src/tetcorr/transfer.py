"""Transport geometry and vertex fields through a computed correspondence.

Points embedded in the source volume are located barycentrically (exact
projection, clamped for points grazing the boundary) and re-expressed
against the deformed vertex images, so piecewise-linear structure is
preserved exactly. Connectivity (polylines, cells of an embedded mesh)
rides along unchanged.
"""

from dataclasses import dataclass

import numpy as np

from .mapping import BarycentricMap
from .mesh import TetMesh
from .proximity import project_points_tets, tet_tree, tree_args
from .validation import check_points

GEOMETRY_KINDS = ("points", "polylines", "indexed-mesh")


@dataclass
class EmbeddedGeometry:
    """Geometry expressed in a tet mesh's ambient space.

    ``connectivity`` is None for bare points, a list of vertex-index arrays
    for polylines, and an (m, k) index array for an embedded mesh.
    """

    kind: str
    points: np.ndarray
    connectivity: object = None

    def __post_init__(self):
        if self.kind not in GEOMETRY_KINDS:
            raise ValueError(f"kind must be one of {GEOMETRY_KINDS}")
        self.points = check_points(self.points, name="geometry points")


def locate_points(mesh: TetMesh, points, tol=None):
    """Barycentric location of points against a tet mesh.

    Returns (tet_ids, weights, distances, inside). Points farther from the
    mesh than ``tol`` (default 1e-6 of the bounding-box diagonal) are still
    given their clamped nearest projection but flagged as outside.
    """
    pts = check_points(points)
    coords = np.ascontiguousarray(mesh.vertices[mesh.tets])
    tree = tet_tree(coords)
    n = len(pts)
    d2, tids, w = project_points_tets(
        pts, *tree_args(tree), coords,
        np.full(n, np.inf), np.full(n, -1, dtype=np.int64), np.zeros((n, 4)),
    )
    dist = np.sqrt(np.maximum(d2, 0.0))
    if tol is None:
        tol = 1e-6 * mesh.bbox_diagonal()
    return tids, w, dist, dist <= tol


def locate_point(mesh: TetMesh, p, tol=None):
    """Single-point convenience wrapper around locate_points."""
    tids, w, dist, inside = locate_points(mesh, np.asarray(p, dtype=np.float64)[None, :], tol)
    return int(tids[0]), w[0], float(dist[0]), bool(inside[0])


def push_forward(geometry: EmbeddedGeometry, src: TetMesh, X):
    """Map embedded geometry through the deformation X of src's vertices.

    Every point is transported via its clamped barycentric location; the
    returned skip list indexes points that lay outside the source volume
    beyond tolerance (they are transported from their nearest boundary
    point, but flagged for the caller).
    """
    if X.shape != (src.n_vertices, 3):
        raise ValueError("X must provide one image per source vertex")
    tids, w, _, inside = locate_points(src, geometry.points)
    mapped = np.einsum("nl,nlc->nc", w, X[src.tets[tids]])
    skipped = np.flatnonzero(~inside)
    out = EmbeddedGeometry(geometry.kind, mapped, geometry.connectivity)
    return out, skipped


def pull_back_field(field_values, p: BarycentricMap, target: TetMesh):
    """Sample a target-vertex field at each source vertex's mapped location.

    ``field_values`` has shape (n_target,) or (n_target, k); the result has
    the same trailing shape over source vertices. Barycentric interpolation
    is affine-exact.
    """
    vals = np.asarray(field_values, dtype=np.float64)
    if vals.shape[0] != target.n_vertices:
        raise ValueError(
            f"field has {vals.shape[0]} entries but the target mesh has "
            f"{target.n_vertices} vertices"
        )
    picked = vals[target.tets[p.tet_ids]]
    if vals.ndim == 1:
        return np.einsum("nl,nl->n", p.weights, picked)
    return np.einsum("nl,nl...->n...", p.weights, picked)

"""Map-quality metrics: surface distances, inversions, differential quality.

Distances are exact point-to-triangle-mesh distances (tree-accelerated).
The chamfer and Hausdorff variants are the symmetrized, vertex-sampled
forms: vertices of each surface are measured against the other surface as
a whole, and both sums/maxima are combined symmetrically.
"""

from dataclasses import dataclass

import numpy as np

from .energies import get_energy
from .mapping import count_inversions, jacobians
from .mesh import TetMesh
from .proximity import closest_on_triangles, tree_args, triangle_tree


@dataclass(frozen=True)
class MapMetrics:
    """Quality summary of one map direction."""

    d_max_hat: float
    d_avg_hat: float
    n_inv: int
    det_j_hat_mean: float
    det_j_hat_std: float
    e_arap: float
    e_r: float

    def to_dict(self):
        return {
            "d_max_hat": self.d_max_hat,
            "d_avg_hat": self.d_avg_hat,
            "n_inv": self.n_inv,
            "det_j_hat_mean": self.det_j_hat_mean,
            "det_j_hat_std": self.det_j_hat_std,
            "e_arap": self.e_arap,
            "e_r": self.e_r,
        }


def point_mesh_distances(points, tri_coords, tree=None):
    """Exact distance from each point to a triangle set (m, 3, 3)."""
    if len(tri_coords) == 0:
        raise ValueError("cannot measure distance to an empty triangle set")
    tri_coords = np.ascontiguousarray(tri_coords, dtype=np.float64)
    if tree is None:
        tree = triangle_tree(tri_coords)
    pts = np.ascontiguousarray(points, dtype=np.float64)
    d2, _, _ = closest_on_triangles(pts, *tree_args(tree), tri_coords)
    return np.sqrt(d2)


def chamfer_hausdorff(verts1, tris1, verts2, tris2):
    """Symmetric (Hausdorff, chamfer) distances between two triangle meshes.

    ``verts*`` are the sampled vertices, ``tris*`` the (m, 3, 3) triangle
    coordinates of each surface. Both quantities combine the two one-sided
    vertex-to-surface measurements, so swapping the arguments returns
    identical values.
    """
    if len(verts1) == 0 or len(verts2) == 0:
        raise ValueError("cannot measure distances against an empty vertex set")
    e12 = point_mesh_distances(verts1, tris2)
    e21 = point_mesh_distances(verts2, tris1)
    d_max = max(float(np.max(e12)), float(np.max(e21)))
    d_avg = (float(np.sum(e12)) + float(np.sum(e21))) / (len(verts1) + len(verts2))
    return d_max, d_avg


def normalize_by_bbox(d, target: TetMesh):
    """Distance normalized by the target's bounding-box diagonal."""
    diag = target.bbox_diagonal()
    if diag <= 0.0:
        raise ValueError("target mesh has a degenerate bounding box")
    return d / diag


def normalized_jacobian_det(mesh: TetMesh, X):
    """Per-tet determinant of the column-normalized map differential.

    The differential is taken in the convention whose columns are the
    images of the coordinate axes; determinants are divided by the product
    of column norms, so pure anisotropic scaling still scores 1 while shear
    and collapse score below 1. A zero column yields 0 for that tet.

    Returns (per_tet, volume-weighted mean, volume-weighted std).
    """
    J = jacobians(mesh, X)
    # Columns of the axis-image convention are rows of this J; the
    # determinant is multilinear, so dividing by the row-norm product
    # equals normalizing the columns first.
    dets = np.linalg.det(J)
    norms = np.linalg.norm(J, axis=2)  # (m, 3) row norms
    prod = norms.prod(axis=1)
    per_tet = np.divide(dets, prod, out=np.zeros_like(dets), where=prod > 0.0)
    w = mesh.volumes
    mean = float(np.sum(w * per_tet) / np.sum(w))
    var = float(np.sum(w * (per_tet - mean) ** 2) / np.sum(w))
    return per_tet, mean, float(np.sqrt(max(var, 0.0)))


def volume_weighted_mean_det(mesh: TetMesh, X):
    """Volume-weighted mean of the (signed, unnormalized) differential dets."""
    dets = np.linalg.det(jacobians(mesh, X))
    return float(np.sum(mesh.volumes * dets) / np.sum(mesh.volumes))


def per_tet_distortion(mesh: TetMesh, X, energy="arap"):
    """Per-tet distortion from singular-value magnitudes (CSV-ready)."""
    e = get_energy(energy) if isinstance(energy, str) else energy
    s = np.linalg.svd(jacobians(mesh, X), compute_uv=False)
    return e.f(s)


def surface_arrays(mesh: TetMesh, coords=None):
    """Boundary vertex positions and (m, 3, 3) triangle coordinates."""
    pts = mesh.vertices if coords is None else coords
    return pts[mesh.boundary_vertices], pts[mesh.boundary_faces]


def compute_map_metrics(src: TetMesh, dst: TetMesh, X, e_arap=float("nan"),
                        e_r=float("nan")) -> MapMetrics:
    """MapMetrics for one direction: deformed src surface vs dst surface."""
    mv, mt = surface_arrays(src, coords=X)
    tv, tt = surface_arrays(dst)
    d_max, d_avg = chamfer_hausdorff(mv, mt, tv, tt)
    _, det_mean, det_std = normalized_jacobian_det(src, X)
    return MapMetrics(
        d_max_hat=normalize_by_bbox(d_max, dst),
        d_avg_hat=normalize_by_bbox(d_avg, dst),
        n_inv=count_inversions(src, X),
        det_j_hat_mean=det_mean,
        det_j_hat_std=det_std,
        e_arap=e_arap,
        e_r=e_r,
    )

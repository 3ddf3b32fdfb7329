"""Tetrahedral mesh container with the derived quantities the solver needs.

A mesh is an immutable pair of arrays (vertices, tets). Everything else --
signed volumes, lumped vertex masses, the boundary triangulation and its
lumped areas, adjacency -- is computed once on demand and cached.
"""

import logging

import numpy as np

from .validation import check_points, check_simplices

logger = logging.getLogger(__name__)

# Outward-facing triangles of a positively oriented tet (v0, v1, v2, v3).
_TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]], dtype=np.int64)


def tet_volumes(vertices, tets):
    """Signed volumes det[v1-v0, v2-v0, v3-v0] / 6 for each tet."""
    v = vertices[tets]
    e = v[:, 1:] - v[:, :1]
    return np.linalg.det(e) / 6.0


def triangle_areas(vertices, faces):
    """Areas of a triangle soup given as (m, 3) vertex indices."""
    v = vertices[faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    return 0.5 * np.linalg.norm(n, axis=1)


class TetMesh:
    """Tetrahedral mesh.

    Parameters
    ----------
    vertices : array_like
        Vertex coordinates, shape (n, 3).
    tets : array_like
        Vertex indices per tet, shape (m, 4). Negative-volume tets are
        reoriented (two indices swapped) unless ``fix_orientation=False``,
        in which case they raise.
    fix_orientation : bool
        Repair inverted input tets instead of rejecting them.
    """

    def __init__(self, vertices, tets, fix_orientation=True):
        self.vertices = check_points(vertices, "vertices")
        self.vertices.setflags(write=False)
        tets = check_simplices(tets, len(self.vertices), 4, "tets")
        vols = tet_volumes(self.vertices, tets)
        flipped = vols < 0
        if np.any(flipped):
            if not fix_orientation:
                raise ValueError(f"{int(flipped.sum())} tets have negative volume")
            tets = tets.copy()
            tets[flipped, 1], tets[flipped, 2] = (
                tets[flipped, 2].copy(),
                tets[flipped, 1].copy(),
            )
            vols = np.abs(vols)
            logger.debug("reoriented %d inverted tets", int(flipped.sum()))
        if np.any(vols <= 0):
            raise ValueError("mesh contains degenerate (zero-volume) tets")
        self.tets = tets
        self.tets.setflags(write=False)
        self._volumes = vols
        self._cache = {}

    # -- basic quantities -------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def volumes(self):
        """Per-tet volumes (all positive after orientation fix)."""
        return self._volumes

    @property
    def total_volume(self):
        return float(self._volumes.sum())

    @property
    def vertex_masses(self):
        """Lumped vertex masses: one quarter of each incident tet volume."""
        if "vmass" not in self._cache:
            w = np.repeat(self._volumes * 0.25, 4)
            self._cache["vmass"] = np.bincount(
                self.tets.ravel(), weights=w, minlength=self.n_vertices
            )
        return self._cache["vmass"]

    def bbox_diagonal(self):
        """Length of the axis-aligned bounding box diagonal."""
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(ext))

    def normalized(self):
        """Copy of the mesh uniformly scaled about the origin to unit volume."""
        scale = self.total_volume ** (-1.0 / 3.0)
        return TetMesh(self.vertices * scale, self.tets, fix_orientation=False)

    # -- boundary ---------------------------------------------------------

    def _boundary(self):
        if "bfaces" in self._cache:
            return
        faces = self.tets[:, _TET_FACES].reshape(-1, 3)
        key = np.sort(faces, axis=1)
        order = np.lexsort(key.T[::-1])
        key_sorted = key[order]
        new = np.ones(len(key_sorted), dtype=bool)
        new[1:] = np.any(key_sorted[1:] != key_sorted[:-1], axis=1)
        group = np.cumsum(new) - 1
        counts = np.bincount(group)
        if counts.max() > 2:
            raise ValueError("non-manifold mesh: a face is shared by >2 tets")
        single = counts[group] == 1
        flat = order[single]
        # Deterministic face order: by (tet, local face) of origin.
        flat = flat[np.argsort(flat, kind="stable")]
        self._cache["bfaces"] = faces[flat]
        self._cache["bfaces"].setflags(write=False)
        self._cache["bface_tets"] = flat // 4
        self._cache["bface_tets"].setflags(write=False)

    @property
    def boundary_faces(self):
        """Outward-oriented boundary triangles, shape (b, 3)."""
        self._boundary()
        return self._cache["bfaces"]

    @property
    def boundary_face_tets(self):
        """For each boundary face, the index of its (unique) owning tet."""
        self._boundary()
        return self._cache["bface_tets"]

    @property
    def boundary_vertices(self):
        """Sorted array of vertex indices that lie on the boundary."""
        if "bverts" not in self._cache:
            self._cache["bverts"] = np.unique(self.boundary_faces)
        return self._cache["bverts"]

    @property
    def boundary_vertex_areas(self):
        """Lumped boundary areas: one third of each incident boundary triangle.

        Indexed like ``boundary_vertices``.
        """
        if "bareas" not in self._cache:
            areas = triangle_areas(self.vertices, self.boundary_faces)
            full = np.bincount(
                self.boundary_faces.ravel(),
                weights=np.repeat(areas / 3.0, 3),
                minlength=self.n_vertices,
            )
            self._cache["bareas"] = full[self.boundary_vertices]
        return self._cache["bareas"]

    @property
    def surface_area(self):
        return float(triangle_areas(self.vertices, self.boundary_faces).sum())

    # -- adjacency ---------------------------------------------------------

    @property
    def vertex_tets(self):
        """(offsets, values) CSR listing of tets incident to each vertex."""
        if "v2t" not in self._cache:
            idx = self.tets.ravel()
            tid = np.repeat(np.arange(self.n_tets, dtype=np.int64), 4)
            order = np.argsort(idx, kind="stable")
            counts = np.bincount(idx, minlength=self.n_vertices)
            offsets = np.concatenate(([0], np.cumsum(counts)))
            self._cache["v2t"] = (offsets, tid[order])
        return self._cache["v2t"]

    def vertex_ring(self, vertex_ids):
        """Vertices sharing a tet with any of ``vertex_ids`` (inclusive)."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[np.asarray(vertex_ids, dtype=np.int64)] = True
        touched = np.any(mask[self.tets], axis=1)
        out = np.zeros(self.n_vertices, dtype=bool)
        out[self.tets[touched].ravel()] = True
        out[np.asarray(vertex_ids, dtype=np.int64)] = True
        return np.nonzero(out)[0]

    def tets_touching(self, vertex_ids):
        """Indices of tets containing at least one of ``vertex_ids``."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[np.asarray(vertex_ids, dtype=np.int64)] = True
        return np.nonzero(np.any(mask[self.tets], axis=1))[0]

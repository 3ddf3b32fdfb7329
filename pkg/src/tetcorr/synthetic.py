"""Procedural test meshes: boxes, bent boxes, and affine images.

All generators return conforming tetrahedralizations built from the
six-tets-per-cell Kuhn subdivision of a structured grid, which keeps
shared cell faces compatible without parity bookkeeping.
"""

import numpy as np

from .mesh import TetMesh

# Kuhn subdivision of the unit cube: one tet per permutation of the axes,
# walking corner 000 -> 111. Corners are bit-coded x + 2y + 4z.
_KUHN_TETS = []
for _perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
    _code = 0
    _path = [0]
    for _axis in _perm:
        _code |= 1 << _axis
        _path.append(_code)
    _KUHN_TETS.append(_path)
_KUHN_TETS = np.array(_KUHN_TETS, dtype=np.int64)


def box_mesh(nx=4, ny=4, nz=4, size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Structured box tet mesh with nx*ny*nz cells, 6 tets per cell.

    Parameters
    ----------
    nx, ny, nz : int
        Cell counts along each axis (>= 1).
    size : tuple of float
        Box edge lengths.
    origin : tuple of float
        Coordinates of the minimum corner.

    Returns
    -------
    TetMesh
    """
    if min(nx, ny, nz) < 1:
        raise ValueError("cell counts must be >= 1")
    xs = np.linspace(0.0, size[0], nx + 1) + origin[0]
    ys = np.linspace(0.0, size[1], ny + 1) + origin[1]
    zs = np.linspace(0.0, size[2], nz + 1) + origin[2]
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    ii, jj, kk = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
    )
    ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
    corner = np.empty((len(ii), 8), dtype=np.int64)
    for code in range(8):
        di, dj, dk = code & 1, (code >> 1) & 1, (code >> 2) & 1
        corner[:, code] = vid(ii + di, jj + dj, kk + dk)
    tets = corner[:, _KUHN_TETS].reshape(-1, 4)
    return TetMesh(vertices, tets)


def bend_coordinates(vertices, angle, length=None, axis=0):
    """Bend a box around a circular arc in the (axis, y) plane.

    The coordinate along ``axis`` is remapped to arc length on a circle
    whose subtended angle is ``angle`` radians; the y offset becomes the
    radial offset. Positive tet volumes survive bends with
    |angle| * max|y| < length.
    """
    v = np.array(vertices, dtype=np.float64)
    x = v[:, axis]
    lo, hi = x.min(), x.max()
    span = hi - lo if length is None else length
    if span <= 0:
        raise ValueError("degenerate extent along bend axis")
    radius = span / angle
    theta = (x - lo) / span * angle
    r = radius + v[:, 1]
    out = v.copy()
    out[:, axis] = r * np.sin(theta)
    out[:, 1] = r * np.cos(theta) - radius
    return out


def bent_box_mesh(nx=10, ny=6, nz=6, size=(2.0, 0.8, 0.8), angle=1.0):
    """Box mesh whose vertices are bent around an arc (same connectivity)."""
    base = box_mesh(nx, ny, nz, size=size)
    bent = bend_coordinates(base.vertices, angle)
    return TetMesh(bent, base.tets, fix_orientation=False)


def corner_vertex_ids(mesh):
    """Indices of the 8 bounding-box corner vertices of a box-like mesh.

    Vertices are matched to the exact bbox corners; raises if any corner
    has no coincident vertex.
    """
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    ids = []
    for code in range(8):
        target = np.where(
            [code & 1, (code >> 1) & 1, (code >> 2) & 1], hi, lo
        )
        d = np.linalg.norm(mesh.vertices - target, axis=1)
        j = int(np.argmin(d))
        if d[j] > 1e-9 * max(np.linalg.norm(hi - lo), 1.0):
            raise ValueError("mesh has no vertex at bbox corner")
        ids.append(j)
    return np.array(ids, dtype=np.int64)

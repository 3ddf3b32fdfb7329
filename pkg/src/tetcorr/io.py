"""File I/O: TetGen node/ele pairs, Medit .mesh, landmark and map tables.

All text output prints floats with 17 significant digits so that written
artifacts round-trip float64 exactly and byte-identical reruns are possible.
"""

import json
import logging
import os

import numpy as np

from .mesh import TetMesh

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


def _tokens(path):
    """Significant whitespace-separated tokens of a text file, '#' comments stripped."""
    out = []
    with open(path) as fh:
        for line in fh:
            body = line.split("#", 1)[0].strip()
            if body:
                out.extend(body.split())
    return out


# -- TetGen ----------------------------------------------------------------


def _node_ele_paths(path):
    base, ext = os.path.splitext(path)
    if ext not in (".node", ".ele"):
        raise ValueError(f"expected a .node or .ele path, got {path}")
    return base + ".node", base + ".ele"


def read_tetgen(path):
    """Read a TetGen .node/.ele pair (either file may be named).

    Indices may be 0- or 1-based; the base is taken from the first vertex
    index in the .node file.
    """
    node_path, ele_path = _node_ele_paths(path)
    tok = _tokens(node_path)
    n, dim, n_attr, n_marker = (int(t) for t in tok[:4])
    if dim != 3:
        raise ValueError(f"{node_path}: expected dimension 3, got {dim}")
    stride = 4 + n_attr + n_marker
    body = tok[4:]
    if len(body) < n * stride:
        raise ValueError(f"{node_path}: expected {n} vertex records")
    rows = np.array(body[: n * stride], dtype=np.float64).reshape(n, stride)
    base = int(rows[0, 0])
    if base not in (0, 1):
        raise ValueError(f"{node_path}: first vertex index must be 0 or 1, got {base}")
    ids = rows[:, 0].astype(np.int64)
    if not np.array_equal(ids, np.arange(base, base + n)):
        raise ValueError(f"{node_path}: vertex indices must be consecutive")
    vertices = rows[:, 1:4]

    tok = _tokens(ele_path)
    m, per, e_attr = (int(t) for t in tok[:3])
    if per != 4:
        raise ValueError(f"{ele_path}: expected 4 nodes per tet, got {per}")
    stride = 5 + e_attr
    body = tok[3:]
    if len(body) < m * stride:
        raise ValueError(f"{ele_path}: expected {m} tet records")
    rows = np.array(body[: m * stride], dtype=np.float64).reshape(m, stride)
    tets = rows[:, 1:5].astype(np.int64) - base
    if m and (tets.min() < 0 or tets.max() >= n):
        raise ValueError(f"{ele_path}: tet indices out of range for base {base}")
    return TetMesh(vertices, tets)


def write_tetgen(mesh, path, base=1):
    """Write a TetGen .node/.ele pair; ``base`` selects 0- or 1-based indices."""
    node_path, ele_path = _node_ele_paths(path)
    with open(node_path, "w") as fh:
        fh.write(f"{mesh.n_vertices} 3 0 0\n")
        for i, v in enumerate(mesh.vertices):
            coords = " ".join(FLOAT_FMT % c for c in v)
            fh.write(f"{i + base} {coords}\n")
    with open(ele_path, "w") as fh:
        fh.write(f"{mesh.n_tets} 4 0\n")
        for i, t in enumerate(mesh.tets):
            fh.write(f"{i + base} {t[0] + base} {t[1] + base} {t[2] + base} {t[3] + base}\n")


# -- Medit -------------------------------------------------------------------


def read_medit(path):
    """Read an ASCII Medit .mesh file (Vertices and Tetrahedra sections)."""
    tok = _tokens(path)
    pos = 0
    vertices = None
    tets = None

    def take(count):
        nonlocal pos
        chunk = tok[pos : pos + count]
        if len(chunk) < count:
            raise ValueError(f"{path}: truncated file")
        pos += count
        return chunk

    while pos < len(tok):
        key = tok[pos].lower()
        pos += 1
        if key == "meshversionformatted":
            take(1)
        elif key == "dimension":
            (dim,) = take(1)
            if int(dim) != 3:
                raise ValueError(f"{path}: expected dimension 3")
        elif key == "vertices":
            n = int(take(1)[0])
            rows = np.array(take(4 * n), dtype=np.float64).reshape(n, 4)
            vertices = rows[:, :3]
        elif key == "tetrahedra":
            m = int(take(1)[0])
            rows = np.array(take(5 * m), dtype=np.float64).reshape(m, 5)
            tets = rows[:, :4].astype(np.int64) - 1
        elif key == "triangles":
            m = int(take(1)[0])
            take(4 * m)
        elif key == "edges":
            m = int(take(1)[0])
            take(3 * m)
        elif key == "corners" or key == "requiredvertices":
            m = int(take(1)[0])
            take(m)
        elif key == "end":
            break
        else:
            raise ValueError(f"{path}: unsupported Medit section '{key}'")
    if vertices is None or tets is None:
        raise ValueError(f"{path}: missing Vertices or Tetrahedra section")
    if tets.size and (tets.min() < 0 or tets.max() >= len(vertices)):
        raise ValueError(f"{path}: tet indices out of range")
    return TetMesh(vertices, tets)


def write_medit(mesh, path):
    """Write an ASCII Medit version-2 .mesh file."""
    with open(path, "w") as fh:
        fh.write("MeshVersionFormatted 2\nDimension 3\n")
        fh.write(f"Vertices\n{mesh.n_vertices}\n")
        for v in mesh.vertices:
            fh.write(" ".join(FLOAT_FMT % c for c in v) + " 0\n")
        fh.write(f"Tetrahedra\n{mesh.n_tets}\n")
        for t in mesh.tets:
            fh.write(f"{t[0] + 1} {t[1] + 1} {t[2] + 1} {t[3] + 1} 0\n")
        fh.write("End\n")


def read_mesh(path):
    """Read a tet mesh, dispatching on extension (.node/.ele or .mesh)."""
    ext = os.path.splitext(path)[1].lower()
    if ext in (".node", ".ele"):
        return read_tetgen(path)
    if ext == ".mesh":
        return read_medit(path)
    raise ValueError(f"unrecognized mesh extension '{ext}' (use .node/.ele or .mesh)")


def write_mesh(mesh, path):
    ext = os.path.splitext(path)[1].lower()
    if ext in (".node", ".ele"):
        write_tetgen(mesh, path)
    elif ext == ".mesh":
        write_medit(mesh, path)
    else:
        raise ValueError(f"unrecognized mesh extension '{ext}' (use .node/.ele or .mesh)")


# -- landmarks and surface maps ----------------------------------------------


def read_landmarks(path):
    """Read paired landmarks.

    Each significant line is ``side simplex_id b0 b1 b2 [b3]`` where side is
    1 or 2, three barycentric values denote a point on a boundary face and
    four a point inside a tet. The k-th side-1 line pairs with the k-th
    side-2 line.

    Returns
    -------
    list of ((kind, index, bary), (kind, index, bary))
        One tuple per landmark pair; kind is "face" or "tet".
    """
    sides = {1: [], 2: []}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) not in (5, 6):
                raise ValueError(f"{path}:{lineno}: expected 5 or 6 fields")
            side = int(parts[0])
            if side not in (1, 2):
                raise ValueError(f"{path}:{lineno}: side must be 1 or 2")
            index = int(parts[1])
            bary = np.array([float(x) for x in parts[2:]], dtype=np.float64)
            if bary.min() < -1e-9 or abs(bary.sum() - 1.0) > 1e-6:
                raise ValueError(f"{path}:{lineno}: invalid barycentric weights")
            kind = "face" if len(bary) == 3 else "tet"
            sides[side].append((kind, index, bary))
    if len(sides[1]) != len(sides[2]):
        raise ValueError(
            f"{path}: {len(sides[1])} side-1 landmarks vs {len(sides[2])} side-2"
        )
    if not sides[1]:
        raise ValueError(f"{path}: no landmarks found")
    return list(zip(sides[1], sides[2]))


def write_landmarks(pairs, path):
    with open(path, "w") as fh:
        for a, b in pairs:
            for side, (kind, index, bary) in ((1, a), (2, b)):
                vals = " ".join(FLOAT_FMT % w for w in bary)
                fh.write(f"{side} {index} {vals}\n")


def read_surface_map(path):
    """Read a boundary vertex map.

    Lines are ``side vertex_id face_id b0 b1 b2``: boundary vertex
    ``vertex_id`` of mesh ``side`` maps to the point with barycentric
    coordinates (b0, b1, b2) on boundary face ``face_id`` of the other mesh.

    Returns
    -------
    dict with keys 1 and 2, each a list of (vertex_id, face_id, bary3).
    """
    out = {1: [], 2: []}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields")
            side = int(parts[0])
            if side not in (1, 2):
                raise ValueError(f"{path}:{lineno}: side must be 1 or 2")
            vertex_id = int(parts[1])
            face_id = int(parts[2])
            bary = np.array([float(x) for x in parts[3:]], dtype=np.float64)
            if bary.min() < -1e-9 or abs(bary.sum() - 1.0) > 1e-6:
                raise ValueError(f"{path}:{lineno}: invalid barycentric weights")
            out[side].append((vertex_id, face_id, bary))
    if not out[1] or not out[2]:
        raise ValueError(f"{path}: surface map must cover both sides")
    return out


def write_surface_map(entries, path):
    with open(path, "w") as fh:
        for side in (1, 2):
            for vertex_id, face_id, bary in entries[side]:
                vals = " ".join(FLOAT_FMT % w for w in bary)
                fh.write(f"{side} {vertex_id} {face_id} {vals}\n")


# -- map tables ----------------------------------------------------------------


def write_bary_table(tet_ids, weights, path):
    """Write one ``tet_id b0 b1 b2 b3`` line per vertex."""
    with open(path, "w") as fh:
        for tid, w in zip(tet_ids, weights):
            vals = " ".join(FLOAT_FMT % x for x in w)
            fh.write(f"{tid} {vals}\n")


def read_bary_table(path):
    rows = [ln.split() for ln in open(path) if ln.strip()]
    tet_ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    weights = np.array([[float(x) for x in r[1:5]] for r in rows], dtype=np.float64)
    return tet_ids, weights


def write_point_table(points, path):
    """Write one ``x y z`` line per point."""
    with open(path, "w") as fh:
        for p in points:
            fh.write(" ".join(FLOAT_FMT % c for c in p) + "\n")


def read_point_table(path):
    rows = [ln.split() for ln in open(path) if ln.strip()]
    return np.array([[float(x) for x in r[:3]] for r in rows], dtype=np.float64)


# -- OBJ points / polylines / surfaces -----------------------------------------


def read_obj(path):
    """Read vertices, polylines and triangles from a Wavefront OBJ file."""
    vertices, lines, faces = [], [], []
    with open(path) as fh:
        for raw in fh:
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "l":
                lines.append([int(t.split("/")[0]) - 1 for t in parts[1:]])
            elif parts[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in parts[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return (
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        [np.array(l, dtype=np.int64) for l in lines],
        np.array(faces, dtype=np.int64).reshape(-1, 3),
    )


def write_obj(path, vertices, lines=(), faces=()):
    with open(path, "w") as fh:
        for v in vertices:
            fh.write("v " + " ".join(FLOAT_FMT % c for c in v) + "\n")
        for l in lines:
            fh.write("l " + " ".join(str(i + 1) for i in l) + "\n")
        for f in faces:
            fh.write("f " + " ".join(str(i + 1) for i in f) + "\n")


# -- CSV / JSON -----------------------------------------------------------------


def write_csv(path, array, header=None):
    """Write a 2D array as CSV with 17-significant-digit floats."""
    arr = np.atleast_2d(np.asarray(array, dtype=np.float64))
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in arr:
            fh.write(",".join(FLOAT_FMT % x for x in row) + "\n")


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, payload):
    """Write JSON deterministically (sorted keys, fixed separators)."""
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")

"""Input validation helpers shared by the public API."""

import numpy as np


def check_points(points, name="points"):
    """Return a contiguous float64 (n, 3) coordinate array.

    Parameters
    ----------
    points : array_like
        Candidate coordinate array, shape (n, 3).
    name : str
        Label used in error messages.

    Returns
    -------
    np.ndarray
        Validated array of shape (n, 3), dtype float64.
    """
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_simplices(simplices, n_vertices, width, name="tets"):
    """Return a contiguous int64 (m, width) index array with entries in range.

    Rows with repeated vertex indices are rejected: degenerate elements
    break volume and mass computations downstream.
    """
    arr = np.ascontiguousarray(simplices, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{name} must have shape (m, {width}), got {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= n_vertices):
        raise ValueError(
            f"{name} indices must lie in [0, {n_vertices}), "
            f"got range [{arr.min()}, {arr.max()}]"
        )
    sorted_rows = np.sort(arr, axis=1)
    if arr.size and np.any(sorted_rows[:, :-1] == sorted_rows[:, 1:]):
        bad = int(np.nonzero(np.any(sorted_rows[:, :-1] == sorted_rows[:, 1:], axis=1))[0][0])
        raise ValueError(f"{name} row {bad} repeats a vertex index")
    return arr


def check_barycentric(weights, width, tol=1e-9, name="weights"):
    """Return float64 barycentric weights of shape (n, width).

    Each row must be nonnegative (within ``tol``) and sum to 1 (within
    ``tol``). Tiny negative entries are clamped and rows renormalized.
    """
    arr = np.ascontiguousarray(weights, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{name} must have shape (n, {width}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size == 0:
        return arr
    if arr.min() < -tol:
        raise ValueError(f"{name} has a negative weight {arr.min()} beyond tolerance {tol}")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.abs(sums - 1.0).max())
        raise ValueError(f"{name} rows must sum to 1, worst deviation {worst}")
    arr = np.maximum(arr, 0.0)
    arr /= arr.sum(axis=1, keepdims=True)
    return arr


def check_unit_volume(mesh, tol=1e-6, name="mesh"):
    """Raise unless the mesh total volume is 1 within ``tol``."""
    c = float(mesh.total_volume)
    if abs(c - 1.0) > tol:
        raise ValueError(
            f"{name} must be normalized to unit volume before solving "
            f"(total volume {c}); call TetMesh.normalized()"
        )

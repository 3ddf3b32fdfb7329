"""Correspondence objective: distortion, coupling, round-trip and surface terms.

The total objective over a symmetric map state (P12, P21, X12, X21) is

    total = alpha * e_arap + (1 - alpha) * e_r + gamma * e_p + beta * e_q

where each component sums one term over both directions:

* ``e_arap`` — volume-weighted distortion of the per-tet map differentials,
  measured by a singular-value energy f.
* ``e_q``    — coupling between free vertex images X and the barycentric
  targets P applied to the other mesh.
* ``e_r``   — round-trip consistency: mapping a vertex across with P and
  evaluating the reverse deformation should land back on the vertex.
* ``e_p``   — two-sided boundary adherence: deformed boundary vertices stick
  to the static target surface (forward) and static target boundary vertices
  are covered by the deformed source surface (backward).

For fixed barycentric tables the objective splits into two independent
bundles, one per direction of vertex images: the bundle of X12 collects
every term that reads X12 (its own distortion/coupling/forward-surface
terms plus the reverse direction's round-trip and backward-surface terms).
Each bundle is computed purely in that direction's mesh-local order and the
two bundle scalars are only ever combined by single commutative additions,
so results are bit-identical under swapping the roles of the two meshes.

Surface-distance gradients use the feet of the closest-point projections,
refreshed at every evaluation; by the envelope theorem this is the exact
gradient of the true squared-distance terms wherever the nearest point is
unique.
"""

from dataclasses import dataclass

import numpy as np

from .energies import get_energy, signed_svd
from .mapping import BarycentricMap, rest_operators
from .mesh import TetMesh
from .proximity import closest_on_triangles, tree_args, triangle_tree


@dataclass(frozen=True)
class ObjectiveWeights:
    """Term weights; ``beta`` is the one ramped across outer iterations."""

    alpha: float = 0.5
    beta: float = 0.25
    gamma: float = 25.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 0.0 or self.gamma < 0.0:
            raise ValueError("beta and gamma must be nonnegative")


@dataclass(frozen=True)
class EnergyBreakdown:
    """Objective components (each summed over both directions)."""

    e_arap: float
    e_r: float
    e_q: float
    e_p: float
    total: float
    directions: tuple  # two dicts of unweighted per-bundle term values

    def to_dict(self):
        return {
            "e_arap": self.e_arap,
            "e_r": self.e_r,
            "e_q": self.e_q,
            "e_p": self.e_p,
            "total": self.total,
            "directions": list(self.directions),
        }


def _scatter(grad, idx, contrib):
    """Deterministic += of contribution rows onto grad rows."""
    flat_idx = idx.ravel()
    flat = contrib.reshape(-1, 3)
    n = grad.shape[0]
    for c in range(3):
        grad[:, c] += np.bincount(flat_idx, weights=flat[:, c], minlength=n)


@dataclass(frozen=True)
class FrozenFeet:
    """Surface-projection correspondences captured at one state.

    Holding these fixed turns both surface terms into plain quadratics,
    which finite-difference gradient checks require (the live terms refresh
    their projections at every evaluation).
    """

    fwd_face: np.ndarray  # (b_src,) target boundary triangle per src boundary vertex
    fwd_w: np.ndarray  # (b_src, 3)
    bwd_face: np.ndarray  # (b_dst,) source boundary triangle per dst boundary vertex
    bwd_w: np.ndarray  # (b_dst, 3)


class DirectionObjective:
    """Every objective term that reads one direction's vertex images.

    Construction against (src, dst) precomputes rest differoperators, mass
    and area weights, and the static target-surface search tree. The bundle
    for images X of src's vertices contains:

    * distortion of src's tets under X,
    * coupling of X to ``p_fwd`` applied to dst's vertices,
    * round-trip consistency of ``p_rev`` (dst's rows into src) evaluated
      on the deformation X,
    * forward surface adherence of X's boundary vertices to dst's surface,
    * backward coverage of dst's boundary vertices by the deformed src
      surface.
    """

    def __init__(self, src: TetMesh, dst: TetMesh, energy="arap"):
        self.src = src
        self.dst = dst
        self.energy = get_energy(energy) if isinstance(energy, str) else energy
        self.inv_rest, self.grad_op = rest_operators(src)
        self.vols = src.volumes
        self.arap_coef = 1.0 / (2.0 * src.total_volume)
        self.src_masses = src.vertex_masses
        self.q_coef = 1.0 / (src.total_volume * dst.total_volume)
        self.dst_masses = dst.vertex_masses
        self.r_coef = 1.0 / dst.total_volume**2
        self.bverts = src.boundary_vertices
        self.bareas = src.boundary_vertex_areas
        self.pf_coef = 1.0 / src.surface_area
        self.src_bfaces = src.boundary_faces
        self.dst_bverts = dst.boundary_vertices
        self.dst_bareas = dst.boundary_vertex_areas
        self.pb_coef = 1.0 / dst.surface_area
        dst_tris = np.ascontiguousarray(dst.vertices[dst.boundary_faces])
        self.dst_tris = dst_tris
        self.dst_tri_tree = triangle_tree(dst_tris)

    # -- individual terms (unweighted value, optional gradient into ``grad``) --

    def distortion(self, X, grad=None, scale=1.0, energy=None, tet_ids=None):
        """Volume-weighted singular-value energy of the map differentials.

        ``tet_ids`` restricts the sum to a tet subset (used by repair).
        """
        e = self.energy if energy is None else energy
        tets = self.src.tets if tet_ids is None else self.src.tets[tet_ids]
        inv_rest = self.inv_rest if tet_ids is None else self.inv_rest[tet_ids]
        vols = self.vols if tet_ids is None else self.vols[tet_ids]
        img = X[tets]
        J = np.matmul(inv_rest, img[:, 1:] - img[:, :1])
        U, s, Vt = signed_svd(J)
        val = self.arap_coef * float(np.sum(vols * e.f(s)))
        if grad is not None:
            G = np.matmul(U * e.grad(s)[:, None, :], Vt)
            gop = self.grad_op if tet_ids is None else self.grad_op[tet_ids]
            per_tet = np.matmul(gop, G)
            per_tet *= (scale * self.arap_coef * vols)[:, None, None]
            _scatter(grad, tets, per_tet)
        return val

    def coupling(self, X, p_fwd: BarycentricMap, grad=None, scale=1.0):
        """Mass-weighted squared distance between X and the P-step targets."""
        target = p_fwd.apply(self.dst)
        diff = X - target
        val = self.q_coef * float(np.sum(self.src_masses * np.sum(diff * diff, axis=1)))
        if grad is not None:
            grad += (2.0 * scale * self.q_coef) * self.src_masses[:, None] * diff
        return val

    def round_trip(self, X, p_rev: BarycentricMap, grad=None, scale=1.0):
        """Reverse rows composed with this deformation should be the identity."""
        resid = p_rev.apply(self.src, coords=X) - self.dst.vertices
        val = self.r_coef * float(np.sum(self.dst_masses * np.sum(resid * resid, axis=1)))
        if grad is not None:
            coef = (2.0 * scale * self.r_coef) * self.dst_masses
            contrib = coef[:, None, None] * p_rev.weights[:, :, None] * resid[:, None, :]
            _scatter(grad, self.src.tets[p_rev.tet_ids], contrib)
        return val

    def surface_forward(self, X, grad=None, scale=1.0, feet=None):
        """Deformed boundary vertices against the static target surface."""
        if len(self.bverts) == 0 or len(self.dst_tris) == 0:
            return 0.0
        pts = np.ascontiguousarray(X[self.bverts])
        if feet is None:
            d2, fid, w = closest_on_triangles(
                pts, *tree_args(self.dst_tri_tree), self.dst_tris
            )
        else:
            fid, w = feet.fwd_face, feet.fwd_w
        foot_pts = np.einsum("nk,nkc->nc", w, self.dst_tris[fid])
        diff = pts - foot_pts
        val = self.pf_coef * float(np.sum(self.bareas * np.sum(diff * diff, axis=1)))
        if grad is not None:
            grad[self.bverts] += (
                (2.0 * scale * self.pf_coef) * self.bareas[:, None] * diff
            )
        return val

    def surface_backward(self, X, grad=None, scale=1.0, feet=None):
        """Static target boundary vertices against the deformed source surface."""
        if len(self.dst_bverts) == 0 or len(self.src_bfaces) == 0:
            return 0.0
        tris = np.ascontiguousarray(X[self.src_bfaces])
        pts = np.ascontiguousarray(self.dst.vertices[self.dst_bverts])
        if feet is None:
            tree = triangle_tree(tris)
            d2, fid, w = closest_on_triangles(pts, *tree_args(tree), tris)
        else:
            fid, w = feet.bwd_face, feet.bwd_w
        foot_pts = np.einsum("nk,nkc->nc", w, tris[fid])
        diff = foot_pts - pts
        val = self.pb_coef * float(np.sum(self.dst_bareas * np.sum(diff * diff, axis=1)))
        if grad is not None:
            coef = (2.0 * scale * self.pb_coef) * self.dst_bareas
            contrib = coef[:, None, None] * w[:, :, None] * diff[:, None, :]
            _scatter(grad, self.src_bfaces[fid], contrib)
        return val

    def capture_feet(self, X) -> FrozenFeet:
        """Record both surface-projection correspondences at the state X."""
        pts = np.ascontiguousarray(X[self.bverts])
        _, ffid, fw = closest_on_triangles(
            pts, *tree_args(self.dst_tri_tree), self.dst_tris
        )
        tris = np.ascontiguousarray(X[self.src_bfaces])
        tree = triangle_tree(tris)
        qb = np.ascontiguousarray(self.dst.vertices[self.dst_bverts])
        _, bfid, bw = closest_on_triangles(qb, *tree_args(tree), tris)
        return FrozenFeet(ffid, fw, bfid, bw)

    # -- bundle ------------------------------------------------------------------

    def terms(self, X, p_fwd, p_rev):
        """Unweighted term values of this bundle (no gradients)."""
        return {
            "arap": self.distortion(X),
            "q": self.coupling(X, p_fwd),
            "r": self.round_trip(X, p_rev),
            "p_forward": self.surface_forward(X),
            "p_backward": self.surface_backward(X),
        }

    def bundle(self, X, p_fwd, p_rev, weights: ObjectiveWeights, with_grad=True,
               feet=None):
        """Weighted bundle value (and gradient w.r.t. X if requested).

        Returns (value, grad_or_None, terms_dict). The value is assembled in
        a fixed order from this direction's data only. ``feet`` fixes the
        surface-projection correspondences (see FrozenFeet).
        """
        grad = np.zeros_like(X) if with_grad else None
        a = self.distortion(X, grad, weights.alpha)
        q = self.coupling(X, p_fwd, grad, weights.beta)
        r = self.round_trip(X, p_rev, grad, 1.0 - weights.alpha)
        pf = self.surface_forward(X, grad, weights.gamma, feet=feet)
        pb = self.surface_backward(X, grad, weights.gamma, feet=feet)
        value = (
            weights.alpha * a
            + weights.beta * q
            + (1.0 - weights.alpha) * r
            + weights.gamma * (pf + pb)
        )
        terms = {"arap": a, "q": q, "r": r, "p_forward": pf, "p_backward": pb}
        return value, grad, terms


class PairObjective:
    """Both direction bundles plus the canonical total composition."""

    def __init__(self, m1: TetMesh, m2: TetMesh, energy="arap"):
        self.d1 = DirectionObjective(m1, m2, energy)
        self.d2 = DirectionObjective(m2, m1, energy)

    def direction(self, k):
        if k not in (1, 2):
            raise ValueError("direction must be 1 or 2")
        return self.d1 if k == 1 else self.d2

    def breakdown(self, map_pair, weights: ObjectiveWeights) -> EnergyBreakdown:
        """Canonical components and total for a full map state.

        Each component adds exactly two per-bundle scalars, and the total is
        composed from the components, so the result is bit-identical when
        the two meshes swap roles.
        """
        t1 = self.d1.terms(map_pair.x12, map_pair.p12, map_pair.p21)
        t2 = self.d2.terms(map_pair.x21, map_pair.p21, map_pair.p12)
        e_arap = t1["arap"] + t2["arap"]
        e_q = t1["q"] + t2["q"]
        e_r = t1["r"] + t2["r"]
        p1 = t1["p_forward"] + t1["p_backward"]
        p2 = t2["p_forward"] + t2["p_backward"]
        e_p = p1 + p2
        total = (
            weights.alpha * e_arap
            + (1.0 - weights.alpha) * e_r
            + weights.gamma * e_p
            + weights.beta * e_q
        )
        return EnergyBreakdown(e_arap, e_r, e_q, e_p, total, (t1, t2))

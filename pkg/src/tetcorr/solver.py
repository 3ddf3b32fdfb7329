"""Alternating correspondence solver with inverted-element repair.

The solve pipeline runs four stages over an initialized map state:

1. ``boundary-fixed``: alternate exact barycentric-row projection (p-step)
   and per-direction L-BFGS on the vertex images (x-step), restoring the
   boundary rows of both barycentric tables to their initial values at the
   end of every iteration.
2. ``repair``: distortion-only L-BFGS over the 1-ring of any inverted
   tets, all other vertices fixed.
3. ``free``: the same alternation without boundary restoration; the
   coupling-weight ramp restarts.
4. ``post-repair``: a final repair pass restricted to the vertices of
   inverted tets, with its own step budget.

Every accepted half-step keeps the total objective non-increasing at fixed
weights (candidates that fail this — possible only through floating-point
regrouping noise — are rejected and the previous state kept). All
reductions are deterministic and per-direction quantities are only ever
combined by single commutative additions, so swapping the roles of the two
meshes produces bit-identical histories with the directions exchanged.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .energies import ENERGY_NAMES, get_energy
from .lbfgs import minimize_lbfgs
from .mapping import BarycentricMap, MapPair, jacobians
from .mesh import TetMesh
from .metrics import compute_map_metrics
from .objective import ObjectiveWeights, PairObjective
from .proximity import project_points_tets, tet_tree, tree_args
from .validation import check_unit_volume

STAGE_BOUNDARY_FIXED = "boundary-fixed"
STAGE_REPAIR = "repair"
STAGE_FREE = "free"
STAGE_POST_REPAIR = "post-repair"


@dataclass
class StageToggles:
    """Per-stage enable flags (all on by default)."""

    boundary_fixed: bool = True
    repair: bool = True
    free: bool = True
    post_repair: bool = True


@dataclass
class SolverConfig:
    energy: str = "arap"
    alpha: float = 0.5
    gamma: float = 25.0
    beta_start: float = 0.25
    beta_end: float = 5.0
    beta_ramp_iters: int = 20
    max_outer_iters: int = 50
    grad_tol: float = 1e-6
    obj_decrease_tol: float = 1e-7
    lbfgs_memory: int = 10
    lbfgs_max_iters: int = 200
    repair_lbfgs_steps: int = 100
    hard_boundary: bool = False
    stages: StageToggles = field(default_factory=StageToggles)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if min(self.grad_tol, self.obj_decrease_tol) <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.gamma < 0.0 or self.beta_start < 0.0 or self.beta_end < 0.0:
            raise ValueError("weights must be nonnegative")
        if self.energy not in ENERGY_NAMES:
            raise ValueError(f"unknown energy '{self.energy}'")

    def beta_at(self, i):
        """Linear coupling-weight ramp, clamped at its end value."""
        if self.beta_ramp_iters <= 0:
            return self.beta_end
        t = min(i / self.beta_ramp_iters, 1.0)
        return self.beta_start + (self.beta_end - self.beta_start) * t

    def weights_at(self, i):
        return ObjectiveWeights(self.alpha, self.beta_at(i), self.gamma)


@dataclass
class SolveReport:
    """Per-half-step energy history plus stage markers and final summary.

    Wall time is kept out of ``to_dict`` so that serialized reports from
    repeated runs are byte-identical; callers persist timing separately.
    """

    history: list
    stage_markers: list
    final: dict
    config: dict
    wall_time_s: float = 0.0

    def to_dict(self):
        return {
            "history": self.history,
            "stage_markers": self.stage_markers,
            "final": self.final,
            "config": self.config,
        }


def _record(stage, iteration, event, beta, bd, **extra):
    rec = {
        "stage": stage,
        "iteration": iteration,
        "event": event,
        "beta": beta,
        "e_arap": bd.e_arap,
        "e_r": bd.e_r,
        "e_q": bd.e_q,
        "e_p": bd.e_p,
        "total": bd.total,
    }
    rec.update(extra)
    return rec


def _require_finite(bd, stage, iteration):
    if not np.isfinite(bd.total):
        raise RuntimeError(
            f"non-finite objective (stage {stage}, iteration {iteration}): "
            f"components {bd.to_dict()}"
        )


# -- initialization -----------------------------------------------------------------


def closest_point_init(m1: TetMesh, m2: TetMesh) -> MapPair:
    """Initialize both directions by projecting each vertex onto the other mesh."""
    p12 = _closest_rows(m1, m2)
    p21 = _closest_rows(m2, m1)
    return MapPair(p12, p21, p12.apply(m2), p21.apply(m1))


def _closest_rows(src: TetMesh, dst: TetMesh) -> BarycentricMap:
    coords = np.ascontiguousarray(dst.vertices[dst.tets])
    tree = tet_tree(coords)
    n = src.n_vertices
    _, tids, w = project_points_tets(
        np.ascontiguousarray(src.vertices), *tree_args(tree), coords,
        np.full(n, np.inf), np.full(n, -1, dtype=np.int64), np.zeros((n, 4)),
    )
    return BarycentricMap(tids, w)


# -- half steps ---------------------------------------------------------------------


def p_step(pobj: PairObjective, pair: MapPair, weights: ObjectiveWeights,
           hard_boundary=False) -> MapPair:
    """Exact row-wise update of both barycentric tables (X untouched).

    Each source vertex's row minimizes the stacked 6D distance combining
    the coupling and round-trip terms; the current row seeds the search and
    is only replaced by strictly better candidates, so no row's objective
    contribution ever increases.
    """
    new12 = _p_step_direction(
        pobj.d1, pobj.d2, pair.x12, pair.x21, pair.p12, weights, hard_boundary
    )
    new21 = _p_step_direction(
        pobj.d2, pobj.d1, pair.x21, pair.x12, pair.p21, weights, hard_boundary
    )
    return MapPair(new12, new21, pair.x12.copy(), pair.x21.copy())


def _p_step_direction(d_fwd, d_rev, x_fwd, x_rev, p_cur, weights, hard_boundary):
    w_q = np.sqrt(weights.beta * d_fwd.q_coef)
    w_r = np.sqrt((1.0 - weights.alpha) * d_rev.r_coef)
    dst = d_fwd.dst
    queries = np.ascontiguousarray(
        np.concatenate([w_q * x_fwd, w_r * d_fwd.src.vertices], axis=1)
    )
    stacked = np.concatenate([w_q * dst.vertices, w_r * x_rev], axis=1)
    tet_coords = np.ascontiguousarray(stacked[dst.tets])
    tree = tet_tree(tet_coords)
    cur_corners = tet_coords[p_cur.tet_ids]
    cur_pts = np.einsum("nl,nld->nd", p_cur.weights, cur_corners)
    seed_d2 = np.sum((queries - cur_pts) ** 2, axis=1)
    _, tids, w = project_points_tets(
        queries, *tree_args(tree), tet_coords,
        seed_d2, p_cur.tet_ids.copy(), p_cur.weights.copy(),
    )
    if hard_boundary and len(dst.boundary_faces):
        bv = d_fwd.src.boundary_vertices
        tri6 = stacked[dst.boundary_faces]
        # A triangle is searched as a degenerate 4-point simplex (first
        # corner repeated); the duplicate's weight folds back onto it.
        tri_as_tet = np.ascontiguousarray(
            np.concatenate([tri6, tri6[:, :1]], axis=1)
        )
        ttree = tet_tree(tri_as_tet)
        nb = len(bv)
        _, fid, w4 = project_points_tets(
            np.ascontiguousarray(queries[bv]), *tree_args(ttree), tri_as_tet,
            np.full(nb, np.inf), np.full(nb, -1, dtype=np.int64), np.zeros((nb, 4)),
        )
        tri_w = np.stack([w4[:, 0] + w4[:, 3], w4[:, 1], w4[:, 2]], axis=1)
        own_tets = dst.boundary_face_tets[fid]
        slots = dst.tets[own_tets][:, :, None] == dst.boundary_faces[fid][:, None, :]
        tids[bv] = own_tets
        w[bv] = np.einsum("nlk,nk->nl", slots.astype(np.float64), tri_w)
    return BarycentricMap(tids, w)


def x_step(pobj: PairObjective, pair: MapPair, weights: ObjectiveWeights,
           config: SolverConfig):
    """Per-direction L-BFGS on the vertex images (barycentric tables untouched).

    Returns (updated pair, {direction: LbfgsResult}). The two directions
    are independent subproblems solved from the same snapshot.
    """
    results = {}
    new_x = {}
    for k, x, p_fwd, p_rev in (
        (1, pair.x12, pair.p12, pair.p21),
        (2, pair.x21, pair.p21, pair.p12),
    ):
        dirobj = pobj.direction(k)

        def fun(xc, dirobj=dirobj, p_fwd=p_fwd, p_rev=p_rev):
            v, g, _ = dirobj.bundle(xc, p_fwd, p_rev, weights)
            return v, g

        res = minimize_lbfgs(
            fun, x, grad_tol=config.grad_tol,
            max_iters=config.lbfgs_max_iters, memory=config.lbfgs_memory,
        )
        results[k] = res
        new_x[k] = res.x
    updated = MapPair(pair.p12.copy(), pair.p21.copy(), new_x[1], new_x[2])
    return updated, results


def repair_inverted(pobj: PairObjective, pair: MapPair, config: SolverConfig,
                    include_ring=True, budget=None):
    """Distortion-only cleanup around inverted tets, per direction.

    Frees the vertices of inverted tets (plus their 1-ring when
    ``include_ring``) and minimizes the distortion term over all tets
    touching the freed set, everything else fixed. No-op when no tet is
    inverted.
    """
    budget = config.lbfgs_max_iters if budget is None else budget
    xs = {}
    info = []
    for k, x in ((1, pair.x12), (2, pair.x21)):
        dirobj = pobj.direction(k)
        x_new, stats = _repair_direction(dirobj, x, budget, include_ring, config)
        xs[k] = x_new
        stats["direction"] = k
        info.append(stats)
    return MapPair(pair.p12.copy(), pair.p21.copy(), xs[1], xs[2]), info


def _repair_direction(dirobj, x, budget, include_ring, config):
    src = dirobj.src
    dets = np.linalg.det(jacobians(src, x, dirobj.inv_rest))
    inverted = np.flatnonzero(dets <= 0.0)
    if len(inverted) == 0:
        return x.copy(), {"n_inverted_before": 0, "n_inverted_after": 0,
                          "n_free_vertices": 0}
    verts = np.unique(src.tets[inverted])
    free = src.vertex_ring(verts) if include_ring else verts
    touched = src.tets_touching(free)
    work = x.copy()

    def fun(xf):
        work[free] = xf
        g = np.zeros_like(work)
        v = dirobj.distortion(work, g, 1.0, tet_ids=touched)
        return v, g[free]

    res = minimize_lbfgs(
        fun, x[free], grad_tol=config.grad_tol, max_iters=budget,
        memory=config.lbfgs_memory,
    )
    x_new = x.copy()
    x_new[free] = res.x
    after = int(np.count_nonzero(
        np.linalg.det(jacobians(src, x_new, dirobj.inv_rest)) <= 0.0
    ))
    return x_new, {"n_inverted_before": int(len(inverted)),
                   "n_inverted_after": after, "n_free_vertices": int(len(free))}


# -- full pipeline ------------------------------------------------------------------


def _restore_boundary_rows(pair: MapPair, saved):
    (bv1, t1, w1), (bv2, t2, w2) = saved
    pair.p12.tet_ids[bv1] = t1
    pair.p12.weights[bv1] = w1
    pair.p21.tet_ids[bv2] = t2
    pair.p21.weights[bv2] = w2


def _alternate(stage, pobj, pair, config, restore, saved_rows, history):
    """One alternation stage; returns (pair, iterations, stop reason)."""
    prev_beta = None
    prev_total = None
    reason = "max_outer_iters"
    it = 0
    for it in range(config.max_outer_iters):
        weights = config.weights_at(it)
        bd = pobj.breakdown(pair, weights)
        _require_finite(bd, stage, it)
        history.append(_record(stage, it, "iter_start", weights.beta, bd))

        cand = p_step(pobj, pair, weights, config.hard_boundary)
        bd_p = pobj.breakdown(cand, weights)
        accepted = bool(bd_p.total <= bd.total)
        if accepted:
            pair = cand
        else:
            bd_p = bd
        _require_finite(bd_p, stage, it)
        history.append(_record(stage, it, "p_step", weights.beta, bd_p,
                               accepted=accepted))

        cand, results = x_step(pobj, pair, weights, config)
        bd_x = pobj.breakdown(cand, weights)
        accepted = bool(bd_x.total <= bd_p.total)
        if accepted:
            pair = cand
        else:
            bd_x = bd_p
        _require_finite(bd_x, stage, it)
        g1 = float(np.sum(results[1].grad ** 2))
        g2 = float(np.sum(results[2].grad ** 2))
        grad_norm = float(np.sqrt(g1 + g2))
        history.append(_record(
            stage, it, "x_step", weights.beta, bd_x, accepted=accepted,
            grad_norm=grad_norm,
            lbfgs_status=[results[1].status, results[2].status],
            lbfgs_iters=[results[1].n_iters, results[2].n_iters],
        ))

        if restore:
            _restore_boundary_rows(pair, saved_rows)
            bd_r = pobj.breakdown(pair, weights)
            _require_finite(bd_r, stage, it)
            history.append(_record(stage, it, "restore_boundary", weights.beta, bd_r))

        if grad_norm < config.grad_tol:
            reason = "grad_tol"
            break
        if (
            prev_beta is not None
            and weights.beta == prev_beta
            and prev_total - bd_x.total < config.obj_decrease_tol
        ):
            reason = "obj_decrease_tol"
            break
        prev_beta = weights.beta
        prev_total = bd_x.total
    return pair, it + 1, reason


def solve(m1: TetMesh, m2: TetMesh, init: MapPair, config: SolverConfig = None):
    """Run the full staged pipeline; returns (MapPair, SolveReport).

    Both meshes must be normalized to unit volume (see TetMesh.normalized).
    The solver energy must stay finite on collapsed elements; catalog
    entries with a singularity at zero are rejected because initial maps
    routinely collapse tets.
    """
    t_start = time.perf_counter()
    config = SolverConfig() if config is None else config
    check_unit_volume(m1, name="first mesh")
    check_unit_volume(m2, name="second mesh")
    energy = get_energy(config.energy)
    if not energy.nonsingular:
        eligible = [n for n in ENERGY_NAMES if get_energy(n).nonsingular]
        raise ValueError(
            f"energy '{config.energy}' diverges on collapsed tets; "
            f"the solver accepts {eligible}"
        )
    init.p12.validate(m1.n_vertices, m2)
    init.p21.validate(m2.n_vertices, m1)
    if init.x12.shape != (m1.n_vertices, 3) or init.x21.shape != (m2.n_vertices, 3):
        raise ValueError("vertex-image arrays have the wrong shape")

    pobj = PairObjective(m1, m2, energy)
    pair = init.copy()
    history = []
    markers = []
    saved_rows = (
        (m1.boundary_vertices,
         init.p12.tet_ids[m1.boundary_vertices].copy(),
         init.p12.weights[m1.boundary_vertices].copy()),
        (m2.boundary_vertices,
         init.p21.tet_ids[m2.boundary_vertices].copy(),
         init.p21.weights[m2.boundary_vertices].copy()),
    )

    bd0 = pobj.breakdown(pair, config.weights_at(0))
    _require_finite(bd0, "init", 0)
    history.append(_record("init", 0, "init", config.beta_at(0), bd0))

    def mark(stage, first, reason=None, iterations=None, extra=None):
        m = {"stage": stage, "first_record": first,
             "last_record": len(history) - 1}
        if reason is not None:
            m["stopped_by"] = reason
        if iterations is not None:
            m["iterations"] = iterations
        if extra:
            m.update(extra)
        markers.append(m)

    if config.stages.boundary_fixed:
        first = len(history)
        pair, iters, reason = _alternate(
            STAGE_BOUNDARY_FIXED, pobj, pair, config, True, saved_rows, history
        )
        mark(STAGE_BOUNDARY_FIXED, first, reason, iters)

    if config.stages.repair:
        first = len(history)
        pair, info = repair_inverted(pobj, pair, config, include_ring=True)
        weights = config.weights_at(config.max_outer_iters)
        bd = pobj.breakdown(pair, weights)
        _require_finite(bd, STAGE_REPAIR, 0)
        history.append(_record(STAGE_REPAIR, 0, "repair", weights.beta, bd,
                               repairs=info))
        mark(STAGE_REPAIR, first, extra={"repairs": info})

    if config.stages.free:
        first = len(history)
        pair, iters, reason = _alternate(
            STAGE_FREE, pobj, pair, config, False, saved_rows, history
        )
        mark(STAGE_FREE, first, reason, iters)

    if config.stages.post_repair:
        first = len(history)
        pair, info = repair_inverted(
            pobj, pair, config, include_ring=False,
            budget=config.repair_lbfgs_steps,
        )
        weights = config.weights_at(config.max_outer_iters)
        bd = pobj.breakdown(pair, weights)
        _require_finite(bd, STAGE_POST_REPAIR, 0)
        history.append(_record(STAGE_POST_REPAIR, 0, "repair", weights.beta, bd,
                               repairs=info))
        mark(STAGE_POST_REPAIR, first, extra={"repairs": info})

    final_weights = config.weights_at(config.max_outer_iters)
    bd_final = pobj.breakdown(pair, final_weights)
    metrics12 = compute_map_metrics(m1, m2, pair.x12, bd_final.e_arap, bd_final.e_r)
    metrics21 = compute_map_metrics(m2, m1, pair.x21, bd_final.e_arap, bd_final.e_r)
    final = {
        "breakdown": bd_final.to_dict(),
        "metrics": {"d12": metrics12.to_dict(), "d21": metrics21.to_dict()},
    }
    report = SolveReport(
        history=history,
        stage_markers=markers,
        final=final,
        config=asdict(config),
        wall_time_s=time.perf_counter() - t_start,
    )
    return pair, report

import numpy as np
import pytest

from tetcorr.mapping import count_inversions, identity_init
from tetcorr.objective import PairObjective
from tetcorr.solver import (SolverConfig, StageToggles, closest_point_init,
                            p_step, repair_inverted, solve, x_step)
from tetcorr.synthetic import box_mesh

FAST = dict(max_outer_iters=4, lbfgs_max_iters=40, beta_ramp_iters=2)


def perturbed_pair(m1, m2, scale=0.05, seed=8):
    rng = np.random.default_rng(seed)
    pair = closest_point_init(m1, m2)
    pair.x12 += scale * rng.normal(size=pair.x12.shape)
    pair.x21 += scale * rng.normal(size=pair.x21.shape)
    return pair


def test_config_validation_and_beta_ramp():
    cfg = SolverConfig()
    assert cfg.beta_at(0) == cfg.beta_start
    assert cfg.beta_at(cfg.beta_ramp_iters) == cfg.beta_end
    assert cfg.beta_at(10 * cfg.beta_ramp_iters) == cfg.beta_end
    mid = cfg.beta_at(cfg.beta_ramp_iters // 2)
    assert cfg.beta_start < mid < cfg.beta_end
    assert SolverConfig(beta_ramp_iters=0).beta_at(0) == 5.0
    w = cfg.weights_at(3)
    assert w.alpha == cfg.alpha and w.gamma == cfg.gamma
    for bad in (dict(alpha=1.5), dict(gamma=-1.0), dict(beta_start=-0.1),
                dict(grad_tol=0.0), dict(energy="nope")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_p_step_never_increases_objective(small_pair):
    m1, m2 = small_pair
    pair = perturbed_pair(m1, m2)
    pobj = PairObjective(m1, m2)
    w = SolverConfig().weights_at(0)
    before = pobj.breakdown(pair, w)
    after_pair = p_step(pobj, pair, w)
    after = pobj.breakdown(after_pair, w)
    assert after.total <= before.total
    # the coupling and round-trip parts are what the row updates minimize
    assert (w.beta * after.e_q + (1 - w.alpha) * after.e_r
            <= w.beta * before.e_q + (1 - w.alpha) * before.e_r + 1e-15)
    np.testing.assert_array_equal(after_pair.x12, pair.x12)
    np.testing.assert_array_equal(after_pair.x21, pair.x21)


def test_p_step_idempotent(small_pair):
    m1, m2 = small_pair
    pair = perturbed_pair(m1, m2, seed=9)
    pobj = PairObjective(m1, m2)
    w = SolverConfig().weights_at(0)
    once = p_step(pobj, pair, w)
    twice = p_step(pobj, once, w)
    np.testing.assert_array_equal(once.p12.tet_ids, twice.p12.tet_ids)
    np.testing.assert_allclose(once.p12.weights, twice.p12.weights, atol=1e-12)


def test_x_step_descends_both_directions(small_pair):
    m1, m2 = small_pair
    pair = perturbed_pair(m1, m2, seed=10)
    pobj = PairObjective(m1, m2)
    cfg = SolverConfig(**FAST)
    w = cfg.weights_at(0)
    before = pobj.breakdown(pair, w)
    updated, results = x_step(pobj, pair, w, cfg)
    after = pobj.breakdown(updated, w)
    assert after.total < before.total
    assert set(results) == {1, 2}
    for res in results.values():
        assert res.status in ("grad_tol", "step_tol", "max_iters")
    np.testing.assert_array_equal(updated.p12.weights, pair.p12.weights)


def test_repair_uninverts_displaced_vertex():
    mesh = box_mesh(3, 3, 3).normalized()
    pair = identity_init(mesh)
    interior = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_vertices)
    v = int(interior[0])
    x = pair.x12.copy()
    x[v] = mesh.vertices.max(axis=0) + 0.5  # far outside: inverts incident tets
    pair.x12 = x
    assert count_inversions(mesh, pair.x12) > 0
    fixed, info = repair_inverted(PairObjective(mesh, mesh), pair, SolverConfig())
    by_dir = {s["direction"]: s for s in info}
    assert by_dir[1]["n_inverted_before"] > 0
    assert by_dir[1]["n_inverted_after"] == 0
    assert by_dir[1]["n_free_vertices"] > 0
    assert count_inversions(mesh, fixed.x12) == 0
    # the untouched direction reports a no-op
    assert by_dir[2]["n_inverted_before"] == 0
    np.testing.assert_array_equal(fixed.x21, pair.x21)
    # vertices outside the freed neighborhood never move
    ring = mesh.vertex_ring(np.unique(mesh.tets[
        np.flatnonzero(np.linalg.det(
            np.linalg.inv(
                (mesh.vertices[mesh.tets][:, 1:] - mesh.vertices[mesh.tets][:, :1])
            ) @ (x[mesh.tets][:, 1:] - x[mesh.tets][:, :1])
        ) <= 0)]))
    outside = np.setdiff1d(np.arange(mesh.n_vertices), ring)
    np.testing.assert_array_equal(fixed.x12[outside], pair.x12[outside])


def test_solve_requires_unit_volume():
    m = box_mesh(2, 2, 2)  # volume 1 only after normalized()
    big = box_mesh(2, 2, 2, size=(2.0, 1.0, 1.0))
    with pytest.raises(ValueError, match="unit volume"):
        solve(big, m.normalized(), identity_init(big))


def test_solve_rejects_singular_energies(small_pair):
    m1, m2 = small_pair
    with pytest.raises(ValueError, match="diverges on collapsed"):
        solve(m1, m2, closest_point_init(m1, m2),
              SolverConfig(energy="mips", **FAST))


def test_solve_identity_pair_is_fixed_point():
    mesh = box_mesh(2, 2, 2).normalized()
    pair, report = solve(mesh, mesh, identity_init(mesh),
                         SolverConfig(**FAST))
    np.testing.assert_allclose(pair.x12, mesh.vertices, atol=1e-9)
    assert report.final["breakdown"]["total"] < 1e-18
    assert report.final["metrics"]["d12"]["d_avg_hat"] < 1e-9
    assert report.final["metrics"]["d12"]["n_inv"] == 0
    assert report.history[0]["event"] == "init"
    assert report.history[0]["total"] < 1e-18


def test_solve_report_structure(small_pair):
    m1, m2 = small_pair
    pair, report = solve(m1, m2, closest_point_init(m1, m2),
                         SolverConfig(**FAST))
    assert report.wall_time_s > 0.0
    assert "wall_time_s" not in report.to_dict()
    stages = {r["stage"] for r in report.history}
    assert stages == {"init", "boundary-fixed", "repair", "free", "post-repair"}
    for rec in report.history:
        assert {"stage", "iteration", "event", "beta", "e_arap", "e_r",
                "e_q", "e_p", "total"} <= set(rec)
    x_steps = [r for r in report.history if r["event"] == "x_step"]
    assert x_steps and all(
        len(r["lbfgs_status"]) == 2 and len(r["lbfgs_iters"]) == 2
        for r in x_steps
    )
    marker_stages = [m["stage"] for m in report.stage_markers]
    assert marker_stages == ["boundary-fixed", "repair", "free", "post-repair"]
    for m in report.stage_markers:
        assert 0 < m["first_record"] <= m["last_record"] < len(report.history)
    assert report.config["alpha"] == 0.5
    # the solution improves on the initialization
    assert report.final["breakdown"]["total"] <= report.history[0]["total"]


def test_solve_stage_toggles(small_pair):
    m1, m2 = small_pair
    cfg = SolverConfig(stages=StageToggles(repair=False, free=False,
                                           post_repair=False), **FAST)
    init = closest_point_init(m1, m2)
    pair, report = solve(m1, m2, init, cfg)
    stages = {r["stage"] for r in report.history}
    assert stages == {"init", "boundary-fixed"}
    assert [m["stage"] for m in report.stage_markers] == ["boundary-fixed"]
    # boundary rows of both tables end exactly at their initial values
    bv1 = m1.boundary_vertices
    np.testing.assert_array_equal(pair.p12.tet_ids[bv1], init.p12.tet_ids[bv1])
    np.testing.assert_array_equal(pair.p12.weights[bv1], init.p12.weights[bv1])
    bv2 = m2.boundary_vertices
    np.testing.assert_array_equal(pair.p21.tet_ids[bv2], init.p21.tet_ids[bv2])
    np.testing.assert_array_equal(pair.p21.weights[bv2], init.p21.weights[bv2])


def test_solve_hard_boundary_rows_stay_on_surface(small_pair):
    m1, m2 = small_pair
    cfg = SolverConfig(hard_boundary=True, **FAST)
    pair, _ = solve(m1, m2, closest_point_init(m1, m2), cfg)
    # every boundary vertex's row must name a boundary tet of the target and
    # place its point on the target surface
    from tetcorr.metrics import point_mesh_distances, surface_arrays

    _, tris2 = surface_arrays(m2)
    pts = pair.p12.apply(m2)[m1.boundary_vertices]
    d = point_mesh_distances(pts, tris2)
    assert np.max(d) < 1e-9


def test_closest_point_init_projects_onto_volume(small_pair):
    m1, m2 = small_pair
    pair = closest_point_init(m1, m2)
    pair.p12.validate(m1.n_vertices, m2)
    pair.p21.validate(m2.n_vertices, m1)
    # interior-overlapping vertices project to themselves
    inside = np.all(
        (m1.vertices > m2.vertices.min(axis=0) + 0.05)
        & (m1.vertices < m2.vertices.max(axis=0) - 0.05), axis=1,
    )
    if np.any(inside):
        np.testing.assert_allclose(pair.x12[inside], m1.vertices[inside],
                                   atol=1e-9)

import numpy as np
import pytest

from tetcorr.estimator import VolumeMapper
from tetcorr.metrics import MapMetrics
from tetcorr.solver import SolveReport
from tetcorr.synthetic import box_mesh

FAST = dict(max_outer_iters=4, lbfgs_max_iters=40, beta_ramp_iters=2)


@pytest.fixture(scope="module")
def fitted():
    src = box_mesh(3, 3, 3, size=(1.0, 1.0, 1.0))
    dst = box_mesh(3, 3, 3, size=(1.3, 0.9, 1.1))
    return (
        VolumeMapper(**FAST).fit(src, dst),
        src,
        dst,
    )


def test_params_round_trip():
    vm = VolumeMapper(alpha=0.3, gamma=10.0)
    params = vm.get_params()
    assert params["alpha"] == 0.3 and params["gamma"] == 10.0
    assert params["energy"] == "arap"
    vm.set_params(alpha=0.7, energy="dirichlet")
    assert vm.alpha == 0.7 and vm.energy == "dirichlet"
    # constructor stores hyperparameters verbatim, no fitted state yet
    assert not hasattr(vm, "map_pair_")


def test_unfitted_transform_raises():
    with pytest.raises(RuntimeError, match="not been fitted"):
        VolumeMapper().transform(np.zeros((1, 3)))


def test_fit_sets_state(fitted):
    vm, src, dst = fitted
    assert vm.source_mesh_.n_vertices == src.n_vertices
    np.testing.assert_allclose(vm.source_mesh_.total_volume, 1.0, rtol=1e-12)
    np.testing.assert_allclose(vm.target_mesh_.total_volume, 1.0, rtol=1e-12)
    assert isinstance(vm.report_, SolveReport)
    assert vm.map_pair_.x12.shape == (src.n_vertices, 3)
    assert set(vm.metrics_) == {"d12", "d21"}
    assert isinstance(vm.metrics_["d12"], MapMetrics)
    assert vm.metrics_["d12"].n_inv >= 0
    assert np.isfinite(vm.metrics_["d21"].d_avg_hat)


def test_transform_round_trip(fitted):
    vm, src, dst = fitted
    lo, hi = src.vertices.min(axis=0), src.vertices.max(axis=0)
    rng = np.random.default_rng(1)
    pts = lo + (hi - lo) * rng.uniform(0.2, 0.8, size=(20, 3))
    mapped = vm.transform(pts)
    assert mapped.shape == pts.shape
    # images land inside (or on) the original target box
    assert np.all(mapped > dst.vertices.min(axis=0) - 1e-6)
    assert np.all(mapped < dst.vertices.max(axis=0) + 1e-6)
    back = vm.inverse_transform(mapped)
    # the two directions approximately invert each other away from the boundary
    assert np.max(np.linalg.norm(back - pts, axis=1)) < 0.25


def test_transform_warns_outside_points(fitted):
    vm, src, _ = fitted
    far = src.vertices.max(axis=0) + 5.0
    with pytest.warns(UserWarning, match="outside the source volume"):
        vm.transform(far[None, :])


def test_accepts_vertex_tet_tuples():
    src = box_mesh(2, 2, 2)
    dst = box_mesh(2, 2, 2, size=(1.1, 1.0, 0.95))
    vm = VolumeMapper(max_outer_iters=2, lbfgs_max_iters=20, beta_ramp_iters=1)
    vm.fit((src.vertices, src.tets), (dst.vertices, dst.tets))
    assert hasattr(vm, "map_pair_")
    with pytest.raises(TypeError, match="TetMesh or a"):
        vm.fit(src.vertices, dst)


def test_landmark_initialized_fit():
    src = box_mesh(2, 2, 2)
    dst = box_mesh(2, 2, 2, size=(1.2, 1.0, 0.9))
    lm = [
        (("tet", 0, np.eye(4)[0]), ("tet", 0, np.eye(4)[0])),
        (("tet", src.n_tets - 1, np.eye(4)[1]),
         ("tet", dst.n_tets - 1, np.eye(4)[1])),
    ]
    vm = VolumeMapper(max_outer_iters=2, lbfgs_max_iters=20, beta_ramp_iters=1)
    vm.fit(src, dst, landmarks=lm)
    assert vm.report_.final["metrics"]["d12"]["d_avg_hat"] < 0.5


def test_disable_repair_stages():
    src = box_mesh(2, 2, 2)
    dst = box_mesh(2, 2, 2, size=(1.1, 0.9, 1.0))
    vm = VolumeMapper(enable_repair=False, max_outer_iters=2,
                      lbfgs_max_iters=20, beta_ramp_iters=1)
    vm.fit(src, dst)
    stages = {m["stage"] for m in vm.report_.stage_markers}
    assert stages == {"boundary-fixed", "free"}

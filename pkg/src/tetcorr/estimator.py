"""Estimator-style facade over the correspondence pipeline.

VolumeMapper wraps mesh normalization, initialization, solving, and
push-forward behind a fit/transform interface with sklearn parameter
semantics (constructor stores hyperparameters verbatim; fitted state lives
in trailing-underscore attributes).
"""

import warnings

import numpy as np
from sklearn.base import BaseEstimator

from .mapping import init_from_landmarks, init_from_surface_map
from .mesh import TetMesh
from .metrics import compute_map_metrics
from .solver import SolverConfig, StageToggles, closest_point_init, solve
from .transfer import EmbeddedGeometry, push_forward
from .validation import check_points


def _as_mesh(obj, name):
    if isinstance(obj, TetMesh):
        return obj
    if isinstance(obj, (tuple, list)) and len(obj) == 2:
        return TetMesh(obj[0], obj[1])
    raise TypeError(f"{name} must be a TetMesh or a (vertices, tets) pair")


class VolumeMapper(BaseEstimator):
    """Symmetric volumetric correspondence between two tet meshes.

    fit() computes a map pair between copies of the inputs normalized to
    unit volume; transform()/inverse_transform() move points between the
    original (unnormalized) spaces.

    Parameters mirror the solver configuration; see SolverConfig.
    """

    def __init__(self, energy="arap", alpha=0.5, gamma=25.0, beta_start=0.25,
                 beta_end=5.0, beta_ramp_iters=20, max_outer_iters=50,
                 grad_tol=1e-6, obj_decrease_tol=1e-7, lbfgs_memory=10,
                 lbfgs_max_iters=200, repair_lbfgs_steps=100,
                 hard_boundary=False, enable_repair=True):
        self.energy = energy
        self.alpha = alpha
        self.gamma = gamma
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.beta_ramp_iters = beta_ramp_iters
        self.max_outer_iters = max_outer_iters
        self.grad_tol = grad_tol
        self.obj_decrease_tol = obj_decrease_tol
        self.lbfgs_memory = lbfgs_memory
        self.lbfgs_max_iters = lbfgs_max_iters
        self.repair_lbfgs_steps = repair_lbfgs_steps
        self.hard_boundary = hard_boundary
        self.enable_repair = enable_repair

    def _config(self):
        return SolverConfig(
            energy=self.energy,
            alpha=self.alpha,
            gamma=self.gamma,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
            beta_ramp_iters=self.beta_ramp_iters,
            max_outer_iters=self.max_outer_iters,
            grad_tol=self.grad_tol,
            obj_decrease_tol=self.obj_decrease_tol,
            lbfgs_memory=self.lbfgs_memory,
            lbfgs_max_iters=self.lbfgs_max_iters,
            repair_lbfgs_steps=self.repair_lbfgs_steps,
            hard_boundary=self.hard_boundary,
            stages=StageToggles(
                repair=self.enable_repair, post_repair=self.enable_repair
            ),
        )

    def fit(self, source, target, landmarks=None, surface_map=None, init=None):
        """Compute the correspondence between source and target meshes.

        ``landmarks`` is a list of ((kind, index, bary), (kind, index,
        bary)) pairs, ``surface_map`` a {1: entries, 2: entries} boundary
        vertex map (both index-based, so unaffected by normalization), and
        ``init`` an explicit MapPair overriding both.
        """
        src_raw = _as_mesh(source, "source")
        dst_raw = _as_mesh(target, "target")
        self.scale_source_ = src_raw.total_volume ** (-1.0 / 3.0)
        self.scale_target_ = dst_raw.total_volume ** (-1.0 / 3.0)
        self.source_mesh_ = src_raw.normalized()
        self.target_mesh_ = dst_raw.normalized()
        if init is not None:
            pair0 = init
        elif landmarks is not None:
            pair0 = init_from_landmarks(self.source_mesh_, self.target_mesh_, landmarks)
        elif surface_map is not None:
            pair0 = init_from_surface_map(self.source_mesh_, self.target_mesh_, surface_map)
        else:
            pair0 = closest_point_init(self.source_mesh_, self.target_mesh_)
        self.map_pair_, self.report_ = solve(
            self.source_mesh_, self.target_mesh_, pair0, self._config()
        )
        bd = self.report_.final["breakdown"]
        self.metrics_ = {
            "d12": compute_map_metrics(
                self.source_mesh_, self.target_mesh_, self.map_pair_.x12,
                bd["e_arap"], bd["e_r"],
            ),
            "d21": compute_map_metrics(
                self.target_mesh_, self.source_mesh_, self.map_pair_.x21,
                bd["e_arap"], bd["e_r"],
            ),
        }
        return self

    def _check_fitted(self):
        if not hasattr(self, "map_pair_"):
            raise RuntimeError("this VolumeMapper has not been fitted yet")

    def _move(self, points, mesh, X, scale_in, scale_out):
        pts = check_points(points) * scale_in
        out, skipped = push_forward(EmbeddedGeometry("points", pts), mesh, X)
        if len(skipped):
            warnings.warn(
                f"{len(skipped)} points lie outside the source volume beyond "
                "tolerance and were transported from their nearest boundary point"
            )
        return out.points / scale_out

    def transform(self, points):
        """Map points from source space into target space."""
        self._check_fitted()
        return self._move(points, self.source_mesh_, self.map_pair_.x12,
                          self.scale_source_, self.scale_target_)

    def inverse_transform(self, points):
        """Map points from target space back into source space."""
        self._check_fitted()
        return self._move(points, self.target_mesh_, self.map_pair_.x21,
                          self.scale_target_, self.scale_source_)

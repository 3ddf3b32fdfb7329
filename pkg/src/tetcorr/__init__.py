"""Symmetric volumetric correspondence between tetrahedral meshes.

The package alternates closed-form barycentric projection steps with
quasi-Newton relaxation of a symmetrized distortion objective to produce a
pair of mutually consistent volumetric maps, and ships an analysis toolkit
for the rotation-invariant distortion energies driving the optimization.
"""

from .energies import (ENERGY_NAMES, DistortionEnergy, analyze_all, catalog,
                       check_symmetry_condition, classify_energy, fsym,
                       get_energy, minimize_fsym, signed_svd)
from .estimator import VolumeMapper
from .lbfgs import LbfgsResult, minimize_lbfgs
from .mapping import (BarycentricMap, MapPair, count_inversions,
                      identity_init, init_from_landmarks,
                      init_from_surface_map, jacobians)
from .mesh import TetMesh
from .metrics import (MapMetrics, chamfer_hausdorff, compute_map_metrics,
                      normalized_jacobian_det, per_tet_distortion,
                      volume_weighted_mean_det)
from .objective import (EnergyBreakdown, FrozenFeet, ObjectiveWeights,
                        PairObjective)
from .solver import (SolveReport, SolverConfig, StageToggles,
                     closest_point_init, solve)
from .synthetic import bent_box_mesh, box_mesh
from .transfer import (EmbeddedGeometry, locate_points, pull_back_field,
                       push_forward)

__version__ = "0.1.0"

__all__ = [
    "BarycentricMap",
    "DistortionEnergy",
    "ENERGY_NAMES",
    "EmbeddedGeometry",
    "EnergyBreakdown",
    "FrozenFeet",
    "LbfgsResult",
    "MapMetrics",
    "MapPair",
    "ObjectiveWeights",
    "PairObjective",
    "SolveReport",
    "SolverConfig",
    "StageToggles",
    "TetMesh",
    "VolumeMapper",
    "analyze_all",
    "bent_box_mesh",
    "box_mesh",
    "catalog",
    "chamfer_hausdorff",
    "check_symmetry_condition",
    "classify_energy",
    "closest_point_init",
    "compute_map_metrics",
    "count_inversions",
    "fsym",
    "get_energy",
    "identity_init",
    "init_from_landmarks",
    "init_from_surface_map",
    "jacobians",
    "locate_points",
    "minimize_fsym",
    "minimize_lbfgs",
    "normalized_jacobian_det",
    "per_tet_distortion",
    "pull_back_field",
    "push_forward",
    "signed_svd",
    "solve",
    "volume_weighted_mean_det",
]

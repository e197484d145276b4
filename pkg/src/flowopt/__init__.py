"""Runtime-optimized 3D scene flow estimation for point cloud pairs.

Estimates a per-point motion field between two clouds by descending a
soft-correspondence fit objective with an adaptive search radius, a local
rigidity prior, and a jointly estimated sensor motion. No training, no
labels: every pair is solved from scratch (or warm-started from the previous
frame in sequence mode).

Typical use::

    from flowopt import Hyperparams, optimize_pair
    est = optimize_pair(source, target, Hyperparams())
    est.flow      # residual per-point motion after sensor-motion compensation
    est.motion    # sensor motion (rotation vector, translation)
"""

from .core import (AllDegenerate, DegenerateProblem, Diagnostics, EmptyCloud,
                   FlowField, FlowOptError, Hyperparams, InvalidConfig,
                   InvalidHyperparam, LengthMismatch, NonFiniteCoordinate,
                   NonFiniteGradient, PointCloud, PROFILES, Problem,
                   RigidMotion, profile, validate_problem)
from .correspondence import (SoftCorrespondenceSet, build_soft_correspondences,
                             corr_weight, similarity, threshold_at)
from .egomotion import (apply_rigid, icp_register, rodrigues,
                        rotation_angle_between, rotation_jacobian)
from .knn import SpatialIndex, brute_force_knn, build_index, query_knn
from .metrics import (MetricsReport, acc_relax, acc_strict, accuracy,
                      angle_error, classify_dynamic, epe, eped, evaluate_flow,
                      outlier_frac)
from .objective import ObjectiveEvaluation, evaluate_objective
from .optimizer import (AdamState, FlowEstimate, adam_step, optimize_batched,
                        optimize_pair, optimize_sequence)
from .rigidity import (RigidityGraph, build_rigidity_graph, rigidity_energy,
                       rigidity_gradient)
from .synth import (PRESETS, SceneConfig, SyntheticScene, SyntheticSequence,
                    gen_scene, gen_sequence, preset, total_flow)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AllDegenerate", "DegenerateProblem", "Diagnostics",
    "EmptyCloud", "FlowEstimate", "FlowField", "FlowOptError", "Hyperparams",
    "InvalidConfig", "InvalidHyperparam", "LengthMismatch", "MetricsReport",
    "NonFiniteCoordinate", "NonFiniteGradient", "ObjectiveEvaluation",
    "PointCloud", "PROFILES", "PRESETS", "Problem", "RigidMotion",
    "RigidityGraph", "SceneConfig", "SoftCorrespondenceSet", "SpatialIndex",
    "SyntheticScene", "SyntheticSequence",
    "acc_relax", "acc_strict", "accuracy", "adam_step", "angle_error",
    "apply_rigid", "brute_force_knn", "build_index",
    "build_rigidity_graph", "build_soft_correspondences", "classify_dynamic",
    "corr_weight", "epe", "eped", "evaluate_flow", "evaluate_objective",
    "gen_scene", "gen_sequence", "icp_register", "optimize_batched",
    "optimize_pair", "optimize_sequence", "outlier_frac", "preset", "profile",
    "query_knn", "rigidity_energy", "rigidity_gradient", "rodrigues",
    "rotation_angle_between", "rotation_jacobian", "similarity",
    "threshold_at", "total_flow", "validate_problem",
]

"""Domain types, hyperparameter defaults, and shared validation.

All geometry is metric: point coordinates, flow vectors and translations are
in meters, rotation vectors in radians times a unit axis. Every container in
this module is immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray

FloatArray: TypeAlias = NDArray[np.float64]


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class FlowOptError(Exception):
    """Base class for all errors raised by this package."""


class EmptyCloud(FlowOptError):
    """A point cloud has fewer points than the operation requires."""


class NonFiniteCoordinate(FlowOptError):
    """A coordinate is NaN or infinite."""


class InvalidHyperparam(FlowOptError):
    """A hyperparameter violates its constraint; message names the field."""


class LengthMismatch(FlowOptError):
    """Two per-point sequences that must be paired have different lengths."""


class DegenerateProblem(FlowOptError):
    """No valid correspondence exists in any fit direction at the current
    distance threshold."""


class NonFiniteGradient(FlowOptError):
    """A gradient fed to the optimizer contains NaN or infinite entries."""


class AllDegenerate(FlowOptError):
    """Every vector pair was skipped by a metric's degeneracy rule."""


class InvalidConfig(FlowOptError):
    """A configuration value is outside its documented range."""


# ---------------------------------------------------------------------------
# Array coercion helpers
# ---------------------------------------------------------------------------

def _freeze(a: np.ndarray) -> FloatArray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def as_vectors(data, *, what: str) -> FloatArray:
    """Coerce to an (n, 3) float64 array, rejecting non-finite entries."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 1 and a.size == 3:
        a = a.reshape(1, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise FlowOptError(f"{what} must have shape (n, 3), got {a.shape}")
    if not np.isfinite(a).all():
        raise NonFiniteCoordinate(f"{what} contains NaN or Inf")
    return _freeze(a)


def as_vec3(data, *, what: str) -> FloatArray:
    a = np.asarray(data, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise FlowOptError(f"{what} must have 3 components, got {a.shape}")
    if not np.isfinite(a).all():
        raise NonFiniteCoordinate(f"{what} contains NaN or Inf")
    return _freeze(a)


# ---------------------------------------------------------------------------
# Geometry containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointCloud:
    """Ordered collection of 3D points; point index is identity."""

    points: FloatArray

    def __post_init__(self):
        pts = as_vectors(self.points, what="point cloud")
        if pts.shape[0] < 1:
            raise EmptyCloud("point cloud must contain at least one point")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FlowField:
    """Per-source-point 3D motion vectors, length-locked to its source cloud."""

    vectors: FloatArray

    def __post_init__(self):
        object.__setattr__(self, "vectors", as_vectors(self.vectors, what="flow field"))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @staticmethod
    def zeros(n: int) -> "FlowField":
        return FlowField(np.zeros((n, 3)))


@dataclass(frozen=True)
class RigidMotion:
    """SE(3) motion as a rotation vector (radians * axis) plus a translation."""

    r: FloatArray
    t: FloatArray

    def __post_init__(self):
        object.__setattr__(self, "r", as_vec3(self.r, what="rotation vector"))
        object.__setattr__(self, "t", as_vec3(self.t, what="translation vector"))

    @staticmethod
    def identity() -> "RigidMotion":
        return RigidMotion(np.zeros(3), np.zeros(3))


# ---------------------------------------------------------------------------
# Hyperparameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hyperparams:
    """Tuning knobs for one optimization run.

    Defaults correspond to the kitti profile; use :func:`profile` for the
    other named datasets. ``d_init``/``d_floor``/``halving_interval`` define
    the correspondence-radius schedule; ``epsilon`` is the weight temperature.
    """

    k_local: int = 15
    k_rigid: int = 50
    epsilon: float = 0.03
    alpha_rigid: float = 9.57
    d_init: float = 2.0
    d_floor: float = 0.2
    halving_interval: int = 100
    learning_rate: float = 4e-3
    max_iters: int = 600
    # Patience spans a full halving interval: stopping decisions should see
    # at least one threshold drop, or runs truncate mid-schedule.
    early_stop_patience: int = 150
    early_stop_rel_tol: float = 1e-4
    bidirectional: bool = True
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def positive_int(name):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise InvalidHyperparam(f"{name} must be a positive integer, got {v!r}")

        def positive_real(name):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InvalidHyperparam(f"{name} must be a positive finite real, got {v!r}")

        for name in ("k_local", "k_rigid", "halving_interval", "max_iters",
                     "early_stop_patience"):
            positive_int(name)
        for name in ("epsilon", "d_init", "d_floor", "learning_rate",
                     "early_stop_rel_tol"):
            positive_real(name)
        if not np.isfinite(self.alpha_rigid) or self.alpha_rigid < 0:
            raise InvalidHyperparam(
                f"alpha_rigid must be a nonnegative real, got {self.alpha_rigid!r}")
        if self.d_floor > self.d_init:
            raise InvalidHyperparam(
                f"d_floor ({self.d_floor}) must not exceed d_init ({self.d_init})")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidHyperparam(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.bidirectional, bool):
            raise InvalidHyperparam(
                f"bidirectional must be a boolean, got {self.bidirectional!r}")

    def with_overrides(self, **kwargs) -> "Hyperparams":
        return replace(self, **kwargs)


# Per-dataset (k_local, alpha_rigid); all other fields keep their defaults.
PROFILES: dict[str, dict[str, float | int]] = {
    "flyingthings3d": {"k_local": 12, "alpha_rigid": 14.2},
    "nuscenes": {"k_local": 20, "alpha_rigid": 19.6},
    "kitti": {"k_local": 15, "alpha_rigid": 9.57},
    "argoverse": {"k_local": 15, "alpha_rigid": 19.2},
}


def profile(name: str) -> Hyperparams:
    """Return the named dataset profile as a full Hyperparams instance."""
    try:
        overrides = PROFILES[name]
    except KeyError:
        raise InvalidHyperparam(
            f"unknown profile {name!r}; expected one of {sorted(PROFILES)}") from None
    return Hyperparams(**overrides)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    e_fit: float
    e_rigid: float
    e_obj: float
    d_thresh: float
    valid_count: int


@dataclass(frozen=True)
class Diagnostics:
    """Per-iteration trace of one optimization run."""

    records: tuple[IterationRecord, ...]
    wall_time: float
    stop_reason: str  # "max-iters" | "early-stop" | "degenerate"
    warnings: tuple[str, ...] = ()

    def loss_trace(self) -> FloatArray:
        return np.array([r.e_obj for r in self.records])

    def threshold_trace(self) -> FloatArray:
        return np.array([r.d_thresh for r in self.records])


# ---------------------------------------------------------------------------
# Problem validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """A validated (source, target, hyperparams) binding.

    Neighborhood sizes are clamped to what the clouds can supply, so the
    search operations downstream never ask for more neighbors than exist.
    """

    source: PointCloud
    target: PointCloud
    hp: Hyperparams
    warnings: tuple[str, ...] = ()


def validate_problem(source: PointCloud, target: PointCloud,
                     hp: Hyperparams) -> Problem:
    """Bind two clouds and hyperparameters after checking all invariants.

    ``k_local`` is clamped to the target size and ``k_rigid`` to the source
    size minus one (no self-edges); each clamp emits a warning on the result
    rather than rejecting the problem.
    """
    if not isinstance(source, PointCloud):
        source = PointCloud(source)
    if not isinstance(target, PointCloud):
        target = PointCloud(target)
    hp.validate()

    warnings: list[str] = []
    k_local = hp.k_local
    k_rigid = hp.k_rigid
    if k_local > len(target) - 1:
        k_local = max(len(target) - 1, 1)
        warnings.append(
            f"k_local clamped from {hp.k_local} to {k_local}: target has only "
            f"{len(target)} points")
    if k_rigid > len(source) - 1:
        k_rigid = max(len(source) - 1, 1)
        warnings.append(
            f"k_rigid clamped from {hp.k_rigid} to {k_rigid}: source has only "
            f"{len(source)} points")
    if (k_local, k_rigid) != (hp.k_local, hp.k_rigid):
        hp = hp.with_overrides(k_local=k_local, k_rigid=k_rigid)
    return Problem(source=source, target=target, hp=hp, warnings=tuple(warnings))

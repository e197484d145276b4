"""Scene-flow quality metrics and flow-based motion segmentation.

All metrics compare an estimated flow field against a ground-truth field of
the same length. Accuracy fractions accept a point when either its absolute
error or its error relative to the true flow magnitude clears the threshold,
so large motions are not penalized for proportionally small errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (AllDegenerate, FlowField, LengthMismatch, PointCloud,
                   RigidMotion)

_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class MetricsReport:
    epe: float
    acc_strict: float
    acc_relax: float
    angle_error: float
    outlier_frac: float
    n_points: int
    skipped_angle_pairs: int = 0

    def __post_init__(self):
        if not (0.0 <= self.acc_strict <= 1.0 and 0.0 <= self.acc_relax <= 1.0):
            raise ValueError("accuracy fractions must lie in [0, 1]")
        if self.acc_strict > self.acc_relax + 1e-12:
            raise ValueError("strict accuracy cannot exceed relaxed accuracy")


def _paired(est, gt) -> tuple[np.ndarray, np.ndarray]:
    a = est.vectors if isinstance(est, FlowField) else np.asarray(est, dtype=np.float64)
    b = gt.vectors if isinstance(gt, FlowField) else np.asarray(gt, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"flow shapes differ: {a.shape} vs {b.shape}")
    return a, b


def epe(est, gt) -> float:
    """End-point error: mean Euclidean distance between flow vectors."""
    a, b = _paired(est, gt)
    return float(np.linalg.norm(a - b, axis=1).mean())


def accuracy(est, gt, abs_thresh: float, rel_thresh: float) -> float:
    """Fraction of points under the absolute OR relative error threshold.

    Points with near-zero true flow fall back to the absolute test alone.
    """
    a, b = _paired(est, gt)
    err = np.linalg.norm(a - b, axis=1)
    gt_norm = np.linalg.norm(b, axis=1)
    ok = err < abs_thresh
    nonzero = gt_norm >= _ZERO_NORM
    ok |= nonzero & (err < rel_thresh * gt_norm)
    return float(ok.mean())


def acc_strict(est, gt) -> float:
    return accuracy(est, gt, 0.05, 0.05)


def acc_relax(est, gt) -> float:
    return accuracy(est, gt, 0.10, 0.10)


def angle_error(est, gt) -> tuple[float, int]:
    """Mean angle (radians) between estimated and true flow directions.

    Pairs where either vector is shorter than 1e-12 are skipped; returns
    (mean angle, skipped count). Raises AllDegenerate when nothing remains.
    """
    a, b = _paired(est, gt)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    usable = (na >= _ZERO_NORM) & (nb >= _ZERO_NORM)
    skipped = int((~usable).sum())
    if not usable.any():
        raise AllDegenerate("every flow pair has a near-zero vector")
    cosines = (a[usable] * b[usable]).sum(axis=1) / (na[usable] * nb[usable])
    angles = np.arccos(np.clip(cosines, -1.0, 1.0))
    return float(angles.mean()), skipped


def outlier_frac(est, gt, thresh: float = 0.3) -> float:
    """Fraction of points whose error is at least ``thresh`` (inclusive)."""
    a, b = _paired(est, gt)
    err = np.linalg.norm(a - b, axis=1)
    return float((err >= thresh).mean())


def eped(flow_full, flow_warm) -> float:
    """End-point difference between a full-length run and a warm short run."""
    return epe(flow_warm, flow_full)


def evaluate_flow(est, gt, outlier_thresh: float = 0.3) -> MetricsReport:
    """All metrics in one report; angle degeneracy shows up as skipped pairs."""
    a, b = _paired(est, gt)
    try:
        theta, skipped = angle_error(a, b)
    except AllDegenerate:
        theta, skipped = 0.0, a.shape[0]
    return MetricsReport(
        epe=epe(a, b),
        acc_strict=acc_strict(a, b),
        acc_relax=acc_relax(a, b),
        angle_error=theta,
        outlier_frac=outlier_frac(a, b, outlier_thresh),
        n_points=a.shape[0],
        skipped_angle_pairs=skipped,
    )


def classify_dynamic(flow: FlowField, motion: RigidMotion, source: PointCloud,
                     speed_thresh: float) -> np.ndarray:
    """Mark points whose residual motion after ego-compensation exceeds the
    threshold.

    The warp is R p + t + f and the ego-only prediction R p + t, so the
    residual is just the flow magnitude.
    """
    f = flow.vectors
    if len(flow) != len(source):
        raise LengthMismatch(
            f"flow length {len(flow)} != source length {len(source)}")
    return np.linalg.norm(f, axis=1) > speed_thresh

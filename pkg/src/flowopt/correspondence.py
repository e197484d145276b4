"""Soft correspondences between a query set and a target cloud.

Each query point is matched against the weighted average of its nearest
target neighbors inside the current distance threshold. The weight of a
neighbor at distance d is exp((exp(-d^2) - 1) / epsilon): 1 at d = 0 and
falling off sharply, with epsilon controlling how soft the average is. The
threshold itself halves on a fixed iteration schedule down to a floor, so
matching gets progressively stricter as the flow estimate improves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .knn import SpatialIndex, query_knn_batch


def similarity(d):
    """Similarity of a point pair at distance ``d`` (meters): exp(-d^2)."""
    d = np.asarray(d, dtype=np.float64)
    return np.exp(-(d * d))


def corr_weight(sim, epsilon: float):
    """Correlation weight from a similarity score: exp((sim - 1) / epsilon)."""
    sim = np.asarray(sim, dtype=np.float64)
    return np.exp((sim - 1.0) / epsilon)


def threshold_at(iteration: int, d_init: float, halving_interval: int,
                 d_floor: float) -> float:
    """Distance threshold in effect at a given iteration.

    Starts at ``d_init``, halves after every completed ``halving_interval``
    iterations, and never drops below ``d_floor``.
    """
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    halvings = iteration // halving_interval
    return max(d_init * 0.5 ** halvings, d_floor)


@dataclass(frozen=True)
class SoftCorrespondenceSet:
    """Per-query soft targets over (m, k)-padded neighbor arrays.

    ``indices`` uses -1 for missing neighbors, ``weights`` 0.0 in the same
    slots. ``valid`` marks queries with at least one retained neighbor and a
    positive weight sum; ``q_avg`` rows of invalid queries are zero, never
    NaN.
    """

    indices: np.ndarray    # (m, k) int64
    distances: np.ndarray  # (m, k) float64, +inf where missing
    weights: np.ndarray    # (m, k) float64, 0 where missing
    weight_sum: np.ndarray  # (m,)
    q_avg: np.ndarray      # (m, 3)
    valid: np.ndarray      # (m,) bool

    def __len__(self) -> int:
        return self.indices.shape[0]


def soft_targets(indices: np.ndarray, distances: np.ndarray,
                 target_points: np.ndarray, epsilon: float) -> SoftCorrespondenceSet:
    """Weighted-average targets for precomputed neighbor sets.

    Split out from :func:`build_soft_correspondences` so callers can hold the
    neighbor selection fixed while recomputing weights from moved points.
    """
    present = indices >= 0
    w = np.where(present, corr_weight(similarity(np.where(present, distances, 0.0)),
                                      epsilon), 0.0)
    wsum = w.sum(axis=1)
    valid = present.any(axis=1) & (wsum > 0.0)

    gathered = target_points[np.where(present, indices, 0)]  # (m, k, 3)
    num = (w[:, :, None] * gathered).sum(axis=1)
    q_avg = np.zeros_like(num)
    np.divide(num, wsum[:, None], out=q_avg, where=valid[:, None])

    return SoftCorrespondenceSet(indices=indices, distances=distances, weights=w,
                                 weight_sum=wsum, q_avg=q_avg, valid=valid)


def build_soft_correspondences(query_points: np.ndarray, target_index: SpatialIndex,
                               k_local: int, epsilon: float, d_thresh: float,
                               workers: int = 1) -> SoftCorrespondenceSet:
    """k-NN within ``d_thresh``, then soft targets per :func:`soft_targets`.

    Queries with no neighbor inside the threshold are flagged invalid; that
    is data, not an error.
    """
    if d_thresh <= 0:
        raise ValueError(f"d_thresh must be positive, got {d_thresh}")
    batch = query_knn_batch(target_index, query_points, k_local, max_dist=d_thresh,
                            workers=workers)
    return soft_targets(batch.indices, batch.distances, target_index.points, epsilon)

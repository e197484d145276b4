"""Exact k-nearest-neighbor search with an optional radius cap.

A k-d tree (scipy's cKDTree) generates candidates, but distances are always
recomputed with the same numpy expression the brute-force oracle uses, so
query results are bit-identical to brute force: distances nondecreasing,
ties broken by ascending point index. The tree is only an accelerator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import EmptyCloud, FloatArray, PointCloud

# Relative inflation applied to candidate radii so that ULP-level disagreement
# between the tree's distance metric and the numpy recomputation can never
# drop a true neighbor.
_RADIUS_SLACK = 1e-9


@dataclass(frozen=True)
class SpatialIndex:
    """Immutable search structure over one point cloud."""

    points: FloatArray
    tree: cKDTree

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class NeighborBatch:
    """k-NN results for a batch of query points, row-padded.

    ``indices`` is (m, k) int64 with -1 marking missing neighbors;
    ``distances`` is (m, k) float64 with +inf in the same slots. Each row is
    sorted by (distance, index).
    """

    indices: np.ndarray
    distances: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return (self.indices >= 0).sum(axis=1)


def build_index(cloud: PointCloud | np.ndarray) -> SpatialIndex:
    """Build a deterministic exact search index over all points of a cloud."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if pts.size == 0:
        raise EmptyCloud("cannot index an empty cloud")
    return SpatialIndex(points=pts, tree=cKDTree(pts, balanced_tree=True))


def _row_distances(points: FloatArray, q: np.ndarray) -> np.ndarray:
    # Single shared distance expression; both search paths and the oracle
    # must call this so results compare bit-for-bit.
    return np.linalg.norm(points - q, axis=-1)


def query_knn(index: SpatialIndex, q, k: int, max_dist: float = np.inf) -> list[tuple[int, float]]:
    """Return up to ``k`` nearest (index, distance) pairs within ``max_dist``.

    Sorted by ascending distance, ties by ascending point index; may return
    fewer than ``k`` entries (or none) when the radius excludes neighbors.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = np.asarray(q, dtype=np.float64).reshape(3)
    n = len(index)
    k_eff = min(k, n)

    if np.isfinite(max_dist):
        d_tree, _ = index.tree.query(q, k=k_eff,
                                     distance_upper_bound=max_dist * (1.0 + _RADIUS_SLACK))
    else:
        d_tree, _ = index.tree.query(q, k=k_eff)
    d_tree = np.atleast_1d(d_tree)

    finite = d_tree[np.isfinite(d_tree)]
    if finite.size == 0:
        return []
    if finite.size < d_tree.size:
        # Fewer than k candidates inside the cap: everything within max_dist
        # is already a candidate, but rescan at the cap to cover ULP edges.
        radius = max_dist
    else:
        radius = min(float(finite[-1]), max_dist)

    cand = np.array(index.tree.query_ball_point(q, radius * (1.0 + _RADIUS_SLACK)),
                    dtype=np.int64)
    d = _row_distances(index.points[cand], q)
    keep = d <= max_dist
    cand, d = cand[keep], d[keep]
    order = np.lexsort((cand, d))[:k_eff]
    return [(int(i), float(x)) for i, x in zip(cand[order], d[order])]


def brute_force_knn(cloud: PointCloud | np.ndarray, q, k: int,
                    max_dist: float = np.inf) -> list[tuple[int, float]]:
    """Reference oracle with the same contract as :func:`query_knn`."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64).reshape(3)
    d = _row_distances(pts, q)
    idx = np.nonzero(d <= max_dist)[0]
    order = np.lexsort((idx, d[idx]))[:k]
    sel = idx[order]
    return [(int(i), float(x)) for i, x in zip(sel, d[sel])]


def query_knn_batch(index: SpatialIndex, queries: np.ndarray, k: int,
                    max_dist: float = np.inf, workers: int = 1) -> NeighborBatch:
    """Vectorized :func:`query_knn` over (m, 3) query points.

    Produces exactly the per-query results of :func:`query_knn`; rows whose
    k-th neighbor is ambiguous under an exact distance tie fall back to the
    single-query path.
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    m = queries.shape[0]
    n = len(index)
    k_eff = min(k, n)
    kq = min(k_eff + 1, n)  # one spare to detect ties at the k boundary

    upper = max_dist * (1.0 + _RADIUS_SLACK) if np.isfinite(max_dist) else np.inf
    d_t, i_t = index.tree.query(queries, k=kq, distance_upper_bound=upper,
                                workers=workers)
    d_t = d_t.reshape(m, kq)
    i_t = i_t.reshape(m, kq).astype(np.int64)

    present = i_t < n
    gather = np.where(present, i_t, 0)
    d = _row_distances(index.points[gather], queries[:, None, :])
    d[~present] = np.inf
    if np.isfinite(max_dist):
        d[d > max_dist] = np.inf

    # Rows already strictly increasing (infs trailing) are in final (d, idx)
    # order; only the rest -- exact ties or ULP swaps against the tree's own
    # metric -- need the explicit two-key sort.
    i_s = i_t
    if kq > 1:
        lo, hi = d[:, :-1], d[:, 1:]
        in_order = (hi > lo) | (np.isinf(lo) & np.isinf(hi))
        fix = ~in_order.all(axis=1)
        if fix.any():
            d_fix = d[fix]
            i_fix = i_t[fix]
            by_idx = np.argsort(np.where(np.isfinite(d_fix), i_fix, n),
                                axis=1, kind="stable")
            d_fix = np.take_along_axis(d_fix, by_idx, axis=1)
            i_fix = np.take_along_axis(i_fix, by_idx, axis=1)
            by_d = np.argsort(d_fix, axis=1, kind="stable")
            d = d.copy()
            i_s = i_t.copy()
            d[fix] = np.take_along_axis(d_fix, by_d, axis=1)
            i_s[fix] = np.take_along_axis(i_fix, by_d, axis=1)

    indices = np.where(np.isfinite(d[:, :k_eff]), i_s[:, :k_eff], -1)
    distances = d[:, :k_eff].copy()

    if kq == k_eff + 1:
        ambiguous = np.isfinite(d[:, k_eff]) & (d[:, k_eff] == d[:, k_eff - 1])
        for row in np.nonzero(ambiguous)[0]:
            exact = query_knn(index, queries[row], k_eff, max_dist)
            indices[row] = -1
            distances[row] = np.inf
            for col, (pi, pd) in enumerate(exact):
                indices[row, col] = pi
                distances[row, col] = pd

    return NeighborBatch(indices=indices, distances=distances)

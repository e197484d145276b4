"""Graph-Laplacian rigidity prior over the source cloud.

A directed k-NN graph is built once from the untransformed source points and
frozen for the whole optimization. The energy sums w_ij * ||f_i - f_j||^2
over directed edges with w_ij = exp(-d_ij^2), so nearby points are pushed
toward a shared flow vector while the penalty vanishes for distant pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import EmptyCloud, LengthMismatch, PointCloud
from .knn import build_index, query_knn_batch


@dataclass(frozen=True)
class RigidityGraph:
    """Directed k-NN edge list (i -> j) with weights exp(-d_ij^2).

    ``laplacian`` caches the symmetric matrix L with f' L f equal to the edge
    sum per component, so energy and gradient cost one sparse matvec.
    """

    n_nodes: int
    src: np.ndarray      # (E,) int64 edge tails
    dst: np.ndarray      # (E,) int64 edge heads
    weights: np.ndarray  # (E,) float64 in (0, 1]
    laplacian: sp.csr_matrix

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]


def build_rigidity_graph(source: PointCloud, k_rigid: int) -> RigidityGraph:
    """Connect each source point to its ``k_rigid`` nearest peers.

    Self-edges are excluded; distance ties resolve by ascending point index,
    matching the search contract of :mod:`flowopt.knn`.
    """
    pts = source.points if isinstance(source, PointCloud) else np.asarray(source, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        raise EmptyCloud("rigidity graph needs at least 2 points")
    k = min(k_rigid, n - 1)

    index = build_index(pts)
    batch = query_knn_batch(index, pts, k + 1)  # +1 slot for the self match

    rows = np.repeat(np.arange(n, dtype=np.int64), k + 1)
    cols = batch.indices.reshape(-1)
    dists = batch.distances.reshape(-1)
    keep_mask = (cols >= 0) & (cols != rows)

    # Keep the first k non-self neighbors per row (rows are already sorted
    # by distance then index).
    keep_rank = keep_mask.reshape(n, k + 1).cumsum(axis=1).reshape(-1)
    keep = keep_mask & (keep_rank <= k)

    src = rows[keep]
    dst = cols[keep]
    w = np.exp(-(dists[keep] ** 2))

    # L = D_out + D_in - (W + W'): symmetric, PSD, one matvec per use.
    adj = sp.coo_matrix((w, (src, dst)), shape=(n, n))
    sym = (adj + adj.T).tocsr()
    degree = np.asarray(sym.sum(axis=1)).reshape(-1)
    lap = (sp.diags(degree) - sym).tocsr()

    return RigidityGraph(n_nodes=n, src=src, dst=dst, weights=w, laplacian=lap)


def rigidity_energy(graph: RigidityGraph, flow) -> float:
    """Sum of w_ij * ||f_i - f_j||^2 over every directed edge."""
    f = _flow_array(graph, flow)
    return float(np.sum(f * (graph.laplacian @ f)))


def rigidity_gradient(graph: RigidityGraph, flow) -> np.ndarray:
    """Analytic gradient of :func:`rigidity_energy` w.r.t. each flow vector."""
    f = _flow_array(graph, flow)
    return 2.0 * (graph.laplacian @ f)


def _flow_array(graph: RigidityGraph, flow) -> np.ndarray:
    f = flow.vectors if hasattr(flow, "vectors") else np.asarray(flow, dtype=np.float64)
    if f.shape != (graph.n_nodes, 3):
        raise LengthMismatch(
            f"flow has shape {f.shape}, graph expects ({graph.n_nodes}, 3)")
    return f

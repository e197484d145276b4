"""Total objective: bidirectional soft-correspondence fit plus rigidity.

Every source point is warped as x_i = R(r) p_i + t + f_i and pulled toward
the weighted average of its in-threshold target neighbors; with the
bidirectional fit on, target points are symmetrically pulled toward weighted
averages of warped source points, which penalizes unexplained target
structure the way a Chamfer loss would. The rigidity term (see
:mod:`flowopt.rigidity`) is added with weight alpha_rigid.

Differentiation contract: neighbor membership is a discrete selection,
recomputed from scratch every iteration and treated as constant within one;
the weights and averages inside a selection are differentiated exactly
through the point positions. :class:`FrozenCorrespondences` exposes that
contract so finite-difference checks can probe the same function the
analytic gradients belong to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (DegenerateProblem, FlowField, Hyperparams, LengthMismatch,
                   PointCloud, RigidMotion)
from .correspondence import (SoftCorrespondenceSet, soft_targets,
                             build_soft_correspondences, threshold_at)
from .egomotion import right_jacobian, rodrigues
from .knn import SpatialIndex, build_index
from .rigidity import RigidityGraph, rigidity_energy, rigidity_gradient


@dataclass(frozen=True)
class FrozenCorrespondences:
    """Neighbor selections captured at one iterate.

    ``forward`` maps each source point to target-neighbor indices (-1 padded);
    ``reverse`` maps each target point to warped-source indices, or None for
    unidirectional fits.
    """

    forward: np.ndarray
    reverse: np.ndarray | None


@dataclass(frozen=True)
class ObjectiveEvaluation:
    """One evaluation of the total objective and its exact gradients."""

    e_fit_forward: float
    e_fit_reverse: float
    e_fit: float
    e_rigid: float
    e_obj: float
    grad_flow: np.ndarray  # (n1, 3)
    grad_r: np.ndarray     # (3,)
    grad_t: np.ndarray     # (3,)
    valid_forward: int
    valid_reverse: int
    d_thresh: float
    frozen: FrozenCorrespondences


def _frozen_targets(queries: np.ndarray, anchors: np.ndarray,
                    indices: np.ndarray, epsilon: float) -> SoftCorrespondenceSet:
    # Recompute distances/weights for a fixed neighbor selection.
    present = indices >= 0
    diff = queries[:, None, :] - anchors[np.where(present, indices, 0)]
    d = np.linalg.norm(diff, axis=-1)
    d[~present] = np.inf
    return soft_targets(indices, d, anchors, epsilon)


def _pull_energy(queries: np.ndarray, anchors: np.ndarray,
                 cset: SoftCorrespondenceSet, epsilon: float):
    """Energy sum_i ||query_i - avg_i||^2 with gradients for both sides.

    Returns (energy, residuals, grad_queries, grad_anchors) where residuals
    is (m, 3) with zero rows for invalid queries. The gradient through each
    weight W = exp((exp(-d^2) - 1)/eps) is
    dW/dquery = -(2/eps) W exp(-d^2) (query - anchor), which stays finite at
    d = 0, so no epsilon-guards are needed.
    """
    valid = cset.valid
    present = cset.indices >= 0
    idx = np.where(present, cset.indices, 0)
    anchor_pts = anchors[idx]                                   # (m, k, 3)

    res = np.where(valid[:, None], queries - cset.q_avg, 0.0)   # (m, 3)
    energy = float(np.sum(res * res))

    # Per-pair factor of the weight derivative; rows of invalid queries and
    # padded slots carry zero weight, so they drop out of every term below.
    sim = np.exp(-np.where(present, cset.distances, 0.0) ** 2)
    ws = np.where(present, cset.weights * sim, 0.0)             # (m, k)
    u = queries[:, None, :] - anchor_pts                        # (m, k, 3)

    inv_s = np.zeros(len(cset))
    np.divide(1.0, cset.weight_sum, out=inv_s, where=valid)

    # coef_j = (anchor_j - avg) . res, per retained pair
    coef = ((anchor_pts - cset.q_avg[:, None, :]) * res[:, None, :]).sum(axis=2)

    pair_scale = (4.0 / epsilon) * inv_s[:, None] * coef * ws   # (m, k)
    pair_grad = pair_scale[:, :, None] * u                      # (m, k, 3)

    grad_queries = 2.0 * res + pair_grad.sum(axis=1)

    # Anchor side: the pull through the average, -2 (W/S) res, plus the
    # weight-derivative term, which is the query-side pair term negated
    # (dW/danchor = -dW/dquery).
    w_over_s = np.where(present, cset.weights, 0.0) * inv_s[:, None]
    anchor_contrib = (-2.0 * w_over_s[:, :, None] * res[:, None, :]
                      - pair_grad)                              # (m, k, 3)

    flat_idx = idx.reshape(-1)
    flat = anchor_contrib.reshape(-1, 3)
    n_anchor = anchors.shape[0]
    grad_anchors = np.column_stack([
        np.bincount(flat_idx, weights=flat[:, c], minlength=n_anchor)
        for c in range(3)
    ])
    return energy, res, grad_queries, grad_anchors


def fit_energy_forward(source: PointCloud, flow: FlowField, motion: RigidMotion,
                       target_index: SpatialIndex, hp: Hyperparams,
                       d_thresh: float, workers: int = 1):
    """Forward fit term: warped source pulled toward target soft matches.

    Returns (energy, residual vectors, correspondence set); invalid points
    contribute zero energy and zero residual.
    """
    x = _warp(source, flow, motion)
    cset = build_soft_correspondences(x, target_index, hp.k_local, hp.epsilon,
                                      d_thresh, workers=workers)
    energy, res, _, _ = _pull_energy(x, target_index.points, cset, hp.epsilon)
    return energy, res, cset


def fit_energy_reverse(source: PointCloud, flow: FlowField, motion: RigidMotion,
                       target: PointCloud, hp: Hyperparams, d_thresh: float,
                       warped_source_index: SpatialIndex | None = None,
                       workers: int = 1):
    """Reverse fit term: target points pulled toward warped-source matches.

    ``warped_source_index`` must be built over the current warp x = Rp + t + f
    of the same iterate; it is rebuilt here when omitted.
    """
    x = _warp(source, flow, motion)
    if warped_source_index is None:
        warped_source_index = build_index(x)
    cset = build_soft_correspondences(target.points, warped_source_index,
                                      hp.k_local, hp.epsilon, d_thresh,
                                      workers=workers)
    energy, res, _, _ = _pull_energy(target.points, x, cset, hp.epsilon)
    return energy, res, cset


def evaluate_objective(source: PointCloud, target: PointCloud, flow: FlowField,
                       motion: RigidMotion, graph: RigidityGraph | None,
                       hp: Hyperparams, iteration: int, *,
                       target_index: SpatialIndex | None = None,
                       frozen: FrozenCorrespondences | None = None,
                       combine: str = "sum", workers: int = 1) -> ObjectiveEvaluation:
    """Evaluate fit + rigidity energies and their gradients w.r.t. (F, r, t).

    The distance threshold follows the halving schedule at ``iteration``.
    Passing ``frozen`` reuses a captured neighbor selection instead of
    searching, which makes the objective smooth for derivative checks.
    ``combine`` is "sum" (default) or "mean" for the two fit directions.
    """
    if combine not in ("sum", "mean"):
        raise ValueError(f"combine must be 'sum' or 'mean', got {combine!r}")

    d_thresh = threshold_at(iteration, hp.d_init, hp.halving_interval, hp.d_floor)
    R = rodrigues(motion.r)
    x = _warp(source, flow, motion)

    if target_index is None:
        target_index = build_index(target)

    if frozen is not None:
        fwd = _frozen_targets(x, target_index.points, frozen.forward, hp.epsilon)
    else:
        fwd = build_soft_correspondences(x, target_index, hp.k_local, hp.epsilon,
                                         d_thresh, workers=workers)
    e_fwd, _, gq_fwd, _ = _pull_energy(x, target_index.points, fwd, hp.epsilon)
    grad_x = gq_fwd

    e_rev = 0.0
    rev = None
    if hp.bidirectional:
        if frozen is not None:
            rev = _frozen_targets(target.points, x, frozen.reverse, hp.epsilon)
        else:
            rev = build_soft_correspondences(target.points, build_index(x),
                                             hp.k_local, hp.epsilon, d_thresh,
                                             workers=workers)
        e_rev, _, _, ga_rev = _pull_energy(target.points, x, rev, hp.epsilon)
        grad_x = grad_x + ga_rev

    valid_fwd = int(fwd.valid.sum())
    valid_rev = int(rev.valid.sum()) if rev is not None else 0
    if valid_fwd == 0 and (rev is None or valid_rev == 0):
        raise DegenerateProblem(
            f"no valid correspondences in any direction at d_thresh={d_thresh}")

    scale = 0.5 if (combine == "mean" and hp.bidirectional) else 1.0
    e_fit = scale * (e_fwd + e_rev)
    grad_x = scale * grad_x

    # A single-point source has no rigidity graph to regularize.
    e_rig = rigidity_energy(graph, flow) if graph is not None else 0.0
    grad_flow = grad_x + (hp.alpha_rigid * rigidity_gradient(graph, flow)
                          if graph is not None else 0.0)
    grad_t = grad_x.sum(axis=0)
    grad_r = right_jacobian(motion.r).T @ np.cross(
        source.points, grad_x @ R).sum(axis=0)

    return ObjectiveEvaluation(
        e_fit_forward=scale * e_fwd,
        e_fit_reverse=scale * e_rev,
        e_fit=e_fit,
        e_rigid=e_rig,
        e_obj=e_fit + hp.alpha_rigid * e_rig,
        grad_flow=grad_flow,
        grad_r=grad_r,
        grad_t=grad_t,
        valid_forward=valid_fwd,
        valid_reverse=valid_rev,
        d_thresh=d_thresh,
        frozen=FrozenCorrespondences(
            forward=fwd.indices,
            reverse=rev.indices if rev is not None else None),
    )


def _warp(source: PointCloud, flow: FlowField, motion: RigidMotion) -> np.ndarray:
    if len(flow) != len(source):
        raise LengthMismatch(
            f"flow length {len(flow)} != source length {len(source)}")
    return source.points @ rodrigues(motion.r).T + motion.t + flow.vectors

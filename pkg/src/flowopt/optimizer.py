"""Gradient-descent loop, warm-started sequence mode, and chunked batch mode.

One optimization run owns flat parameter vector [F, r, t] (3*n1 + 6 entries)
stepped by Adam with decoupled weight decay. Decay applies to the flow
entries only: shrinking flow toward zero encodes the static-world prior,
while decaying the motion toward identity would bias alignment.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (DegenerateProblem, Diagnostics, FlowField, Hyperparams,
                   IterationRecord, LengthMismatch, NonFiniteGradient,
                   PointCloud, RigidMotion, validate_problem)
from .egomotion import icp_register
from .knn import SpatialIndex, build_index, query_knn_batch
from .objective import evaluate_objective
from .rigidity import build_rigidity_graph


@dataclass
class AdamState:
    """Moment accumulators for one parameter vector.

    ``decay_mask`` selects the entries that receive decoupled weight decay.
    """

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    decay_mask: np.ndarray | None = None

    @staticmethod
    def for_params(params: np.ndarray, weight_decay: float = 0.01,
                   decay_mask: np.ndarray | None = None) -> "AdamState":
        return AdamState(m=np.zeros_like(params), v=np.zeros_like(params),
                         weight_decay=weight_decay, decay_mask=decay_mask)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              learning_rate: float) -> np.ndarray:
    """One bias-corrected Adam update with decoupled weight decay."""
    if not np.isfinite(grads).all():
        raise NonFiniteGradient("gradient contains NaN or Inf")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    new = params - learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    if state.weight_decay:
        decay = learning_rate * state.weight_decay * params
        if state.decay_mask is not None:
            decay = np.where(state.decay_mask, decay, 0.0)
        new = new - decay
    return new


@dataclass(frozen=True)
class FlowEstimate:
    """Converged flow field plus motion estimate and the run trace."""

    flow: FlowField
    motion: RigidMotion
    diagnostics: Diagnostics


def _pack(flow: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.concatenate([flow.reshape(-1), r, t])


def _unpack(params: np.ndarray, n: int):
    return params[:3 * n].reshape(n, 3), params[3 * n:3 * n + 3], params[3 * n + 3:]


def optimize_pair(source: PointCloud, target: PointCloud, hp: Hyperparams, *,
                  init_flow: FlowField | None = None,
                  init_motion: RigidMotion | None = None,
                  max_iters: int | None = None,
                  with_egomotion: bool = True,
                  weight_decay: float = 0.01,
                  combine: str = "sum",
                  icp_iters: int = 30,
                  icp_rejection: float | None = None,
                  target_index: SpatialIndex | None = None,
                  workers: int = 1) -> FlowEstimate:
    """Estimate per-point flow and sensor motion for one cloud pair.

    Flow starts at zero (or ``init_flow``); the motion starts from ICP
    registration unless ``init_motion`` is given or ``with_egomotion`` is
    False, in which case it is pinned to the identity. Runs at most
    ``max_iters`` iterations (default ``hp.max_iters``) with early stopping
    on relative loss improvement, and returns the best-loss iterate.
    """
    prob = validate_problem(source, target, hp)
    source, target, hp = prob.source, prob.target, prob.hp
    run_warnings = list(prob.warnings)
    n = len(source)
    niters = hp.max_iters if max_iters is None else max_iters

    t_start = time.perf_counter()
    if target_index is None:
        target_index = build_index(target)
    graph = build_rigidity_graph(source, hp.k_rigid) if n >= 2 else None

    if init_motion is not None:
        motion = init_motion
    elif with_egomotion:
        rejection = hp.d_init if icp_rejection is None else icp_rejection
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            motion = icp_register(source, target, icp_iters, rejection)
        run_warnings.extend(str(w.message) for w in caught)
    else:
        motion = RigidMotion.identity()

    if init_flow is not None and len(init_flow) != n:
        raise LengthMismatch(
            f"init_flow length {len(init_flow)} != source length {n}")
    flow0 = np.zeros((n, 3)) if init_flow is None else np.array(init_flow.vectors)
    params = _pack(flow0, motion.r, motion.t)
    decay_mask = np.zeros(params.shape, dtype=bool)
    decay_mask[:3 * n] = True
    state = AdamState.for_params(params, weight_decay=weight_decay,
                                 decay_mask=decay_mask)

    records: list[IterationRecord] = []
    best_e = np.inf
    best_params = params
    streak = 0
    stop_reason = "max-iters"

    for it in range(niters):
        fv, rv, tv = _unpack(params, n)
        try:
            ev = evaluate_objective(source, target, FlowField(fv),
                                    RigidMotion(rv, tv), graph, hp, it,
                                    target_index=target_index, combine=combine,
                                    workers=workers)
        except DegenerateProblem as exc:
            run_warnings.append(f"degenerate at iteration {it}: {exc}")
            stop_reason = "degenerate"
            if not records:
                best_params = params
            break

        records.append(IterationRecord(
            iteration=it, e_fit=ev.e_fit, e_rigid=ev.e_rigid, e_obj=ev.e_obj,
            d_thresh=ev.d_thresh,
            valid_count=ev.valid_forward + ev.valid_reverse))

        if ev.e_obj < best_e:
            rel_gain = (np.inf if not np.isfinite(best_e)
                        else (best_e - ev.e_obj) / max(abs(best_e), 1e-30))
            best_e = ev.e_obj
            best_params = params
            streak = 0 if rel_gain > hp.early_stop_rel_tol else streak + 1
        else:
            streak += 1
        if streak >= hp.early_stop_patience:
            stop_reason = "early-stop"
            break

        grads = _pack(ev.grad_flow, ev.grad_r, ev.grad_t)
        if not with_egomotion:
            grads[3 * n:] = 0.0
        params = adam_step(state, params, grads, hp.learning_rate)

    fv, rv, tv = _unpack(best_params, n)
    diag = Diagnostics(records=tuple(records),
                       wall_time=time.perf_counter() - t_start,
                       stop_reason=stop_reason,
                       warnings=tuple(run_warnings))
    return FlowEstimate(flow=FlowField(fv), motion=RigidMotion(rv, tv),
                        diagnostics=diag)


def optimize_sequence(clouds: list[PointCloud], hp: Hyperparams,
                      warm_iters: int = 30, **kwargs) -> list[FlowEstimate]:
    """Run consecutive pairs, warm-starting each from the previous solution.

    The first pair runs in full; every later pair copies each point's initial
    flow from its nearest neighbor in the previous source cloud, keeps the
    previous motion estimate, and runs only ``warm_iters`` iterations.
    """
    if len(clouds) < 2:
        raise ValueError("sequence mode needs at least 2 clouds")
    estimates = [optimize_pair(clouds[0], clouds[1], hp, **kwargs)]
    for a, b in zip(clouds[1:-1], clouds[2:]):
        prev_est = estimates[-1]
        prev_source = clouds[len(estimates) - 1]
        nn = query_knn_batch(build_index(prev_source), a.points, 1)
        init_flow = FlowField(prev_est.flow.vectors[nn.indices[:, 0]])
        estimates.append(optimize_pair(
            a, b, hp, init_flow=init_flow, init_motion=prev_est.motion,
            max_iters=warm_iters, **kwargs))
    return estimates


def optimize_batched(source: PointCloud, target: PointCloud, hp: Hyperparams,
                     chunk_size: int = 8192, threads: int = 1,
                     **kwargs) -> FlowEstimate:
    """Optimize a large source cloud in independent chunks.

    The source is randomly partitioned (seeded by ``hp.seed``) into chunks of
    at most ``chunk_size`` points; each chunk runs against the full target
    through one shared read-only index. Per-chunk flows scatter back into a
    full-length field; the motion comes from the largest chunk.

    Chunks fit forward-only: the reverse fit direction assumes the warped
    source can explain every target point, which a partial source cannot, so
    keeping it would drag each chunk toward the twins of points in other
    chunks.
    """
    n = len(source)
    if n <= chunk_size:
        return optimize_pair(source, target, hp, **kwargs)

    perm = np.random.default_rng(hp.seed).permutation(n)
    n_chunks = int(np.ceil(n / chunk_size))
    chunks = np.array_split(perm, n_chunks)

    chunk_hp = hp.with_overrides(bidirectional=False)
    shared_index = build_index(target)

    def run(chunk: np.ndarray) -> FlowEstimate:
        sub = PointCloud(source.points[chunk])
        return optimize_pair(sub, target, chunk_hp, target_index=shared_index,
                             **kwargs)

    t_start = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    wall = time.perf_counter() - t_start

    vectors = np.zeros((n, 3))
    for chunk, est in zip(chunks, results):
        vectors[chunk] = est.flow.vectors

    largest = int(np.argmax([c.size for c in chunks]))
    lead = results[largest]
    notes = (f"batched: {n_chunks} chunks of <= {chunk_size} points; "
             f"diagnostics from largest chunk",) + lead.diagnostics.warnings
    diag = Diagnostics(records=lead.diagnostics.records, wall_time=wall,
                       stop_reason=lead.diagnostics.stop_reason, warnings=notes)
    return FlowEstimate(flow=FlowField(vectors), motion=lead.motion,
                        diagnostics=diag)

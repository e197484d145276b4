import numpy as np
import pytest

from flowopt.core import (DegenerateProblem, FlowField, Hyperparams, PointCloud,
                          RigidMotion)
from flowopt.correspondence import corr_weight, similarity
from flowopt.egomotion import rodrigues
from flowopt.knn import brute_force_knn, build_index
from flowopt.objective import (evaluate_objective, fit_energy_forward,
                               fit_energy_reverse)
from flowopt.rigidity import build_rigidity_graph


def naive_fit_energy(queries, anchors, k, epsilon, d_thresh):
    """Double-loop reference for the soft-correspondence pull energy."""
    total = 0.0
    for q in queries:
        nbrs = brute_force_knn(anchors, q, k, d_thresh)
        if not nbrs:
            continue
        weights = [corr_weight(similarity(d), epsilon) for _, d in nbrs]
        wsum = sum(weights)
        if wsum == 0.0:
            continue
        avg = sum(w * anchors[i] for (i, _), w in zip(nbrs, weights)) / wsum
        total += float((q - avg) @ (q - avg))
    return total


def make_problem(seed, n1=15, n2=18, spread=1.0):
    rng = np.random.default_rng(seed)
    source = PointCloud(rng.uniform(-spread, spread, (n1, 3)))
    target = PointCloud(rng.uniform(-spread, spread, (n2, 3)))
    flow = FlowField(rng.normal(scale=0.1, size=(n1, 3)))
    motion = RigidMotion(rng.normal(scale=0.05, size=3),
                         rng.normal(scale=0.1, size=3))
    return source, target, flow, motion


# -- forward ------------------------------------------------------------------

def test_forward_zero_when_target_equals_warp():
    # Spaced cloud: with >= 1.2 m separation the non-twin weights are below
    # the resolution of the average, so the energy is zero to precision.
    rng = np.random.default_rng(31)
    pts = rng.uniform(-20, 20, (100, 3))
    pts = pts[np.linalg.norm(pts[:, None] - pts[None], axis=-1).min(
        axis=1, initial=np.inf, where=~np.eye(100, dtype=bool)) > 1.5]
    source = PointCloud(pts)
    hp = Hyperparams(k_local=4, k_rigid=3)
    energy, res, cset = fit_energy_forward(
        source, FlowField.zeros(len(source)), RigidMotion.identity(),
        build_index(source), hp, 2.0)
    assert cset.valid.all()
    assert energy < 1e-12
    assert np.abs(res).max() < 1e-9


def test_forward_single_point_hand_value():
    source = PointCloud([[0.0, 0, 0]])
    target_index = build_index(np.array([[0.2, 0.0, 0.0]]))
    hp = Hyperparams(k_local=1, k_rigid=1)
    energy, _, _ = fit_energy_forward(source, FlowField.zeros(1),
                                      RigidMotion.identity(), target_index,
                                      hp, 2.0)
    assert energy == pytest.approx(0.04, abs=1e-12)


def test_forward_matches_naive_oracle():
    for seed in range(6):
        source, target, flow, motion = make_problem(seed)
        hp = Hyperparams(k_local=5, k_rigid=3)
        energy, _, _ = fit_energy_forward(source, flow, motion,
                                          build_index(target), hp, 1.5)
        x = source.points @ rodrigues(motion.r).T + motion.t + flow.vectors
        expected = naive_fit_energy(x, target.points, 5, hp.epsilon, 1.5)
        assert energy == pytest.approx(expected, rel=1e-10)


# -- reverse ------------------------------------------------------------------

def test_reverse_single_point_hand_value():
    source = PointCloud([[0.0, 0, 0]])
    target = PointCloud([[0.3, 0.0, 0.0]])
    hp = Hyperparams(k_local=1, k_rigid=1)
    energy, _, _ = fit_energy_reverse(source, FlowField.zeros(1),
                                      RigidMotion.identity(), target, hp, 2.0)
    assert energy == pytest.approx(0.09, abs=1e-12)


def test_reverse_matches_naive_oracle():
    for seed in range(6):
        source, target, flow, motion = make_problem(seed + 50)
        hp = Hyperparams(k_local=4, k_rigid=3)
        energy, _, _ = fit_energy_reverse(source, flow, motion, target, hp, 1.5)
        x = source.points @ rodrigues(motion.r).T + motion.t + flow.vectors
        expected = naive_fit_energy(target.points, x, 4, hp.epsilon, 1.5)
        assert energy == pytest.approx(expected, rel=1e-10)


# -- total objective ----------------------------------------------------------

def test_identical_clouds_global_optimum():
    rng = np.random.default_rng(33)
    pts = rng.uniform(-30, 30, (60, 3))
    keep = np.linalg.norm(pts[:, None] - pts[None], axis=-1).min(
        axis=1, initial=np.inf, where=~np.eye(60, dtype=bool)) > 1.5
    source = PointCloud(pts[keep])
    hp = Hyperparams(k_local=4, k_rigid=3)
    graph = build_rigidity_graph(source, hp.k_rigid)
    ev = evaluate_objective(source, source, FlowField.zeros(len(source)),
                            RigidMotion.identity(), graph, hp, 0)
    assert ev.e_fit_forward < 1e-12 and ev.e_fit_reverse < 1e-12
    assert ev.e_rigid == 0.0
    assert np.abs(ev.grad_flow).max() < 1e-9
    assert np.abs(ev.grad_r).max() < 1e-9
    assert np.abs(ev.grad_t).max() < 1e-9


def test_alpha_zero_decouples_rigidity():
    source, target, flow, motion = make_problem(2)
    hp = Hyperparams(k_local=4, k_rigid=3, alpha_rigid=0.0)
    graph = build_rigidity_graph(source, hp.k_rigid)
    ev = evaluate_objective(source, target, flow, motion, graph, hp, 0)
    assert ev.e_obj == ev.e_fit


def test_objective_identity_holds():
    source, target, flow, motion = make_problem(3)
    hp = Hyperparams(k_local=4, k_rigid=3, alpha_rigid=7.7)
    graph = build_rigidity_graph(source, hp.k_rigid)
    ev = evaluate_objective(source, target, flow, motion, graph, hp, 0)
    assert ev.e_obj == pytest.approx(ev.e_fit + 7.7 * ev.e_rigid, rel=1e-12)
    assert ev.e_obj >= 0.0


def test_rigid_translation_consistency():
    # target = source + v, identity motion, flow constantly v -> E_fit ~ 0
    rng = np.random.default_rng(34)
    pts = rng.uniform(-40, 40, (80, 3))
    keep = np.linalg.norm(pts[:, None] - pts[None], axis=-1).min(
        axis=1, initial=np.inf, where=~np.eye(80, dtype=bool)) > 1.5
    source = PointCloud(pts[keep])
    v = np.array([0.4, -0.2, 0.1])
    target = PointCloud(source.points + v)
    hp = Hyperparams(k_local=4, k_rigid=3)
    graph = build_rigidity_graph(source, hp.k_rigid)
    flow = FlowField(np.tile(v, (len(source), 1)))
    ev = evaluate_objective(source, target, flow, RigidMotion.identity(),
                            graph, hp, 0)
    assert ev.e_fit < 1e-12
    assert ev.e_rigid == pytest.approx(0.0, abs=1e-12)


def test_gradients_match_finite_differences_frozen_sets():
    h = 1e-6
    for seed in range(5):
        for bidirectional in (True, False):
            source, target, flow, motion = make_problem(seed + 200, n1=12, n2=14)
            hp = Hyperparams(k_local=4, k_rigid=3, alpha_rigid=1.8,
                             bidirectional=bidirectional)
            graph = build_rigidity_graph(source, hp.k_rigid)
            ti = build_index(target)
            base = evaluate_objective(source, target, flow, motion, graph, hp,
                                      0, target_index=ti)

            def e_at(fv, r, t):
                return evaluate_objective(
                    source, target, FlowField(fv), RigidMotion(r, t), graph,
                    hp, 0, target_index=ti, frozen=base.frozen).e_obj

            packed_grad = np.concatenate(
                [base.grad_flow.ravel(), base.grad_r, base.grad_t])
            for slot in range(packed_grad.size):
                fv_p = flow.vectors.copy().ravel()
                r_p, t_p = motion.r.copy(), motion.t.copy()
                fv_m, r_m, t_m = fv_p.copy(), r_p.copy(), t_p.copy()
                if slot < fv_p.size:
                    fv_p[slot] += h
                    fv_m[slot] -= h
                elif slot < fv_p.size + 3:
                    r_p[slot - fv_p.size] += h
                    r_m[slot - fv_p.size] -= h
                else:
                    t_p[slot - fv_p.size - 3] += h
                    t_m[slot - fv_p.size - 3] -= h
                fd = (e_at(fv_p.reshape(-1, 3), r_p, t_p)
                      - e_at(fv_m.reshape(-1, 3), r_m, t_m)) / (2 * h)
                an = packed_grad[slot]
                if abs(an) < 1e-8 and abs(fd) < 1e-8:
                    continue
                assert abs(fd - an) / max(abs(fd), abs(an)) < 1e-4


def test_degenerate_when_no_direction_valid():
    source = PointCloud([[0.0, 0, 0], [1.0, 0, 0]])
    target = PointCloud([[100.0, 0, 0], [101.0, 0, 0]])
    hp = Hyperparams(k_local=1, k_rigid=1)
    graph = build_rigidity_graph(source, 1)
    with pytest.raises(DegenerateProblem):
        evaluate_objective(source, target, FlowField.zeros(2),
                           RigidMotion.identity(), graph, hp, 0)


def test_mean_combine_halves_bidirectional_sum():
    source, target, flow, motion = make_problem(4)
    hp = Hyperparams(k_local=4, k_rigid=3)
    graph = build_rigidity_graph(source, hp.k_rigid)
    s = evaluate_objective(source, target, flow, motion, graph, hp, 0)
    m = evaluate_objective(source, target, flow, motion, graph, hp, 0,
                           combine="mean")
    assert m.e_fit == pytest.approx(0.5 * s.e_fit, rel=1e-12)

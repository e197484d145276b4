import numpy as np
import pytest

from flowopt.core import EmptyCloud, LengthMismatch, PointCloud
from flowopt.rigidity import (build_rigidity_graph, rigidity_energy,
                              rigidity_gradient)

E_MINUS_1 = 0.36787944117144233


def naive_energy(graph, flow):
    total = 0.0
    for i, j, w in zip(graph.src, graph.dst, graph.weights):
        diff = flow[i] - flow[j]
        total += w * float(diff @ diff)
    return total


def test_two_point_graph():
    g = build_rigidity_graph(PointCloud([[0.0, 0, 0], [1.0, 0, 0]]), 1)
    assert g.n_edges == 2
    edges = sorted(zip(g.src.tolist(), g.dst.tolist()))
    assert edges == [(0, 1), (1, 0)]
    assert np.allclose(g.weights, E_MINUS_1)


def test_two_point_energy_and_gradient():
    g = build_rigidity_graph(PointCloud([[0.0, 0, 0], [1.0, 0, 0]]), 1)
    flow = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    assert rigidity_energy(g, flow) == pytest.approx(2 * E_MINUS_1, abs=1e-10)
    grad = rigidity_gradient(g, flow)
    assert np.allclose(grad, [[-4 * E_MINUS_1, 0, 0], [4 * E_MINUS_1, 0, 0]],
                       atol=1e-12)


def test_collinear_tie_break():
    g = build_rigidity_graph(PointCloud([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), 1)
    assert g.dst[g.src == 1].tolist() == [0]


def test_out_degree_exact():
    rng = np.random.default_rng(11)
    g = build_rigidity_graph(PointCloud(rng.normal(size=(1000, 3))), 50)
    degrees = np.bincount(g.src, minlength=1000)
    assert np.all(degrees == 50)


def test_no_self_edges_and_weight_range():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(100, 3))
    pts[10] = pts[20]  # duplicate position must still not self-link
    g = build_rigidity_graph(PointCloud(pts), 6)
    assert np.all(g.src != g.dst)
    assert np.all((g.weights > 0) & (g.weights <= 1))


def test_constant_flow_zero_energy_zero_gradient():
    rng = np.random.default_rng(13)
    g = build_rigidity_graph(PointCloud(rng.normal(size=(60, 3))), 8)
    flow = np.tile([0.3, -0.7, 0.1], (60, 1))
    assert rigidity_energy(g, flow) == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(rigidity_gradient(g, flow), 0.0, atol=1e-12)


def test_energy_matches_naive_double_loop():
    rng = np.random.default_rng(14)
    for n in (10, 23, 50):
        g = build_rigidity_graph(PointCloud(rng.normal(size=(n, 3))), 5)
        flow = rng.normal(size=(n, 3))
        fast = rigidity_energy(g, flow)
        slow = naive_energy(g, flow)
        assert fast == pytest.approx(slow, rel=1e-10)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(15)
    g = build_rigidity_graph(PointCloud(rng.normal(size=(20, 3))), 4)
    flow = rng.normal(size=(20, 3))
    grad = rigidity_gradient(g, flow)
    h = 1e-5
    for i in range(20):
        for c in range(3):
            fp = flow.copy(); fp[i, c] += h
            fm = flow.copy(); fm[i, c] -= h
            fd = (rigidity_energy(g, fp) - rigidity_energy(g, fm)) / (2 * h)
            assert grad[i, c] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_gradient_sums_to_zero():
    rng = np.random.default_rng(16)
    g = build_rigidity_graph(PointCloud(rng.normal(size=(80, 3))), 10)
    grad = rigidity_gradient(g, rng.normal(size=(80, 3)))
    assert np.allclose(grad.sum(axis=0), 0.0, atol=1e-10)


def test_translation_invariance():
    rng = np.random.default_rng(17)
    g = build_rigidity_graph(PointCloud(rng.normal(size=(40, 3))), 6)
    flow = rng.normal(size=(40, 3))
    shifted = flow + np.array([5.0, -2.0, 0.5])
    assert rigidity_energy(g, flow) == pytest.approx(
        rigidity_energy(g, shifted), rel=1e-9)


def test_energy_nonnegative():
    rng = np.random.default_rng(18)
    g = build_rigidity_graph(PointCloud(rng.normal(size=(30, 3))), 5)
    for _ in range(20):
        assert rigidity_energy(g, rng.normal(size=(30, 3))) >= 0.0


def test_errors():
    with pytest.raises(EmptyCloud):
        build_rigidity_graph(PointCloud([[0.0, 0, 0]]), 1)
    g = build_rigidity_graph(PointCloud([[0.0, 0, 0], [1.0, 0, 0]]), 1)
    with pytest.raises(LengthMismatch):
        rigidity_energy(g, np.zeros((5, 3)))

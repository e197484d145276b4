import numpy as np
import pytest

from flowopt.core import EmptyCloud, PointCloud
from flowopt.knn import (brute_force_knn, build_index, query_knn,
                         query_knn_batch)


def test_single_point_cloud_answers_everything():
    idx = build_index(PointCloud([[1.0, 2.0, 3.0]]))
    assert query_knn(idx, (0, 0, 0), 5) == brute_force_knn(
        PointCloud([[1.0, 2.0, 3.0]]), (0, 0, 0), 5)
    assert query_knn(idx, (1, 2, 3), 1)[0] == (0, 0.0)


def test_unit_cube_corner_query():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                       dtype=float)
    idx = build_index(corners)
    assert query_knn(idx, (0, 0, 0), 1) == [(0, 0.0)]


def test_spec_line_example():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]])
    idx = build_index(pts)
    res = query_knn(idx, (0.9, 0, 0), 2)
    assert [i for i, _ in res] == [1, 0]
    assert res[0][1] == pytest.approx(0.1)
    assert res[1][1] == pytest.approx(0.9)
    assert [i for i, _ in query_knn(idx, (0.9, 0, 0), 2, max_dist=0.5)] == [1]
    assert query_knn(idx, (0.9, 0, 0), 2, max_dist=0.05) == []


def test_duplicate_points_tie_break_by_index():
    pts = np.array([[5.0, 0, 0], [1, 0, 0], [1, 0, 0], [1, 0, 0], [2, 0, 0]])
    idx = build_index(pts)
    res = query_knn(idx, (1, 0, 0), 4)
    assert [i for i, _ in res] == [1, 2, 3, 4]


def test_max_dist_is_inclusive():
    pts = np.array([[1.0, 0, 0], [2.0, 0, 0]])
    res = query_knn(build_index(pts), (0, 0, 0), 2, max_dist=1.0)
    assert [i for i, _ in res] == [0]


def test_empty_cloud_rejected():
    with pytest.raises(EmptyCloud):
        build_index(np.zeros((0, 3)))


def test_matches_brute_force_on_random_clouds():
    rng = np.random.default_rng(20240817)
    for _ in range(25):
        n = int(rng.integers(1, 400))
        pts = rng.normal(scale=rng.uniform(0.1, 10.0), size=(n, 3))
        idx = build_index(pts)
        for _ in range(8):
            q = rng.normal(scale=5.0, size=3)
            k = int(rng.integers(1, 30))
            max_dist = float(rng.uniform(0.1, 8.0)) if rng.random() < 0.5 else np.inf
            assert query_knn(idx, q, k, max_dist) == brute_force_knn(pts, q, k, max_dist)


def test_batch_matches_single_queries_with_grid_ties():
    # Integer grid plus duplicated rows: lots of exact distance ties.
    g = np.stack(np.meshgrid(*[np.arange(4.0)] * 3), -1).reshape(-1, 3)
    pts = np.vstack([g, g[:25], [[0, 0, 0]] * 3])
    idx = build_index(pts)
    rng = np.random.default_rng(7)
    queries = np.vstack([g[:20] + 0.5, g[:10], rng.normal(size=(20, 3))])
    for k in (1, 2, 5, 30):
        for max_dist in (np.inf, 1.0, 0.8):
            batch = query_knn_batch(idx, queries, k, max_dist)
            for row in range(queries.shape[0]):
                got = [(int(i), float(d)) for i, d
                       in zip(batch.indices[row], batch.distances[row]) if i >= 0]
                assert got == brute_force_knn(pts, queries[row], k, max_dist)


def test_no_index_returned_twice():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(60, 3))
    idx = build_index(pts)
    for _ in range(30):
        res = query_knn(idx, rng.normal(size=3), 20)
        ids = [i for i, _ in res]
        assert len(ids) == len(set(ids))


def test_distances_nondecreasing():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(200, 3))
    idx = build_index(pts)
    for _ in range(20):
        d = [x for _, x in query_knn(idx, rng.normal(size=3), 15)]
        assert all(a <= b for a, b in zip(d, d[1:]))

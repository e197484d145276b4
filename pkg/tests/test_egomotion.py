import numpy as np
import pytest

from flowopt.core import PointCloud, RigidMotion
from flowopt.egomotion import (apply_rigid, icp_register, kabsch, rodrigues,
                               rotation_angle_between, rotation_jacobian,
                               rotation_vector, skew, transform_points)
from flowopt.knn import build_index, query_knn_batch


def test_rodrigues_identity():
    assert np.allclose(rodrigues([0, 0, 0]), np.eye(3))


def test_rodrigues_quarter_turn():
    R = rodrigues([0, 0, np.pi / 2])
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_rodrigues_orthonormal_random():
    rng = np.random.default_rng(21)
    for _ in range(50):
        R = rodrigues(rng.normal(size=3) * rng.choice([1e-10, 1e-6, 0.1, 3.0]))
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_rotation_vector_round_trip():
    rng = np.random.default_rng(22)
    for scale in (1e-9, 1e-4, 0.5, 2.0, 3.1):
        r = rng.normal(size=3)
        r = r / np.linalg.norm(r) * scale
        assert np.allclose(rotation_vector(rodrigues(r)), r, atol=1e-7)


def test_apply_rigid_identity_and_translation():
    cloud = PointCloud([[1.0, 2, 3], [4, 5, 6]])
    same = apply_rigid(RigidMotion.identity(), cloud)
    assert np.array_equal(same.points, cloud.points)
    moved = apply_rigid(RigidMotion(np.zeros(3), [1, 2, 3]), cloud)
    assert np.allclose(moved.points, cloud.points + [1, 2, 3])


def test_apply_rigid_preserves_pairwise_distances():
    rng = np.random.default_rng(23)
    cloud = PointCloud(rng.normal(size=(40, 3)))
    motion = RigidMotion(rng.normal(size=3), rng.normal(size=3))
    moved = apply_rigid(motion, cloud)
    d0 = np.linalg.norm(cloud.points[:, None] - cloud.points[None], axis=-1)
    d1 = np.linalg.norm(moved.points[:, None] - moved.points[None], axis=-1)
    assert np.allclose(d0, d1, atol=1e-9)


# -- rotation jacobian --------------------------------------------------------

def test_jacobian_at_origin_is_negative_skew():
    p = np.array([1.0, -2.0, 0.5])
    assert np.allclose(rotation_jacobian(np.zeros(3), p), -skew(p), atol=1e-12)


def test_jacobian_first_order_displacement():
    # at r=0, a small dr=(0,0,delta) moves p=(1,0,0) by (0,delta,0)
    J = rotation_jacobian(np.zeros(3), [1.0, 0, 0])
    delta = 1e-4
    assert np.allclose(J @ [0, 0, delta], [0, delta, 0], atol=1e-12)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(24)
    h = 1e-6
    for _ in range(30):
        r = rng.normal(size=3) * rng.choice([1e-8, 1e-3, 0.3, 2.0])
        p = rng.normal(size=3) * 3.0
        J = rotation_jacobian(r, p)
        for a in range(3):
            dr = np.zeros(3)
            dr[a] = h
            fd = (rodrigues(r + dr) @ p - rodrigues(r - dr) @ p) / (2 * h)
            assert np.allclose(J[:, a], fd, rtol=1e-5, atol=1e-7)


# -- kabsch / icp ---------------------------------------------------------------

def test_kabsch_recovers_exact_transform():
    rng = np.random.default_rng(25)
    A = rng.normal(size=(50, 3))
    R_true = rodrigues([0.2, -0.1, 0.4])
    t_true = np.array([1.0, -2.0, 0.5])
    R, t = kabsch(A, A @ R_true.T + t_true)
    assert np.allclose(R, R_true, atol=1e-10)
    assert np.allclose(t, t_true, atol=1e-10)


def test_icp_exact_copy_gives_identity():
    rng = np.random.default_rng(26)
    cloud = PointCloud(rng.uniform(-5, 5, (300, 3)))
    est = icp_register(cloud, cloud)
    assert np.linalg.norm(est.r) < 1e-9
    assert np.linalg.norm(est.t) < 1e-9


def test_icp_recovers_pure_translation():
    rng = np.random.default_rng(27)
    cloud = PointCloud(rng.uniform(-5, 5, (400, 3)))
    target = apply_rigid(RigidMotion(np.zeros(3), [0.5, 0, 0]), cloud)
    est = icp_register(cloud, target)
    assert np.allclose(est.t, [0.5, 0, 0], atol=1e-6)
    assert np.linalg.norm(est.r) < 1e-6


def test_icp_robust_to_dynamic_outliers():
    # 5 degree yaw on the static part; 70% of points displaced far enough
    # that their false pairings exceed the rejection distance. The scene is
    # sparse (mean spacing ~3.7 m) so orphaned points find no in-radius match.
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        pts = rng.uniform(-25, 25, (600, 3))
        gt = RigidMotion([0, 0, np.deg2rad(5.0)], [0.3, -0.2, 0.0])
        moved = transform_points(gt, pts)
        n_out = int(0.7 * 600)
        out_sel = rng.choice(600, n_out, replace=False)
        moved[out_sel] += rng.uniform(8.0, 16.0, (n_out, 3)) * rng.choice(
            [-1.0, 1.0], (n_out, 3))
        est = icp_register(PointCloud(pts), PointCloud(moved), rejection_dist=2.0)
        assert np.rad2deg(rotation_angle_between(est.r, gt.r)) < 0.5


def test_icp_round_trip_reproduces_transform():
    rng = np.random.default_rng(28)
    cloud = PointCloud(rng.uniform(-6, 6, (500, 3)))
    motion = RigidMotion([0.05, -0.1, 0.2], [0.4, 0.1, -0.3])  # < 30 degrees
    target = apply_rigid(motion, cloud)
    est = icp_register(cloud, target)
    replayed = apply_rigid(est, cloud)
    assert np.abs(replayed.points - target.points).max() < 1e-6


def test_icp_objective_nonincreasing():
    rng = np.random.default_rng(29)
    cloud = PointCloud(rng.uniform(-5, 5, (300, 3)))
    motion = RigidMotion([0, 0, 0.05], [0.3, 0.2, 0.0])
    target = apply_rigid(motion, cloud)
    index = build_index(target)

    def mean_sq_nn(est):
        moved = transform_points(est, cloud.points)
        d = query_knn_batch(index, moved, 1).distances[:, 0]
        return float((d * d).mean())

    errors = [mean_sq_nn(icp_register(cloud, target, max_icp_iters=k))
              for k in range(1, 8)]
    assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))


def test_icp_far_apart_warns_and_returns_identity():
    a = PointCloud([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    b = PointCloud((np.asarray(a.points) + 100.0))
    with pytest.warns(UserWarning, match="fewer than 3 pairs"):
        est = icp_register(a, b, rejection_dist=2.0)
    assert np.linalg.norm(est.r) == 0.0 and np.linalg.norm(est.t) == 0.0

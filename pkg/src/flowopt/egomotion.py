"""SE(3) parameterization, ICP initialization, and transform Jacobians.

The sensor motion is carried as a rotation vector r (axis times angle, in
radians) plus a translation t, which keeps the optimizer unconstrained: any
point in R^3 x R^3 is a valid motion. ICP provides the starting estimate
only; the motion is refined jointly with the flow afterwards.
"""

from __future__ import annotations

import warnings

import numpy as np

from .core import PointCloud, RigidMotion
from .knn import build_index, query_knn_batch

_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]x with [v]x p = v x p."""
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def rodrigues(r) -> np.ndarray:
    """Rotation matrix of a rotation vector (exponential map on SO(3))."""
    r = np.asarray(r, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(r))
    K = skew(r)
    if theta < _SMALL_ANGLE:
        # Second-order series; exact to machine precision at this scale.
        return np.eye(3) + K + 0.5 * (K @ K)
    K = K / theta
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rotation_vector(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rodrigues` (matrix logarithm on SO(3))."""
    R = np.asarray(R, dtype=np.float64)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < _SMALL_ANGLE:
        return 0.5 * vee
    if np.pi - theta < 1e-6:
        # Near a half turn the skew part vanishes; recover the axis from the
        # symmetric part and fix signs from the largest component.
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            for j in range(3):
                if j != k:
                    axis[j] = A[k, j] / axis[k]
        axis /= np.linalg.norm(axis)
        if np.dot(axis, vee) < 0:
            axis = -axis
        return theta * axis
    return (theta / (2.0 * np.sin(theta))) * vee


def right_jacobian(r) -> np.ndarray:
    """Right Jacobian of SO(3): exp(r + dr) = exp(r) exp(Jr(r) dr) to first order."""
    r = np.asarray(r, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(r))
    K = skew(r)
    if theta < 1e-6:
        a = 0.5 - theta * theta / 24.0
        b = 1.0 / 6.0 - theta * theta / 120.0
    else:
        a = (1.0 - np.cos(theta)) / (theta * theta)
        b = (theta - np.sin(theta)) / (theta ** 3)
    return np.eye(3) - a * K + b * (K @ K)


def rotation_jacobian(r, p) -> np.ndarray:
    """d(R(r) p)/dr as a 3x3 matrix; equals -[p]x at r = 0."""
    p = np.asarray(p, dtype=np.float64).reshape(3)
    return -rodrigues(r) @ skew(p) @ right_jacobian(r)


def apply_rigid(motion: RigidMotion, cloud: PointCloud) -> PointCloud:
    """Transform every point as R(r) p + t, preserving count and order."""
    R = rodrigues(motion.r)
    return PointCloud(cloud.points @ R.T + motion.t)


def transform_points(motion: RigidMotion, points: np.ndarray) -> np.ndarray:
    return points @ rodrigues(motion.r).T + motion.t


def rotation_angle_between(r_a, r_b) -> float:
    """Geodesic angle (radians) between two rotation vectors."""
    R = rodrigues(r_a).T @ rodrigues(r_b)
    return float(np.linalg.norm(rotation_vector(R)))


def kabsch(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rigid fit (R, t) mapping paired A[i] -> B[i]."""
    cA = A.mean(axis=0)
    cB = B.mean(axis=0)
    U, _, Vt = np.linalg.svd((A - cA).T @ (B - cB))
    R = Vt.T @ U.T
    if np.linalg.det(R) < 0:
        Vt[-1, :] *= -1.0
        R = Vt.T @ U.T
    return R, cB - R @ cA


def icp_register(source: PointCloud, target: PointCloud,
                 max_icp_iters: int = 30, rejection_dist: float = 2.0) -> RigidMotion:
    """Point-to-point ICP with pair rejection beyond ``rejection_dist``.

    Per iteration: nearest-neighbor pairing, rejection, closed-form rigid fit
    on the survivors, composition. Stops when the incremental update falls
    below 1e-6 rad / 1e-6 m or the iteration cap is reached. Falls back to
    the identity (with a warning) when fewer than 3 pairs survive rejection.
    """
    src = source.points
    tgt = target.points
    index = build_index(tgt)

    R_total = np.eye(3)
    t_total = np.zeros(3)
    for _ in range(max_icp_iters):
        moved = src @ R_total.T + t_total
        batch = query_knn_batch(index, moved, 1)
        d = batch.distances[:, 0]
        nn = batch.indices[:, 0]
        keep = d <= rejection_dist
        if keep.sum() < 3:
            if np.allclose(R_total, np.eye(3)) and np.allclose(t_total, 0.0):
                warnings.warn("ICP: fewer than 3 pairs within rejection "
                              "distance; returning identity motion")
                return RigidMotion.identity()
            break
        R_d, t_d = kabsch(moved[keep], tgt[nn[keep]])
        R_total = R_d @ R_total
        t_total = R_d @ t_total + t_d
        angle = float(np.linalg.norm(rotation_vector(R_d)))
        if angle < 1e-6 and float(np.linalg.norm(t_d)) < 1e-6:
            break
    return RigidMotion(rotation_vector(R_total), t_total)

"""Synthetic scenes with exact ground truth for verification.

A scene is a planar-plus-clutter static background and a number of box
shaped rigid bodies, all carried by a global sensor motion, with each box
moving on its own. The target frame contains the transformed twin of every
non-dropped source point, so correspondence exists by construction; optional
Gaussian noise (clipped at 6 sigma) and a target drop fraction emulate
measurement error and occlusion. Ground truth flow is the exact clean
displacement of each source point.

Boxes float well clear of the background so the rigidity neighborhoods of
distinct bodies never mix, the same separation that ground-point filtering
produces in driving datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FlowField, InvalidConfig, PointCloud, RigidMotion
from .egomotion import rodrigues


@dataclass(frozen=True)
class SceneConfig:
    """Generator knobs; see :func:`gen_scene` for semantics."""

    n_background: int = 2048
    n_per_object: int = 256
    object_count: int = 0
    extent: float = 20.0
    ego_yaw_deg: float = 0.0
    ego_translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    object_speed: float = 0.0        # meters per frame
    object_yaw_deg: float = 0.0      # per frame, about the object center
    noise_sigma: float = 0.0
    drop_fraction: float = 0.0
    frames: int = 2

    def validate(self) -> None:
        if self.n_background + self.object_count * self.n_per_object < 10:
            raise InvalidConfig("scene must contain at least 10 points")
        if self.object_count > 0 and self.n_per_object < 1:
            raise InvalidConfig("n_per_object must be >= 1 when objects exist")
        if self.noise_sigma < 0:
            raise InvalidConfig(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.drop_fraction <= 0.5:
            raise InvalidConfig(
                f"drop_fraction must lie in [0, 0.5], got {self.drop_fraction}")
        if self.frames < 2:
            raise InvalidConfig("a scene needs at least 2 frames")
        if self.extent <= 0:
            raise InvalidConfig(f"extent must be positive, got {self.extent}")


@dataclass(frozen=True)
class SyntheticScene:
    source: PointCloud
    target: PointCloud
    gt_flow: FlowField          # exact clean displacement per source point
    gt_motion: RigidMotion      # sensor motion between the two frames
    dynamic_mask: np.ndarray    # per source point
    config: SceneConfig
    seed: int


@dataclass(frozen=True)
class SyntheticSequence:
    clouds: list[PointCloud]
    gt_flows: list[FlowField]   # one per consecutive pair, in pair-source order
    gt_motion: RigidMotion
    dynamic_masks: list[np.ndarray]
    config: SceneConfig
    seed: int


# -- presets ----------------------------------------------------------------

PRESETS: dict[str, SceneConfig] = {
    "static_world": SceneConfig(n_background=2048),
    "ego_only": SceneConfig(n_background=2048, ego_translation=(0.5, 0.0, 0.0)),
    "ego_plus_objects": SceneConfig(
        n_background=3584, n_per_object=256, object_count=2,
        ego_yaw_deg=2.0, ego_translation=(0.5, 0.0, 0.0), object_speed=0.5),
    "occluded": SceneConfig(
        n_background=1664, n_per_object=192, object_count=2,
        ego_yaw_deg=2.0, ego_translation=(0.5, 0.0, 0.0), object_speed=0.5,
        drop_fraction=0.3),
    "sequence5": SceneConfig(
        n_background=1664, n_per_object=192, object_count=2,
        ego_yaw_deg=1.0, ego_translation=(0.3, 0.0, 0.0), object_speed=0.3,
        frames=5),
}


def preset(name: str) -> SceneConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidConfig(
            f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None


# -- world construction -----------------------------------------------------

@dataclass(frozen=True)
class _Box:
    center: np.ndarray
    direction: np.ndarray  # horizontal unit vector of travel


def _sample_background(cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    n_plane = int(round(cfg.n_background * 0.6))
    n_clutter = cfg.n_background - n_plane
    plane = np.column_stack([
        rng.uniform(-cfg.extent, cfg.extent, n_plane),
        rng.uniform(-cfg.extent, cfg.extent, n_plane),
        rng.normal(0.0, 0.02, n_plane),
    ])
    clutter = np.column_stack([
        rng.uniform(-cfg.extent, cfg.extent, n_clutter),
        rng.uniform(-cfg.extent, cfg.extent, n_clutter),
        rng.uniform(0.2, 1.5, n_clutter),
    ])
    return np.vstack([plane, clutter])


def _sample_box_surface(rng: np.random.Generator, half: np.ndarray,
                        n: int) -> np.ndarray:
    # Pick faces with probability proportional to area, then sample uniformly
    # on each chosen face.
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    face_axis = rng.choice(3, size=n, p=areas / areas.sum())
    face_sign = rng.choice([-1.0, 1.0], size=n)
    pts = rng.uniform(-1.0, 1.0, (n, 3)) * half
    pts[np.arange(n), face_axis] = face_sign * half[face_axis]
    return pts


def _place_boxes(cfg: SceneConfig, rng: np.random.Generator) -> list[_Box]:
    # Bodies float well above the clutter ceiling so k-NN rigidity
    # neighborhoods never bridge a body and the background.
    boxes: list[_Box] = []
    span = 0.6 * cfg.extent
    while len(boxes) < cfg.object_count:
        center = np.array([rng.uniform(-span, span), rng.uniform(-span, span),
                           rng.uniform(5.0, 6.5)])
        if any(np.linalg.norm(center[:2] - b.center[:2]) < 8.0 for b in boxes):
            continue
        angle = rng.uniform(0.0, 2.0 * np.pi)
        boxes.append(_Box(center=center,
                          direction=np.array([np.cos(angle), np.sin(angle), 0.0])))
    return boxes


def _build_world(cfg: SceneConfig, rng: np.random.Generator):
    points = [_sample_background(cfg, rng)]
    boxes = _place_boxes(cfg, rng)
    for box in boxes:
        half = rng.uniform(1.0, 2.0, 3)
        points.append(box.center + _sample_box_surface(rng, half, cfg.n_per_object))
    pts = np.vstack(points)
    mask = np.zeros(pts.shape[0], dtype=bool)
    mask[cfg.n_background:] = True
    object_id = np.full(pts.shape[0], -1)
    for k in range(cfg.object_count):
        lo = cfg.n_background + k * cfg.n_per_object
        object_id[lo:lo + cfg.n_per_object] = k
    return pts, mask, object_id, boxes


def _step_clean(cfg: SceneConfig, pts: np.ndarray, object_id: np.ndarray,
                boxes: list[_Box], frame: int) -> np.ndarray:
    """Advance clean point positions by one frame of motion."""
    moved = pts.copy()
    if cfg.object_count and (cfg.object_speed or cfg.object_yaw_deg):
        R_obj = rodrigues([0.0, 0.0, np.deg2rad(cfg.object_yaw_deg)])
        for k, box in enumerate(boxes):
            sel = object_id == k
            # The box center travels with the box, so rotate about the
            # current center, not the frame-0 one.
            center = box.center + frame * cfg.object_speed * box.direction
            moved[sel] = ((pts[sel] - center) @ R_obj.T + center
                          + cfg.object_speed * box.direction)
    R_ego = rodrigues([0.0, 0.0, np.deg2rad(cfg.ego_yaw_deg)])
    return moved @ R_ego.T + np.asarray(cfg.ego_translation)


def ego_motion(cfg: SceneConfig) -> RigidMotion:
    return RigidMotion(np.array([0.0, 0.0, np.deg2rad(cfg.ego_yaw_deg)]),
                       np.asarray(cfg.ego_translation, dtype=np.float64))


def _clipped_noise(rng: np.random.Generator, sigma: float,
                   shape: tuple) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(shape)
    return np.clip(rng.normal(0.0, sigma, shape), -6.0 * sigma, 6.0 * sigma)


# -- public generators ------------------------------------------------------

def gen_scene(config: SceneConfig, seed: int) -> SyntheticScene:
    """Deterministically generate one source/target pair with ground truth.

    The target holds the moved twin of every source point (noise-perturbed,
    order shuffled), minus a dropped fraction; ``gt_flow`` is the exact clean
    displacement regardless of noise or drop.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    p0, mask, object_id, boxes = _build_world(config, rng)
    p1 = _step_clean(config, p0, object_id, boxes, frame=0)

    n = p0.shape[0]
    observed = p1 + _clipped_noise(rng, config.noise_sigma, p1.shape)
    perm = rng.permutation(n)
    n_keep = n - int(round(config.drop_fraction * n))
    target = PointCloud(observed[perm[:n_keep]])

    return SyntheticScene(
        source=PointCloud(p0),
        target=target,
        gt_flow=FlowField(p1 - p0),
        gt_motion=ego_motion(config),
        dynamic_mask=mask,
        config=config,
        seed=seed,
    )


def gen_sequence(config: SceneConfig, seed: int,
                 n_frames: int | None = None) -> SyntheticSequence:
    """Generate ``n_frames`` clouds of one scene under constant velocities.

    Every frame is a shuffled, noise-perturbed view of the same moving
    points. Dropping is not supported here: pair sources must stay complete
    for the per-pair ground-truth flows to be defined.
    """
    config.validate()
    if config.drop_fraction != 0.0:
        raise InvalidConfig("sequence generation requires drop_fraction = 0")
    frames = config.frames if n_frames is None else n_frames
    if frames < 2:
        raise InvalidConfig("a sequence needs at least 2 frames")

    rng = np.random.default_rng(seed)
    p0, mask, object_id, boxes = _build_world(config, rng)
    n = p0.shape[0]

    clean = [p0]
    for f in range(frames - 1):
        clean.append(_step_clean(config, clean[-1], object_id, boxes, frame=f))

    perms = [np.arange(n)] + [rng.permutation(n) for _ in range(frames - 1)]
    clouds = [
        PointCloud(clean[f][perms[f]]
                   + _clipped_noise(rng, config.noise_sigma, (n, 3)))
        for f in range(frames)
    ]
    gt_flows = [FlowField((clean[f + 1] - clean[f])[perms[f]])
                for f in range(frames - 1)]
    masks = [mask[perms[f]] for f in range(frames)]

    return SyntheticSequence(clouds=clouds, gt_flows=gt_flows,
                             gt_motion=ego_motion(config),
                             dynamic_masks=masks, config=config, seed=seed)


def total_flow(flow: FlowField, motion: RigidMotion,
               source: PointCloud) -> FlowField:
    """Full per-point displacement R p + t + f - p.

    The optimizer's flow field is residual motion on top of the sensor
    motion; ground-truth flows of synthetic scenes (and dataset labels) are
    total displacements, so comparisons go through this.
    """
    R = rodrigues(motion.r)
    return FlowField(source.points @ R.T + motion.t + flow.vectors
                     - source.points)

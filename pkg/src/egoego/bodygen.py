"""Synthetic body-motion data: a 22-joint skeleton, procedural gait, analytic SDF
scenes, placement, penetration filtering and chunking."""
from dataclasses import dataclass, field

import numpy as np

from . import geom3d
from .diffusion import N_JOINTS, joint_positions, joint_rot6d, pack_motion
from .trajkit import HeadTrajectory

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist",
)  # fmt: skip
PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19)

# z up, facing +x, left is +y; a ~1.7 m figure whose toes sit on z = 0 when the pelvis is at 0.94 m
OFFSETS = np.array([
    [0.0, 0.0, 0.0],
    [0.0, 0.09, -0.09], [0.0, -0.09, -0.09], [0.0, 0.0, 0.11],
    [0.0, 0.01, -0.40], [0.0, -0.01, -0.40], [0.0, 0.0, 0.14],
    [0.0, 0.0, -0.40], [0.0, 0.0, -0.40], [0.0, 0.0, 0.05],
    [0.12, 0.0, -0.05], [0.12, 0.0, -0.05], [0.0, 0.0, 0.22],
    [0.0, 0.07, 0.12], [0.0, -0.07, 0.12], [0.0, 0.0, 0.09],
    [0.0, 0.12, 0.02], [0.0, -0.12, 0.02],
    [0.0, 0.26, 0.0], [0.0, -0.26, 0.0],
    [0.0, 0.25, 0.0], [0.0, -0.25, 0.0],
])  # fmt: skip

SCENE_HEADER = "# egoego-scene v1"


class PlacementError(RuntimeError):
    pass


class SceneFormatError(ValueError):
    pass


@dataclass
class Skeleton:
    parents: tuple = PARENTS
    offsets: np.ndarray = field(default_factory=lambda: OFFSETS.copy())
    head: int = 15
    left_toe: int = 10
    right_toe: int = 11
    left_ankle: int = 7
    right_ankle: int = 8

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if len(self.parents) != len(self.offsets) or self.offsets.shape[1:] != (3,):
            raise ValueError("parents and offsets disagree")
        if not np.all(np.isfinite(self.offsets)):
            raise ValueError("offsets must be finite")
        self.order = topological_order(self.parents)
        for j in self.foot_joints + (self.head,):
            if not 0 <= j < len(self.parents):
                raise ValueError(f"named joint index {j} out of range")

    @property
    def n_joints(self):
        return len(self.parents)

    @property
    def foot_joints(self):
        return (self.left_toe, self.right_toe, self.left_ankle, self.right_ankle)

    @property
    def bones(self):
        return [(p, j) for j, p in enumerate(self.parents) if p >= 0]


def topological_order(parents):
    """Parents-before-children order; raises on cycles or multiple roots."""
    n = len(parents)
    roots = [j for j, p in enumerate(parents) if p < 0]
    if roots != [0]:
        raise ValueError(f"skeleton must have exactly one root at joint 0, got {roots}")
    children = {j: [] for j in range(n)}
    for j, p in enumerate(parents):
        if p >= 0:
            if p >= n:
                raise ValueError(f"parent index {p} out of range")
            children[p].append(j)
    order, stack = [], [0]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != n:
        raise ValueError("parent array contains a cycle")
    return order


def fk_global(skel, root_pos, global_rots):
    """Joint positions from the root position and per-joint global rotations.

    Broadcasts over leading frame axes: root_pos (..., 3), global_rots (..., J, 3, 3).
    """
    root_pos = np.asarray(root_pos, dtype=np.float64)
    global_rots = np.asarray(global_rots, dtype=np.float64)
    pos = np.empty(global_rots.shape[:-2] + (3,))
    pos[..., 0, :] = root_pos
    for j in skel.order[1:]:
        p = skel.parents[j]
        pos[..., j, :] = pos[..., p, :] + global_rots[..., p, :, :] @ skel.offsets[j]
    return pos


def globals_from_locals(skel, local_rots):
    glob = np.empty_like(local_rots)
    glob[..., 0, :, :] = local_rots[..., 0, :, :]
    for j in skel.order[1:]:
        glob[..., j, :, :] = glob[..., skel.parents[j], :, :] @ local_rots[..., j, :, :]
    return glob


# ----------------------------------------------------------------------------
# procedural motion


@dataclass
class MotionParams:
    speed: float = 1.2  # m/s
    step_freq: float = 1.8  # steps per second
    hip_amp: float = 0.45  # rad
    knee_amp: float = 0.6
    shoulder_amp: float = 0.35
    turn_rate: float = 0.0  # rad/s
    head_bob: float = 0.01  # m, at most 0.02
    head_sway: float = 0.08  # rad
    seed: int = 0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        if not self.step_freq > 0:
            raise ValueError("step frequency must be positive")
        if not 0 <= self.head_bob <= 0.02:
            raise ValueError("head_bob must lie in [0, 0.02] m to keep feet near the floor")


def root_path(speed, turn_rate, heading0, t):
    """Closed-form planar root path under constant speed and turning rate."""
    if abs(turn_rate) < 1e-12:
        return np.stack([speed * t * np.cos(heading0), speed * t * np.sin(heading0)], -1), np.full_like(t, heading0)
    heading = heading0 + turn_rate * t
    r = speed / turn_rate
    xy = np.stack([r * (np.sin(heading) - np.sin(heading0)), -r * (np.cos(heading) - np.cos(heading0))], -1)
    return xy, heading


def procedural_motion(params, T, skel=None, frame_rate=30.0):
    """Sinusoidal walk: T x 198 rows of global joint positions and rot6d."""
    skel = skel or Skeleton()
    if T < 2:
        raise ValueError("procedural motion needs T >= 2")
    rng = np.random.default_rng(params.seed)
    phase0, heading0, sway_phase = rng.uniform(0, 2 * np.pi, 3)
    t = np.arange(T) / frame_rate
    gait = np.pi * params.step_freq * t + phase0  # one gait cycle spans two steps
    xy, heading = root_path(params.speed, params.turn_rate, heading0, t)

    J = skel.n_joints
    local = np.broadcast_to(np.eye(3), (T, J, 3, 3)).copy()
    swing = np.sin(gait)
    local[:, 0] = geom3d.rot_z(heading)
    local[:, 1] = _ry(-params.hip_amp * swing)
    local[:, 2] = _ry(params.hip_amp * swing)
    local[:, 4] = _ry(params.knee_amp * np.maximum(0.0, np.sin(gait + 1.2)))
    local[:, 5] = _ry(params.knee_amp * np.maximum(0.0, np.sin(gait + 1.2 + np.pi)))
    local[:, 3] = geom3d.rot_z(0.1 * params.hip_amp * swing)
    local[:, 6] = geom3d.rot_z(-0.15 * params.hip_amp * swing)
    local[:, 15] = geom3d.rot_z(params.head_sway * np.sin(0.37 * gait + sway_phase)) @ _ry(
        0.3 * params.head_sway * np.sin(2 * gait)
    )
    hang = np.radians(75.0)
    local[:, 16] = _ry(params.shoulder_amp * swing) @ geom3d.rot_x(-hang)
    local[:, 17] = _ry(-params.shoulder_amp * swing) @ geom3d.rot_x(hang)
    local[:, 18] = geom3d.rot_z(0.3)
    local[:, 19] = geom3d.rot_z(-0.3)

    glob = globals_from_locals(skel, local)
    pos = fk_global(skel, np.zeros((T, 3)), glob)
    lowest = pos[:, list(skel.foot_joints), 2].min(-1)
    bob = params.head_bob * np.sin(2 * gait)
    root = np.concatenate([xy, (0.01 + bob - lowest)[:, None]], -1)
    pos = pos + root[:, None, :]
    return pack_motion(pos, geom3d.rotmat_to_sixd(glob, check=False))


def _ry(angles):
    angles = np.asarray(angles, dtype=np.float64)
    return geom3d.so3_exp(np.stack([np.zeros_like(angles), angles, np.zeros_like(angles)], -1))


def motion_rotations(motion):
    return geom3d.sixd_to_rotmat(joint_rot6d(motion))


def head_from_motion(motion, skel=None, frame_rate=30.0):
    skel = skel or Skeleton()
    pos = joint_positions(motion)[:, skel.head]
    rot = geom3d.sixd_to_rotmat(joint_rot6d(motion)[:, skel.head])
    return HeadTrajectory(pos, rot, frame_rate)


def head_condition(motion, skel=None):
    """Head position ++ head rot6d (T x 9), sliced straight from the motion rows."""
    skel = skel or Skeleton()
    motion = np.asarray(motion)
    h = skel.head
    return np.concatenate([motion[..., 3 * h : 3 * h + 3], motion[..., 66 + 6 * h : 66 + 6 * h + 6]], -1)


def rigid_transform_motion(motion, yaw, translation, pivot=(0.0, 0.0, 0.0)):
    """Rotate about z by ``yaw`` around ``pivot`` then translate, for positions and rotations."""
    Rz = geom3d.rot_z(yaw)
    pos = (joint_positions(motion) - np.asarray(pivot)) @ Rz.T + np.asarray(translation)
    r6 = joint_rot6d(motion)
    r6 = np.concatenate([r6[..., :3] @ Rz.T, r6[..., 3:] @ Rz.T], -1)
    return pack_motion(pos, r6)


# ----------------------------------------------------------------------------
# scenes


@dataclass
class SdfScene:
    floors: list = field(default_factory=list)  # (point, unit normal)
    boxes: list = field(default_factory=list)  # (center, half extents)

    def __post_init__(self):
        if not self.floors:
            raise ValueError("a scene needs at least one floor")
        self.floors = [(np.asarray(p, float), geom3d.normalize(n)) for p, n in self.floors]
        self.boxes = [(np.asarray(c, float), np.asarray(h, float)) for c, h in self.boxes]
        for _, h in self.boxes:
            if np.any(h <= 0):
                raise ValueError("box half extents must be positive")


def floor_sdf(p, point, normal):
    return (np.asarray(p) - point) @ normal


def box_sdf(p, center, half):
    q = np.abs(np.asarray(p, dtype=np.float64) - center) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(-1), 0.0)
    return outside + inside


def scene_sdf(scene, p):
    d = [floor_sdf(p, *f) for f in scene.floors] + [box_sdf(p, *b) for b in scene.boxes]
    return np.min(np.stack(d), axis=0)


def body_points(joints, skel=None):
    """22 joints plus the 21 bone midpoints, (..., 43, 3)."""
    skel = skel or Skeleton()
    bones = np.array(skel.bones)
    mids = 0.5 * (joints[..., bones[:, 0], :] + joints[..., bones[:, 1], :])
    return np.concatenate([joints, mids], -2)


def penetration_loss(points, scene):
    """Sum of |d| over points with negative signed distance (summed over the last point axis)."""
    d = scene_sdf(scene, points)
    return np.where(d < 0, -d, 0.0).sum(-1)


def frame_penetration(motion, scene, skel=None):
    return penetration_loss(body_points(joint_positions(motion), skel), scene)


def filter_by_penetration(motion, scene, threshold=2.0, skel=None):
    """Indices of frames whose penetration loss is strictly below ``threshold``."""
    return [int(t) for t in np.flatnonzero(frame_penetration(motion, scene, skel) < threshold)]


def chunk_sequence(motion, length=150):
    if length < 2:
        raise ValueError("chunk length must be >= 2")
    return [motion[i : i + length] for i in range(0, len(motion) - length + 1, length)]


def place_sequence(motion, scene, seed, skel=None, region=((-3.0, -3.0), (3.0, 3.0)), max_attempts=100):
    """Random yaw and location with the first frame's lowest foot joint on the first floor."""
    skel = skel or Skeleton()
    rng = np.random.default_rng(seed)
    point, normal = scene.floors[0]
    lo, hi = np.asarray(region[0], float), np.asarray(region[1], float)
    pivot = joint_positions(motion)[0, 0].copy()
    pivot[2] = 0.0
    feet = list(skel.foot_joints)
    for _ in range(max_attempts):
        yaw = rng.uniform(0.0, 2 * np.pi)
        xy = rng.uniform(lo, hi)
        placed = rigid_transform_motion(motion, yaw, [xy[0], xy[1], 0.0], pivot)
        first = joint_positions(placed)[0, feet]
        h = floor_sdf(first, point, normal).min()
        placed = rigid_transform_motion(placed, 0.0, -h * normal)
        if frame_penetration(placed[:1], scene, skel)[0] <= 1e-9:
            return placed
    raise PlacementError(f"no free placement found after {max_attempts} attempts")


# ----------------------------------------------------------------------------
# scene files


def save_scene(scene, path):
    lines = [SCENE_HEADER]
    for p, n in scene.floors:
        lines.append("floor " + " ".join(repr(float(v)) for v in (*p, *n)))
    for c, h in scene.boxes:
        lines.append("box " + " ".join(repr(float(v)) for v in (*c, *h)))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_scene(path):
    with open(path) as f:
        lines = [ln.strip() for ln in f]
    if not lines or lines[0] != SCENE_HEADER:
        raise SceneFormatError(f"{path}: missing or unsupported header (expected '{SCENE_HEADER}')")
    floors, boxes = [], []
    for k, ln in enumerate(lines[1:], start=2):
        if not ln or ln.startswith("#"):
            continue
        kind, *vals = ln.split()
        try:
            vals = [float(v) for v in vals]
        except ValueError as e:
            raise SceneFormatError(f"{path}:{k}: {e}") from None
        if len(vals) != 6 or kind not in ("floor", "box"):
            raise SceneFormatError(f"{path}:{k}: expected 'floor|box' with 6 numbers")
        (floors if kind == "floor" else boxes).append((vals[:3], vals[3:]))
    return SdfScene(floors, boxes)


def default_scene(split="train"):
    """Flat floor with a few box obstacles; the layouts differ per split."""
    floor = [((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))]
    if split == "train":
        boxes = [((4.0, 4.0, 0.4), (0.5, 0.5, 0.4)), ((-4.5, 2.0, 0.5), (0.4, 1.0, 0.5))]
    else:
        boxes = [((-4.0, -4.0, 0.45), (0.6, 0.6, 0.45)), ((4.5, -1.5, 0.75), (0.3, 0.8, 0.75))]
    return SdfScene(floor, boxes)

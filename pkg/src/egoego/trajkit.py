"""Head trajectories, SLAM-output emulation and the stage-1 calibration steps."""
from dataclasses import dataclass, field, replace

import numpy as np

from . import geom3d

GRAVITY = np.array([0.0, 0.0, -1.0])
HEAD_FEATURE_DIM = 18
IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


class ScaleUndefinedError(ValueError):
    """The observed trajectory barely moves, so the SLAM scale cannot be calibrated."""


@dataclass
class HeadTrajectory:
    positions: np.ndarray  # (T, 3) meters
    rotations: np.ndarray  # (T, 3, 3)
    frame_rate: float = 30.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        T = len(self.positions)
        if T < 2:
            raise ValueError("a head trajectory needs at least 2 frames")
        if self.positions.shape != (T, 3) or self.rotations.shape != (T, 3, 3):
            raise ValueError(
                f"shape mismatch: positions {self.positions.shape}, rotations {self.rotations.shape}"
            )
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        geom3d.check_rotation(self.rotations)

    def __len__(self):
        return len(self.positions)

    @property
    def dt(self):
        return 1.0 / self.frame_rate


@dataclass
class SlamEmulation:
    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    position_noise: float = 0.0
    rotation_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"SLAM scale must be positive, got {self.scale}")
        if self.position_noise < 0 or self.rotation_noise < 0:
            raise ValueError("noise standard deviations must be non-negative")
        self.rotation = geom3d.check_rotation(self.rotation)


def emulate_slam(traj, params):
    """Corrupt a clean trajectory the way monocular SLAM would: unknown scale and frame, plus jitter."""
    rng = np.random.default_rng(params.seed)
    Rc = params.rotation
    pos = params.scale * traj.positions @ Rc.T
    rot = Rc @ traj.rotations
    T = len(traj)
    pos_noise = rng.standard_normal((T, 3))
    rot_noise = rng.standard_normal((T, 3))
    if params.position_noise > 0:
        pos = pos + params.position_noise * pos_noise
    if params.rotation_noise > 0:
        rot = geom3d.so3_exp(params.rotation_noise * rot_noise) @ rot
    return HeadTrajectory(pos, rot, traj.frame_rate)


def relative_rotations(traj):
    """O_{t-1}^T O_t per frame, identity at the first frame."""
    R = traj.rotations
    rel = np.empty_like(R)
    rel[0] = np.eye(3)
    rel[1:] = np.swapaxes(R[:-1], -1, -2) @ R[1:]
    return rel


def position_differences(traj):
    d = np.zeros_like(traj.positions)
    d[1:] = np.diff(traj.positions, axis=0)
    return d


def head_features(traj):
    """Per-frame [position, rot6d, position difference, rot6d of relative rotation] (T x 18)."""
    return np.concatenate(
        [
            traj.positions,
            geom3d.rotmat_to_sixd(traj.rotations, check=False),
            position_differences(traj),
            geom3d.rotmat_to_sixd(relative_rotations(traj), check=False),
        ],
        axis=-1,
    )


def step_distances(positions):
    return np.linalg.norm(np.diff(np.asarray(positions, dtype=np.float64), axis=0), axis=-1)


def mean_step_distance(traj):
    positions = traj.positions if isinstance(traj, HeadTrajectory) else np.asarray(traj)
    if len(positions) < 2:
        raise ValueError("mean step distance needs at least 2 frames")
    return float(step_distances(positions).mean())


def calibrate_scale(d_pred, d_slam, eps=1e-6):
    if not d_slam > eps:
        raise ScaleUndefinedError(
            f"observed mean step distance {d_slam:.3g} m <= {eps:g} m; trajectory is near-static"
        )
    return d_pred / d_slam


def gravity_alignment_rotation(g):
    return geom3d.rotation_between_vectors(g, GRAVITY)


def apply_gravity_alignment(traj, g):
    Rg = gravity_alignment_rotation(g)
    return HeadTrajectory(traj.positions @ Rg.T, Rg @ traj.rotations, traj.frame_rate)


def integrate_angular_velocity(O_1, omegas, dt):
    """Right-compose body-frame increments: O_{t+1} = O_t exp(omega_t dt)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    O_1 = geom3d.check_rotation(O_1)
    omegas = np.asarray(omegas, dtype=np.float64).reshape(-1, 3)
    steps = geom3d.so3_exp(omegas * dt)
    out = np.empty((len(omegas) + 1, 3, 3))
    out[0] = O_1
    for t, step in enumerate(steps):
        out[t + 1] = out[t] @ step
    return out


def angular_velocities(traj):
    """Body-frame angular velocity per step (T-1 x 3), the inverse of integrate_angular_velocity."""
    return geom3d.so3_log(relative_rotations(traj)[1:]) * traj.frame_rate


def scale_trajectory(traj, s):
    return replace(traj, positions=s * traj.positions)


def fuse_head_estimate(slam_traj, g, d_pred, omega_pred, O_1):
    """Hybrid head estimate from SLAM plus learned gravity, step distances and angular velocity.

    ``d_pred`` and ``omega_pred`` hold one entry per step (T - 1). Because the first
    orientation ``O_1`` is known, the heading of the gravity-aligned SLAM frame is
    also rotated onto it so positions and integrated rotations share one frame.
    """
    T = len(slam_traj)
    d_pred = np.asarray(d_pred, dtype=np.float64)
    omega_pred = np.asarray(omega_pred, dtype=np.float64)
    if len(d_pred) != T - 1 or len(omega_pred) != T - 1:
        raise ValueError(f"expected {T - 1} step predictions, got {len(d_pred)} and {len(omega_pred)}")
    aligned = apply_gravity_alignment(slam_traj, g)
    s = calibrate_scale(float(d_pred.mean()), mean_step_distance(aligned))
    rotations = integrate_angular_velocity(O_1, omega_pred, slam_traj.dt)
    heading = geom3d.yaw_alignment(aligned.rotations[0], rotations[0])
    positions = s * aligned.positions @ heading.T
    return HeadTrajectory(positions, rotations, slam_traj.frame_rate)


def align_first_frame(pred, gt):
    """Rigidly move pred so its first pose matches gt's in heading and position.

    Only rotation about gravity is used; tilt errors are left for the metrics to see.
    """
    Ry = geom3d.yaw_alignment(pred.rotations[0], gt.rotations[0])
    pos = (pred.positions - pred.positions[0]) @ Ry.T + gt.positions[0]
    return HeadTrajectory(pos, Ry @ pred.rotations, pred.frame_rate)

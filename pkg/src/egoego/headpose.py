"""Learned stage-1 models: GravityNet and HeadNet, their losses, targets and
the surrogate optical-flow features that stand in for video."""
import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import geom3d, trajkit
from .nets import MLP, BackboneConfig, Transformer

FLOW_DIM = 64
MOTION_DIM = 9  # position difference (3) + relative rotation 6D (6)


# ----------------------------------------------------------------------------
# differentiable rotation helpers


def so3_exp_torch(v):
    theta_sq = (v * v).sum(-1)[..., None, None]
    small = theta_sq < 1e-16
    theta = torch.sqrt(torch.where(small, torch.ones_like(theta_sq), theta_sq))
    a = torch.where(small, 1.0 - theta_sq / 6.0, torch.sin(theta) / theta)
    b = torch.where(small, 0.5 - theta_sq / 24.0, (1.0 - torch.cos(theta)) / theta_sq.clamp_min(1e-16))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    o = torch.zeros_like(x)
    K = torch.stack(
        [torch.stack([o, -z, y], -1), torch.stack([z, o, -x], -1), torch.stack([-y, x, o], -1)], -2
    )
    eye = torch.eye(3, dtype=v.dtype, device=v.device)
    return eye + a * K + b * (K @ K)


def integrate_angular_velocity_torch(O_1, omegas, dt):
    """Batched body-frame integration; ``omegas`` (..., S, 3) -> rotations (..., S + 1, 3, 3)."""
    steps = so3_exp_torch(omegas * dt)
    out = [O_1.expand(steps.shape[:-3] + (3, 3))]
    for t in range(steps.shape[-3]):
        out.append(out[-1] @ steps[..., t, :, :])
    return torch.stack(out, dim=-3)


# ----------------------------------------------------------------------------
# GravityNet


class GravityNet(nn.Module):
    """Transformer over head-pose features; the first token feeds an MLP giving a unit gravity vector."""

    def __init__(self, cfg=None, d_in=trajkit.HEAD_FEATURE_DIM):
        super().__init__()
        cfg = cfg or BackboneConfig()
        self.backbone = Transformer(d_in, None, cfg)
        self.head = MLP(cfg.d_model, cfg.d_model, 3)
        self.register_buffer("feat_mean", torch.zeros(d_in))
        self.register_buffer("feat_std", torch.ones(d_in))

    def forward(self, features):
        _check_features(features, self.feat_mean.shape[0])
        h = self.backbone.hidden((features - self.feat_mean) / self.feat_std)
        g = self.head(h[..., 0, :])
        return g / g.norm(dim=-1, keepdim=True)


def _check_features(features, d_in):
    if features.dim() < 2 or features.shape[-1] != d_in:
        raise ValueError(f"expected (..., T, {d_in}) features, got {tuple(features.shape)}")


def gravitynet_forward(features, model):
    features = torch.as_tensor(features, dtype=next(model.parameters()).dtype)
    with torch.no_grad():
        return model(features).double().numpy()


def gravity_training_pair(clean, params):
    """Features of the emulated SLAM trajectory and the true gravity direction in its frame."""
    slam = trajkit.emulate_slam(clean, params)
    return trajkit.head_features(slam), params.rotation @ trajkit.GRAVITY


def gravity_loss(pred, target):
    """L1 over vector components, averaged over any leading batch axes."""
    return (pred - target).abs().sum(-1).mean()


def angular_error_deg(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    cos = np.sum(pred * target, -1) / (np.linalg.norm(pred, axis=-1) * np.linalg.norm(target, axis=-1))
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


# ----------------------------------------------------------------------------
# HeadNet


class HeadNet(nn.Module):
    """Per-frame step distance (softplus, meters) and head-frame angular velocity (rad/s)."""

    def __init__(self, cfg=None, d_in=FLOW_DIM):
        super().__init__()
        cfg = cfg or BackboneConfig()
        self.backbone = Transformer(d_in, None, cfg)
        self.dist_head = nn.Linear(cfg.d_model, 1)
        self.omega_head = nn.Linear(cfg.d_model, 3)
        self.register_buffer("feat_mean", torch.zeros(d_in))
        self.register_buffer("feat_std", torch.ones(d_in))
        self.register_buffer("dist_scale", torch.ones(()))
        self.register_buffer("omega_scale", torch.ones(()))

    def forward(self, features):
        _check_features(features, self.feat_mean.shape[0])
        h = self.backbone.hidden((features - self.feat_mean) / self.feat_std)
        d = F.softplus(self.dist_head(h)[..., 0]) * self.dist_scale
        omega = self.omega_head(h) * self.omega_scale
        return d, omega


def headnet_forward(features, model):
    features = torch.as_tensor(features, dtype=next(model.parameters()).dtype)
    with torch.no_grad():
        d, omega = model(features)
    return d.double().numpy(), omega.double().numpy()


def headnet_targets(traj):
    """Per-frame step distance and angular velocity; frame 1 carries zeros."""
    T = len(traj)
    d = np.zeros(T)
    d[1:] = trajkit.step_distances(traj.positions)
    omega = np.zeros((T, 3))
    omega[1:] = trajkit.angular_velocities(traj)
    return d, omega


def rotation_loss(R_pred, R_gt):
    """Mean over frames of the entrywise L1 norm of R_pred R_gt^T - I."""
    eye = torch.eye(3, dtype=R_pred.dtype, device=R_pred.device)
    return (R_pred @ R_gt.transpose(-1, -2) - eye).abs().sum((-1, -2)).mean()


def headnet_loss(d_pred, omega_pred, d_gt, omega_gt, O_1, dt):
    """L_dist + L_vel + L_rot over per-frame predictions (frame 1 is the zero-motion frame).

    Rotations are integrated from ``O_1`` using frames 2..T of each angular velocity sequence.
    """
    if d_pred.shape != d_gt.shape or omega_pred.shape != omega_gt.shape:
        raise ValueError("prediction and target lengths differ")
    if not dt > 0:
        raise ValueError("dt must be positive")
    l_dist = (d_pred - d_gt).abs().mean()
    l_vel = (omega_pred - omega_gt).abs().sum(-1).mean()
    R_pred = integrate_angular_velocity_torch(O_1, omega_pred[..., 1:, :], dt)
    R_gt = integrate_angular_velocity_torch(O_1, omega_gt[..., 1:, :], dt)
    return l_dist + l_vel + rotation_loss(R_pred, R_gt)


# ----------------------------------------------------------------------------
# surrogate flow features


def make_flow_embedding(seed, dim=FLOW_DIM):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((MOTION_DIM, dim)) / np.sqrt(MOTION_DIM)


def relative_motion(traj):
    """Per-second head motion: [position difference, relative-rotation 6D minus identity] * fps."""
    rel6d = geom3d.rotmat_to_sixd(trajkit.relative_rotations(traj), check=False) - trajkit.IDENTITY_6D
    return np.concatenate([trajkit.position_differences(traj), rel6d], -1) * traj.frame_rate


def surrogate_flow_features(traj, noise_std, seed, embedding):
    """Fixed linear embedding of relative head motion plus Gaussian noise (T x F)."""
    feats = relative_motion(traj) @ embedding
    if noise_std > 0:
        feats = feats + noise_std * np.random.default_rng(seed).standard_normal(feats.shape)
    return feats

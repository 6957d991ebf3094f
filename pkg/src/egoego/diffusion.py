"""Conditional DDPM over full-body motion with an x0-predicting transformer denoiser."""
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .nets import MLP, BackboneConfig, Transformer

N_JOINTS = 22
POSE_DIM = N_JOINTS * 9  # 66 positions + 132 rot6d
COND_DIM = 9
SIGMA_CHOICES = ("posterior", "beta")


@dataclass
class NoiseSchedule:
    """Tables indexed by step n = 1..N at position n - 1."""

    betas: np.ndarray
    sigma_kind: str = "posterior"

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if not np.all((self.betas > 0) & (self.betas < 1)):
            raise ValueError("betas must lie in (0, 1)")
        if self.sigma_kind not in SIGMA_CHOICES:
            raise ValueError(f"sigma_kind must be one of {SIGMA_CHOICES}")
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        prev = np.concatenate([[1.0], self.alpha_bars[:-1]])
        if self.sigma_kind == "posterior":
            self.sigma2 = self.betas * (1.0 - prev) / (1.0 - self.alpha_bars)
        else:
            self.sigma2 = self.betas.copy()

    @property
    def N(self):
        return len(self.betas)

    def alpha_bar(self, n):
        """Cumulative product with the alpha_bar(0) = 1 convention."""
        return 1.0 if n == 0 else float(self.alpha_bars[n - 1])

    def _check_step(self, n, lo=1):
        if not lo <= n <= self.N:
            raise ValueError(f"diffusion step {n} outside [{lo}, {self.N}]")


def make_schedule(N, beta_1, beta_N, sigma_kind="posterior"):
    if N < 1 or not 0 < beta_1 <= beta_N < 1:
        raise ValueError(f"invalid schedule N={N}, beta range [{beta_1}, {beta_N}]")
    return NoiseSchedule(np.linspace(beta_1, beta_N, N), sigma_kind)


def forward_sample(x0, n, eps, sched):
    """Closed-form q(x_n | x_0)."""
    sched._check_step(n, lo=0)
    if eps.shape != x0.shape:
        raise ValueError("noise and data shapes differ")
    ab = sched.alpha_bar(n)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def forward_sample_batch(x0, n, eps, sched):
    """Per-item steps ``n`` (LongTensor, B) for a batch x0 (B, ...)."""
    ab = torch.as_tensor(sched.alpha_bars, dtype=x0.dtype)[n - 1]
    ab = ab.view(-1, *([1] * (x0.dim() - 1)))
    return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps


def posterior_mean(x_n, x0_hat, n, sched):
    sched._check_step(n)
    a = float(sched.alphas[n - 1])
    ab = sched.alpha_bar(n)
    ab_prev = sched.alpha_bar(n - 1)
    # scalar coefficients first, so n = 1 gives exactly 0 and 1
    c_n = math.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)
    c_0 = math.sqrt(ab_prev) * (1.0 - a) / (1.0 - ab)
    return c_n * x_n + c_0 * x0_hat


def noise_level_features(n, dim):
    n = torch.as_tensor(n, dtype=torch.float64).reshape(-1, 1)
    half = dim // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    ang = n * freq
    return torch.cat([torch.sin(ang), torch.cos(ang)], -1)


class Denoiser(nn.Module):
    """Per-frame [condition, noisy pose] tokens plus a noise-level embedding -> predicted x0."""

    def __init__(self, cfg=None, pose_dim=POSE_DIM, cond_dim=COND_DIM):
        super().__init__()
        cfg = cfg or BackboneConfig()
        self.pose_dim, self.cond_dim = pose_dim, cond_dim
        self.backbone = Transformer(cond_dim + pose_dim, pose_dim, cfg)
        self.noise_embed = MLP(cfg.d_model, cfg.d_model, cfg.d_model)

    def forward(self, x_n, n, c):
        squeeze = x_n.dim() == 2
        if squeeze:
            x_n, c = x_n.unsqueeze(0), c.unsqueeze(0)
        if x_n.shape[-1] != self.pose_dim or c.shape[-1] != self.cond_dim or x_n.shape[:-1] != c.shape[:-1]:
            raise ValueError(f"shape mismatch: x_n {tuple(x_n.shape)}, c {tuple(c.shape)}")
        B = x_n.shape[0]
        n = torch.as_tensor(n).reshape(-1).expand(B)
        emb = self.noise_embed(noise_level_features(n, self.backbone.cfg.d_model).to(x_n.dtype))
        out = self.backbone(torch.cat([c, x_n], -1), extra=emb[:, None, :])
        return out.squeeze(0) if squeeze else out


def denoiser_forward(x_n, n, c, params):
    return params(x_n, n, c)


def reverse_step(x_n, n, c, denoiser, sched, generator):
    """One ancestral step x_n -> x_{n-1}; ``denoiser(x_n, n, c)`` predicts x0."""
    sched._check_step(n)
    mu = posterior_mean(x_n, denoiser(x_n, n, c), n, sched)
    sigma = math.sqrt(sched.sigma2[n - 1])
    if sigma == 0.0:
        return mu
    z = torch.randn(x_n.shape, generator=generator, dtype=x_n.dtype)
    return mu + sigma * z


def sample(denoiser, c, T, sched, generator, pose_dim=POSE_DIM):
    """Full reverse chain from x_N ~ N(0, I); ``c`` may carry a leading batch axis."""
    shape = tuple(c.shape[:-2]) + (T, pose_dim)
    x = torch.randn(shape, generator=generator, dtype=c.dtype)
    for n in range(sched.N, 0, -1):
        x = reverse_step(x, n, c, denoiser, sched, generator)
    return x


def diffusion_loss(denoiser, x0, c, generator, sched):
    """E_{n, eps} |x0_hat(x_n, n, c) - x0|, one draw of n per batch item."""
    xb, cb = x0, c
    if x0.dim() == 2:
        xb, cb = x0[None], None if c is None else c[None]
    B = xb.shape[0]
    n = torch.randint(1, sched.N + 1, (B,), generator=generator)
    eps = torch.randn(xb.shape, generator=generator, dtype=xb.dtype)
    x_n = forward_sample_batch(xb, n, eps, sched)
    return (denoiser(x_n, n, cb) - xb).abs().mean()


# ----------------------------------------------------------------------------
# motion layout helpers


def joint_positions(motion):
    motion = np.asarray(motion)
    return motion[..., : 3 * N_JOINTS].reshape(motion.shape[:-1] + (N_JOINTS, 3))


def joint_rot6d(motion):
    motion = np.asarray(motion)
    return motion[..., 3 * N_JOINTS :].reshape(motion.shape[:-1] + (N_JOINTS, 6))


def pack_motion(positions, rot6d):
    lead = positions.shape[:-2]
    return np.concatenate([positions.reshape(lead + (-1,)), rot6d.reshape(lead + (-1,))], -1)


def best_of_k(samples, gt):
    """Sample with the lowest MPJPE against ``gt`` (first one on ties) and its index."""
    from .metrics import mpjpe

    if len(samples) == 0:
        raise ValueError("best_of_k needs at least one sample")
    gt_j = joint_positions(gt)
    errs = [mpjpe(joint_positions(s), gt_j) for s in samples]
    i = int(np.argmin(errs))
    return samples[i], i


# ----------------------------------------------------------------------------
# model with data normalisation


class MotionDiffusion(nn.Module):
    """Denoiser + schedule + per-channel normalisation of motion and condition."""

    def __init__(self, cfg=None, sched=None, std_floor=1e-2):
        super().__init__()
        self.denoiser = Denoiser(cfg)
        self.sched = sched or make_schedule(1000, 1e-4, 0.02)
        self.std_floor = std_floor
        self.register_buffer("x_mean", torch.zeros(POSE_DIM))
        self.register_buffer("x_std", torch.ones(POSE_DIM))
        self.register_buffer("c_mean", torch.zeros(COND_DIM))
        self.register_buffer("c_std", torch.ones(COND_DIM))

    def fit_normalizer(self, motions, conds):
        x = np.asarray(motions, dtype=np.float64).reshape(-1, POSE_DIM)
        c = np.asarray(conds, dtype=np.float64).reshape(-1, COND_DIM)
        for name, arr in (("x", x), ("c", c)):
            getattr(self, f"{name}_mean").copy_(torch.as_tensor(arr.mean(0)))
            getattr(self, f"{name}_std").copy_(torch.as_tensor(np.maximum(arr.std(0), self.std_floor)))

    def normalize(self, x, c):
        return (x - self.x_mean) / self.x_std, (c - self.c_mean) / self.c_std

    def loss(self, x0, c, generator):
        xn, cn = self.normalize(x0, c)
        return diffusion_loss(self.denoiser, xn, cn, generator, self.sched)

    @torch.no_grad()
    def sample(self, c, generator):
        """Motions (..., T, 198) in world units for raw head conditions (..., T, 9)."""
        dtype = self.x_mean.dtype
        c = torch.as_tensor(c, dtype=dtype)
        cn = (c - self.c_mean) / self.c_std
        x = sample(self.denoiser, cn, c.shape[-2], self.sched, generator)
        return x * self.x_std + self.x_mean

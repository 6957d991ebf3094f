"""Shared sequence backbone (two pre-norm self-attention blocks), MLP heads,
the optimizer step and a finite-difference gradient checker."""
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

N_BLOCKS = 2


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class BackboneConfig:
    d_model: int = 256
    n_heads: int = 4
    d_ff: int = 512
    max_len: int = 512

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")


def sinusoidal_table(length, dim):
    pos = np.arange(length)[:, None]
    freq = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2) / dim))
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return torch.tensor(table, dtype=torch.float32)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model, n_heads):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = nn.Linear(d_model, d_model)
        # softmax is shift invariant, so a key bias would carry no gradient
        self.k = nn.Linear(d_model, d_model, bias=False)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def forward(self, x):
        B, T, D = x.shape

        def split(t):
            return t.view(B, T, self.n_heads, self.d_head).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.d_head), dim=-1)
        y = (att @ v).transpose(1, 2).reshape(B, T, D)
        return self.out(y)


class AttentionBlock(nn.Module):
    def __init__(self, d_model, n_heads, d_ff):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = MultiHeadSelfAttention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(nn.Linear(d_model, d_ff), nn.GELU(), nn.Linear(d_ff, d_model))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class Transformer(nn.Module):
    """Input projection + sinusoidal positions + two attention blocks + output projection.

    Attention is bidirectional. There is no final normalisation, which keeps a
    purely linear path from input to output. ``d_out=None`` returns token states.
    """

    def __init__(self, d_in, d_out, cfg=None):
        super().__init__()
        cfg = cfg or BackboneConfig()
        self.cfg = cfg
        self.d_in, self.d_out = d_in, d_out
        self.inp = nn.Linear(d_in, cfg.d_model)
        self.register_buffer("pos_table", sinusoidal_table(cfg.max_len, cfg.d_model), persistent=False)
        self.blocks = nn.ModuleList(
            AttentionBlock(cfg.d_model, cfg.n_heads, cfg.d_ff) for _ in range(N_BLOCKS)
        )
        self.outp = nn.Identity() if d_out is None else nn.Linear(cfg.d_model, d_out)

    def hidden(self, seq, extra=None):
        """Token states after both blocks; ``extra`` is added to every token before them."""
        squeeze = seq.dim() == 2
        if squeeze:
            seq = seq.unsqueeze(0)
        if seq.dim() != 3 or seq.shape[-1] != self.d_in:
            raise ValueError(f"expected (..., T, {self.d_in}) input, got {tuple(seq.shape)}")
        T = seq.shape[1]
        if T > self.pos_table.shape[0]:
            raise ValueError(f"sequence length {T} exceeds positional table {self.pos_table.shape[0]}")
        h = self.inp(seq) + self.pos_table[:T].to(seq.dtype)
        if extra is not None:
            h = h + extra
        for block in self.blocks:
            h = block(h)
        return h.squeeze(0) if squeeze else h

    def forward(self, seq, extra=None):
        return self.outp(self.hidden(seq, extra))


def transformer_encode(seq, model):
    return model(seq)


class MLP(nn.Module):
    """affine - GELU - affine"""

    def __init__(self, d_in, d_hidden, d_out):
        super().__init__()
        self.fc1 = nn.Linear(d_in, d_hidden)
        self.fc2 = nn.Linear(d_hidden, d_out)

    def forward(self, x):
        if x.shape[-1] != self.fc1.in_features:
            raise ValueError(f"expected trailing dim {self.fc1.in_features}, got {x.shape[-1]}")
        return self.fc2(F.gelu(self.fc1(x)))


def mlp_forward(x, model):
    return model(x)


@dataclass
class OptimState:
    """Adam moments (held by the torch optimizer) plus the step counter."""

    optimizer: torch.optim.Optimizer
    step: int = 0
    warmup: int = 0
    base_lr: float = 1e-4
    decay_steps: int = 0  # cosine decay to min_lr_ratio * base_lr over this many steps; 0 = constant
    min_lr_ratio: float = 0.02

    @classmethod
    def create(cls, model, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, warmup=0, decay_steps=0):
        opt = torch.optim.Adam(model.parameters(), lr=lr, betas=betas, eps=eps)
        return cls(opt, 0, warmup, lr, decay_steps)

    def current_lr(self):
        if self.warmup and self.step < self.warmup:
            return self.base_lr * (self.step + 1) / self.warmup
        if self.decay_steps:
            frac = min(max(self.step - self.warmup, 0) / max(self.decay_steps - self.warmup, 1), 1.0)
            lo = self.min_lr_ratio
            return self.base_lr * (lo + (1 - lo) * 0.5 * (1 + np.cos(np.pi * frac)))
        return self.base_lr


def train_step(model, opt, batch, loss_fn):
    """One Adam update; returns the pre-update loss value.

    Raises NonFiniteError naming the offending parameter when the loss or a
    gradient is not finite. Parameters are left untouched in that case.
    """
    for group in opt.optimizer.param_groups:
        group["lr"] = opt.current_lr()
    opt.optimizer.zero_grad(set_to_none=False)
    loss = loss_fn(model, batch)
    if not torch.isfinite(loss):
        raise NonFiniteError(f"non-finite loss {loss.item()} at step {opt.step}")
    loss.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteError(f"non-finite gradient in parameter block '{name}' at step {opt.step}")
    opt.optimizer.step()
    opt.step += 1
    return loss.item()


def grad_check(loss_fn, params, eps=1e-5, n_samples=200, seed=0, grads=None):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` must return a scalar tensor computed from ``params`` (a list of
    tensors, ideally float64). ``grads`` overrides the autograd gradients.
    Every scalar is checked when there are at most ``n_samples`` of them.
    The denominator is floored at 1e4 times the rounding bound of the central
    difference (a few ulps of the loss over 2 eps), so rounding alone contributes
    at most 1e-4; otherwise an exactly-zero gradient would score ulp(f) / (2 eps * 1e-8).
    """
    params = list(params)
    if grads is None:
        for p in params:
            p.grad = None
        loss = loss_fn()
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_samples else rng.choice(total, n_samples, replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    with torch.no_grad():
        for flat in picks:
            i = int(np.searchsorted(offsets, flat, side="right") - 1)
            j = int(flat - offsets[i])
            view = params[i].view(-1)
            orig = view[j].item()
            view[j] = orig + eps
            f_plus = loss_fn().item()
            view[j] = orig - eps
            f_minus = loss_fn().item()
            view[j] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            analytic = grads[i].reshape(-1)[j].item()
            noise = 4 * np.finfo(np.float64).eps * max(abs(f_plus), abs(f_minus)) / (2 * eps)
            denom = max(abs(analytic), abs(numeric), 1e-8, 1e4 * noise)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())

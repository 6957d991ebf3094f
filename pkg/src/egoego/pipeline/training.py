"""Training runs for GravityNet, HeadNet and the motion diffusion model, and checkpoints."""
import dataclasses
import logging
import os

import numpy as np
import torch

from .. import headpose, trajkit
from ..diffusion import MotionDiffusion, make_schedule
from ..nets import BackboneConfig, OptimState, train_step
from . import container

log = logging.getLogger(__name__)

TARGETS = ("gravity", "head", "diffusion")


class MissingCheckpointError(FileNotFoundError):
    pass


def checkpoint_path(cfg, target):
    return os.path.join(cfg.path("checkpoints"), target)


def build_model(target, backbone, schedule=None):
    if target == "gravity":
        return headpose.GravityNet(backbone)
    if target == "head":
        return headpose.HeadNet(backbone)
    if target == "diffusion":
        sched = make_schedule(schedule["N"], schedule["beta_1"], schedule["beta_N"], schedule["sigma"])
        return MotionDiffusion(backbone, sched)
    raise ValueError(f"unknown training target '{target}' (expected one of {TARGETS})")


def save_checkpoint(path, target, model, opt, meta, curve=None):
    arrays = {f"param/{k}": v.detach().numpy() for k, v in model.state_dict().items()}
    if curve is not None:
        arrays["curve"] = np.asarray(curve, dtype=np.float64)
    for i, state in opt.optimizer.state_dict()["state"].items():
        for k, v in state.items():
            arrays[f"opt/{i}/{k}"] = np.asarray(v.detach().numpy() if torch.is_tensor(v) else v)
    meta = dict(meta, target=target, step=opt.step)
    return container.save_container(path, arrays, meta, kind="checkpoint")


def load_checkpoint(path, target=None, with_optimizer=False):
    """Rebuild a model (and optionally its Adam state) from a checkpoint directory."""
    if not os.path.exists(os.path.join(path, container.MANIFEST)):
        raise MissingCheckpointError(f"no checkpoint at {path}")
    arrays, meta = container.load_container(path, kind="checkpoint")
    if target is not None and meta["target"] != target:
        raise container.ContainerError(f"{path}: checkpoint is for '{meta['target']}', not '{target}'")
    model = build_model(meta["target"], BackboneConfig(**meta["backbone"]), meta.get("schedule"))
    state = {k[len("param/"):]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("param/")}
    model.load_state_dict(state)
    model.eval()
    if not with_optimizer:
        return model, meta
    opt = OptimState.create(
        model, lr=meta["lr"], warmup=meta.get("warmup", 0), decay_steps=meta.get("decay_steps", 0)
    )
    opt_state = opt.optimizer.state_dict()
    for key, v in arrays.items():
        if key.startswith("opt/"):
            _, i, k = key.split("/")
            t = torch.from_numpy(v)
            opt_state["state"].setdefault(int(i), {})[k] = t if k != "step" else t.reshape(())
    opt.optimizer.load_state_dict(opt_state)
    opt.step = meta["step"]
    return model, meta, opt


# ----------------------------------------------------------------------------
# per-target data and losses


def gravity_data(ds, idx):
    feats = np.stack([trajkit.head_features(ds.slam_traj(i)) for i in idx])
    targets = np.stack([ds.gravity_target(i) for i in idx])
    return {"features": torch.tensor(feats, dtype=torch.float32), "target": torch.tensor(targets, dtype=torch.float32)}


def head_data(ds, idx):
    d, w, O1 = [], [], []
    for i in idx:
        traj = ds.head_traj(i)
        di, wi = headpose.headnet_targets(traj)
        d.append(di)
        w.append(wi)
        O1.append(traj.rotations[0])
    return {
        "features": torch.tensor(ds.flow[idx], dtype=torch.float32),
        "d": torch.tensor(np.stack(d), dtype=torch.float32),
        "omega": torch.tensor(np.stack(w), dtype=torch.float32),
        "O1": torch.tensor(np.stack(O1), dtype=torch.float32),
        "dt": 1.0 / ds.frame_rate,
    }


def diffusion_data(ds, idx):
    return {
        "x0": torch.tensor(ds.motion[idx], dtype=torch.float32),
        "c": torch.tensor(ds.head_cond[idx], dtype=torch.float32),
    }


def fit_normalization(target, model, data):
    if target == "gravity":
        f = data["features"].reshape(-1, data["features"].shape[-1])
        model.feat_mean.copy_(f.mean(0))
        model.feat_std.copy_(f.std(0).clamp_min(1e-3))
    elif target == "head":
        f = data["features"].reshape(-1, data["features"].shape[-1])
        model.feat_mean.copy_(f.mean(0))
        model.feat_std.copy_(f.std(0).clamp_min(1e-3))
        model.dist_scale.fill_(float(data["d"][:, 1:].mean()))
        model.omega_scale.fill_(float(data["omega"][:, 1:].std()))
    else:
        model.fit_normalizer(data["x0"].numpy(), data["c"].numpy())


def make_loss(target, generator):
    if target == "gravity":
        def loss_fn(model, b):
            return headpose.gravity_loss(model(b["features"]), b["target"])
    elif target == "head":
        def loss_fn(model, b):
            d, w = model(b["features"])
            return headpose.headnet_loss(d, w, b["d"], b["omega"], b["O1"], b["dt"])
    else:
        def loss_fn(model, b):
            return model.loss(b["x0"], b["c"], generator)
    return loss_fn


def _select(data, idx):
    return {k: (v[idx] if torch.is_tensor(v) else v) for k, v in data.items()}


def train(cfg, ds, target, progress=None):
    """Run (or resume) one training job; returns (model, opt, curve, meta)."""
    if target not in TARGETS:
        raise ValueError(f"unknown training target '{target}' (expected one of {TARGETS})")
    tc = getattr(cfg.train, target)
    backbone = getattr(cfg.models, target)
    schedule = dataclasses.asdict(cfg.schedule)
    idx = ds.indices("train")
    if tc.n_sequences is not None:
        idx = idx[: tc.n_sequences]
    if not idx:
        raise ValueError("no training records")
    data = {"gravity": gravity_data, "head": head_data, "diffusion": diffusion_data}[target](ds, idx)

    torch.manual_seed(cfg.seeds.train)
    generator = torch.Generator().manual_seed(cfg.seeds.train)
    ckpt = checkpoint_path(cfg, target)
    prev_curve = []
    if tc.resume and os.path.exists(os.path.join(ckpt, container.MANIFEST)):
        model, meta, opt = load_checkpoint(ckpt, target, with_optimizer=True)
        prev_curve = list(container.load_container(ckpt)[0].get("curve", []))
        generator.manual_seed(cfg.seeds.train + opt.step)
    else:
        model = build_model(target, backbone, schedule)
        fit_normalization(target, model, data)
        opt = OptimState.create(model, lr=tc.lr, warmup=tc.warmup, decay_steps=tc.decay_steps)
    model.train()
    loss_fn = make_loss(target, generator)
    n = len(idx)
    curve = []
    for _ in range(tc.steps):
        batch_idx = torch.randint(0, n, (min(tc.batch_size, n),), generator=generator)
        loss = train_step(model, opt, _select(data, batch_idx), loss_fn)
        curve.append(loss)
        if tc.log_every and opt.step % tc.log_every == 0:
            log.info("%s step %d loss %.5f", target, opt.step, np.mean(curve[-tc.log_every:]))
            if progress:
                progress(target, opt.step, loss)
    model.eval()
    full_curve = prev_curve + curve
    meta = {
        "backbone": dataclasses.asdict(backbone),
        "schedule": schedule if target == "diffusion" else None,
        "config_digest": cfg.digest(),
        "lr": tc.lr,
        "warmup": tc.warmup,
        "decay_steps": tc.decay_steps,
        "final_loss": float(full_curve[-1]) if full_curve else None,
        "n_sequences": n,
        "train_ids": [ds.records[i]["id"] for i in idx],
    }
    return model, opt, np.asarray(full_curve, dtype=np.float64), meta


def cmd_train(cfg, target, ds=None):
    from .data import PairedDataset

    ds = ds or PairedDataset.load(cfg.path("dataset"))
    model, opt, curve, meta = train(cfg, ds, target)
    path = checkpoint_path(cfg, target)
    save_checkpoint(path, target, model, opt, meta, curve)
    return path

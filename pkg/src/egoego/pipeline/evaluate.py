"""Ablation evaluation (head-pose source modes) and the end-to-end inference path."""
import json
import logging
import os

import numpy as np
import torch

from .. import bodygen, geom3d, headpose, metrics, trajkit
from ..diffusion import best_of_k, joint_positions
from . import container
from .training import MissingCheckpointError, checkpoint_path, load_checkpoint

log = logging.getLogger(__name__)

MODES = ("slam", "slam+s", "slam+s+g", "full", "gt-head")
REQUIRES = {
    "slam": (),
    "slam+s": ("head",),
    "slam+s+g": ("gravity", "head"),
    "full": ("gravity", "head"),
    "gt-head": (),
}


class OraclePredictor:
    """Ground-truth gravity, step distances and angular velocities."""

    def __init__(self, gravity, gt_traj):
        self._g = gravity
        self._d, self._w = headpose.headnet_targets(gt_traj)

    def gravity(self, slam_traj):
        return self._g

    def steps(self, flow):
        return self._d, self._w


class LearnedPredictor:
    def __init__(self, gravity_model=None, head_model=None):
        self.gravity_model, self.head_model = gravity_model, head_model

    def gravity(self, slam_traj):
        return headpose.gravitynet_forward(trajkit.head_features(slam_traj), self.gravity_model)

    def steps(self, flow):
        return headpose.headnet_forward(flow, self.head_model)


def estimate_head(mode, slam, flow, O_1, predictor, gt=None):
    """Head trajectory for one ablation mode (before evaluation alignment).

    Per-frame network outputs are dropped at frame 1, leaving one value per step.
    """
    if mode == "gt-head":
        return gt
    if mode == "slam":
        return slam
    d, w = predictor.steps(flow)
    d, w = d[1:], w[1:]
    if mode == "slam+s":
        s = trajkit.calibrate_scale(float(np.mean(d)), trajkit.mean_step_distance(slam))
        return trajkit.scale_trajectory(slam, s)
    g = predictor.gravity(slam)
    if mode == "slam+s+g":
        aligned = trajkit.apply_gravity_alignment(slam, g)
        s = trajkit.calibrate_scale(float(np.mean(d)), trajkit.mean_step_distance(aligned))
        return trajkit.scale_trajectory(aligned, s)
    if mode == "full":
        return trajkit.fuse_head_estimate(slam, g, d, w, O_1)
    raise ValueError(f"unknown mode '{mode}' (expected one of {MODES})")


def head_condition_from_traj(traj):
    return np.concatenate([traj.positions, geom3d.rotmat_to_sixd(traj.rotations, check=False)], -1)


def sequence_seed(cfg, index):
    return int(np.random.SeedSequence([cfg.seeds.sample, index]).generate_state(1)[0])


def body_metrics(samples, gt_motion, skel, dt, H):
    best, k = best_of_k(list(samples), gt_motion)
    pred_j, gt_j = joint_positions(best), joint_positions(gt_motion)
    return k, {
        "mpjpe": metrics.mpjpe(pred_j, gt_j),
        "accel": metrics.accel_error(pred_j, gt_j, dt),
        "fs": metrics.foot_skating(pred_j, skel.foot_joints, H),
    }


def sample_motions(model, cond, K, seed):
    gen = torch.Generator().manual_seed(seed)
    c = torch.as_tensor(np.asarray(cond, dtype=np.float32))
    return model.sample(c.expand(K, *c.shape), gen).double().numpy()


def load_models(cfg, needs):
    out = {}
    for target in needs:
        path = checkpoint_path(cfg, target)
        try:
            out[target], _ = load_checkpoint(path, target)
        except MissingCheckpointError:
            raise MissingCheckpointError(
                f"mode needs checkpoint(s) {list(needs)}; '{target}' missing at {path}"
            ) from None
    return out


def evaluate(cfg, ds, mode, models=None, oracle=None, body=None, split=None, indices=None):
    """Per-sequence and aggregate MetricReport for one head-pose source mode."""
    if mode not in MODES:
        raise ValueError(f"unknown mode '{mode}' (expected one of {MODES})")
    ev = cfg.eval
    oracle = ev.oracle if oracle is None else oracle
    body = ev.body if body is None else body
    needs = (() if oracle else REQUIRES[mode]) + (("diffusion",) if body else ())
    models = models if models is not None else load_models(cfg, needs)
    missing = [t for t in needs if t not in models]
    if missing:
        raise MissingCheckpointError(f"mode '{mode}' needs checkpoint(s) {missing}")
    skel = bodygen.Skeleton()
    if indices is None:
        indices = ds.indices(split or ev.split)
        if ev.n_sequences is not None:
            indices = indices[: ev.n_sequences]
    report = metrics.MetricReport(meta={
        "mode": mode, "oracle": oracle, "K": ev.K, "config_digest": cfg.digest(), "split": split or ev.split,
    })  # fmt: skip
    learned = LearnedPredictor(models.get("gravity"), models.get("head"))
    for i in indices:
        gt = ds.head_traj(i)
        slam = ds.slam_traj(i)
        predictor = OraclePredictor(ds.gravity_target(i), gt) if oracle else learned
        est = estimate_head(mode, slam, ds.flow[i], gt.rotations[0], predictor, gt)
        if mode == "gt-head":
            aligned, cond = gt, ds.head_cond[i]
        else:
            aligned = trajkit.align_first_frame(est, gt)
            cond = head_condition_from_traj(aligned)
        row = {
            "o_head": metrics.head_orientation_error(aligned.rotations, gt.rotations),
            "t_head": metrics.head_translation_error(aligned.positions, gt.positions),
        }
        if body:
            samples = sample_motions(models["diffusion"], cond, ev.K, sequence_seed(cfg, i))
            _, bm = body_metrics(samples, ds.motion[i], skel, 1.0 / ds.frame_rate, ev.contact_height)
            row.update(bm)
        report.add(ds.records[i]["id"], **row)
        log.info("%s %s %s", mode, ds.records[i]["id"], row)
    return report


def write_report(report, out_dir, name="report"):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{name}.json"), "w") as f:
        f.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, f"{name}.txt"), "w") as f:
        f.write(report.to_table() + "\n")
    return out_dir


def cmd_eval(cfg, mode, ds=None):
    from .data import PairedDataset

    ds = ds or PairedDataset.load(cfg.path("dataset"))
    report = evaluate(cfg, ds, mode)
    out_dir = os.path.join(cfg.path("reports"), mode.replace("+", "_"))
    write_report(report, out_dir)
    return report, out_dir


def run_pipeline(cfg, input_path, seed, gt_path=None, out_dir=None, models=None):
    """Surrogate features -> GravityNet -> alignment -> HeadNet -> fusion -> K diffusion samples.

    With ground truth, the head estimate is first-frame aligned to it (as in evaluation),
    the best-of-K sample is flagged and a report is produced.
    """
    arrays, meta = container.load_container(input_path, kind="head-input")
    fr = meta["frame_rate"]
    slam = trajkit.HeadTrajectory(arrays["slam_pos"], geom3d.sixd_to_rotmat(arrays["slam_rot6d"]), fr)
    models = models if models is not None else load_models(cfg, ("gravity", "head", "diffusion"))
    predictor = LearnedPredictor(models["gravity"], models["head"])
    est = estimate_head("full", slam, arrays["flow"], arrays["first_rotation"], predictor)
    report, best = None, None
    if gt_path is not None:
        gt_motion = container.load_container(gt_path, kind="motion")[0]["motion"]
        gt = bodygen.head_from_motion(gt_motion, frame_rate=fr)
        est = trajkit.align_first_frame(est, gt)
    samples = sample_motions(models["diffusion"], head_condition_from_traj(est), cfg.eval.K, seed)
    if gt_path is not None:
        skel = bodygen.Skeleton()
        best, bm = body_metrics(samples, gt_motion, skel, 1.0 / fr, cfg.eval.contact_height)
        report = metrics.MetricReport(meta={"mode": "full", "seed": seed, "config_digest": cfg.digest()})
        report.add(
            meta.get("id", "input"),
            o_head=metrics.head_orientation_error(est.rotations, gt.rotations),
            t_head=metrics.head_translation_error(est.positions, gt.positions),
            **bm,
        )
    if out_dir is not None:
        out_meta = {"seed": seed, "K": cfg.eval.K, "best_index": best, "config_digest": cfg.digest()}
        container.save_container(
            os.path.join(out_dir, "motion"),
            {"samples": samples.astype(np.float32), "head_positions": est.positions,
             "head_rotations": est.rotations},
            out_meta, kind="motion-samples",
        )  # fmt: skip
        if report is not None:
            write_report(report, out_dir)
        with open(os.path.join(out_dir, "summary.json"), "w") as f:
            json.dump(out_meta, f, indent=2)
    return samples, est, report, best


# ----------------------------------------------------------------------------
# training-set fit checks


def gravity_fit_error(model, ds, indices):
    """Mean angular error (degrees) of GravityNet on the given records."""
    errs = [
        headpose.angular_error_deg(
            headpose.gravitynet_forward(trajkit.head_features(ds.slam_traj(i)), model), ds.gravity_target(i)
        )
        for i in indices
    ]
    return float(np.mean(errs))


def head_fit_error(model, ds, indices):
    """(mean per-step distance error in mm, mean O_head of integrated rotations)."""
    d_err, o_err = [], []
    for i in indices:
        gt = ds.head_traj(i)
        d_gt, _ = headpose.headnet_targets(gt)
        d, w = headpose.headnet_forward(ds.flow[i], model)
        d_err.append(np.abs(d[1:] - d_gt[1:]).mean() * metrics.M_TO_MM)
        R = trajkit.integrate_angular_velocity(gt.rotations[0], w[1:], gt.dt)
        o_err.append(metrics.head_orientation_error(R, gt.rotations))
    return float(np.mean(d_err)), float(np.mean(o_err))


def diffusion_fit_mpjpe(model, ds, indices, K, seed):
    """Mean best-of-K MPJPE (mm) when conditioning on each record's own head pose."""
    errs = []
    for i in indices:
        samples = sample_motions(model, ds.head_cond[i], K, seed + i)
        best, _ = best_of_k(list(samples), ds.motion[i])
        errs.append(metrics.mpjpe(joint_positions(best), joint_positions(ds.motion[i])))
    return float(np.mean(errs))

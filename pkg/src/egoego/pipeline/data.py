"""Paired dataset generation (procedural motion placed in SDF scenes) and persistence."""
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .. import bodygen, geom3d, headpose, trajkit
from ..diffusion import joint_rot6d
from . import container
from .config import ConfigError

log = logging.getLogger(__name__)

SPLITS = ("train", "test")


@dataclass
class PairedDataset:
    motion: np.ndarray  # (R, T, 198) float32
    head_cond: np.ndarray  # (R, T, 9)
    flow: np.ndarray  # (R, T, F)
    slam_pos: np.ndarray  # (R, T, 3)
    slam_rot6d: np.ndarray  # (R, T, 6)
    slam_scale: np.ndarray  # (R,)
    slam_rotation: np.ndarray  # (R, 3, 3) float64
    embedding: np.ndarray  # (9, F) float64
    records: list = field(default_factory=list)  # per-record metadata incl. split and seeds
    frame_rate: float = 30.0

    def __len__(self):
        return len(self.records)

    def indices(self, split):
        return [i for i, r in enumerate(self.records) if r["split"] == split]

    def head_traj(self, i):
        return bodygen.head_from_motion(self.motion[i], frame_rate=self.frame_rate)

    def slam_traj(self, i):
        return trajkit.HeadTrajectory(
            self.slam_pos[i], geom3d.sixd_to_rotmat(self.slam_rot6d[i]), self.frame_rate
        )

    def gravity_target(self, i):
        return self.slam_rotation[i] @ trajkit.GRAVITY

    def save(self, path, meta=None):
        arrays = {name: getattr(self, name) for name in (
            "motion", "head_cond", "flow", "slam_pos", "slam_rot6d", "slam_scale", "slam_rotation", "embedding"
        )}  # fmt: skip
        meta = dict(meta or {}, records=self.records, frame_rate=self.frame_rate)
        return container.save_container(path, arrays, meta, kind="dataset")

    @classmethod
    def load(cls, path):
        arrays, meta = container.load_container(path, kind="dataset")
        R = len(meta["records"])
        for name, arr in arrays.items():
            if name != "embedding" and arr.shape[0] != R:
                raise container.ShapeError(f"{path}: '{name}' has {arr.shape[0]} rows for {R} records")
        return cls(records=meta["records"], frame_rate=meta["frame_rate"], **arrays)


def _uniform(rng, lo_hi):
    lo, hi = lo_hi
    return float(rng.uniform(lo, hi))


def sample_motion_params(rng, ranges):
    return bodygen.MotionParams(
        speed=_uniform(rng, ranges.speed),
        step_freq=_uniform(rng, ranges.step_freq),
        hip_amp=_uniform(rng, ranges.hip_amp),
        knee_amp=_uniform(rng, ranges.knee_amp),
        shoulder_amp=_uniform(rng, ranges.shoulder_amp),
        turn_rate=_uniform(rng, ranges.turn_rate),
        head_bob=_uniform(rng, ranges.head_bob),
        head_sway=_uniform(rng, ranges.head_sway),
        seed=int(rng.integers(2**31)),
    )


def sample_slam_params(rng, ranges):
    lo, hi = ranges.scale
    return trajkit.SlamEmulation(
        scale=float(np.exp(rng.uniform(np.log(lo), np.log(hi)))),
        rotation=geom3d.random_rotation(rng),
        position_noise=ranges.position_noise,
        rotation_noise=np.radians(ranges.rotation_noise_deg),
        seed=int(rng.integers(2**31)),
    )


def _scene(cfg, split):
    path = cfg.data.scene_train if split == "train" else cfg.data.scene_test
    if path is None:
        return bodygen.default_scene(split)
    return bodygen.load_scene(os.path.join(cfg.base_dir, path))


def generate_dataset(cfg):
    """Generate, place, filter and chunk procedural motion into paired records.

    Each source motion spans two chunks; a chunk is kept only when every frame
    passes the penetration filter (records stay contiguous).
    """
    d = cfg.data
    T = d.T
    embedding = headpose.make_flow_embedding(cfg.seeds.embedding)
    out = {k: [] for k in ("motion", "head_cond", "flow", "slam_pos", "slam_rot6d", "slam_scale", "slam_rotation")}
    records = []
    for split_id, (split, n) in enumerate(zip(SPLITS, (d.n_train, d.n_test))):
        scene = _scene(cfg, split)
        slam_ranges = d.test_slam if (split == "test" and d.test_slam is not None) else d.slam
        made, source = 0, 0
        while made < n:
            if source >= (n + 1) * d.max_retries:
                raise bodygen.PlacementError(f"{split}-{made:04d}: could not produce a penetration-free chunk")
            rng = np.random.default_rng([cfg.seeds.data, split_id, source])
            params = sample_motion_params(rng, d.motion)
            long_motion = bodygen.procedural_motion(params, 2 * T, frame_rate=d.frame_rate)
            for chunk_id, chunk in enumerate(bodygen.chunk_sequence(long_motion, T)):
                if made >= n:
                    break
                seq_id = f"{split}-{made:04d}"
                place_seed = int(rng.integers(2**31))
                try:
                    placed = bodygen.place_sequence(chunk, scene, place_seed, region=d.region)
                except bodygen.PlacementError as e:
                    raise bodygen.PlacementError(f"{seq_id}: {e}") from None
                kept = bodygen.filter_by_penetration(placed, scene, d.penetration_threshold)
                if len(kept) < T:
                    log.debug("%s: chunk dropped (%d/%d frames kept)", seq_id, len(kept), T)
                    continue
                motion = placed.astype(np.float32)
                head = bodygen.head_from_motion(motion, frame_rate=d.frame_rate)
                slam_params = sample_slam_params(rng, slam_ranges)
                slam = trajkit.emulate_slam(head, slam_params)
                flow_seed = int(rng.integers(2**31))
                out["motion"].append(motion)
                out["head_cond"].append(bodygen.head_condition(motion))
                out["flow"].append(headpose.surrogate_flow_features(head, d.flow_noise, flow_seed, embedding))
                out["slam_pos"].append(slam.positions)
                out["slam_rot6d"].append(geom3d.rotmat_to_sixd(slam.rotations, check=False))
                out["slam_scale"].append(slam_params.scale)
                out["slam_rotation"].append(slam_params.rotation)
                records.append({
                    "id": seq_id, "split": split, "source": source, "chunk": chunk_id,
                    "motion_params": vars(params).copy(), "place_seed": place_seed, "flow_seed": flow_seed,
                    "slam": {"scale": slam_params.scale, "position_noise": slam_params.position_noise,
                             "rotation_noise": slam_params.rotation_noise, "seed": slam_params.seed},
                })  # fmt: skip
                made += 1
            source += 1
    if not records:
        raise ConfigError("dataset configuration produced no records")
    arrays = {k: np.stack(v).astype(np.float64 if k == "slam_rotation" else np.float32) for k, v in out.items()}
    return PairedDataset(embedding=embedding, records=records, frame_rate=d.frame_rate, **arrays)


def export_head_input(ds, i, path):
    """Write record ``i`` as a pipeline input: SLAM trajectory, flow features and first orientation."""
    head = ds.head_traj(i)
    arrays = {
        "slam_pos": ds.slam_pos[i],
        "slam_rot6d": ds.slam_rot6d[i],
        "flow": ds.flow[i],
        "first_rotation": head.rotations[0],
    }
    return container.save_container(path, arrays, {"id": ds.records[i]["id"], "frame_rate": ds.frame_rate}, "head-input")


def export_motion(motion, path, meta=None):
    return container.save_container(path, {"motion": np.asarray(motion, dtype=np.float32)}, meta, "motion")

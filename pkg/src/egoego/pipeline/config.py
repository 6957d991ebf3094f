"""Experiment configuration: nested dataclasses loaded from a JSON document."""
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from ..nets import BackboneConfig


class ConfigError(ValueError):
    pass


@dataclass
class Seeds:
    data: int = 0
    train: int = 0
    sample: int = 0
    embedding: int = 1234


@dataclass
class MotionRanges:
    speed: tuple = (0.4, 1.6)
    step_freq: tuple = (1.4, 2.2)
    hip_amp: tuple = (0.3, 0.6)
    knee_amp: tuple = (0.4, 0.8)
    shoulder_amp: tuple = (0.2, 0.5)
    turn_rate: tuple = (-0.4, 0.4)
    head_bob: tuple = (0.0, 0.02)
    head_sway: tuple = (0.02, 0.15)


@dataclass
class SlamRanges:
    scale: tuple = (0.3, 3.0)  # log-uniform
    position_noise: float = 0.0  # m
    rotation_noise_deg: float = 0.0


@dataclass
class DataConfig:
    n_train: int = 50
    n_test: int = 20
    T: int = 150
    frame_rate: float = 30.0
    scene_train: Optional[str] = None  # scene file; None = built-in layout
    scene_test: Optional[str] = None
    region: tuple = ((-3.0, -3.0), (3.0, 3.0))
    penetration_threshold: float = 2.0
    max_retries: int = 20
    flow_noise: float = 0.05
    motion: MotionRanges = field(default_factory=MotionRanges)
    slam: SlamRanges = field(default_factory=SlamRanges)
    test_slam: Optional[SlamRanges] = None  # defaults to ``slam``


@dataclass
class ScheduleConfig:
    N: int = 1000
    beta_1: float = 1e-4
    beta_N: float = 0.02
    sigma: str = "posterior"


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 8
    lr: float = 1e-4
    warmup: int = 0
    decay_steps: int = 0  # cosine learning-rate decay horizon; 0 keeps lr constant
    n_sequences: Optional[int] = None  # first n training records; None = all
    resume: bool = False
    log_every: int = 100


@dataclass
class Models:
    gravity: BackboneConfig = field(default_factory=BackboneConfig)
    head: BackboneConfig = field(default_factory=BackboneConfig)
    diffusion: BackboneConfig = field(default_factory=BackboneConfig)


@dataclass
class Training:
    gravity: TrainConfig = field(default_factory=TrainConfig)
    head: TrainConfig = field(default_factory=TrainConfig)
    diffusion: TrainConfig = field(default_factory=lambda: TrainConfig(steps=20000))


@dataclass
class EvalConfig:
    mode: str = "full"
    K: int = 20
    split: str = "test"
    oracle: bool = False  # ground-truth gravity / distances / angular velocities in place of the nets
    body: bool = True  # run diffusion best-of-K; False reports head metrics only
    contact_height: float = 0.05
    n_sequences: Optional[int] = None


@dataclass
class Paths:
    dataset: str = "data"
    checkpoints: str = "checkpoints"
    reports: str = "reports"


@dataclass
class ExperimentConfig:
    seeds: Seeds = field(default_factory=Seeds)
    data: DataConfig = field(default_factory=DataConfig)
    models: Models = field(default_factory=Models)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: Training = field(default_factory=Training)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: Paths = field(default_factory=Paths)
    base_dir: str = field(default=".", metadata={"serialize": False})

    def __post_init__(self):
        if self.eval.K < 1:
            raise ConfigError("eval.K must be >= 1")
        if self.data.T < 2:
            raise ConfigError("data.T must be >= 2")

    def path(self, name):
        return os.path.normpath(os.path.join(self.base_dir, getattr(self.paths, name)))

    def to_dict(self):
        return _to_dict(self)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def dump(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def _to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {
            f.name: _to_dict(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
            if f.metadata.get("serialize", True)
        }
    if isinstance(obj, (tuple, list)):
        return [_to_dict(v) for v in obj]
    return obj


def _from_dict(cls, data, where="config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if known[name].default_factory is not dataclasses.MISSING else known[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value, f"{where}.{name}")
        elif name == "test_slam" and value is not None:
            kwargs[name] = _from_dict(SlamRanges, value, f"{where}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def config_from_dict(data, base_dir="."):
    cfg = _from_dict(ExperimentConfig, data)
    cfg.base_dir = base_dir
    return cfg


def load_config(path):
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data, os.path.dirname(os.path.abspath(path)))

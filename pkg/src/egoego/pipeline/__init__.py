from .config import ExperimentConfig, config_from_dict, load_config
from .container import load_container, save_container
from .data import PairedDataset, generate_dataset


def cmd_datagen(cfg):
    """Generate and write the paired dataset; returns (dataset, path)."""
    ds = generate_dataset(cfg)
    path = cfg.path("dataset")
    ds.save(path, {"config_digest": cfg.digest(), "config": cfg.to_dict()})
    return ds, path


__all__ = [
    "ExperimentConfig", "PairedDataset", "cmd_datagen", "config_from_dict", "generate_dataset",
    "load_config", "load_container", "save_container",
]  # fmt: skip

"""Full-body accuracy with the ground-truth head versus the estimated head.

Needs trained gravity, head and diffusion checkpoints for the config.

    python scripts/body_from_head.py --config configs/acceptance.json
"""
import argparse
import logging

from egoego.metrics import COLUMNS
from egoego.pipeline import PairedDataset, load_config
from egoego.pipeline.evaluate import evaluate, load_models


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", required=True)
    ap.add_argument("--n", type=int, default=None, help="number of test sequences")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    cfg = load_config(args.config)
    ds = PairedDataset.load(cfg.path("dataset"))
    models = load_models(cfg, ("gravity", "head", "diffusion"))
    idx = ds.indices("test")[: args.n]
    print(f"{'head':8s} " + " ".join(f"{c:>8s}" for c in COLUMNS) + f"   (K={cfg.eval.K}, {len(idx)} sequences)")
    for mode in ("gt-head", "full"):
        agg = evaluate(cfg, ds, mode, models=models, body=True, indices=idx).aggregate
        print(f"{mode:8s} " + " ".join(f"{agg[c]:8.3f}" for c in COLUMNS))


if __name__ == "__main__":
    main()

"""Head-pose source ablation: T_head / O_head for slam, slam+s, slam+s+g and full.

With --oracle the gravity, step-distance and angular-velocity predictors are
replaced by ground truth, isolating the effect of each correction.

    python scripts/head_ablation.py --config configs/acceptance.json --oracle
"""
import argparse
import logging

from egoego.pipeline import PairedDataset, cmd_datagen, load_config
from egoego.pipeline.evaluate import evaluate

MODES = ("slam", "slam+s", "slam+s+g", "full")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", required=True)
    ap.add_argument("--oracle", action="store_true", help="ground-truth predictors instead of the trained nets")
    ap.add_argument("--n", type=int, default=None, help="number of test sequences")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    cfg = load_config(args.config)
    try:
        ds = PairedDataset.load(cfg.path("dataset"))
    except Exception:
        ds, _ = cmd_datagen(cfg)
    idx = ds.indices("test")[: args.n]
    print(f"{'mode':10s} {'O_head':>8s} {'T_head':>10s}   ({len(idx)} test sequences, oracle={args.oracle})")
    for mode in MODES:
        agg = evaluate(cfg, ds, mode, oracle=args.oracle, body=False, indices=idx).aggregate
        print(f"{mode:10s} {agg['o_head']:8.4f} {agg['t_head']:10.1f}")


if __name__ == "__main__":
    main()

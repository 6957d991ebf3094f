"""Train GravityNet / HeadNet / diffusion on small training subsets and report fit errors.

    python scripts/overfit_checks.py --config configs/acceptance.json [--targets gravity head diffusion]
"""
import argparse
import logging
import time

from egoego.pipeline import PairedDataset, cmd_datagen, load_config
from egoego.pipeline.evaluate import diffusion_fit_mpjpe, gravity_fit_error, head_fit_error
from egoego.pipeline.training import checkpoint_path, cmd_train, load_checkpoint


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", required=True)
    ap.add_argument("--targets", nargs="+", default=["gravity", "head", "diffusion"])
    ap.add_argument("--skip-train", action="store_true")
    ap.add_argument("--regen", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_config(args.config)
    try:
        if args.regen:
            raise FileNotFoundError
        ds = PairedDataset.load(cfg.path("dataset"))
    except Exception:
        ds, _ = cmd_datagen(cfg)
    for target in args.targets:
        t0 = time.time()
        if not args.skip_train:
            cmd_train(cfg, target, ds)
        model, meta = load_checkpoint(checkpoint_path(cfg, target), target)
        idx = ds.indices("train")[: meta["n_sequences"]]
        if target == "gravity":
            print(f"gravity: mean angular error {gravity_fit_error(model, ds, idx):.3f} deg")
        elif target == "head":
            d, o = head_fit_error(model, ds, idx)
            print(f"head: distance error {d:.3f} mm/step, integrated O_head {o:.4f}")
        else:
            mp = diffusion_fit_mpjpe(model, ds, idx, cfg.eval.K, cfg.seeds.sample)
            print(f"diffusion: best-of-{cfg.eval.K} MPJPE {mp:.2f} mm")
        print(f"  ({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()

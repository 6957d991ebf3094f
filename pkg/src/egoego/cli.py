"""Command line: datagen, train, eval, pipeline."""
import argparse
import logging
import os
import sys

from . import bodygen, trajkit
from .nets import NonFiniteError
from .pipeline import cmd_datagen, load_config
from .pipeline.config import ConfigError
from .pipeline.container import ChecksumError, ContainerError, ShapeError, VersionMismatchError
from .pipeline.evaluate import MODES, cmd_eval, run_pipeline
from .pipeline.training import TARGETS, MissingCheckpointError, cmd_train

# most specific first
EXIT_CODES = (
    (ConfigError, 3),
    (VersionMismatchError, 5),
    (ChecksumError, 6),
    (ShapeError, 7),
    (ContainerError, 4),
    (MissingCheckpointError, 8),
    (trajkit.ScaleUndefinedError, 9),
    (bodygen.PlacementError, 10),
    (NonFiniteError, 11),
)


def build_parser():
    p = argparse.ArgumentParser(prog="egoego", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("datagen", help="generate the paired synthetic dataset")
    s.add_argument("--config", required=True)

    s = sub.add_parser("train", help="train one model")
    s.add_argument("--config", required=True)
    s.add_argument("--target", required=True, choices=TARGETS)

    s = sub.add_parser("eval", help="evaluate one head-pose source mode")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", required=True, choices=MODES)

    s = sub.add_parser("pipeline", help="full inference on one head-input container")
    s.add_argument("--config", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--gt", default=None, help="ground-truth motion container")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default=None, help="output directory (default: <reports>/pipeline)")
    return p


def run(args):
    cfg = load_config(args.config)
    if args.command == "datagen":
        ds, path = cmd_datagen(cfg)
        print(f"wrote {len(ds)} records to {path}")
    elif args.command == "train":
        path = cmd_train(cfg, args.target)
        print(f"wrote checkpoint {path}")
    elif args.command == "eval":
        report, out_dir = cmd_eval(cfg, args.mode)
        print(report.to_table())
        print(f"reports in {out_dir}")
    elif args.command == "pipeline":
        out = args.out or os.path.join(cfg.path("reports"), "pipeline")
        _, _, report, best = run_pipeline(cfg, args.input, args.seed, args.gt, out)
        if report is not None:
            print(report.to_table())
            print(f"best sample: {best}")
        print(f"outputs in {out}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run(args)
    except Exception as e:
        for kind, code in EXIT_CODES:
            if isinstance(e, kind):
                print(f"error: {e}", file=sys.stderr)
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())

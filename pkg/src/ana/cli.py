"""Command line: ``ana <subcommand> --config <path> [--out <dir>] [--seed <u64>]``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import experiments
from .config import parse_config
from .errors import AnaError

log = logging.getLogger("ana")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ana", description="Additive noise annealing experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "train one network and write its epoch log and parameters",
        "regcurve": "dump a regularised quantiser's forward/backward curve",
        "check": "check the compositional convergence hypotheses",
        "sweep": "train over decay interval x forward strategy cells",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory (default: config output)")
        p.add_argument("--seed", type=_u64, default=None, help="override the experiment seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = parse_config(args.config)
        for w in caught:
            log.warning("%s", w.message)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = args.out if args.out is not None else cfg.base_dir / cfg.output
        if args.command == "train":
            _, tlog = experiments.run_train(cfg, out)
            f = tlog.final
            print(f"final epoch {f.epoch}: val acc quantised {f.val_acc_quantised:.4f}, regularised {f.val_acc_regularised:.4f}")
        elif args.command == "regcurve":
            path = experiments.run_regcurve(cfg, out)
            print(f"wrote {path}")
        elif args.command == "check":
            report = experiments.run_check(cfg, out)
            for line in report.verdict_lines():
                print(line)
            print(f"overall: {'pass' if report.passed else 'fail'}")
        else:
            for row in experiments.run_sweep(cfg, out):
                print(f"{row[0]:>11} {row[1]:>11}  val acc (quantised) {row[3]:.4f} +- {row[4]:.4f}")
    except AnaError as exc:
        print(f"ana: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``gradsurgery {verify,train,sweep,diagram}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import runner, verify
from .config import load_config
from .errors import GradSurgeryError

EXIT_OK, EXIT_FAILED, EXIT_ERROR = 0, 1, 2

log = logging.getLogger("gradsurgery")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", help="override output.dir from the config")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="maximum worker processes (default: available CPUs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradsurgery", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", help="run the gradient-oracle and invariant suites")

    p = sub.add_parser("train", help="train every seed in the config, write CSVs")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("sweep", help="train once per axis value and seed, write summary.csv")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=sorted(runner.SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma-separated axis values")
    _common(p)

    p = sub.add_parser("diagram", help="train and write only the triplet diagram")
    p.add_argument("config")
    _common(p)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    return cfg


def cmd_verify(args) -> int:
    results = verify.run_all()
    for res in results:
        print(res.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    runner.train_command(cfg, args.threads)
    print(f"wrote recall.csv, stats.csv, diagram.csv to {cfg.output_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    summary = runner.sweep_command(cfg, args.axis, values, args.threads)
    for axis, value, runs, mean, std in summary:
        print(f"{axis}={value}: recall@1 {mean:.4f} +/- {std:.4f} over {runs} runs")
    return EXIT_OK


def cmd_diagram(args) -> int:
    cfg = _load(args)
    runner.train_command(cfg, args.threads, files=("diagram",))
    print(f"wrote diagram.csv to {cfg.output_dir}")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "train": cmd_train, "sweep": cmd_sweep, "diagram": cmd_diagram}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GradSurgeryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

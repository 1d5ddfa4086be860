"""Command-line entry points: run experiments, verify the numerics, sweep
system parameters."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .runner import ExperimentConfig, run_experiment, sweep
from .verification import run_verification


def load_config(path, seed_override=None):
    raw = json.loads(Path(path).read_text())
    if seed_override is not None:
        raw["master_seed"] = seed_override
    return ExperimentConfig.from_dict(raw)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="aircomp-vfl",
        description="Vertical federated learning over a simulated "
                    "over-the-air Cloud-RAN",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the configured experiment")
    run_p.add_argument("--config", required=True, help="JSON experiment config")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")

    sub.add_parser("verify", help="run the Monte-Carlo and property checks")

    sweep_p = sub.add_parser("sweep", help="vary one system parameter")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--param", required=True,
                         choices=("capacity", "antennas", "servers"))
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated parameter values")
    sweep_p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        config = load_config(args.config, args.seed)
        summary = run_experiment(config, args.out)
        print(json.dumps(summary["final_loss"]))
        return 0
    if args.command == "verify":
        return 0 if run_verification() else 1
    if args.command == "sweep":
        config = load_config(args.config, args.seed)
        values = [float(v) for v in args.values.split(",")]
        sweep(config, args.param, values, args.out)
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())

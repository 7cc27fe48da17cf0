"""Command-line front end.

    infoprop generate|train|calibrate|rollout|evaluate|verify|pipeline
        [--config cfg.yaml] [--seed N] [--out DIR] [--mode diag|dense]

Exit codes: 0 success, 1 usage or invalid input, 2 verification failure
(including a thresholds file calibrated for a different model), 3 I/O error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .calibration import HashMismatchError
from .config import ExperimentConfig, InvalidConfigError
from .ensemble import CheckpointVersionError
from .pipeline import (
    MissingThresholdsError,
    cmd_calibrate,
    cmd_evaluate,
    cmd_generate,
    cmd_rollout,
    cmd_train,
    cmd_verify,
    run_pipeline,
)

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config (defaults if omitted)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", type=Path, help="run directory (overrides config)")
    common.add_argument("--mode", choices=["diag", "dense"], help="covariance representation")

    parser = _Parser(prog="infoprop", description="Infoprop / trajectory-sampling rollout pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("generate", parents=[common], help="environment rollouts -> dataset.csv")
    p = sub.add_parser("train", parents=[common], help="fit the ensemble -> model.json, train_loss.csv")
    p.add_argument("--dataset", type=Path)
    p = sub.add_parser("calibrate", parents=[common], help="entropy thresholds -> thresholds.json")
    p.add_argument("--model", type=Path)
    p.add_argument("--dataset", type=Path)
    p = sub.add_parser("rollout", parents=[common], help="rollouts_<mechanism>.{json,csv} + summary")
    p.add_argument("--mechanism", choices=["ts", "infoprop", "env"])
    p.add_argument("--model", type=Path)
    p.add_argument("--thresholds", type=Path)
    p = sub.add_parser("evaluate", parents=[common], help="per-step W1 between two rollout files")
    p.add_argument("--reference", type=Path, help="default: <out>/rollouts_env.json")
    p.add_argument("--candidate", type=Path, required=True)
    p = sub.add_parser("verify", parents=[common], help="run every oracle -> verify_report.json")
    p.add_argument("--quick", action="store_true", help="smaller random-set counts")
    sub.add_parser("pipeline", parents=[common], help="generate, train, calibrate, rollout all, evaluate")
    return parser


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = str(args.out)
    if args.mode is not None:
        config.mode = args.mode
    config.validate()
    return config


def dispatch(args) -> int:
    config = load_config(args)
    out = Path(config.out)
    if args.command == "generate":
        path = cmd_generate(config, out)
    elif args.command == "train":
        path = cmd_train(config, out, args.dataset)
    elif args.command == "calibrate":
        path = cmd_calibrate(config, out, args.model, args.dataset)
    elif args.command == "rollout":
        path = cmd_rollout(config, args.mechanism, out, args.model, args.thresholds)
    elif args.command == "evaluate":
        path = cmd_evaluate(config, args.reference or out / "rollouts_env.json", args.candidate, out)
    elif args.command == "verify":
        path, passed = cmd_verify(config, out, args.quick)
        print(f"{path} {'PASS' if passed else 'FAIL'}")
        return EXIT_OK if passed else EXIT_VERIFY
    else:
        for name, path in run_pipeline(config, out).items():
            print(f"{name}: {path}")
        return EXIT_OK
    print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except HashMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidConfigError, MissingThresholdsError, CheckpointVersionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

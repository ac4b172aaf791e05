"""Command-line entry point: ``ddunfold <subcommand> [options]``.

Exit status: 0 success, 1 a check failed, 2 bad usage, 3 integrity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import DomainError, IntegrityError, ShapeError
from .experiments import ExperimentConfig, cmd_bench, cmd_example, cmd_snr_sweep, cmd_train, cmd_validate, load_config
from .network import read_header

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_INTEGRITY = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML experiment file")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", type=Path, help="output directory")
    p.add_argument("--trials", type=int)
    p.add_argument("--model", type=Path, help="trained network file")
    p.add_argument("--threads", type=int, default=1, help="worker processes outside timed sections")
    p.add_argument("--force", action="store_true", help="overwrite results of a different config")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddunfold", description="Sparse delay-Doppler channel estimation with ISTA and its unfolded network.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("example", "one noiseless instance, written for a stem plot"),
        ("train", "train the unfolded network"),
        ("bench", "noiseless accuracy and run time of both estimators"),
        ("snr-sweep", "MSE against SNR for both estimators"),
        ("validate", "run the invariant checks"),
        ("model-info", "print the header of a network file"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "train":
            p.add_argument("--resume", action="store_true", help="continue from the checkpoint folder")
        if name == "validate":
            p.add_argument("--perturb-init", type=float, default=0.0, help="negative control: perturb the initialized weights")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, trials=args.trials, output_dir=args.output)


def _default_model(args, cfg: ExperimentConfig):
    return args.model if args.model else Path(cfg.output_dir) / "model.udnn"


def run(args) -> int:
    if args.command == "model-info":
        if not args.model:
            print("model-info needs --model", file=sys.stderr)
            return EXIT_USAGE
        print(json.dumps(read_header(args.model), indent=2))
        return EXIT_OK

    cfg = _config(args)
    if args.command == "example":
        info = cmd_example(cfg, _default_model(args, cfg), force=args.force)
        for key in ("true_support", "ista_support", "udnn_support"):
            print(f"{key}: {info[key]}")
        print(f"wrote {info['csv']}")
    elif args.command == "train":
        model, log = cmd_train(cfg, resume=args.resume, force=args.force)
        last = log.rows[-1]
        print(f"trained {model.meta['trained_epochs']} epochs, best epoch {model.meta['best_epoch']}, last val {last['val_mse_db']:.2f} dB")
    elif args.command == "bench":
        for rec in cmd_bench(cfg, _default_model(args, cfg), force=args.force):
            print(f"{rec.method:5s} mse {rec.mse_db:8.2f} dB  iterations/layers {rec.mean_iterations_or_layers:9.1f}  time {rec.wall_time_s:.4f} s")
    elif args.command == "snr-sweep":
        records, report = cmd_snr_sweep(cfg, _default_model(args, cfg), force=args.force, threads=args.threads)
        for rec in records:
            print(f"{rec.snr_db:6.1f} dB  {rec.method:5s} mse {rec.mse_db:8.2f} dB")
        if not all(m["monotone"] for m in report["methods"].values()):
            print("MSE is not monotone in SNR", file=sys.stderr)
            return EXIT_CHECK
    elif args.command == "validate":
        report = cmd_validate(cfg, perturb_init=args.perturb_init)
        for check in report["checks"]:
            print(f"{'PASS' if check['passed'] else 'FAIL'}  {check['name']}")
        return EXIT_OK if report["passed"] else EXIT_CHECK
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ValueError, FileNotFoundError, ShapeError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

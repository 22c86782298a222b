"""Command-line entry point.

Exit codes: 0 on success, 1 for usage/config/data problems, 2 for numerical
failures (non-convergent fits, unstable factorizations, budgets too small for
the requested precision).
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import RunConfig
from .errors import ConfigError, DataError, DomainError, LayoutError, StmixError
from . import pipelines

USER_ERRORS = (ConfigError, DataError, DomainError, LayoutError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stmix",
        description="Simulation and inference for spatio-temporal extremes "
        "built on a random scale mixture of dependent fields.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        p.add_argument("--config", required=needs_config, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--threads", type=int, default=None, help="override worker count")

    p = sub.add_parser("simulate", help="draw one synthetic panel and write its CSV pair")
    common(p)
    p.add_argument("--scale", choices=("uniform", "data"), default="uniform")

    p = sub.add_parser("train", help="simulate a training set and fit the parameter network")
    common(p)

    p = sub.add_parser("fit", help="full fit: thresholds, tail, dependence, bootstrap")
    common(p)

    p = sub.add_parser("bootstrap", help="re-run the parametric bootstrap around a fit report")
    common(p)
    p.add_argument("--report", required=True, help="report.json from a previous fit")

    p = sub.add_parser("select", help="held-out-years comparison of candidate models")
    common(p)

    p = sub.add_parser("diagnose", help="site-wise tail fits and dependence curves")
    common(p)
    p.add_argument("--report", default=None, help="optional report.json for model-based checks")

    p = sub.add_parser("verify-classes", help="Monte Carlo check of the limiting dependence classes")
    common(p)

    p = sub.add_parser("storm", help="simulate storm episodes on a dense lattice")
    common(p)
    p.add_argument("--report", default=None, help="optional report.json with fitted parameters")

    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg.validate()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = _load_config(args)
        if args.command == "simulate":
            run_dir = pipelines.pipeline_simulate(cfg, scale=args.scale)
            print(run_dir)
        elif args.command == "train":
            result, run_dir = pipelines.pipeline_train(cfg)
            print(json.dumps(result, sort_keys=True))
            print(run_dir)
        elif args.command == "fit":
            result, run_dir = pipelines.pipeline_fit(cfg)
            print(json.dumps(result, sort_keys=True))
            print(run_dir)
        elif args.command == "bootstrap":
            result, run_dir = pipelines.pipeline_bootstrap(cfg, args.report)
            print(json.dumps(result, sort_keys=True))
            print(run_dir)
        elif args.command == "select":
            result, run_dir = pipelines.pipeline_model_select(cfg)
            print(json.dumps(result, sort_keys=True))
            print(run_dir)
        elif args.command == "diagnose":
            result, run_dir = pipelines.pipeline_diagnose(cfg, args.report)
            print(json.dumps(result, sort_keys=True))
            print(run_dir)
        elif args.command == "verify-classes":
            result, run_dir = pipelines.pipeline_verify_classes(cfg)
            print(json.dumps(result, sort_keys=True))
            print(run_dir)
        elif args.command == "storm":
            result, run_dir = pipelines.pipeline_storm(cfg, args.report)
            print(json.dumps(result, sort_keys=True))
            print(run_dir)
        else:  # pragma: no cover - argparse enforces choices
            parser.error(f"unknown command {args.command!r}")
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StmixError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

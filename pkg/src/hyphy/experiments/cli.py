"""``hyphy run|validate|schema`` command line."""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, NumericalFailure, SingularModelError
from ..gmm import DegenerateComponent
from .config import load_config, schema_text
from .runners import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyphy", description="Hybrid physics/learning classification experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="run this single seed instead of the config's list")
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    run.add_argument("--paper-scale", action="store_true", help="published network and synthetic sizes")
    val = sub.add_parser("validate", help="parse and check a config without running it")
    val.add_argument("config")
    val.add_argument("--paper-scale", action="store_true")
    sub.add_parser("schema", help="print every config key with its type and default")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "schema":
        sys.stdout.write(schema_text())
        return EXIT_OK
    try:
        cfg = load_config(args.config, paper_scale=args.paper_scale)
        if args.command == "validate":
            sys.stdout.write(cfg.to_text())
            return EXIT_OK
        if args.seed is not None:
            cfg = cfg.with_overrides(seeds=str(args.seed))
        table = run_experiment(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, SingularModelError, DegenerateComponent, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {len(table.rows)} result rows for {', '.join(table.methods())}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

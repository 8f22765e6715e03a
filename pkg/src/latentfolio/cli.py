"""Command-line entry point.

Exit codes: 0 success, 1 validation/configuration error, 2 runtime or
numerical error. Every subcommand takes --config pointing at a key=value
file; `pipeline` chains all stages in order.
"""

from __future__ import annotations

import argparse
import sys

from .config import parse_config
from .errors import ParseError, PipelineOrderError, ValidationError
from .pipeline import STAGES, run_pipeline, run_stage

_VALIDATION_ERRORS = (ValidationError, ParseError, PipelineOrderError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentfolio",
        description="Portfolio optimization research engine with latent-feature state spaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("pipeline",):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "pipeline"
                           else "run every stage in order")
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument("--outdir", default=None, help="override the run directory")
        p.add_argument("--no-filter", action="store_true",
                       help="disable the Kalman filtering unit for this run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.outdir:
            cfg.outdir = args.outdir
        if args.no_filter:
            cfg.filtering = False
        cfg.validate()
        if args.command == "pipeline":
            out = run_pipeline(cfg)
        else:
            out = run_stage(args.command, cfg)
        print(f"{args.command}: wrote {out}")
        return 0
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, FloatingPointError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

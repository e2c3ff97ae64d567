"""Command-line entry point for the tracer adapter."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .recorder import parse_scope
from .runner import CollectionError, run_traced


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steptrace",
        description=(
            "Run unittest ids under tracing hooks and write a JSONL trace: "
            "scope '*' records method entries; an explicit class::member list "
            "records line steps with changed variables."
        ),
    )
    parser.add_argument("--workspace", required=True, help="project root the tests run against")
    parser.add_argument("--tests", nargs="+", required=True, help="dotted unittest ids to run")
    parser.add_argument("--trace-out", required=True, help="path of the JSONL trace to write")
    parser.add_argument(
        "--scope",
        default="*",
        help="'*' for method-enter mode, or comma-separated class::member list for step mode",
    )
    parser.add_argument(
        "--max-value-chars",
        type=int,
        default=200,
        help="cap on each serialized variable value (default 200)",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    workspace = Path(args.workspace)
    if not workspace.is_dir():
        print(f"error: workspace {args.workspace!r} is not a directory", file=sys.stderr)
        return 2
    if args.max_value_chars < 1:
        print("error: --max-value-chars must be positive", file=sys.stderr)
        return 2
    if args.scope != "*":
        try:
            parse_scope(args.scope)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    try:
        return run_traced(
            workspace=workspace,
            test_ids=args.tests,
            trace_out=Path(args.trace_out),
            scope=args.scope,
            max_value_chars=args.max_value_chars,
        )
    except CollectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

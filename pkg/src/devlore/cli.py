"""Command-line entry points.

Subcommands mirror the pipeline stages (localize-methods, localize-lines,
repair) plus whole-trial drivers (run, ablate) and offline scoring (report).
Stage subcommands chain through JSON files under `<out>/stages/<bug>/` so each
stage can be inspected or re-run on its own.

Exit codes: 0 on success, 2 for usage problems (bad flags, unknown bug ids,
out-of-order stage invocation), 1 when the harness itself fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import HarnessError
from .llm import DEFAULT_API_KEY_ENV, DEFAULT_MODEL_NAME, LLMClient, ModelConfig
from .metrics import METRICS, cost_time_summary, write_reports
from .model import (
    ArtifactConfig,
    BugCase,
    LineLocationSet,
    MethodLocation,
    load_manifest,
    parse_config_list,
)
from .pipeline import Pipeline, PipelineSettings, load_all_trial_records

logger = logging.getLogger(__name__)

DEFAULT_ABLATION_CONFIGS = "none;issue;stack;debug;issue+stack;issue+debug;stack+debug;issue+stack+debug"
DEFAULT_RUN_CONFIG = "issue+stack+debug"


class UsageError(Exception):
    """Bad invocation: wrong flags, unknown names, stages out of order."""


# ===== Parser construction =====


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devlore",
        description="Trace-informed automated program repair harness.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="increase log verbosity")
    subparsers = parser.add_subparsers(dest="command", required=True)

    io_parent = argparse.ArgumentParser(add_help=False)
    io_parent.add_argument("--manifest", required=True, help="path to the bug manifest JSON")
    io_parent.add_argument("--out", required=True, help="output directory for records and caches")

    select_parent = argparse.ArgumentParser(add_help=False)
    select_parent.add_argument(
        "--bug", action="append", default=None, metavar="ID", help="bug id to run (repeatable; default all)"
    )
    select_parent.add_argument(
        "--configs",
        default=None,
        help="semicolon-separated artifact configs, e.g. 'none;stack;issue+stack'",
    )

    model_parent = argparse.ArgumentParser(add_help=False)
    model_parent.add_argument("--model", default=DEFAULT_MODEL_NAME, help="model name")
    model_parent.add_argument("--api-base", default="https://api.openai.com/v1", help="chat-completions API base URL")
    model_parent.add_argument(
        "--api-key-env",
        default=DEFAULT_API_KEY_ENV,
        help=f"environment variable holding the API key (default {DEFAULT_API_KEY_ENV})",
    )
    model_parent.add_argument("--temperature", type=float, default=0.5)
    model_parent.add_argument("--top-p", type=float, default=1.0)
    model_parent.add_argument("--batch-samples", action="store_true", help="request multi-sample stages as one call")
    model_parent.add_argument(
        "--mock",
        metavar="DIR",
        default=None,
        help="replay recorded responses from DIR instead of calling any endpoint",
    )

    run_parent = argparse.ArgumentParser(add_help=False)
    run_parent.add_argument("--samples-lines", type=int, default=10, help="line-localization samples per trial")
    run_parent.add_argument("--samples-patch", type=int, default=3, help="patch samples per unique line set")
    run_parent.add_argument("--jobs", type=int, default=4, help="concurrent trials")
    run_parent.add_argument(
        "--stop-on-plausible",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="stop sampling patches for a trial once one validates as plausible",
    )
    run_parent.add_argument("--retry-flaky", action="store_true", help="rerun a failed full suite once")
    run_parent.add_argument("--seed-label", default=None, help="opaque label stored in every record")
    run_parent.add_argument("--trigger-timeout", type=float, default=120.0, help="seconds per trigger-test run")
    run_parent.add_argument("--full-timeout", type=float, default=900.0, help="seconds per full-suite run")

    sp = subparsers.add_parser(
        "localize-methods",
        parents=[io_parent, select_parent, model_parent, run_parent],
        help="stage 1: predict buggy methods",
    )
    sp.set_defaults(func=cmd_localize_methods)

    sp = subparsers.add_parser(
        "localize-lines",
        parents=[io_parent, select_parent, model_parent, run_parent],
        help="stage 2: predict suspicious lines (requires localize-methods output)",
    )
    sp.set_defaults(func=cmd_localize_lines)

    sp = subparsers.add_parser(
        "repair",
        parents=[io_parent, select_parent, model_parent, run_parent],
        help="stage 3: generate and validate patches (requires earlier stage output)",
    )
    sp.set_defaults(func=cmd_repair)

    sp = subparsers.add_parser(
        "run",
        parents=[io_parent, select_parent, model_parent, run_parent],
        help="run the full pipeline for selected bugs and configs",
    )
    sp.set_defaults(func=cmd_run)

    sp = subparsers.add_parser(
        "ablate",
        parents=[io_parent, select_parent, model_parent, run_parent],
        help="run the full artifact-ablation grid and write reports",
    )
    sp.set_defaults(func=cmd_ablate)

    sp = subparsers.add_parser(
        "report",
        parents=[io_parent],
        help="score persisted records and write CSV/markdown reports",
    )
    sp.add_argument("--metrics", default=";".join(METRICS), help="semicolon-separated metric names")
    sp.set_defaults(func=cmd_report)

    return parser


# ===== Shared helpers =====


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_bugs(args) -> list[BugCase]:
    bugs = load_manifest(Path(args.manifest))
    if getattr(args, "bug", None):
        index = {bug.id: bug for bug in bugs}
        missing = [bid for bid in args.bug if bid not in index]
        if missing:
            raise UsageError(f"unknown bug ids: {', '.join(missing)}")
        bugs = [index[bid] for bid in args.bug]
    return bugs


def _parse_configs(args, default: str) -> list[ArtifactConfig]:
    text = args.configs if args.configs else default
    try:
        return parse_config_list(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _client(args) -> LLMClient:
    replay_dir = None
    if args.mock is not None:
        replay_dir = Path(args.mock)
        if not replay_dir.is_dir():
            raise UsageError(f"--mock directory does not exist: {replay_dir}")
    config = ModelConfig(
        model_name=args.model,
        temperature=args.temperature,
        top_p=args.top_p,
        api_base=args.api_base,
        api_key_env=args.api_key_env,
        batch_samples=args.batch_samples,
    )
    return LLMClient(config, replay_dir=replay_dir)


def _settings(args) -> PipelineSettings:
    return PipelineSettings(
        out_dir=Path(args.out),
        samples_lines=args.samples_lines,
        samples_patch=args.samples_patch,
        stop_on_plausible=args.stop_on_plausible,
        retry_flaky=args.retry_flaky,
        jobs=args.jobs,
        trigger_timeout=args.trigger_timeout,
        full_timeout=args.full_timeout,
        seed_label=args.seed_label,
    )


def _pipeline(args) -> Pipeline:
    return Pipeline(_client(args), _settings(args))


def _stage_path(out_dir: Path, bug_id: str, config: str, stage: str) -> Path:
    return out_dir / "stages" / bug_id / f"{config}.{stage}.json"


def _write_stage(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_stage(path: Path, hint: str) -> dict:
    if not path.is_file():
        raise UsageError(f"missing stage file {path}; run `{hint}` first")
    return json.loads(path.read_text(encoding="utf-8"))


# ===== Stage subcommands =====


def cmd_localize_methods(args) -> int:
    bugs = _load_bugs(args)
    configs = _parse_configs(args, DEFAULT_RUN_CONFIG)
    pipeline = _pipeline(args)
    out_dir = Path(args.out)
    for bug in bugs:
        for config in configs:
            stage = pipeline.run_method_localization(bug, config)
            doc = {
                "bug_id": bug.id,
                "config": config.canonical(),
                "predicted_methods": [loc.canonical() for loc in stage.predicted],
                "missing_artifacts": list(stage.missing),
                "note": stage.note,
            }
            _write_stage(_stage_path(out_dir, bug.id, config.canonical(), "methods"), doc)
            if stage.missing:
                print(f"{bug.id} [{config.canonical()}] unavailable: missing {', '.join(stage.missing)}")
            else:
                print(f"{bug.id} [{config.canonical()}] methods: {', '.join(doc['predicted_methods']) or '(none)'}")
    return 0


def cmd_localize_lines(args) -> int:
    bugs = _load_bugs(args)
    configs = _parse_configs(args, DEFAULT_RUN_CONFIG)
    pipeline = _pipeline(args)
    out_dir = Path(args.out)
    for bug in bugs:
        for config in configs:
            cfg = config.canonical()
            methods_doc = _read_stage(
                _stage_path(out_dir, bug.id, cfg, "methods"), "devlore localize-methods"
            )
            methods = [MethodLocation.parse(text) for text in methods_doc["predicted_methods"]]
            if not methods:
                print(f"{bug.id} [{cfg}] lines: (no method predictions)")
                continue
            stage = pipeline.run_line_localization(bug, config, methods)
            doc = {
                "bug_id": bug.id,
                "config": cfg,
                "unique_line_sets": [
                    {cls: list(lines) for cls, lines in set_.entries().items()}
                    for set_ in stage.unique_sets
                ],
                "parse_failures": stage.parse_failures,
                "dropped_methods": stage.dropped_methods,
                "missing_artifacts": list(stage.missing),
                "note": stage.note,
            }
            _write_stage(_stage_path(out_dir, bug.id, cfg, "lines"), doc)
            if stage.missing:
                print(f"{bug.id} [{cfg}] unavailable: missing {', '.join(stage.missing)}")
            else:
                print(f"{bug.id} [{cfg}] lines: {len(stage.unique_sets)} unique set(s)")
    return 0


def cmd_repair(args) -> int:
    bugs = _load_bugs(args)
    configs = _parse_configs(args, DEFAULT_RUN_CONFIG)
    pipeline = _pipeline(args)
    out_dir = Path(args.out)
    for bug in bugs:
        for config in configs:
            cfg = config.canonical()
            methods_doc = _read_stage(
                _stage_path(out_dir, bug.id, cfg, "methods"), "devlore localize-methods"
            )
            lines_doc = _read_stage(_stage_path(out_dir, bug.id, cfg, "lines"), "devlore localize-lines")
            methods = [MethodLocation.parse(text) for text in methods_doc["predicted_methods"]]
            if not methods:
                print(f"{bug.id} [{cfg}] repair: (no method predictions)")
                continue
            line_sets = [LineLocationSet.from_dict(d) for d in lines_doc["unique_line_sets"]]
            prompt, bundle, bodies, _ = pipeline.line_prompt(bug, config, methods)
            del prompt  # repair reuses the same bundle and bodies, not the stage-2 prompt
            stage = pipeline.run_repair(bug, config, bundle, bodies, line_sets)
            attempts = [
                {
                    "set_index": a.set_index,
                    "sample_index": a.sample_index,
                    "skipped": a.skipped,
                    "parse_error": a.parse_error,
                    "apply_error": a.apply_error,
                    "validation_error": a.validation_error,
                    "classification": a.verdict.classification if a.verdict else None,
                    "diff_path": a.diff_path,
                }
                for a in stage.attempts
            ]
            doc = {"bug_id": bug.id, "config": cfg, "attempts": attempts}
            _write_stage(_stage_path(out_dir, bug.id, cfg, "repair"), doc)
            plausible = sum(1 for a in stage.attempts if a.is_plausible())
            print(f"{bug.id} [{cfg}] repair: {plausible} plausible of {len(stage.attempts)} attempt(s)")
    return 0


# ===== Whole-trial subcommands =====


def _print_records(records) -> None:
    for record in records:
        if record.status != "ok":
            detail = ", ".join(record.missing_artifacts) if record.missing_artifacts else record.error
            print(f"{record.bug_id} [{record.config}] {record.status}: {detail}")
            continue
        plausible = sum(1 for a in record.patch_attempts if a.is_plausible())
        issued = sum(1 for a in record.patch_attempts if not a.skipped)
        print(
            f"{record.bug_id} [{record.config}] ok: "
            f"{len(record.predicted_methods)} method(s), "
            f"{len(record.unique_line_sets)} line set(s), "
            f"{plausible} plausible of {issued} patch attempt(s)"
        )


def cmd_run(args) -> int:
    bugs = _load_bugs(args)
    configs = _parse_configs(args, DEFAULT_RUN_CONFIG)
    pipeline = _pipeline(args)
    records = pipeline.run_ablation(bugs, configs)
    _print_records(records)
    summary = cost_time_summary(records)
    print(f"total cost: {summary.total_cost} over {summary.requests} request(s)")
    return 0


def cmd_ablate(args) -> int:
    bugs = _load_bugs(args)
    configs = _parse_configs(args, DEFAULT_ABLATION_CONFIGS)
    pipeline = _pipeline(args)
    records = pipeline.run_ablation(bugs, configs)
    _print_records(records)
    report_dir = Path(args.out) / "reports"
    written = write_reports(records, bugs, report_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    bugs = load_manifest(Path(args.manifest))
    records = load_all_trial_records(Path(args.out))
    if not records:
        raise UsageError(f"no trial records found under {Path(args.out) / 'trials'}")
    metrics = [m.strip() for m in args.metrics.split(";") if m.strip()]
    report_dir = Path(args.out) / "reports"
    written = write_reports(records, bugs, report_dir, metrics=metrics)
    for path in written:
        print(f"wrote {path}")
    return 0


# ===== Entry point =====


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HarnessError as exc:
        print(f"harness failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())

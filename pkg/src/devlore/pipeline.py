"""End-to-end orchestration: localize methods, localize lines, repair, validate.

Every (bug, config) pair produces exactly one TrialRecord, persisted as JSON
under `<out>/trials/<bug>/<config>.json` with prompt/response texts as sibling
files. Records are written even when a stage dies, so ablation runs are
resumable and idempotent at (bug, config) granularity.

Sampling contract per trial: 1 method-localization call, `samples_lines` line
localization samples (default 10, deduplicated afterwards), and at most
`samples_patch` patch samples (default 3) per unique line set. Repair samples
are requested one at a time so --stop-on-plausible can cut generation early.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import shutil
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Sequence

from .errors import HarnessError
from .llm import LLMClient, UsageRecord
from .model import (
    ArtifactBundle,
    ArtifactConfig,
    BugCase,
    LineLocationSet,
    MethodLocation,
)
from .parsing import (
    NoEditBlocks,
    MalformedEditBlock,
    NoLocationsFound,
    OrphanLineEntry,
    dedup_location_sets,
    parse_edit_script,
    parse_line_locations,
    parse_method_locations,
)
from .patching import PatchError, apply_edit_script
from .prompts import (
    DEFAULT_PROMPT_TOKEN_BUDGET,
    MethodBody,
    PromptTriple,
    TokenBudgetExceeded,
    build_line_localization_prompt,
    build_method_localization_prompt,
    build_repair_prompt,
)
from .tracing import (
    DebugTrace,
    EmptyTrace,
    PruneLimits,
    RelatedMethods,
    TracerFailed,
    TestRunFailedToStart,
    capture_error_stack,
    prune_debug_trace,
    record_debug_trace,
    record_related_methods,
)
from .validation import TestHarnessFailure, Timeout, Verdict, validate_patch

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_UNAVAILABLE = "unavailable"
STATUS_ERROR = "error"

STAGE_RELATED = "extract_related_methods"
STAGE_METHODS = "localize_methods"
STAGE_DEBUG = "extract_debug"
STAGE_LINES = "localize_lines"
STAGE_PATCHES = "generate_patches"
STAGE_VALIDATE = "validate_patches"


# ===== Method body extraction =====


def extract_method_body(
    workspace_root: Path,
    rel_file: str,
    decl_line: int,
    *,
    fallback_window: int = 40,
) -> tuple[int, list[str], bool]:
    """Find the body of the method declared at (rel_file, decl_line).

    Uses a brace-balanced scan for brace languages and an indentation scan for
    Python-style blocks; anything undecidable falls back to a fixed window and
    is flagged truncated. Returns (start_line, lines, truncated).
    """
    text = (workspace_root / rel_file).read_text(encoding="utf-8", errors="replace")
    all_lines = text.split("\n")
    if decl_line < 1 or decl_line > len(all_lines):
        raise ValueError(f"declaration line {decl_line} outside {rel_file} (1..{len(all_lines)})")
    i0 = decl_line - 1

    style, header_end = _detect_block_style(all_lines, i0)
    if style == "indent":
        base_indent = _indent_of(all_lines[i0])
        last_content = header_end
        cursor = header_end + 1
        while cursor < len(all_lines):
            line = all_lines[cursor]
            if not line.strip():
                cursor += 1
                continue
            if _indent_of(line) <= base_indent:
                break
            last_content = cursor
            cursor += 1
        return decl_line, all_lines[i0 : last_content + 1], False
    if style == "brace":
        depth = 0
        opened = False
        for cursor in range(i0, len(all_lines)):
            for char in all_lines[cursor]:
                if char == "{":
                    depth += 1
                    opened = True
                elif char == "}":
                    depth -= 1
            if opened and depth <= 0:
                return decl_line, all_lines[i0 : cursor + 1], False
    end = min(len(all_lines), i0 + fallback_window)
    return decl_line, all_lines[i0:end], True


def _indent_of(line: str) -> int:
    return len(line) - len(line.lstrip(" \t"))


def _detect_block_style(lines: list[str], start: int) -> tuple[str | None, int]:
    """Classify the block opener: ('brace'|'indent'|None, header_end_index)."""
    balance = 0
    for cursor in range(start, min(len(lines), start + 20)):
        line = lines[cursor]
        for char in line:
            if char in "([":
                balance += 1
            elif char in ")]":
                balance -= 1
            elif char == "{":
                return "brace", cursor
        stripped = line.split("#", 1)[0].rstrip()
        if balance <= 0 and stripped.endswith(":"):
            return "indent", cursor
    return None, start


# ===== Trial records =====


@dataclass(frozen=True)
class PatchAttempt:
    """Outcome of one patch sample against one unique line set."""

    set_index: int
    sample_index: int
    skipped: bool = False
    parse_error: str | None = None
    applied: bool = False
    apply_error: str | None = None
    modified_files: tuple[str, ...] = ()
    applied_blocks: int = 0
    diff_path: str | None = None
    verdict: Verdict | None = None
    validation_error: str | None = None

    def is_plausible(self) -> bool:
        return self.verdict is not None and self.verdict.classification == "plausible"


@dataclass
class TrialRecord:
    """Everything one (bug, config) trial produced, losslessly persistable."""

    bug_id: str
    config: str
    status: str = STATUS_OK
    missing_artifacts: tuple[str, ...] = ()
    error: str | None = None
    seed_label: str | None = None
    predicted_methods: tuple[str, ...] = ()
    dropped_methods: int = 0
    class_files: dict[str, str] = field(default_factory=dict)
    unique_line_sets: tuple[LineLocationSet, ...] = ()
    line_parse_failures: int = 0
    patch_attempts: tuple[PatchAttempt, ...] = ()
    usage: tuple[UsageRecord, ...] = ()
    stage_timings: dict[str, float] = field(default_factory=dict)
    prompts: dict = field(default_factory=dict)
    responses: dict = field(default_factory=dict)

    def has_plausible(self) -> bool:
        return any(attempt.is_plausible() for attempt in self.patch_attempts)


def record_path(out_dir: Path, bug_id: str, config: str) -> Path:
    return Path(out_dir) / "trials" / bug_id / f"{config}.json"


def save_trial_record(record: TrialRecord, out_dir: Path) -> Path:
    """Persist the record as JSON plus sibling prompt/response text files."""
    out_dir = Path(out_dir)
    path = record_path(out_dir, record.bug_id, record.config)
    path.parent.mkdir(parents=True, exist_ok=True)

    prompt_refs: dict = {}
    for kind, value in sorted(record.prompts.items()):
        if isinstance(value, str):
            prompt_refs[kind] = _write_text(path.parent, f"{record.config}.prompt-{kind}.txt", value)
        else:
            prompt_refs[kind] = [
                _write_text(path.parent, f"{record.config}.prompt-{kind}-{i}.txt", text)
                for i, text in enumerate(value)
            ]
    response_refs: dict = {}
    for kind, value in sorted(record.responses.items()):
        if value and isinstance(value[0], list):
            response_refs[kind] = [
                [
                    _write_text(path.parent, f"{record.config}.response-{kind}-{i}-{j}.txt", text)
                    for j, text in enumerate(group)
                ]
                for i, group in enumerate(value)
            ]
        else:
            response_refs[kind] = [
                _write_text(path.parent, f"{record.config}.response-{kind}-{i:02d}.txt", text)
                for i, text in enumerate(value)
            ]

    doc = {
        "bug_id": record.bug_id,
        "config": record.config,
        "status": record.status,
        "missing_artifacts": list(record.missing_artifacts),
        "error": record.error,
        "seed_label": record.seed_label,
        "predicted_methods": list(record.predicted_methods),
        "dropped_methods": record.dropped_methods,
        "class_files": record.class_files,
        "unique_line_sets": [
            {cls: list(lines) for cls, lines in set_.entries().items()}
            for set_ in record.unique_line_sets
        ],
        "line_parse_failures": record.line_parse_failures,
        "patch_attempts": [_attempt_to_dict(a) for a in record.patch_attempts],
        "usage": [_usage_to_dict(u) for u in record.usage],
        "stage_timings": record.stage_timings,
        "prompts": prompt_refs,
        "responses": response_refs,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_trial_record(out_dir: Path, bug_id: str, config: str) -> TrialRecord:
    out_dir = Path(out_dir)
    path = record_path(out_dir, bug_id, config)
    doc = json.loads(path.read_text(encoding="utf-8"))

    prompts: dict = {}
    for kind, ref in doc.get("prompts", {}).items():
        if isinstance(ref, str):
            prompts[kind] = _read_text(path.parent, ref)
        else:
            prompts[kind] = [_read_text(path.parent, r) for r in ref]
    responses: dict = {}
    for kind, ref in doc.get("responses", {}).items():
        if ref and isinstance(ref[0], list):
            responses[kind] = [[_read_text(path.parent, r) for r in group] for group in ref]
        else:
            responses[kind] = [_read_text(path.parent, r) for r in ref]

    return TrialRecord(
        bug_id=doc["bug_id"],
        config=doc["config"],
        status=doc["status"],
        missing_artifacts=tuple(doc.get("missing_artifacts", [])),
        error=doc.get("error"),
        seed_label=doc.get("seed_label"),
        predicted_methods=tuple(doc.get("predicted_methods", [])),
        dropped_methods=int(doc.get("dropped_methods", 0)),
        class_files=dict(doc.get("class_files", {})),
        unique_line_sets=tuple(LineLocationSet.from_dict(d) for d in doc.get("unique_line_sets", [])),
        line_parse_failures=int(doc.get("line_parse_failures", 0)),
        patch_attempts=tuple(_attempt_from_dict(d) for d in doc.get("patch_attempts", [])),
        usage=tuple(_usage_from_dict(d) for d in doc.get("usage", [])),
        stage_timings=dict(doc.get("stage_timings", {})),
        prompts=prompts,
        responses=responses,
    )


def load_all_trial_records(out_dir: Path) -> list[TrialRecord]:
    """Load every persisted record under <out>/trials, sorted by (bug, config)."""
    trials = Path(out_dir) / "trials"
    records = []
    if trials.is_dir():
        for json_path in sorted(trials.glob("*/*.json")):
            records.append(load_trial_record(out_dir, json_path.parent.name, json_path.stem))
    return records


def _write_text(directory: Path, name: str, text: str) -> str:
    (directory / name).write_bytes(text.encode("utf-8"))
    return name


def _read_text(directory: Path, name: str) -> str:
    return (directory / name).read_bytes().decode("utf-8")


def _attempt_to_dict(attempt: PatchAttempt) -> dict:
    doc = dataclasses.asdict(attempt)
    doc["modified_files"] = list(attempt.modified_files)
    return doc


def _attempt_from_dict(doc: dict) -> PatchAttempt:
    verdict = None
    if doc.get("verdict") is not None:
        verdict = Verdict(**doc["verdict"])
    return PatchAttempt(
        set_index=doc["set_index"],
        sample_index=doc["sample_index"],
        skipped=doc.get("skipped", False),
        parse_error=doc.get("parse_error"),
        applied=doc.get("applied", False),
        apply_error=doc.get("apply_error"),
        modified_files=tuple(doc.get("modified_files", [])),
        applied_blocks=int(doc.get("applied_blocks", 0)),
        diff_path=doc.get("diff_path"),
        verdict=verdict,
        validation_error=doc.get("validation_error"),
    )


def _usage_to_dict(usage: UsageRecord) -> dict:
    return {
        "input_tokens": usage.input_tokens,
        "output_tokens": usage.output_tokens,
        "cost": str(usage.cost),
        "wall_time": usage.wall_time,
        "request_id": usage.request_id,
    }


def _usage_from_dict(doc: dict) -> UsageRecord:
    return UsageRecord(
        input_tokens=int(doc["input_tokens"]),
        output_tokens=int(doc["output_tokens"]),
        cost=Decimal(doc["cost"]),
        wall_time=float(doc["wall_time"]),
        request_id=str(doc["request_id"]),
    )


# ===== Stage results =====


@dataclass
class MethodStage:
    predicted: list[MethodLocation] = field(default_factory=list)
    related: RelatedMethods | None = None
    bundle: ArtifactBundle | None = None
    prompt: PromptTriple | None = None
    response: str | None = None
    usage: list[UsageRecord] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    missing: tuple[str, ...] = ()
    note: str | None = None


@dataclass
class LineStage:
    unique_sets: list[LineLocationSet] = field(default_factory=list)
    bodies: list[MethodBody] = field(default_factory=list)
    bundle: ArtifactBundle | None = None
    prompt: PromptTriple | None = None
    responses: list[str] = field(default_factory=list)
    parse_failures: int = 0
    dropped_methods: int = 0
    usage: list[UsageRecord] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    missing: tuple[str, ...] = ()
    note: str | None = None


@dataclass
class RepairStage:
    attempts: list[PatchAttempt] = field(default_factory=list)
    prompts: list[PromptTriple] = field(default_factory=list)
    responses: list[list[str]] = field(default_factory=list)
    usage: list[UsageRecord] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    note: str | None = None


@dataclass
class PipelineSettings:
    out_dir: Path
    samples_lines: int = 10
    samples_patch: int = 3
    stop_on_plausible: bool = True
    retry_flaky: bool = False
    jobs: int = 4
    prune_limits: PruneLimits = field(default_factory=PruneLimits)
    token_budget: int = DEFAULT_PROMPT_TOKEN_BUDGET
    trigger_timeout: float = 120.0
    full_timeout: float = 900.0
    seed_label: str | None = None


class Pipeline:
    """Drives the three stages for (bug, config) pairs against one client."""

    def __init__(self, client: LLMClient, settings: PipelineSettings) -> None:
        self.client = client
        self.settings = settings
        self.out_dir = Path(settings.out_dir)
        self._bug_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # ----- shared, cached artifacts -----

    def _lock_for(self, bug_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._bug_locks.setdefault(bug_id, threading.Lock())

    def related_methods(self, bug: BugCase) -> RelatedMethods:
        trace_path = self.out_dir / "traces" / bug.id / "related.jsonl"
        with self._lock_for(bug.id):
            return record_related_methods(bug, trace_path=trace_path)

    def error_stack(self, bug: BugCase) -> str | None:
        cache_dir = self.out_dir / "traces" / bug.id
        text_path = cache_dir / "stack.txt"
        missing_marker = cache_dir / "stack.missing"
        with self._lock_for(bug.id):
            if text_path.exists():
                return text_path.read_bytes().decode("utf-8")
            if missing_marker.exists():
                return None
            cache_dir.mkdir(parents=True, exist_ok=True)
            stack = capture_error_stack(bug, timeout=self.settings.trigger_timeout, log_path=cache_dir / "stack.log")
            if stack is None:
                missing_marker.write_text("", encoding="utf-8")
            else:
                text_path.write_bytes(stack.encode("utf-8"))
            return stack

    def issue_text(self, bug: BugCase) -> str | None:
        if bug.issue_path is None or not bug.issue_path.is_file():
            return None
        text = bug.issue_path.read_text(encoding="utf-8", errors="replace")
        return text if text.strip() else None

    def debug_trace(self, bug: BugCase, scope: Sequence[MethodLocation]) -> DebugTrace:
        scope_arg = ",".join(loc.canonical() for loc in scope)
        digest = hashlib.sha256(scope_arg.encode("utf-8")).hexdigest()[:16]
        trace_path = self.out_dir / "traces" / bug.id / f"debug.{digest}.jsonl"
        with self._lock_for(bug.id):
            raw = record_debug_trace(bug, scope, trace_path=trace_path)
        return prune_debug_trace(raw, self.settings.prune_limits)

    # ----- prompt assembly (reused by fixture tooling and stage runners) -----

    def stage1_bundle(self, bug: BugCase, config: ArtifactConfig) -> ArtifactBundle:
        """Bundle for method localization: debug is never gathered here."""
        stage_config = config.restricted(("issue", "stack"))
        return ArtifactBundle(
            config=config,
            related_methods=self.related_methods(bug),
            issue=self.issue_text(bug) if stage_config.use_issue else None,
            error_stack=self.error_stack(bug) if stage_config.use_stack else None,
        )

    def method_prompt(self, bug: BugCase, config: ArtifactConfig) -> tuple[PromptTriple, ArtifactBundle]:
        bundle = self.stage1_bundle(bug, config)
        prompt = build_method_localization_prompt(bundle, token_budget=self.settings.token_budget)
        return prompt, bundle

    def collect_method_bodies(
        self,
        bug: BugCase,
        related: RelatedMethods,
        methods: Sequence[MethodLocation],
    ) -> tuple[list[MethodBody], int]:
        """Bodies for predicted methods, earlier predictions first, while the
        bodies section stays within half the prompt token budget."""
        bodies: list[MethodBody] = []
        dropped = 0
        index = related.index()
        budget_chars = max(4000, (self.settings.token_budget // 2) * 4)
        used = 0
        for location in methods:
            record = index.get((location.class_path, location.member))
            if record is None:
                dropped += 1
                continue
            try:
                start, lines, truncated = extract_method_body(bug.workspace_root, record.file, record.line)
            except (OSError, ValueError):
                dropped += 1
                continue
            section_chars = sum(len(line) + 8 for line in lines)
            if used + section_chars > budget_chars and bodies:
                dropped += 1
                continue
            used += section_chars
            bodies.append(MethodBody(location=location, start_line=start, lines=tuple(lines), truncated=truncated))
        return bodies, dropped

    def line_prompt(
        self,
        bug: BugCase,
        config: ArtifactConfig,
        methods: Sequence[MethodLocation],
    ) -> tuple[PromptTriple, ArtifactBundle, list[MethodBody], int]:
        """Stage-2 prompt; raises EmptyTrace/TracerFailed when debug is needed but absent."""
        bundle = self.stage1_bundle(bug, config)
        related = bundle.related_methods
        bodies, dropped = self.collect_method_bodies(bug, related, methods)
        if not bodies:
            raise HarnessError(f"bug {bug.id}: none of the predicted methods have extractable bodies")
        if config.use_debug:
            scope = [b.location for b in bodies]
            debug = self.debug_trace(bug, scope)
            bundle = dataclasses.replace(bundle, debug=debug)
        prompt = build_line_localization_prompt(bundle, bodies, token_budget=self.settings.token_budget)
        return prompt, bundle, bodies, dropped

    def repair_prompt(
        self,
        bundle: ArtifactBundle,
        bodies: list[MethodBody],
        candidate_lines: LineLocationSet | None,
    ) -> PromptTriple:
        return build_repair_prompt(bundle, bodies, candidate_lines, token_budget=self.settings.token_budget)

    # ----- stages -----

    def run_method_localization(self, bug: BugCase, config: ArtifactConfig) -> MethodStage:
        stage = MethodStage()
        started = time.monotonic()
        related = self.related_methods(bug)
        stage.related = related
        stage.timings[STAGE_RELATED] = time.monotonic() - started

        bundle = self.stage1_bundle(bug, config)
        stage.bundle = bundle
        stage.missing = bundle.missing_artifacts(config.restricted(("issue", "stack")))
        if stage.missing:
            return stage

        prompt = build_method_localization_prompt(bundle, token_budget=self.settings.token_budget)
        stage.prompt = prompt
        started = time.monotonic()
        samples = self.client.complete(prompt, 1, stream=f"{bug.id}/{config.canonical()}/methods")
        stage.timings[STAGE_METHODS] = time.monotonic() - started
        stage.response = samples[0][0]
        stage.usage = [usage for _, usage in samples]
        try:
            stage.predicted = parse_method_locations(stage.response)
        except NoLocationsFound as exc:
            stage.note = f"NoLocationsFound: {exc}"
            stage.predicted = []
        return stage

    def run_line_localization(
        self,
        bug: BugCase,
        config: ArtifactConfig,
        methods: Sequence[MethodLocation],
    ) -> LineStage:
        if not methods:
            raise ValueError("line localization requires method predictions")
        stage = LineStage()
        bundle = self.stage1_bundle(bug, config)
        related = bundle.related_methods
        stage.bodies, stage.dropped_methods = self.collect_method_bodies(bug, related, methods)
        if not stage.bodies:
            stage.note = "no extractable method bodies"
            return stage

        if config.use_debug:
            started = time.monotonic()
            try:
                debug = self.debug_trace(bug, [b.location for b in stage.bodies])
            except (TracerFailed, EmptyTrace) as exc:
                stage.missing = ("debug",)
                stage.note = f"{type(exc).__name__}: {exc}"
                stage.timings[STAGE_DEBUG] = time.monotonic() - started
                return stage
            stage.timings[STAGE_DEBUG] = time.monotonic() - started
            bundle = dataclasses.replace(bundle, debug=debug)
        stage.bundle = bundle

        prompt = build_line_localization_prompt(bundle, stage.bodies, token_budget=self.settings.token_budget)
        stage.prompt = prompt
        started = time.monotonic()
        samples = self.client.complete(
            prompt, self.settings.samples_lines, stream=f"{bug.id}/{config.canonical()}/lines"
        )
        stage.timings[STAGE_LINES] = time.monotonic() - started
        stage.responses = [text for text, _ in samples]
        stage.usage = [usage for _, usage in samples]

        parsed: list[LineLocationSet] = []
        for text in stage.responses:
            try:
                parsed.append(parse_line_locations(text))
            except (NoLocationsFound, OrphanLineEntry):
                stage.parse_failures += 1
        stage.unique_sets = dedup_location_sets(parsed)
        return stage

    def run_repair(
        self,
        bug: BugCase,
        config: ArtifactConfig,
        bundle: ArtifactBundle,
        bodies: list[MethodBody],
        line_sets: Sequence[LineLocationSet],
    ) -> RepairStage:
        stage = RepairStage()
        hint_sets: list[LineLocationSet | None] = list(line_sets) if line_sets else [None]
        stage.timings[STAGE_PATCHES] = 0.0
        stage.timings[STAGE_VALIDATE] = 0.0
        found_plausible = False

        for set_index, hints in enumerate(hint_sets):
            prompt = self.repair_prompt(bundle, bodies, hints)
            stage.prompts.append(prompt)
            stage.responses.append([])
            for sample_index in range(self.settings.samples_patch):
                if found_plausible and self.settings.stop_on_plausible:
                    stage.attempts.append(
                        PatchAttempt(set_index=set_index, sample_index=sample_index, skipped=True)
                    )
                    continue
                started = time.monotonic()
                samples = self.client.complete(
                    prompt, 1, stream=f"{bug.id}/{config.canonical()}/patch.s{set_index}"
                )
                stage.timings[STAGE_PATCHES] += time.monotonic() - started
                text, usage = samples[0]
                stage.responses[set_index].append(text)
                stage.usage.append(usage)
                attempt = self._attempt_patch(bug, config, set_index, sample_index, text, stage)
                stage.attempts.append(attempt)
                if attempt.is_plausible():
                    found_plausible = True
        return stage

    def _attempt_patch(
        self,
        bug: BugCase,
        config: ArtifactConfig,
        set_index: int,
        sample_index: int,
        response_text: str,
        stage: RepairStage,
    ) -> PatchAttempt:
        trial_tag = f"{config.canonical()}.s{set_index}.p{sample_index}"
        try:
            script = parse_edit_script(response_text, response_id=trial_tag)
        except (MalformedEditBlock, NoEditBlocks) as exc:
            return PatchAttempt(
                set_index=set_index,
                sample_index=sample_index,
                parse_error=f"{type(exc).__name__}: {exc}",
            )

        work_dir = self.out_dir / "work" / bug.id / trial_tag
        if work_dir.exists():
            shutil.rmtree(work_dir)
        shutil.copytree(
            bug.workspace_root,
            work_dir,
            ignore=shutil.ignore_patterns("__pycache__", "*.pyc", ".devlore-backup"),
        )
        try:
            try:
                result = apply_edit_script(work_dir, script)
            except PatchError as exc:
                return PatchAttempt(
                    set_index=set_index,
                    sample_index=sample_index,
                    apply_error=f"{type(exc).__name__}: {exc}",
                )

            diff_rel = Path("patches") / bug.id / f"{trial_tag}.diff"
            diff_abs = self.out_dir / diff_rel
            diff_abs.parent.mkdir(parents=True, exist_ok=True)
            diff_abs.write_bytes(result.unified_diff.encode("utf-8"))

            log_dir = self.out_dir / "logs" / bug.id / trial_tag
            started = time.monotonic()
            try:
                verdict = validate_patch(
                    bug,
                    work_dir,
                    trigger_timeout=self.settings.trigger_timeout,
                    full_timeout=self.settings.full_timeout,
                    retry_flaky=self.settings.retry_flaky,
                    log_dir=log_dir,
                )
            except (TestHarnessFailure, Timeout) as exc:
                stage.timings[STAGE_VALIDATE] += time.monotonic() - started
                return PatchAttempt(
                    set_index=set_index,
                    sample_index=sample_index,
                    applied=True,
                    modified_files=result.modified_files,
                    applied_blocks=result.applied_blocks,
                    diff_path=diff_rel.as_posix(),
                    validation_error=f"{type(exc).__name__}: {exc}",
                )
            stage.timings[STAGE_VALIDATE] += time.monotonic() - started
            return PatchAttempt(
                set_index=set_index,
                sample_index=sample_index,
                applied=True,
                modified_files=result.modified_files,
                applied_blocks=result.applied_blocks,
                diff_path=diff_rel.as_posix(),
                verdict=verdict,
            )
        finally:
            shutil.rmtree(work_dir, ignore_errors=True)

    # ----- end to end -----

    def run_end_to_end(self, bug: BugCase, config: ArtifactConfig) -> TrialRecord:
        record = TrialRecord(bug_id=bug.id, config=config.canonical(), seed_label=self.settings.seed_label)
        timings: dict[str, float] = {}
        usage: list[UsageRecord] = []
        try:
            method_stage = self.run_method_localization(bug, config)
            timings.update(method_stage.timings)
            usage.extend(method_stage.usage)
            if method_stage.related is not None:
                record.class_files = method_stage.related.class_files()
            if method_stage.prompt is not None:
                record.prompts["method"] = method_stage.prompt.concatenated()
            if method_stage.response is not None:
                record.responses["method"] = [method_stage.response]
            if method_stage.missing:
                record.status = STATUS_UNAVAILABLE
                record.missing_artifacts = method_stage.missing
                return record
            record.predicted_methods = tuple(loc.canonical() for loc in method_stage.predicted)
            if method_stage.note:
                record.error = method_stage.note
            if not method_stage.predicted:
                return record

            line_stage = self.run_line_localization(bug, config, method_stage.predicted)
            timings.update(line_stage.timings)
            usage.extend(line_stage.usage)
            record.dropped_methods = line_stage.dropped_methods
            record.line_parse_failures = line_stage.parse_failures
            record.unique_line_sets = tuple(line_stage.unique_sets)
            if line_stage.prompt is not None:
                record.prompts["lines"] = line_stage.prompt.concatenated()
            if line_stage.responses:
                record.responses["lines"] = list(line_stage.responses)
            if line_stage.missing:
                record.status = STATUS_UNAVAILABLE
                record.missing_artifacts = line_stage.missing
                record.error = line_stage.note
                return record
            if not line_stage.bodies:
                record.error = line_stage.note
                return record

            repair_stage = self.run_repair(
                bug, config, line_stage.bundle, line_stage.bodies, line_stage.unique_sets
            )
            timings.update(repair_stage.timings)
            usage.extend(repair_stage.usage)
            record.patch_attempts = tuple(repair_stage.attempts)
            if repair_stage.prompts:
                record.prompts["patch"] = [p.concatenated() for p in repair_stage.prompts]
                record.responses["patch"] = [list(group) for group in repair_stage.responses]
            return record
        except (HarnessError, TokenBudgetExceeded, TestRunFailedToStart) as exc:
            record.status = STATUS_ERROR
            record.error = f"{type(exc).__name__}: {exc}"
            return record
        finally:
            record.usage = tuple(self._normalized_usage(usage))
            record.stage_timings = {
                stage: (0.0 if self.client.deterministic else round(seconds, 6))
                for stage, seconds in sorted(timings.items())
            }
            if self.client.deterministic:
                record.patch_attempts = tuple(self._zero_verdict_times(a) for a in record.patch_attempts)

    def _normalized_usage(self, usage: list[UsageRecord]) -> list[UsageRecord]:
        if not self.client.deterministic:
            return usage
        return [dataclasses.replace(u, wall_time=0.0) for u in usage]

    @staticmethod
    def _zero_verdict_times(attempt: PatchAttempt) -> PatchAttempt:
        if attempt.verdict is None:
            return attempt
        verdict = dataclasses.replace(
            attempt.verdict,
            failing_run_seconds=0.0,
            full_run_seconds=0.0 if attempt.verdict.full_run_seconds is not None else None,
        )
        return dataclasses.replace(attempt, verdict=verdict)

    # ----- ablation driver -----

    def run_ablation(
        self,
        bugs: Sequence[BugCase],
        configs: Sequence[ArtifactConfig],
    ) -> list[TrialRecord]:
        """Run every (bug, config) pair, skipping pairs already persisted."""
        pairs = [(bug, config) for bug in bugs for config in configs]
        results: dict[tuple[str, str], TrialRecord] = {}
        todo = []
        for bug, config in pairs:
            key = (bug.id, config.canonical())
            if record_path(self.out_dir, *key).exists():
                results[key] = load_trial_record(self.out_dir, *key)
                logger.info("skipping %s/%s: record already present", *key)
            else:
                todo.append((bug, config))

        def _run_one(pair: tuple[BugCase, ArtifactConfig]) -> tuple[tuple[str, str], TrialRecord]:
            bug, config = pair
            key = (bug.id, config.canonical())
            try:
                record = self.run_end_to_end(bug, config)
            except Exception as exc:  # defensive: never lose the pair
                logger.exception("trial %s/%s crashed", *key)
                record = TrialRecord(
                    bug_id=bug.id,
                    config=config.canonical(),
                    status=STATUS_ERROR,
                    error=f"{type(exc).__name__}: {exc}",
                    seed_label=self.settings.seed_label,
                )
            save_trial_record(record, self.out_dir)
            return key, record

        if todo:
            with ThreadPoolExecutor(max_workers=max(1, self.settings.jobs)) as pool:
                for key, record in pool.map(_run_one, todo):
                    results[key] = record
        return [results[(bug.id, config.canonical())] for bug, config in pairs]

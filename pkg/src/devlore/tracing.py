"""Host side of the tracing protocol.

Runs the per-bug tracer adapter as a subprocess, ingests its JSONL output,
captures error stacks from failing test runs, and prunes/renders debug traces
for prompt inclusion. The wire format (one JSON object per line):

    method enter: {"e":"m","class":str,"method":str,"sig":str,"file":str,"line":int}
    line step:    {"e":"s","class":str,"method":str,"line":int,"vars":{...}}
    test result:  {"e":"t","test":str,"status":"pass"|"fail"|"error","message":str}

The host never assumes the adapter diffed variables correctly: changed-vars
semantics are re-enforced on ingestion.
"""
from __future__ import annotations

import json
import logging
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import HarnessError
from .model import BugCase, MethodLocation, estimate_tokens, expand_command

logger = logging.getLogger(__name__)

TRACER_TIMEOUT_SECONDS = 600.0
STACK_CAPTURE_TIMEOUT_SECONDS = 120.0


class TracerFailed(HarnessError):
    """Tracer adapter exited nonzero without producing any trace events."""


class EmptyTrace(HarnessError):
    """The trace contains no events of the kind the caller needs."""


class TestRunFailedToStart(HarnessError):
    """The failing-test command could not be executed at all."""

    __test__ = False  # starts with "Test" but is not a pytest class


# ===== Trace data =====


@dataclass(frozen=True)
class MethodRecord:
    """One project method observed entering during the failing run."""

    class_path: str
    member: str
    signature: str
    file: str
    line: int

    def location(self) -> MethodLocation:
        return MethodLocation(self.class_path, self.member)


@dataclass(frozen=True)
class RelatedMethods:
    """Methods executed by the failing tests, in first-entry order."""

    methods: tuple[MethodRecord, ...]

    def grouped_by_class(self) -> dict[str, list[MethodRecord]]:
        groups: dict[str, list[MethodRecord]] = {}
        for record in self.methods:
            groups.setdefault(record.class_path, []).append(record)
        return groups

    def locations(self) -> list[MethodLocation]:
        return [record.location() for record in self.methods]

    def index(self) -> dict[tuple[str, str], MethodRecord]:
        out: dict[tuple[str, str], MethodRecord] = {}
        for record in self.methods:
            out.setdefault((record.class_path, record.member), record)
        return out

    def class_files(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for record in self.methods:
            out.setdefault(record.class_path, record.file)
        return out


@dataclass(frozen=True)
class StepEvent:
    """One line-step observation; changed_vars maps name -> JSON value text."""

    class_path: str
    member: str
    line: int
    changed_vars: dict[str, str]


@dataclass(frozen=True)
class DebugTrace:
    events: tuple[StepEvent, ...]
    scope: tuple[MethodLocation, ...]


@dataclass(frozen=True)
class PruneLimits:
    crop_limit: int = 10
    max_value_chars: int = 200
    max_events: int = 1000
    token_budget: int = 60000


# ===== Adapter invocation and ingestion =====


def read_trace_events(path: Path) -> list[dict]:
    """Parse a JSONL trace file.

    A trailing partial line (adapter killed mid-write) is ignored; malformed
    lines elsewhere mean the file is corrupt.
    """
    events: list[dict] = []
    lines = path.read_text(encoding="utf-8", errors="replace").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for index, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            if index == len(lines) - 1:
                break  # interrupted final write
            raise TracerFailed(f"malformed trace line {index + 1} in {path}")
        if isinstance(obj, dict):
            events.append(obj)
    return events


def run_tracer(bug: BugCase, scope: str, trace_out: Path, *, timeout: float = TRACER_TIMEOUT_SECONDS) -> list[dict]:
    """Invoke the bug's tracer adapter and ingest whatever it wrote."""
    trace_out.parent.mkdir(parents=True, exist_ok=True)
    argv = expand_command(
        bug.tracer_command,
        {
            "workspace": str(bug.workspace_root),
            "tests": list(bug.failing_tests),
            "trace_out": str(trace_out),
            "scope": scope,
        },
    )
    try:
        proc = subprocess.run(
            argv,
            cwd=bug.workspace_root,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except OSError as exc:
        raise TracerFailed(f"bug {bug.id}: tracer command could not start: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise TracerFailed(f"bug {bug.id}: tracer timed out after {timeout}s") from exc

    events = read_trace_events(trace_out) if trace_out.exists() else []
    if proc.returncode != 0 and not events:
        tail = (proc.stderr or proc.stdout or "").strip()[-500:]
        raise TracerFailed(f"bug {bug.id}: tracer exited {proc.returncode} with no trace: {tail}")
    return events


def related_methods_from_events(events: Iterable[dict]) -> RelatedMethods:
    """Deduplicate method-enter events, keeping first-entry order."""
    seen: set[tuple[str, str, str]] = set()
    records: list[MethodRecord] = []
    for event in events:
        if event.get("e") != "m":
            continue
        key = (str(event["class"]), str(event["method"]), str(event.get("sig", "")))
        if key in seen:
            continue
        seen.add(key)
        records.append(
            MethodRecord(
                class_path=key[0],
                member=key[1],
                signature=key[2],
                file=str(event.get("file", "")),
                line=int(event.get("line", 0)),
            )
        )
    if not records:
        raise EmptyTrace("trace contains no method-enter events")
    return RelatedMethods(tuple(records))


def record_related_methods(bug: BugCase, *, trace_path: Path | None = None) -> RelatedMethods:
    """Trace the failing tests in method-enter-only mode (scope '*')."""
    if trace_path is not None and trace_path.exists():
        return related_methods_from_events(read_trace_events(trace_path))
    if trace_path is None:
        with tempfile.TemporaryDirectory(prefix="devlore-trace-") as tmp:
            return related_methods_from_events(run_tracer(bug, "*", Path(tmp) / "related.jsonl"))
    return related_methods_from_events(run_tracer(bug, "*", trace_path))


def debug_trace_from_events(events: Iterable[dict], scope: Sequence[MethodLocation]) -> DebugTrace:
    """Build a DebugTrace from step events, enforcing changed-vars semantics.

    A variable is recorded only when its serialized value text differs from
    the most recent text recorded for that (class, member) scope; all values
    present at first observation count as changed.
    """
    scope_keys = {(loc.class_path, loc.member) for loc in scope}
    last_seen: dict[tuple[str, str], dict[str, str]] = {}
    steps: list[StepEvent] = []
    for event in events:
        if event.get("e") != "s":
            continue
        key = (str(event["class"]), str(event["method"]))
        if scope_keys and key not in scope_keys:
            continue
        previous = last_seen.setdefault(key, {})
        changed: dict[str, str] = {}
        raw_vars = event.get("vars") or {}
        for name, value in raw_vars.items():
            text = json.dumps(value, sort_keys=True, ensure_ascii=False)
            if previous.get(name) != text:
                changed[name] = text
                previous[name] = text
        steps.append(StepEvent(class_path=key[0], member=key[1], line=int(event["line"]), changed_vars=changed))
    if not steps:
        raise EmptyTrace("trace contains no step events for the requested scope")
    return DebugTrace(events=tuple(steps), scope=tuple(scope))


def record_debug_trace(bug: BugCase, scope: Sequence[MethodLocation], *, trace_path: Path | None = None) -> DebugTrace:
    """Trace the failing tests with line stepping restricted to `scope`."""
    scope_arg = ",".join(loc.canonical() for loc in scope)
    if trace_path is not None and trace_path.exists():
        return debug_trace_from_events(read_trace_events(trace_path), scope)
    if trace_path is None:
        with tempfile.TemporaryDirectory(prefix="devlore-trace-") as tmp:
            return debug_trace_from_events(run_tracer(bug, scope_arg, Path(tmp) / "debug.jsonl"), scope)
    return debug_trace_from_events(run_tracer(bug, scope_arg, trace_path), scope)


# ===== Error stack capture =====

_TRACEBACK_HEADER = "Traceback (most recent call last):"
_PYTEST_SECTION_RE = re.compile(r"^={5,} FAILURES ={5,}$")
_PYTEST_BOUNDARY_RE = re.compile(r"^[=]{5,}[^=]+[=]{5,}$")
_UNITTEST_TERMINATOR_RE = re.compile(r"^(={10,}|Ran \d+ tests?\b.*|FAILED\b.*|OK\b.*)$")
_JAVA_EXCEPTION_RE = re.compile(r"^(?:Caused by: )?[\w$.]+(?:Exception|Error)\b.*$")
_JAVA_FRAME_RE = re.compile(r"^\s+at\s+\S+")


def extract_stack_text(output: str, exit_code: int) -> str | None:
    """Pull the failure/stack section out of a test runner's output.

    Preference order: an explicit failure section (pytest-style banner), then
    traceback blocks with their FAIL/ERROR headers, then Java-style
    exception+frame blocks, then (when the run failed) the whole output.
    Runner timing footers never make it in, so extraction is deterministic
    across reruns of the same workspace.
    """
    lines = output.split("\n")

    for start, line in enumerate(lines):
        if _PYTEST_SECTION_RE.match(line.strip()):
            end = len(lines)
            for j in range(start + 1, len(lines)):
                if _PYTEST_BOUNDARY_RE.match(lines[j].strip()):
                    end = j
                    break
            section = "\n".join(lines[start:end]).rstrip("\n")
            if section:
                return section

    blocks = _python_traceback_blocks(lines)
    if blocks:
        return "\n\n".join(blocks)

    blocks = _java_exception_blocks(lines)
    if blocks:
        return "\n\n".join(blocks)

    if exit_code != 0 and output.strip():
        return output
    return None


def _python_traceback_blocks(lines: list[str]) -> list[str]:
    blocks: list[str] = []
    i = 0
    while i < len(lines):
        if lines[i].strip() != _TRACEBACK_HEADER:
            i += 1
            continue
        start = i
        # fold in a unittest-style "FAIL: name" header and its dashed rule
        if start >= 2 and re.match(r"^-{10,}$", lines[start - 1]) and re.match(r"^(FAIL|ERROR):", lines[start - 2]):
            start -= 2
        end = i + 1
        while end < len(lines) and not _UNITTEST_TERMINATOR_RE.match(lines[end].strip()):
            end += 1
        block = "\n".join(lines[start:end]).rstrip("\n")
        if block:
            blocks.append(block)
        i = end
    return blocks


def _java_exception_blocks(lines: list[str]) -> list[str]:
    blocks: list[str] = []
    i = 0
    while i < len(lines):
        if _JAVA_EXCEPTION_RE.match(lines[i].strip()) and i + 1 < len(lines) and _JAVA_FRAME_RE.match(lines[i + 1]):
            start = i
            end = i + 1
            while end < len(lines) and (
                _JAVA_FRAME_RE.match(lines[end])
                or lines[end].strip().startswith("...")
                or _JAVA_EXCEPTION_RE.match(lines[end].strip())
            ):
                end += 1
            blocks.append("\n".join(lines[start:end]))
            i = end
        else:
            i += 1
    return blocks


def capture_error_stack(
    bug: BugCase,
    *,
    timeout: float = STACK_CAPTURE_TIMEOUT_SECONDS,
    log_path: Path | None = None,
) -> str | None:
    """Run the failing tests and return the extracted stack text, if any."""
    argv = expand_command(
        bug.failing_test_command,
        {"workspace": str(bug.workspace_root), "tests": list(bug.failing_tests)},
    )
    started = time.monotonic()
    try:
        proc = subprocess.run(
            argv,
            cwd=bug.workspace_root,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except OSError as exc:
        raise TestRunFailedToStart(f"bug {bug.id}: {argv[0]!r} could not start: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise TestRunFailedToStart(f"bug {bug.id}: failing-test run timed out after {timeout}s") from exc
    output = (proc.stdout or "") + (proc.stderr or "")
    if log_path is not None:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(output, encoding="utf-8")
    logger.debug("stack capture for %s took %.2fs (exit %d)", bug.id, time.monotonic() - started, proc.returncode)
    return extract_stack_text(output, proc.returncode)


# ===== Pruning and rendering =====


def prune_debug_trace(trace: DebugTrace, limits: PruneLimits = PruneLimits()) -> DebugTrace:
    """Bound a debug trace: crop collections, cap value texts, cap event count,
    then drop oldest events until the rendered estimate fits the token budget.

    Idempotent: pruning an already-pruned trace changes nothing.
    """
    events = list(trace.events[-limits.max_events :])
    bounded: list[StepEvent] = []
    for event in events:
        capped = {
            name: _crop_value(text, limits.crop_limit)[: limits.max_value_chars]
            for name, text in event.changed_vars.items()
        }
        bounded.append(replace(event, changed_vars=capped))

    rendered = [_render_event(e) for e in bounded]
    total_chars = sum(len(line) + 1 for line in rendered)
    start = 0
    while start < len(bounded) and estimate_tokens_from_chars(total_chars) > limits.token_budget:
        total_chars -= len(rendered[start]) + 1
        start += 1
    return DebugTrace(events=tuple(bounded[start:]), scope=trace.scope)


def estimate_tokens_from_chars(chars: int) -> int:
    return (chars + 3) // 4


def _crop_value(text: str, crop_limit: int) -> str:
    """Truncate a JSON array value to crop_limit elements with a count suffix.

    Non-array and unparseable texts pass through untouched, which also makes
    the operation idempotent: a cropped text no longer parses as JSON.
    """
    candidate = text.strip()
    if not candidate.startswith("["):
        return text
    try:
        value = json.loads(text)
    except (json.JSONDecodeError, RecursionError):
        return text
    if not isinstance(value, list) or len(value) <= crop_limit:
        return text
    head = json.dumps(value[:crop_limit], sort_keys=True, ensure_ascii=False)
    return f"{head[:-1]} ...(+{len(value) - crop_limit} more)]"


def _render_event(event: StepEvent) -> str:
    inner = ", ".join(f"{name}:{value}" for name, value in event.changed_vars.items())
    return f"{event.class_path}:{event.member}:{event.line} {{{inner}}}"


def render_debug_lines(trace: DebugTrace) -> str:
    """One line per step event: `<class_path>:<member>:<line> {<name>:<value>, ...}`."""
    return "\n".join(_render_event(event) for event in trace.events)

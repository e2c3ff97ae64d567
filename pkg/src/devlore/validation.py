"""Two-stage patch validation: trigger tests first, then the full suite.

A candidate is plausible only when the originally failing tests pass AND the
full suite introduces no regression. The full suite never runs when the
trigger stage fails, which keeps the expensive path off obviously bad patches.
Exit code 0 means pass; anything else is a failure of that stage.
"""
from __future__ import annotations

import logging
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import HarnessError
from .model import BugCase, expand_command

logger = logging.getLogger(__name__)

TRIGGER_TIMEOUT_SECONDS = 120.0
FULL_SUITE_TIMEOUT_SECONDS = 900.0

FAILED_TRIGGER = "failed_trigger"
REGRESSION = "regression"
PLAUSIBLE = "plausible"


class TestHarnessFailure(HarnessError):
    """The test runner could not be started at all."""

    __test__ = False  # starts with "Test" but is not a pytest class


class Timeout(HarnessError):
    """A validation stage exceeded its wall-clock cap."""


class MissingGroundTruth(HarnessError):
    """The operation needs developer-fix ground truth the bug does not have."""


@dataclass(frozen=True)
class Verdict:
    classification: str
    failing_tests_passed: bool
    full_suite_passed: bool | None
    failing_run_seconds: float
    full_run_seconds: float | None


def _run_stage(
    command_template: str,
    bug: BugCase,
    workspace: Path,
    *,
    timeout: float,
    log_path: Path | None,
) -> tuple[bool, float]:
    argv = expand_command(
        command_template,
        {"workspace": str(workspace), "tests": list(bug.failing_tests)},
    )
    started = time.monotonic()
    try:
        proc = subprocess.run(argv, cwd=workspace, capture_output=True, text=True, timeout=timeout)
    except OSError as exc:
        raise TestHarnessFailure(f"bug {bug.id}: {argv[0]!r} could not start: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise Timeout(f"bug {bug.id}: stage exceeded {timeout}s wall clock") from exc
    elapsed = time.monotonic() - started
    if log_path is not None:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(
            f"$ {' '.join(argv)}\nexit code: {proc.returncode}\n\n{proc.stdout or ''}{proc.stderr or ''}",
            encoding="utf-8",
        )
    return proc.returncode == 0, elapsed


def validate_patch(
    bug: BugCase,
    workspace_copy: Path,
    *,
    trigger_timeout: float = TRIGGER_TIMEOUT_SECONDS,
    full_timeout: float = FULL_SUITE_TIMEOUT_SECONDS,
    retry_flaky: bool = False,
    log_dir: Path | None = None,
) -> Verdict:
    """Run the trigger tests, then (only on success) the full suite."""
    trigger_log = log_dir / "trigger.log" if log_dir else None
    trigger_passed, trigger_seconds = _run_stage(
        bug.failing_test_command, bug, workspace_copy, timeout=trigger_timeout, log_path=trigger_log
    )
    if not trigger_passed:
        return Verdict(
            classification=FAILED_TRIGGER,
            failing_tests_passed=False,
            full_suite_passed=None,
            failing_run_seconds=trigger_seconds,
            full_run_seconds=None,
        )

    full_log = log_dir / "full.log" if log_dir else None
    full_passed, full_seconds = _run_stage(
        bug.full_test_command, bug, workspace_copy, timeout=full_timeout, log_path=full_log
    )
    if not full_passed and retry_flaky:
        logger.info("bug %s: full suite failed; retrying once for flakiness", bug.id)
        retry_log = log_dir / "full.retry.log" if log_dir else None
        full_passed, retry_seconds = _run_stage(
            bug.full_test_command, bug, workspace_copy, timeout=full_timeout, log_path=retry_log
        )
        full_seconds += retry_seconds

    return Verdict(
        classification=PLAUSIBLE if full_passed else REGRESSION,
        failing_tests_passed=True,
        full_suite_passed=full_passed,
        failing_run_seconds=trigger_seconds,
        full_run_seconds=full_seconds,
    )


def side_by_side_report(bug: BugCase, candidate_diff: str) -> str:
    """Two-column text juxtaposing the candidate diff with the developer patch.

    Flags textual identity; semantic equivalence stays a human call.
    """
    if bug.ground_truth is None:
        raise MissingGroundTruth(f"bug {bug.id} has no ground truth to compare against")
    dev_diff = bug.ground_truth.dev_patch_path.read_text(encoding="utf-8")
    identical = candidate_diff.strip() == dev_diff.strip()

    left_lines = candidate_diff.rstrip("\n").split("\n")
    right_lines = dev_diff.rstrip("\n").split("\n")
    width = max([len("CANDIDATE")] + [len(line) for line in left_lines])
    width = min(width, 120)
    height = max(len(left_lines), len(right_lines))
    rows = []
    for i in range(height):
        left = left_lines[i] if i < len(left_lines) else ""
        right = right_lines[i] if i < len(right_lines) else ""
        rows.append(f"{left[:width]:<{width}} | {right}")

    header = [
        f"# Patch comparison for bug {bug.id}",
        "",
        f"Textually identical to the developer patch: {'yes' if identical else 'no'}",
        "",
        f"{'CANDIDATE':<{width}} | DEVELOPER",
        f"{'-' * width}-+-{'-' * len('DEVELOPER')}",
    ]
    return "\n".join(header + rows) + "\n"

"""Loading unittest ids and running them under a trace recorder."""
from __future__ import annotations

import sys
import traceback
import unittest
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .qualnames import QualnameResolver
from .recorder import MethodEnterRecorder, StepRecorder, TraceWriter, parse_scope


class CollectionError(Exception):
    """The requested tests could not be loaded."""


@dataclass(frozen=True)
class LoadedTests:
    """A runnable suite plus the files its test cases were defined in."""

    suite: unittest.TestSuite
    test_files: tuple[Path, ...]


def _iter_cases(suite: unittest.TestSuite) -> Iterator[unittest.TestCase]:
    for entry in suite:
        if isinstance(entry, unittest.TestSuite):
            yield from _iter_cases(entry)
        else:
            yield entry


def load_tests(workspace: Path, test_ids: Sequence[str]) -> LoadedTests:
    """Resolve dotted unittest ids relative to the workspace.

    Import and lookup failures raise CollectionError instead of the silent
    error-case objects the unittest loader would otherwise smuggle into the
    run.
    """
    if not test_ids:
        raise CollectionError("no tests requested")
    loader = unittest.TestLoader()
    loaded: list[unittest.TestSuite] = []
    for test_id in test_ids:
        try:
            loaded.append(loader.loadTestsFromName(test_id))
        except Exception as exc:
            raise CollectionError(f"cannot load {test_id!r}: {exc}") from exc
    if loader.errors:
        summary = loader.errors[0].strip().splitlines()[-1]
        raise CollectionError(f"cannot load tests: {summary}")

    cases = list(_iter_cases(unittest.TestSuite(loaded)))
    for case in cases:
        if type(case).__name__ in ("_FailedTest", "ModuleImportFailure", "LoaderError"):
            raise CollectionError(f"cannot load {case.id()!r}")
    if not cases:
        raise CollectionError(f"no test cases found for {list(test_ids)!r}")

    files: set[Path] = set()
    for case in cases:
        module = sys.modules.get(type(case).__module__)
        module_file = getattr(module, "__file__", None)
        if module_file:
            files.add(Path(module_file).resolve())
    return LoadedTests(suite=unittest.TestSuite(cases), test_files=tuple(sorted(files)))


class _WireResult(unittest.TestResult):
    """Emits one test-result wire event per finished test."""

    def __init__(self, writer: TraceWriter) -> None:
        super().__init__()
        self._writer = writer

    def addSuccess(self, test: unittest.TestCase) -> None:
        super().addSuccess(test)
        self._writer.test_result(test.id(), "pass", "")

    def addFailure(self, test: unittest.TestCase, err) -> None:
        super().addFailure(test, err)
        self._writer.test_result(test.id(), "fail", _error_summary(err))

    def addError(self, test: unittest.TestCase, err) -> None:
        super().addError(test, err)
        self._writer.test_result(test.id(), "error", _error_summary(err))

    def addSkip(self, test: unittest.TestCase, reason: str) -> None:
        super().addSkip(test, reason)
        self._writer.test_result(test.id(), "error", f"skipped: {reason}")

    def addExpectedFailure(self, test: unittest.TestCase, err) -> None:
        super().addExpectedFailure(test, err)
        self._writer.test_result(test.id(), "pass", "expected failure")

    def addUnexpectedSuccess(self, test: unittest.TestCase) -> None:
        super().addUnexpectedSuccess(test)
        self._writer.test_result(test.id(), "fail", "unexpected success")


def _error_summary(err) -> str:
    exc_type, exc_value, _tb = err
    lines = traceback.format_exception_only(exc_type, exc_value)
    return lines[-1].strip() if lines else ""


def run_traced(
    workspace: Path,
    test_ids: Sequence[str],
    trace_out: Path,
    scope: str,
    max_value_chars: int,
) -> int:
    """Load the tests, run them under the recorder for `scope`, exit 0.

    Test failures and errors are normal, reportable outcomes; only a
    collection problem (raised as CollectionError) should become a nonzero
    exit, and the caller owns that translation.
    """
    workspace = Path(workspace).resolve()
    sys.path.insert(0, str(workspace))
    try:
        loaded = load_tests(workspace, test_ids)
        resolver = QualnameResolver(workspace, excluded_files=loaded.test_files)
        writer = TraceWriter(Path(trace_out))
        try:
            if scope == "*":
                recorder = MethodEnterRecorder(resolver, writer)
            else:
                recorder = StepRecorder(resolver, writer, parse_scope(scope), max_value_chars)
            result = _WireResult(writer)
            sys.settrace(recorder.trace)
            try:
                loaded.suite.run(result)
            finally:
                sys.settrace(None)
        finally:
            writer.close()
    finally:
        try:
            sys.path.remove(str(workspace))
        except ValueError:
            pass
    return 0

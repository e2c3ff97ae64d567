"""Shared fixtures: the seeded-bug corpus and acceptance-line reporting."""
from __future__ import annotations

import pytest

_acceptance_results: dict[str, bool] = {}


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    from tests.corpus import build_corpus

    return build_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.kwargs.get("label")
    if label is None and marker.args:
        label = marker.args[0]
    if label is None:
        label = item.name
    if report.when == "call":
        _acceptance_results[label] = report.passed
    elif report.failed or report.skipped:
        _acceptance_results[label] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed in _acceptance_results.items():
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {label}")

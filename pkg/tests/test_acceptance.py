"""Acceptance suite: each test checks one headline requirement end to end.

Every test carries @pytest.mark.acceptance(label=...); the terminal summary
prints one PASS/FAIL line per label. Tests here favor independent oracles and
replayed fixtures over unit-level shortcuts: byte comparisons, brute-force
set enumeration, and a live validator run against known-good patches.
"""
from __future__ import annotations

import hashlib
import random
import re
import shutil
import time
from pathlib import Path

import pytest

from devlore.llm import LLMClient
from devlore.metrics import MatchSpec, line_match, method_hit, rate_cell, rates, top_n_hit, union_and_overlap
from devlore.model import ArtifactConfig, BugCase, GroundTruth, LineLocationSet, MethodLocation
from devlore.parsing import (
    EditBlock,
    EditScript,
    MalformedEditBlock,
    NoEditBlocks,
    NoLocationsFound,
    OrphanLineEntry,
    parse_edit_script,
    parse_line_locations,
    parse_method_locations,
    render_edit_script,
)
from devlore.patching import AmbiguousMatch, SearchNotFound, apply_edit_script, revert
from devlore.pipeline import PatchAttempt, Pipeline, PipelineSettings, TrialRecord
from devlore.tracing import (
    DebugTrace,
    PruneLimits,
    StepEvent,
    estimate_tokens_from_chars,
    prune_debug_trace,
    record_debug_trace,
    render_debug_lines,
)
from devlore.validation import Verdict, validate_patch

STACK = ArtifactConfig.from_string("stack")
ISSUE = ArtifactConfig.from_string("issue")


def _tree_digest(root: Path) -> dict[str, str]:
    digest: dict[str, str] = {}
    if not root.exists():
        return digest
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest[path.relative_to(root).as_posix()] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digest


@pytest.fixture(scope="module")
def grid_runs(corpus, tmp_path_factory):
    """Two complete replay runs over all bugs under the stack and issue configs.

    A live HTTP call during either run fails the fixture outright: replay mode
    must never touch the network.
    """
    guard = pytest.MonkeyPatch()

    def _no_network(self, *args, **kwargs):
        raise AssertionError("live endpoint reached during a replay run")

    guard.setattr(LLMClient, "_post", _no_network)
    started = time.monotonic()
    runs = []
    try:
        for tag in ("grid-a", "grid-b"):
            out = tmp_path_factory.mktemp(tag)
            pipeline = Pipeline(
                LLMClient(replay_dir=corpus.fixtures_dir), PipelineSettings(out_dir=out)
            )
            records = pipeline.run_ablation(corpus.bugs, [STACK, ISSUE])
            runs.append((out, records))
    finally:
        guard.undo()
    return runs, time.monotonic() - started


# ===== 1. Parser conformance =====

# Hand-annotated response corpus: (parser, response text, expected value or error).
GOOD = "expect"
RAISES = "raises"

PARSER_CASES = [
    # --- method localization responses ---
    (parse_method_locations, "calc.numbers::parse_number",
     GOOD, [MethodLocation("calc.numbers", "parse_number")]),
    (parse_method_locations,
     "1. `calc.numbers::parse_number`\n2. `calc.strings::replace_each`",
     GOOD, [MethodLocation("calc.numbers", "parse_number"), MethodLocation("calc.strings", "replace_each")]),
    (parse_method_locations,
     "calc.seq::window(values, size)\ncalc.seq::window(int)\n- calc.seq::running_mean",
     GOOD, [MethodLocation("calc.seq", "window"), MethodLocation("calc.seq", "running_mean")]),
    (parse_method_locations,
     "```\ncom.fasterxml.jackson.databind.DeserializationContext::handleWeirdStringValue\n```",
     GOOD, [MethodLocation("com.fasterxml.jackson.databind.DeserializationContext", "handleWeirdStringValue")]),
    (parse_method_locations,
     "The bug is likely in the parsing logic near the hex branch.",
     RAISES, NoLocationsFound),
    (parse_method_locations,
     "I inspected the skeleton carefully.\ncalc.numbers::parse_number.\nNothing else stands out.",
     GOOD, [MethodLocation("calc.numbers", "parse_number")]),
    # --- line localization responses ---
    (parse_line_locations, "calc.numbers\nline: 13",
     GOOD, {"calc.numbers": (13,)}),
    (parse_line_locations, "calc.numbers\nline: 15\nline: 13\ncalc.seq\nline: 8",
     GOOD, {"calc.numbers": (13, 15), "calc.seq": (8,)}),
    (parse_line_locations, "calc.strings::contains_ignore_case\nLine: 7",
     GOOD, {"calc.strings": (7,)}),
    (parse_line_locations, "- calc.seq\n- line: 19\n- line: 19",
     GOOD, {"calc.seq": (19,)}),
    (parse_line_locations, "line: 12\ncalc.numbers",
     RAISES, OrphanLineEntry),
    (parse_line_locations, "The suspicious region spans the whole loop body.",
     RAISES, NoLocationsFound),
    (parse_line_locations, "calc.unused\ncalc.seq\nline: 33",
     GOOD, {"calc.seq": (33,)}),
    # --- repair responses (SEARCH/REPLACE edit scripts) ---
    (parse_edit_script,
     "calc/numbers.py\n<<<<<<< SEARCH\nold line\n=======\nnew line\n>>>>>>> REPLACE",
     GOOD, EditScript((EditBlock("calc/numbers.py", ("old line",), ("new line",)),))),
    (parse_edit_script,
     "calc/a.py\n<<<<<<< SEARCH\none\n=======\nuno\n>>>>>>> REPLACE\n\n"
     "calc/b.py\n<<<<<<< SEARCH\ntwo\n=======\ndos\ndos dos\n>>>>>>> REPLACE",
     GOOD, EditScript((
         EditBlock("calc/a.py", ("one",), ("uno",)),
         EditBlock("calc/b.py", ("two",), ("dos", "dos dos")),
     ))),
    (parse_edit_script,
     "Here is the fix:\n\n1. `calc/seq.py`:\n```python\n<<<<<<< SEARCH\n    bad\n=======\n    good\n>>>>>>> REPLACE\n```",
     GOOD, EditScript((EditBlock("calc/seq.py", ("    bad",), ("    good",)),))),
    (parse_edit_script,
     "File: calc/strings.py\n<<<<<<< SEARCH\ndrop me\n=======\n>>>>>>> REPLACE",
     GOOD, EditScript((EditBlock("calc/strings.py", ("drop me",), ()),))),
    (parse_edit_script,
     "calc/a.py\n<<<<<<< SEARCH\nx\n>>>>>>> REPLACE",
     RAISES, MalformedEditBlock),
    (parse_edit_script,
     "calc/a.py\n<<<<<<< SEARCH\nx\n=======\ny",
     RAISES, MalformedEditBlock),
    (parse_edit_script,
     "calc/a.py\n<<<<<<< SEARCH\nx\n<<<<<<< SEARCH\ny\n=======\nz\n>>>>>>> REPLACE",
     RAISES, MalformedEditBlock),
    (parse_edit_script,
     "calc/a.py\n<<<<<<< SEARCH\n\n=======\ny\n>>>>>>> REPLACE",
     RAISES, MalformedEditBlock),
    (parse_edit_script,
     "I would simply rewrite the method to handle the edge case.",
     RAISES, NoEditBlocks),
]

_SAFE_WORDS = ("alpha", "beta", "gamma", "delta", "epsilon", "zeta")


def _random_edit_script(rng: random.Random) -> EditScript:
    blocks = []
    for _ in range(rng.randrange(1, 5)):
        path = "/".join(rng.sample(_SAFE_WORDS, 2)) + ".py"
        search = tuple(
            "    " * rng.randrange(3) + " ".join(rng.sample(_SAFE_WORDS, 2))
            for _ in range(rng.randrange(1, 4))
        )
        replace = tuple(
            rng.choice(["", " ".join(rng.sample(_SAFE_WORDS, 3))])
            for _ in range(rng.randrange(0, 4))
        )
        blocks.append(EditBlock(path, search, replace))
    return EditScript(tuple(blocks))


@pytest.mark.acceptance(label="parser conformance on annotated responses")
def test_parser_conformance():
    started = time.monotonic()
    assert len(PARSER_CASES) >= 20
    for index, (parser, text, mode, expected) in enumerate(PARSER_CASES):
        if mode == RAISES:
            with pytest.raises(expected):
                parser(text)
            continue
        got = parser(text)
        if parser is parse_line_locations:
            got = got.entries()
            got = {cls: tuple(lines) for cls, lines in got.items()}
        assert got == expected, f"annotated case {index} disagrees"

    rng = random.Random(4242)
    for _ in range(100):
        script = _random_edit_script(rng)
        assert parse_edit_script(render_edit_script(script)) == script
    assert time.monotonic() - started < 5.0


# ===== 2. Patch-engine oracle equivalence =====


class _UniqueLines:
    def __init__(self) -> None:
        self.counter = 0

    def make(self, rng: random.Random, indent: int) -> str:
        self.counter += 1
        return " " * indent + f"{rng.choice(_SAFE_WORDS)}_{self.counter} = {rng.randrange(1000)}"


@pytest.mark.acceptance(label="patch engine agrees with a naive splice oracle")
def test_patch_engine_oracle_equivalence(tmp_path):
    started = time.monotonic()
    factory = _UniqueLines()
    rng = random.Random(20240817)
    cases = 0
    for case in range(210):
        workspace = tmp_path / f"case-{case:03d}"
        rel_paths = [f"pkg/mod_{i}.py" for i in range(rng.randrange(1, 3))]
        contents: dict[str, list[str]] = {}
        for rel in rel_paths:
            path = workspace / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            lines = [factory.make(rng, rng.randrange(0, 9, 4)) for _ in range(rng.randrange(6, 26))]
            contents[rel] = list(lines)
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        pristine = _tree_digest(workspace)

        blocks = []
        for _ in range(rng.randrange(1, 4)):
            candidates = [rel for rel in rel_paths if contents[rel]]
            if not candidates:
                break
            rel = rng.choice(candidates)
            current = contents[rel]
            width = rng.randrange(1, min(4, len(current) + 1))
            start = rng.randrange(0, len(current) - width + 1)
            search = tuple(current[start : start + width])
            replace = tuple(factory.make(rng, rng.randrange(0, 5, 4)) for _ in range(rng.randrange(0, 4)))
            contents[rel] = current[:start] + list(replace) + current[start + width :]
            blocks.append(EditBlock(rel, search, replace))

        result = apply_edit_script(workspace, EditScript(tuple(blocks)))
        for rel in rel_paths:
            expected = "\n".join(contents[rel]) + "\n" if contents[rel] else ""
            assert (workspace / rel).read_text(encoding="utf-8") == expected, f"case {case}: {rel}"
        assert set(result.modified_files) == {b.file_path for b in blocks}

        revert(workspace)
        assert _tree_digest(workspace) == pristine, f"case {case}: revert not byte-identical"
        cases += 1
    assert cases >= 200

    # Ambiguity and not-found raise typed errors and leave the tree untouched.
    workspace = tmp_path / "errors"
    workspace.mkdir()
    (workspace / "dup.py").write_text("same = 1\nother = 2\nsame = 1\n", encoding="utf-8")
    pristine = _tree_digest(workspace)
    with pytest.raises(AmbiguousMatch):
        apply_edit_script(workspace, EditScript((EditBlock("dup.py", ("same = 1",), ("x = 9",)),)))
    with pytest.raises(SearchNotFound):
        apply_edit_script(
            workspace,
            EditScript(
                (
                    EditBlock("dup.py", ("other = 2",), ("other = 3",)),
                    EditBlock("dup.py", ("never present",), ()),
                )
            ),
        )
    assert _tree_digest(workspace) == pristine
    assert time.monotonic() - started < 30.0


# ===== 3. Metric oracles =====


def _make_bug(bug_id: str, methods, anchor, single=True) -> BugCase:
    truth = GroundTruth(
        dev_patch_path=Path("dev.diff"),
        buggy_methods=tuple(MethodLocation.parse(m) for m in methods),
        first_added_line=anchor,
        is_single_method=single,
    )
    return BugCase(
        id=bug_id,
        workspace_root=Path("ws"),
        failing_tests=("t",),
        failing_test_command="c",
        full_test_command="f",
        tracer_command="tr",
        ground_truth=truth,
    )


PLAUSIBLE = Verdict(
    classification="plausible",
    failing_tests_passed=True,
    full_suite_passed=True,
    failing_run_seconds=0.0,
    full_run_seconds=0.0,
)


@pytest.mark.acceptance(label="metrics agree with brute-force oracles")
def test_metric_oracles():
    started = time.monotonic()
    rng = random.Random(777)
    cases = 0

    # Window nesting: an exact hit is a range-3 hit is a range-5 hit.
    for _ in range(400):
        predicted = rng.randrange(1, 80)
        anchor = rng.randrange(1, 80)
        exact = MatchSpec.exact().matches(predicted, anchor)
        near3 = MatchSpec.within(3).matches(predicted, anchor)
        near5 = MatchSpec.within(5).matches(predicted, anchor)
        assert near3 == (abs(predicted - anchor) <= 3)
        if exact:
            assert near3
        if near3:
            assert near5
        cases += 1

    # top-n monotonicity and any-match agreement with direct enumeration.
    names = [f"pkg.c{i}::m{j}" for i in range(3) for j in range(3)]
    for _ in range(200):
        predicted = [rng.choice(names) for _ in range(rng.randrange(0, 5))]
        truth = [rng.choice(names) for _ in range(rng.randrange(1, 3))]
        hits = [top_n_hit(predicted, truth, n) for n in range(1, len(predicted) + 2)]
        for earlier, later in zip(hits, hits[1:]):
            assert later or not earlier, "a top-n hit must persist for larger n"
        assert method_hit(predicted, truth) == any(p in truth for p in predicted)
        if predicted:
            assert hits[-1] == method_hit(predicted, truth)
        cases += 1

    # line any-match against a double loop over raw entries.
    for _ in range(200):
        sets = [
            LineLocationSet.from_dict(
                {f"pkg.c{rng.randrange(3)}": sorted({rng.randrange(1, 40) for _ in range(rng.randrange(1, 4))})}
            )
            for _ in range(rng.randrange(0, 3))
        ]
        anchor_class = f"pkg.c{rng.randrange(3)}"
        anchor_line = rng.randrange(1, 40)
        for radius in (0, 3, 5):
            spec = MatchSpec.exact() if radius == 0 else MatchSpec.within(radius)
            want = any(
                abs(line - anchor_line) <= radius
                for set_ in sets
                for line in set_.entries().get(anchor_class, ())
            )
            assert line_match(sets, anchor_class, anchor_line, spec) == want
        cases += 1

    # Union/overlap region counts against direct set enumeration.
    for seed in range(25):
        scenario_rng = random.Random(9000 + seed)
        bugs = [_make_bug(f"b{i:02d}", [f"pkg.c0::m{i % 3}"], ("f.py", 5)) for i in range(10)]
        records = []
        truth_hits: dict[str, set[str]] = {}
        for config in ("alpha", "beta", "gamma"):
            truth_hits[config] = set()
            for bug in bugs:
                plausible = scenario_rng.random() < 0.4
                attempts = (
                    (PatchAttempt(set_index=0, sample_index=0, applied=True, verdict=PLAUSIBLE),)
                    if plausible
                    else ()
                )
                records.append(
                    TrialRecord(bug_id=bug.id, config=config, patch_attempts=attempts)
                )
                if plausible:
                    truth_hits[config].add(bug.id)
        report = union_and_overlap(records, bugs, "plausible")
        assert report.union == frozenset().union(*truth_hits.values())
        for config, wanted in truth_hits.items():
            assert report.hit_sets[config] == frozenset(wanted)
            others = set().union(*(truth_hits[c] for c in truth_hits if c != config))
            assert report.exclusive[config] == frozenset(wanted - others)
        for region, members in report.region_counts.items():
            for bug_id in members:
                assert {c for c in truth_hits if bug_id in truth_hits[c]} == set(region)
        cases += len(bugs) * 3

    # Published-table cell arithmetic.
    assert rate_cell(207, 475) == "207/475=43.6%"
    assert rate_cell(234, 475) == "234/475=49.3%"
    assert rate_cell(135, 486) == "135/486=27.8%"
    assert rate_cell(216, 486) == "216/486=44.4%"

    assert cases >= 1000
    assert time.monotonic() - started < 10.0


# ===== 4. Sampling-budget exactness =====


@pytest.mark.acceptance(label="sampling budget: 1 method, 10 line, <=3 patch samples per set")
def test_sampling_budget_exactness(corpus, tmp_path, grid_runs):
    client = LLMClient(replay_dir=corpus.fixtures_dir)
    pipeline = Pipeline(client, PipelineSettings(out_dir=tmp_path / "stage-out"))
    bug = corpus.bug("calc-1")

    method_stage = pipeline.run_method_localization(bug, STACK)
    assert len(client.usage_ledger) == 1, "method localization is exactly one sample"

    line_stage = pipeline.run_line_localization(bug, STACK, method_stage.predicted)
    assert len(client.usage_ledger) == 11, "line localization adds exactly ten samples"

    repair_stage = pipeline.run_repair(bug, STACK, line_stage.bundle, line_stage.bodies, line_stage.unique_sets)
    issued = [a for a in repair_stage.attempts if not a.skipped]
    assert len(client.usage_ledger) == 11 + len(issued) == corpus.specs["calc-1"].expected_requests
    assert len(issued) <= 3 * len(line_stage.unique_sets)

    # A late plausible hit on the second unique set still respects the cap.
    late_client = LLMClient(replay_dir=corpus.fixtures_dir)
    late_pipeline = Pipeline(late_client, PipelineSettings(out_dir=tmp_path / "late-out"))
    record = late_pipeline.run_end_to_end(corpus.bug("calc-2"), STACK)
    assert len(late_client.usage_ledger) == 13 == 1 + 10 + 2
    per_set: dict[int, int] = {}
    for attempt in record.patch_attempts:
        if not attempt.skipped:
            per_set[attempt.set_index] = per_set.get(attempt.set_index, 0) + 1
    assert per_set == {0: 2}
    assert sum(1 for a in record.patch_attempts if a.skipped) == 4

    # Every persisted trial in the replay grid obeys the same budget.
    runs, _elapsed = grid_runs
    for _out, grid_records in runs[:1]:
        for grid_record in grid_records:
            spec = corpus.specs[grid_record.bug_id]
            if grid_record.status == "unavailable":
                assert len(grid_record.usage) == 0
                continue
            assert len(grid_record.responses.get("method", [])) == 1
            if "lines" in grid_record.responses:
                assert len(grid_record.responses["lines"]) == 10
            issued_by_set: dict[int, int] = {}
            slots_by_set: dict[int, int] = {}
            for attempt in grid_record.patch_attempts:
                slots_by_set[attempt.set_index] = slots_by_set.get(attempt.set_index, 0) + 1
                if not attempt.skipped:
                    issued_by_set[attempt.set_index] = issued_by_set.get(attempt.set_index, 0) + 1
            assert all(count <= 3 for count in issued_by_set.values())
            assert all(count == 3 for count in slots_by_set.values())
            if grid_record.patch_attempts:
                assert set(slots_by_set) == set(range(len(grid_record.unique_line_sets)))
            assert len(grid_record.usage) == spec.expected_requests


# ===== 5. Debug-trace properties =====


@pytest.mark.acceptance(label="debug traces: changed vars only, idempotent pruning, bounded render")
def test_debug_trace_properties(corpus, tmp_path):
    bug = corpus.bug("calc-1")
    scope = [MethodLocation("calc.numbers", "parse_number")]
    trace = record_debug_trace(bug, scope, trace_path=tmp_path / "steps.jsonl")
    assert trace.events, "the recorded trace must not be empty"

    # No unchanged variable may reappear in consecutive same-frame events.
    state: dict[tuple[str, str, str], str] = {}
    for event in trace.events:
        for name, value in event.changed_vars.items():
            key = (event.class_path, event.member, name)
            assert state.get(key) != value, f"{key} repeated unchanged value {value!r}"
            state[key] = value

    # Pruning is idempotent under default and under tight limits.
    for limits in (PruneLimits(), PruneLimits(crop_limit=2, max_value_chars=20, max_events=3, token_budget=40)):
        pruned = prune_debug_trace(trace, limits)
        assert prune_debug_trace(pruned, limits) == pruned
        rendered = render_debug_lines(pruned)
        assert estimate_tokens_from_chars(len(rendered)) <= limits.token_budget

    # Synthetic heavy traces: same properties hold after random abuse.
    rng = random.Random(55)
    events = []
    for i in range(150):
        events.append(
            StepEvent(
                class_path="pkg.mod",
                member=f"fn{i % 3}",
                line=rng.randrange(1, 99),
                changed_vars={
                    "items": "[" + ", ".join(str(rng.randrange(9)) for _ in range(rng.randrange(0, 30))) + "]",
                    "label": '"' + "x" * rng.randrange(0, 300) + '"',
                },
            )
        )
    heavy = DebugTrace(events=tuple(events), scope=tuple(scope))
    limits = PruneLimits(crop_limit=5, max_value_chars=60, max_events=40, token_budget=500)
    pruned = prune_debug_trace(heavy, limits)
    assert prune_debug_trace(pruned, limits) == pruned
    assert len(pruned.events) <= 40
    assert estimate_tokens_from_chars(len(render_debug_lines(pruned))) <= 500

    # Rendered line format: `class:member:line {name:value, ...}`.
    exemplar = StepEvent("calc.numbers", "parse_number", 8, {"digits": '"FF"', "n": "2"})
    assert render_debug_lines(DebugTrace((exemplar,), tuple(scope))) == 'calc.numbers:parse_number:8 {digits:"FF", n:2}'
    line_shape = re.compile(r"^[A-Za-z_][\w.$]*:[A-Za-z_][\w$]*:\d+ \{.*\}$")
    for line in render_debug_lines(prune_debug_trace(trace)).split("\n"):
        assert line_shape.match(line), f"bad debug line shape: {line!r}"


# ===== 6. End-to-end determinism and correctness =====


@pytest.mark.acceptance(label="end-to-end replay: deterministic, correct plausible set, no network")
def test_end_to_end_determinism_and_correctness(corpus, tmp_path, grid_runs):
    runs, elapsed = grid_runs
    (out_a, records_a), (out_b, records_b) = runs
    assert elapsed < 300.0, "both full replay runs must finish well under five minutes"
    assert len(records_a) == len(records_b) == len(corpus.bugs) * 2

    trials_a, trials_b = _tree_digest(out_a / "trials"), _tree_digest(out_b / "trials")
    assert trials_a and trials_a == trials_b, "trial records must be byte-identical across runs"
    patches_a, patches_b = _tree_digest(out_a / "patches"), _tree_digest(out_b / "patches")
    assert patches_a and patches_a == patches_b, "emitted diffs must be byte-identical across runs"

    def plausible_under(records, config: str) -> set[str]:
        return {r.bug_id for r in records if r.config == config and r.has_plausible()}

    issueless = {bug_id for bug_id, spec in corpus.specs.items() if spec.issue is None}
    assert len(issueless) == 3
    assert plausible_under(records_a, "stack") == corpus.expected_plausible
    assert plausible_under(records_a, "issue") == corpus.expected_plausible - issueless

    # Independent validator check: every bug's known-good edit really is a fix,
    # so the plausible set is pinned by fixture content, not by broken bugs.
    for bug_id, spec in sorted(corpus.specs.items()):
        bug = corpus.bug(bug_id)
        work = tmp_path / f"good-{bug_id}"
        shutil.copytree(bug.workspace_root, work, ignore=shutil.ignore_patterns("__pycache__", "*.pyc"))
        apply_edit_script(work, parse_edit_script(spec.good_fix, response_id="known-good"))
        verdict = validate_patch(bug, work)
        assert verdict.classification == "plausible", f"{bug_id}: known-good patch did not validate"


# ===== 7. Availability denominators =====


@pytest.mark.acceptance(label="availability denominators exclude artifact-incomplete bugs")
def test_availability_denominators(corpus, grid_runs):
    runs, _elapsed = grid_runs
    _out, records = runs[0]
    issueless = {bug_id for bug_id, spec in corpus.specs.items() if spec.issue is None}

    for record in records:
        if record.config == "issue" and record.bug_id in issueless:
            assert record.status == "unavailable"
            assert record.missing_artifacts == ("issue",)
            assert len(record.usage) == 0

    plausible = rates(records, corpus.bugs, "plausible")
    assert plausible["stack"].denominator == len(corpus.bugs) == 11
    assert plausible["issue"].denominator == len(corpus.bugs) - len(issueless) == 8
    assert plausible["issue"].excluded == {"unavailable": 3}
    assert plausible["stack"].cell() == "7/11=63.6%"
    assert plausible["issue"].cell() == "5/8=62.5%"

    method = rates(records, corpus.bugs, "method")
    assert method["stack"].denominator == 11
    assert method["issue"].denominator == 8
    assert method["stack"].cell() == "10/11=90.9%"
    assert method["issue"].cell() == "7/8=87.5%"

"""Unit tests for prompt assembly, section rendering, and budget truncation."""
from __future__ import annotations

import pytest

from devlore.model import ArtifactBundle, ArtifactConfig, LineLocationSet, MethodLocation
from devlore.prompts import (
    DEBUG_HEADER,
    ERROR_STACK_HEADER,
    ISSUE_HEADER,
    LOCATIONS_HEADER,
    NO_LINE_HINTS_SENTENCE,
    SKELETON_HEADER,
    MethodBody,
    TokenBudgetExceeded,
    build_line_localization_prompt,
    build_method_localization_prompt,
    build_repair_prompt,
    render_line_hints,
    render_method_bodies,
    render_skeleton,
)
from devlore.tracing import DebugTrace, MethodRecord, RelatedMethods, StepEvent

RELATED = RelatedMethods(
    methods=(
        MethodRecord("calc.seq", "window", "(values, size)", "calc/seq.py", 4),
        MethodRecord("calc.seq", "running_mean", "(values, size)", "calc/seq.py", 15),
        MethodRecord("calc.strings", "replace_each", "(text, searches, replacements)", "calc/strings.py", 10),
    )
)

BODIES = [
    MethodBody(
        location=MethodLocation("calc.seq", "window"),
        start_line=4,
        lines=("def window(values, size):", "    count = len(values) - size", "    return count"),
    )
]

DEBUG = DebugTrace(
    events=(StepEvent("calc.seq", "window", 5, {"count": "3"}),),
    scope=(MethodLocation("calc.seq", "window"),),
)


def _bundle(config="stack", **kwargs) -> ArtifactBundle:
    return ArtifactBundle(
        config=ArtifactConfig.from_string(config),
        related_methods=RELATED,
        **kwargs,
    )


class TestSectionRenderers:
    def test_skeleton_groups_by_class(self):
        text = render_skeleton(_bundle())
        assert text.startswith(SKELETON_HEADER)
        assert "### calc.seq ###" in text
        assert "window(values, size)" in text
        assert text.index("### calc.seq ###") < text.index("### calc.strings ###")

    def test_skeleton_method_cap(self):
        text = render_skeleton(_bundle(), method_cap=1)
        assert "window(values, size)" in text
        assert "running_mean" not in text
        assert "### calc.strings ###" not in text

    def test_method_bodies_numbered_from_start_line(self):
        text = render_method_bodies(BODIES)
        assert "4: def window(values, size):" in text
        assert "5:     count = len(values) - size" in text
        assert "6:     return count" in text

    def test_line_hints_rendering(self):
        hints = LineLocationSet.from_dict({"calc.seq": [8, 19]})
        text = render_line_hints(hints)
        assert text.startswith(LOCATIONS_HEADER)
        assert "calc.seq\n  line: 8\n  line: 19" in text

    def test_line_hints_absent(self):
        assert NO_LINE_HINTS_SENTENCE in render_line_hints(None)
        assert NO_LINE_HINTS_SENTENCE in render_line_hints(LineLocationSet(()))


class TestMethodPrompt:
    def test_sections_follow_config(self):
        prompt = build_method_localization_prompt(
            _bundle("issue+stack", issue="the report", error_stack="the stack")
        )
        assert ERROR_STACK_HEADER in prompt.input
        assert ISSUE_HEADER in prompt.input
        assert prompt.input.index(ERROR_STACK_HEADER) < prompt.input.index(ISSUE_HEADER)

    def test_config_none_has_skeleton_only(self):
        prompt = build_method_localization_prompt(_bundle("none", issue="x", error_stack="y"))
        assert SKELETON_HEADER in prompt.input
        assert ERROR_STACK_HEADER not in prompt.input
        assert ISSUE_HEADER not in prompt.input

    def test_debug_never_in_stage_one(self):
        prompt = build_method_localization_prompt(
            _bundle("stack+debug", error_stack="the stack", debug=DEBUG)
        )
        assert DEBUG_HEADER not in prompt.input

    def test_identical_inputs_identical_bytes(self):
        a = build_method_localization_prompt(_bundle("stack", error_stack="s"))
        b = build_method_localization_prompt(_bundle("stack", error_stack="s"))
        assert a == b
        assert a.concatenated() == b.concatenated()


class TestLinePrompt:
    def test_bodies_required(self):
        with pytest.raises(ValueError):
            build_line_localization_prompt(_bundle(), [])

    def test_debug_section_included_when_configured(self):
        prompt = build_line_localization_prompt(_bundle("debug", debug=DEBUG), BODIES)
        assert DEBUG_HEADER in prompt.input
        assert "calc.seq:window:5 {count:3}" in prompt.input

    def test_debug_omitted_when_not_configured(self):
        prompt = build_line_localization_prompt(_bundle("stack", error_stack="s", debug=DEBUG), BODIES)
        assert DEBUG_HEADER not in prompt.input


class TestRepairPrompt:
    def test_hints_between_bodies_and_artifacts(self):
        hints = LineLocationSet.from_dict({"calc.seq": [5]})
        prompt = build_repair_prompt(_bundle("stack", error_stack="s"), BODIES, hints)
        assert LOCATIONS_HEADER in prompt.input
        assert prompt.input.index(SKELETON_HEADER) < prompt.input.index(LOCATIONS_HEADER)
        assert prompt.input.index(LOCATIONS_HEADER) < prompt.input.index(ERROR_STACK_HEADER)

    def test_no_hints_sentence_when_line_sets_missing(self):
        prompt = build_repair_prompt(_bundle("none"), BODIES, None)
        assert NO_LINE_HINTS_SENTENCE in prompt.input

    def test_search_replace_format_instructions_present(self):
        prompt = build_repair_prompt(_bundle("none"), BODIES, None)
        assert "<<<<<<< SEARCH" in prompt.expected_output
        assert ">>>>>>> REPLACE" in prompt.expected_output


class TestTruncationLadder:
    def test_oversized_debug_halved_first(self):
        events = tuple(StepEvent("m", "f", i, {"v": '"' + "x" * 40 + '"'}) for i in range(1, 2000))
        big_debug = DebugTrace(events=events, scope=(MethodLocation("m", "f"),))
        bundle = _bundle("issue+debug", issue="issue text " * 50, debug=big_debug)
        budget = 12000
        prompt = build_line_localization_prompt(bundle, BODIES, token_budget=budget)
        assert prompt.estimated_tokens <= budget
        # the issue survives untouched because shrinking debug was enough
        assert "issue text" in prompt.input
        assert prompt.input.count("issue text") == 50

    def test_issue_head_kept_when_truncating(self):
        head = "FIRST-SENTENCE-MARKER " + "padding " * 3000
        bundle = _bundle("issue", issue=head)
        budget = 2000
        prompt = build_method_localization_prompt(bundle, token_budget=budget)
        assert prompt.estimated_tokens <= budget
        assert "FIRST-SENTENCE-MARKER" in prompt.input
        assert len(prompt.input) < len(head)

    def test_stack_frames_capped(self):
        frames = "\n".join(
            f'  File "/ws/mod_{i}.py", line {i}, in helper_{i}' for i in range(200)
        )
        stack = "Traceback (most recent call last):\n" + frames + "\nValueError: boom"
        bundle = _bundle("stack", error_stack=stack)
        budget = 1200
        prompt = build_method_localization_prompt(bundle, token_budget=budget)
        assert prompt.estimated_tokens <= budget
        assert prompt.input.count("File ") == 50

    def test_skeleton_methods_dropped_as_last_resort(self):
        many = RelatedMethods(
            methods=tuple(
                MethodRecord("pkg.mod", f"func_{i}", "(" + "a" * 60 + ")", "pkg/mod.py", i)
                for i in range(200)
            )
        )
        bundle = ArtifactBundle(config=ArtifactConfig.from_string("none"), related_methods=many)
        budget = 800
        prompt = build_method_localization_prompt(bundle, token_budget=budget)
        assert prompt.estimated_tokens <= budget
        assert prompt.input.count("func_") < 200

    def test_exhausted_ladder_raises(self):
        bundle = ArtifactBundle(
            config=ArtifactConfig.from_string("none"),
            related_methods=RelatedMethods(
                methods=(MethodRecord("pkg.mod", "f", "(" + "a" * 400 + ")", "p.py", 1),)
            ),
        )
        with pytest.raises(TokenBudgetExceeded):
            build_method_localization_prompt(bundle, token_budget=30)

    def test_within_budget_prompt_untouched(self):
        bundle = _bundle("issue+stack", issue="short issue", error_stack="short stack")
        prompt = build_method_localization_prompt(bundle)
        assert "short issue" in prompt.input
        assert "short stack" in prompt.input

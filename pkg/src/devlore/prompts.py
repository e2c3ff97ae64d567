"""Builds the three prompt triples: method localization, line localization, repair.

Every prompt is a (general_task, input, expected_output) triple. The input is
assembled from `### <Name> ###`-delimited artifact sections; identical inputs
always produce byte-identical prompts so replay fixtures can be keyed by a
content hash. When a prompt exceeds the token budget, sections are shrunk in a
fixed order (debug, then issue discussion, then stack frames, then skeleton
methods) before giving up.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import HarnessError
from .model import ArtifactBundle, LineLocationSet, MethodLocation, estimate_tokens
from .tracing import DebugTrace, MethodRecord, PruneLimits, prune_debug_trace, render_debug_lines

DEFAULT_CONTEXT_WINDOW_TOKENS = 128000
DEFAULT_RESPONSE_RESERVE_TOKENS = 4000
DEFAULT_PROMPT_TOKEN_BUDGET = DEFAULT_CONTEXT_WINDOW_TOKENS - DEFAULT_RESPONSE_RESERVE_TOKENS

SKELETON_HEADER = "### Skeleton of Classes ###"
ERROR_STACK_HEADER = "### Error Stack ###"
ISSUE_HEADER = "### Issue Content ###"
DEBUG_HEADER = "### Debug Information ###"
LOCATIONS_HEADER = "### Possible bug locations (for your reference only) ###"

NO_LINE_HINTS_SENTENCE = "No line hints were provided."

METHOD_TASK_PROMPT = (
    "You are a Software Engineer. Review the following skeleton of classes, test case(s), "
    "and exception that occurs when doing the test.\n"
    "Provide a set of locations that need to be edited to fix the bug. "
    "The locations must be specified as method names or field names."
)

METHOD_EXPECTED_PROMPT = (
    "Please localize class name and method names or field names that need to be edited.\n"
    "Examples:\n"
    "path.to.ClassA::methodA\n"
    "path.to.ClassA::methodB\n"
    "path.to.ClassB::methodA"
)

LINE_TASK_PROMPT = (
    "You are a Software Engineer. Review the following skeleton of classes, test case(s), "
    "and exception that occurs when doing the test.\n"
    "Provide a set of locations that need to be edited to fix the bug. "
    "The locations must be specified as line number in class."
)

LINE_EXPECTED_PROMPT = (
    "Please localize class name and line number that need to be edited.\n"
    "Examples:\n"
    "path.to.ClassA\n"
    "  line: 20\n"
    "  line: 45\n"
    "  line: 46\n"
    "  line: 47"
)

REPAIR_TASK_PROMPT = (
    "You are a Software Engineer. Review the following methods and(or) fields of classes, "
    "test case(s), and exception that occurs when doing the test. Try to fix the bug."
)

REPAIR_EXPECTED_PROMPT = (
    "Please generate *SEARCH/REPLACE* edits to fix the bug based on the info given above. "
    "Every *SEARCH/REPLACE* edit must use this format:\n"
    "  1. The file path\n"
    "  2. The start of search block: <<<<<<< SEARCH\n"
    "  3. A contiguous chunk of lines to search in the existing source code\n"
    "  4. The dividing line: =======\n"
    "  5. The lines to replace into the source code\n"
    "  6. The end of the replace block: >>>>>>> REPLACE"
)

MIN_DEBUG_TOKENS = 256
MIN_ISSUE_CHARS = 800
STACK_FRAME_CAP = 50


class TokenBudgetExceeded(HarnessError):
    """The prompt cannot be brought under the token budget by truncation."""


@dataclass(frozen=True)
class PromptTriple:
    general_task: str
    input: str
    expected_output: str

    @property
    def estimated_tokens(self) -> int:
        return estimate_tokens(self.concatenated())

    def concatenated(self) -> str:
        return "\n\n".join((self.general_task, self.input, self.expected_output))

    def user_content(self) -> str:
        return f"{self.input}\n\n{self.expected_output}"


@dataclass(frozen=True)
class MethodBody:
    """Source lines of one method, anchored at its absolute start line."""

    location: MethodLocation
    start_line: int
    lines: tuple[str, ...]
    truncated: bool = False


# ===== Section renderers =====


def render_skeleton(bundle: ArtifactBundle, *, method_cap: int | None = None) -> str:
    """Class-grouped signature listing; class names are themselves ###-wrapped."""
    related = bundle.related_methods
    if related is None:
        raise ValueError("bundle has no related methods")
    parts = [SKELETON_HEADER]
    remaining = method_cap
    for class_path, records in related.grouped_by_class().items():
        kept: list[MethodRecord] = []
        for record in records:
            if remaining is not None and remaining <= 0:
                break
            kept.append(record)
            if remaining is not None:
                remaining -= 1
        if not kept:
            continue
        parts.append(f"### {class_path} ###")
        parts.extend(f"{record.member}{record.signature}" for record in kept)
    return "\n".join(parts)


def render_method_bodies(bodies: list[MethodBody]) -> str:
    """Numbered full bodies grouped under their class paths."""
    parts = [SKELETON_HEADER]
    by_class: dict[str, list[MethodBody]] = {}
    for body in bodies:
        by_class.setdefault(body.location.class_path, []).append(body)
    for class_path, class_bodies in by_class.items():
        parts.append(f"### {class_path} ###")
        for body in class_bodies:
            parts.extend(f"{body.start_line + offset}: {line}" for offset, line in enumerate(body.lines))
            parts.append("")
    while parts and parts[-1] == "":
        parts.pop()
    return "\n".join(parts)


def render_line_hints(candidate_lines: LineLocationSet | None) -> str:
    parts = [LOCATIONS_HEADER]
    if candidate_lines is None or candidate_lines.is_empty():
        parts.append(NO_LINE_HINTS_SENTENCE)
        return "\n".join(parts)
    for class_path, lines in candidate_lines.classes:
        parts.append(class_path)
        parts.extend(f"  line: {line}" for line in lines)
    return "\n".join(parts)


def _issue_section(issue_text: str) -> str:
    return f"{ISSUE_HEADER}\n{issue_text.rstrip()}"


def _stack_section(stack_text: str) -> str:
    return f"{ERROR_STACK_HEADER}\n{stack_text.rstrip()}"


def _debug_section(debug_text: str) -> str:
    return f"{DEBUG_HEADER}\n{debug_text}"


_FRAME_LINE_RE = re.compile(r"^(\s+at\s+\S+|\s+File \".*\", line \d+.*)$")


def _truncate_stack(stack_text: str, frame_cap: int = STACK_FRAME_CAP) -> str:
    """Keep the prefix of the stack containing at most `frame_cap` frame lines."""
    kept: list[str] = []
    frames = 0
    for line in stack_text.split("\n"):
        if _FRAME_LINE_RE.match(line):
            frames += 1
            if frames > frame_cap:
                break
        kept.append(line)
    return "\n".join(kept)


def _truncate_issue(issue_text: str, max_chars: int) -> str:
    """Keep the head of the issue (the description comes first)."""
    if len(issue_text) <= max_chars:
        return issue_text
    return issue_text[:max_chars].rstrip()


# ===== Assembly with budget fitting =====


@dataclass
class _Sections:
    """Mutable working state for budget fitting, in final prompt order."""

    skeleton: str
    hints: str | None
    stack: str | None
    issue: str | None
    debug_trace: DebugTrace | None
    debug_budget: int | None

    def debug_text(self) -> str | None:
        if self.debug_trace is None:
            return None
        trace = self.debug_trace
        if self.debug_budget is not None:
            trace = prune_debug_trace(trace, PruneLimits(token_budget=self.debug_budget))
        return render_debug_lines(trace)

    def assemble(self) -> str:
        parts = [self.skeleton]
        if self.hints is not None:
            parts.append(self.hints)
        if self.stack is not None:
            parts.append(_stack_section(self.stack))
        if self.issue is not None:
            parts.append(_issue_section(self.issue))
        debug = self.debug_text()
        if debug is not None:
            parts.append(_debug_section(debug))
        return "\n\n".join(parts)


def _fit(
    sections: _Sections,
    general_task: str,
    expected_output: str,
    token_budget: int,
    *,
    rebuild_skeleton=None,
) -> PromptTriple:
    """Apply the truncation ladder until the triple fits or nothing is left to cut."""
    stack_truncated = False
    method_cap: int | None = None
    while True:
        triple = PromptTriple(general_task=general_task, input=sections.assemble(), expected_output=expected_output)
        if triple.estimated_tokens <= token_budget:
            return triple
        if sections.debug_trace is not None:
            current = sections.debug_budget or PruneLimits().token_budget
            if current > MIN_DEBUG_TOKENS:
                sections.debug_budget = max(MIN_DEBUG_TOKENS, current // 2)
                continue
        if sections.issue is not None and len(sections.issue) > MIN_ISSUE_CHARS:
            overshoot_chars = (triple.estimated_tokens - token_budget) * 4
            sections.issue = _truncate_issue(sections.issue, max(MIN_ISSUE_CHARS, len(sections.issue) - overshoot_chars))
            continue
        if sections.stack is not None and not stack_truncated:
            sections.stack = _truncate_stack(sections.stack)
            stack_truncated = True
            continue
        if rebuild_skeleton is not None:
            if method_cap is None:
                method_cap = rebuild_skeleton.count_methods()
            if method_cap > 1:
                method_cap -= 1
                sections.skeleton = rebuild_skeleton.render(method_cap)
                continue
        raise TokenBudgetExceeded(
            f"prompt still needs {triple.estimated_tokens} tokens after maximal truncation (budget {token_budget})"
        )


class _SkeletonRebuilder:
    def __init__(self, bundle: ArtifactBundle) -> None:
        self._bundle = bundle

    def count_methods(self) -> int:
        return len(self._bundle.related_methods.methods)

    def render(self, cap: int) -> str:
        return render_skeleton(self._bundle, method_cap=cap)


def build_method_localization_prompt(
    bundle: ArtifactBundle,
    *,
    token_budget: int = DEFAULT_PROMPT_TOKEN_BUDGET,
) -> PromptTriple:
    """Stage-1 prompt: signatures plus (optionally) stack and issue.

    Debug information is never part of this stage, whatever the config says.
    """
    config = bundle.config
    sections = _Sections(
        skeleton=render_skeleton(bundle),
        hints=None,
        stack=bundle.error_stack if config.use_stack and bundle.error_stack is not None else None,
        issue=bundle.issue if config.use_issue and bundle.issue is not None else None,
        debug_trace=None,
        debug_budget=None,
    )
    return _fit(
        sections,
        METHOD_TASK_PROMPT,
        METHOD_EXPECTED_PROMPT,
        token_budget,
        rebuild_skeleton=_SkeletonRebuilder(bundle),
    )


def build_line_localization_prompt(
    bundle: ArtifactBundle,
    bodies: list[MethodBody],
    *,
    token_budget: int = DEFAULT_PROMPT_TOKEN_BUDGET,
) -> PromptTriple:
    """Stage-2 prompt: numbered method bodies plus the configured artifacts."""
    if not bodies:
        raise ValueError("line localization needs at least one method body")
    config = bundle.config
    sections = _Sections(
        skeleton=render_method_bodies(bodies),
        hints=None,
        stack=bundle.error_stack if config.use_stack and bundle.error_stack is not None else None,
        issue=bundle.issue if config.use_issue and bundle.issue is not None else None,
        debug_trace=bundle.debug if config.use_debug and bundle.debug is not None else None,
        debug_budget=None,
    )
    return _fit(sections, LINE_TASK_PROMPT, LINE_EXPECTED_PROMPT, token_budget)


def build_repair_prompt(
    bundle: ArtifactBundle,
    bodies: list[MethodBody],
    candidate_lines: LineLocationSet | None,
    *,
    token_budget: int = DEFAULT_PROMPT_TOKEN_BUDGET,
) -> PromptTriple:
    """Stage-3 prompt: bodies, line hints, and the configured artifacts."""
    if not bodies:
        raise ValueError("repair needs at least one method body")
    config = bundle.config
    sections = _Sections(
        skeleton=render_method_bodies(bodies),
        hints=render_line_hints(candidate_lines),
        stack=bundle.error_stack if config.use_stack and bundle.error_stack is not None else None,
        issue=bundle.issue if config.use_issue and bundle.issue is not None else None,
        debug_trace=bundle.debug if config.use_debug and bundle.debug is not None else None,
        debug_budget=None,
    )
    return _fit(sections, REPAIR_TASK_PROMPT, REPAIR_EXPECTED_PROMPT, token_budget)

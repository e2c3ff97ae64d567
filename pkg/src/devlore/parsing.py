"""Parsers for model responses: method locations, line locations, edit scripts.

Responses are free-form text; these parsers are line-oriented and tolerate the
usual decoration (code fences, bullets, numbering, backticks) while refusing
to guess. Zero usable content raises a typed error that the pipeline records
as a scored miss rather than a crash.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import HarnessError
from .model import LineLocationSet, MethodLocation


class ParseError(HarnessError):
    """Base class for response parsing failures."""


class NoLocationsFound(ParseError):
    """The response names no locations at all."""


class OrphanLineEntry(ParseError):
    """A `line: N` entry appears before any class header."""


class MalformedEditBlock(ParseError):
    """A SEARCH/REPLACE block is structurally broken."""


class NoEditBlocks(ParseError):
    """The response contains no SEARCH/REPLACE blocks."""


# ===== Edit scripts =====


@dataclass(frozen=True)
class EditBlock:
    """One SEARCH/REPLACE unit; an empty replacement deletes the search lines."""

    file_path: str
    search_lines: tuple[str, ...]
    replace_lines: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.file_path:
            raise ValueError("edit block needs a file path")
        if not self.search_lines:
            raise ValueError("edit block needs a non-empty search section")


@dataclass(frozen=True)
class EditScript:
    blocks: tuple[EditBlock, ...]
    source_response_id: str = ""

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ValueError("edit script needs at least one block")


_SEARCH_MARKER_RE = re.compile(r"^\s*<{7} SEARCH\s*$")
_DIVIDER_RE = re.compile(r"^\s*={7}\s*$")
_REPLACE_MARKER_RE = re.compile(r"^\s*>{7} REPLACE\s*$")
_FENCE_RE = re.compile(r"^\s*`{3,}\w*\s*$")
_LIST_PREFIX_RE = re.compile(r"^\s*(?:[-*+•]|\d+[.)]|#{1,6})\s+")


# The anchored patterns require exactly seven marker characters: an eighth
# breaks the match because the following char must be a space or end of line.
def _looks_like_search_marker(line: str) -> bool:
    return bool(_SEARCH_MARKER_RE.match(line))


def _looks_like_divider(line: str) -> bool:
    return bool(_DIVIDER_RE.match(line))


def _looks_like_replace_marker(line: str) -> bool:
    return bool(_REPLACE_MARKER_RE.match(line))


def _clean_path_line(line: str) -> str:
    text = _LIST_PREFIX_RE.sub("", line.strip())
    text = text.strip("`'\"")
    if text.lower().startswith("file:"):
        text = text[5:].strip()
    return text.rstrip(":").strip().strip("`'\"")


def parse_edit_script(text: str, *, response_id: str = "") -> EditScript:
    """Parse SEARCH/REPLACE blocks; the nearest non-empty, non-fence line above
    each block is its file path (markup stripped)."""
    lines = text.split("\n")
    blocks: list[EditBlock] = []
    i = 0
    while i < len(lines):
        if not _looks_like_search_marker(lines[i]):
            i += 1
            continue
        path = None
        for j in range(i - 1, -1, -1):
            candidate = lines[j]
            if not candidate.strip() or _FENCE_RE.match(candidate):
                continue
            path = _clean_path_line(candidate)
            break
        if not path:
            raise MalformedEditBlock(f"block at line {i + 1}: no file path line above the SEARCH marker")

        search: list[str] = []
        replace: list[str] = []
        section = search
        saw_divider = False
        i += 1
        closed = False
        while i < len(lines):
            line = lines[i]
            if not saw_divider and _looks_like_divider(line):
                saw_divider = True
                section = replace
                i += 1
                continue
            if _looks_like_replace_marker(line):
                if not saw_divider:
                    raise MalformedEditBlock(f"block for {path!r}: missing ======= divider")
                closed = True
                i += 1
                break
            if not saw_divider and _looks_like_search_marker(line):
                raise MalformedEditBlock(f"block for {path!r}: nested SEARCH marker before the block closed")
            section.append(line)
            i += 1
        if not closed:
            raise MalformedEditBlock(f"block for {path!r}: unterminated (no >>>>>>> REPLACE)")
        if not any(s.strip() for s in search):
            raise MalformedEditBlock(f"block for {path!r}: search section is blank")
        try:
            blocks.append(EditBlock(file_path=path, search_lines=tuple(search), replace_lines=tuple(replace)))
        except ValueError as exc:
            raise MalformedEditBlock(str(exc)) from exc
    if not blocks:
        raise NoEditBlocks("response contains no SEARCH/REPLACE blocks")
    return EditScript(blocks=tuple(blocks), source_response_id=response_id)


def render_edit_script(script: EditScript) -> str:
    """Inverse of parse_edit_script for well-formed scripts."""
    chunks = []
    for block in script.blocks:
        chunks.append(
            "\n".join(
                [
                    block.file_path,
                    "<<<<<<< SEARCH",
                    *block.search_lines,
                    "=======",
                    *block.replace_lines,
                    ">>>>>>> REPLACE",
                ]
            )
        )
    return "\n\n".join(chunks) + "\n"


# ===== Method locations =====

_IDENT = r"[A-Za-z_][\w$]*"
_METHOD_LINE_RE = re.compile(
    rf"^({_IDENT}(?:\.{_IDENT})*)::({_IDENT})(?:\([^)]*\))?$"
)


def _strip_decoration(line: str) -> str:
    text = _LIST_PREFIX_RE.sub("", line.strip())
    return text.strip("`*").rstrip(" \t.,;")


def parse_method_locations(text: str) -> list[MethodLocation]:
    """Every line shaped like `<dotted path>::<member>` becomes a location.

    Parameter lists are stripped (overloads collapse to the member name),
    duplicates keep their first occurrence, order is preserved.
    """
    seen: set[tuple[str, str]] = set()
    locations: list[MethodLocation] = []
    for raw in text.split("\n"):
        if _FENCE_RE.match(raw):
            continue
        match = _METHOD_LINE_RE.match(_strip_decoration(raw))
        if not match:
            continue
        key = (match.group(1), match.group(2))
        if key in seen:
            continue
        seen.add(key)
        locations.append(MethodLocation(*key))
    if not locations:
        raise NoLocationsFound("response names no <class_path>::<member> locations")
    return locations


# ===== Line locations =====

_LINE_ENTRY_RE = re.compile(r"^line:\s*(\d+)$", re.IGNORECASE)
_CLASS_HEADER_RE = re.compile(rf"^({_IDENT}(?:\.{_IDENT})*)(?:::({_IDENT}))?$")


def parse_line_locations(text: str) -> LineLocationSet:
    """Parse class headers followed by indented `line: N` entries.

    A `Class::member` header counts for its class. Entries before any header
    raise OrphanLineEntry; a response with no entries raises NoLocationsFound.
    """
    entries: dict[str, set[int]] = {}
    current: str | None = None
    for raw in text.split("\n"):
        if _FENCE_RE.match(raw):
            continue
        stripped = _strip_decoration(raw)
        if not stripped:
            continue
        line_match = _LINE_ENTRY_RE.match(stripped)
        if line_match:
            if current is None:
                raise OrphanLineEntry(f"line entry {stripped!r} has no preceding class header")
            entries.setdefault(current, set()).add(int(line_match.group(1)))
            continue
        header_match = _CLASS_HEADER_RE.match(stripped)
        if header_match:
            current = header_match.group(1)
            entries.setdefault(current, set())
    populated = {path: lines for path, lines in entries.items() if lines}
    if not populated:
        raise NoLocationsFound("response names no line locations")
    return LineLocationSet.from_dict(populated)


def dedup_location_sets(sets: list[LineLocationSet]) -> list[LineLocationSet]:
    """Drop duplicate line-location sets, preserving first-occurrence order."""
    seen: set[tuple] = set()
    unique: list[LineLocationSet] = []
    for location_set in sets:
        key = location_set.classes
        if key in seen:
            continue
        seen.add(key)
        unique.append(location_set)
    return unique

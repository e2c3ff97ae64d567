"""sys.settrace recorders and the line-buffered JSONL writer.

Wire format, one JSON object per line:

    method enter: {"e":"m","class":str,"method":str,"sig":str,"file":str,"line":int}
    line step:    {"e":"s","class":str,"method":str,"line":int,"vars":{name:value,...}}
    test result:  {"e":"t","test":str,"status":"pass"|"fail"|"error","message":str}

MethodEnterRecorder emits each distinct method once, in first-entry order.
StepRecorder traces lines only inside scoped members and reports per call
frame the variables whose serialized value changed since that frame's
previous step; everything visible at frame entry counts as changed.
"""
from __future__ import annotations

import json
from pathlib import Path
from types import FrameType
from typing import Callable, Iterator

from .encode import encode_value
from .qualnames import CodeInfo, QualnameResolver

TraceFn = Callable[[FrameType, str, object], object]


def parse_scope(text: str) -> frozenset[tuple[str, str]]:
    """Parse a comma-separated list of class::member scope entries."""
    pairs: set[tuple[str, str]] = set()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        class_path, sep, member = item.partition("::")
        if not sep or not class_path or not member:
            raise ValueError(f"bad scope entry {item!r}: expected class::member")
        pairs.add((class_path, member))
    if not pairs:
        raise ValueError("scope must name at least one class::member")
    return frozenset(pairs)


class TraceWriter:
    """Appends wire events to a line-buffered file.

    Each event is flushed as soon as its line is complete, so a process
    killed mid-run leaves a file whose every full line is valid JSON.
    """

    def __init__(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = path.open("w", encoding="utf-8", buffering=1)

    def method_enter(self, info: CodeInfo) -> None:
        self._emit(
            {
                "e": "m",
                "class": info.class_path,
                "method": info.member,
                "sig": info.signature,
                "file": info.file,
                "line": info.def_line,
            }
        )

    def step(self, info: CodeInfo, line: int, changed_vars: dict[str, object]) -> None:
        self._emit(
            {
                "e": "s",
                "class": info.class_path,
                "method": info.member,
                "line": line,
                "vars": changed_vars,
            }
        )

    def test_result(self, test_id: str, status: str, message: str) -> None:
        self._emit({"e": "t", "test": test_id, "status": status, "message": message})

    def close(self) -> None:
        self._handle.close()

    def _emit(self, event: dict) -> None:
        self._handle.write(json.dumps(event, ensure_ascii=False) + "\n")


class MethodEnterRecorder:
    """Global trace callback for method-enter mode (scope ``*``)."""

    def __init__(self, resolver: QualnameResolver, writer: TraceWriter) -> None:
        self._resolver = resolver
        self._writer = writer
        self._seen: set[tuple[str, str, str]] = set()

    def trace(self, frame: FrameType, event: str, arg: object) -> None:
        if event != "call":
            return None
        info = self._resolver.lookup(frame.f_code)
        if info is None:
            return None
        key = (info.class_path, info.member, info.signature)
        if key not in self._seen:
            self._seen.add(key)
            self._writer.method_enter(info)
        return None  # no per-line tracing in this mode


class StepRecorder:
    """Global trace callback for line-step mode over an explicit scope."""

    def __init__(
        self,
        resolver: QualnameResolver,
        writer: TraceWriter,
        scope: frozenset[tuple[str, str]],
        max_value_chars: int,
    ) -> None:
        self._resolver = resolver
        self._writer = writer
        self._scope = scope
        self._max_value_chars = max_value_chars

    def trace(self, frame: FrameType, event: str, arg: object) -> TraceFn | None:
        if event != "call":
            return None
        info = self._resolver.lookup(frame.f_code)
        if info is None or (info.class_path, info.member) not in self._scope:
            return None
        return self._frame_tracer(info)

    def _frame_tracer(self, info: CodeInfo) -> TraceFn:
        # one closure per call frame: recursion gets independent diff state
        last_texts: dict[str, str] = {}

        def local_trace(frame: FrameType, event: str, arg: object) -> TraceFn:
            if event == "line":
                self._writer.step(info, frame.f_lineno, self._changed_vars(frame, last_texts))
            return local_trace

        return local_trace

    def _changed_vars(self, frame: FrameType, last_texts: dict[str, str]) -> dict[str, object]:
        changed: dict[str, object] = {}
        for name, value in _visible_vars(frame):
            text, wire_value = encode_value(value, self._max_value_chars)
            if last_texts.get(name) != text:
                last_texts[name] = text
                changed[name] = wire_value
        return changed


def _visible_vars(frame: FrameType) -> Iterator[tuple[str, object]]:
    """The frame's locals, with ``self`` expanded into its instance attributes.

    The bare ``self`` binding is replaced by one ``self.<attr>`` entry per
    instance attribute; objects without an inspectable ``__dict__`` simply
    contribute nothing. Double-underscore locals are runtime plumbing
    (``__class__`` cells and the like) and are skipped.
    """
    for name, value in frame.f_locals.items():
        if name.startswith("__"):
            continue
        if name == "self":
            try:
                attrs = vars(value)
            except TypeError:
                continue
            for attr_name, attr_value in attrs.items():
                yield f"self.{attr_name}", attr_value
            continue
        yield name, value

"""Tracer adapter: runs tests under sys.settrace and emits a JSONL trace.

Two modes, selected by the scope argument:

- scope ``*``: method-enter mode. One ``{"e":"m",...}`` event per distinct
  project method entered, in first-entry order.
- scope ``pkg.mod.Class::member,...``: line-step mode. One ``{"e":"s",...}``
  event per executed line inside the scoped members, carrying only the
  variables whose serialized value changed since the previous step of the
  same call frame.

Both modes append one ``{"e":"t",...}`` event per executed test. Events are
flushed line by line, so killing the process mid-run leaves a valid prefix.
"""
from __future__ import annotations

from .encode import encode_value
from .qualnames import CodeInfo, QualnameResolver, module_path_for, scan_source
from .recorder import MethodEnterRecorder, StepRecorder, TraceWriter, parse_scope
from .runner import CollectionError, load_tests, run_traced

__all__ = [
    "CodeInfo",
    "CollectionError",
    "MethodEnterRecorder",
    "QualnameResolver",
    "StepRecorder",
    "TraceWriter",
    "encode_value",
    "load_tests",
    "module_path_for",
    "parse_scope",
    "run_traced",
    "scan_source",
]

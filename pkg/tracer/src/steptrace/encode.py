"""Serializing captured variable values for the wire.

Values are JSON-encoded with sorted object keys so traces of identical runs
diff cleanly. Anything JSON cannot express becomes a type-tagged placeholder
string rather than an error, and every encoding is capped at a configurable
character count; a capped encoding travels as a plain string.
"""
from __future__ import annotations

import json


def _fallback(value: object) -> str:
    return f"<{type(value).__name__}>"


def encode_value(value: object, max_chars: int) -> tuple[str, object]:
    """Encode one value as (comparison text, wire value).

    The comparison text is what changed-variable diffing operates on; the
    wire value is what lands in a step event's ``vars`` map. When the full
    encoding fits within ``max_chars`` the wire value is the decoded JSON
    value itself; otherwise both halves are the truncated encoding text.
    Unencodable values (cycles, exotic types as a whole) collapse to a
    ``<typename>`` placeholder; unencodable values nested inside containers
    are replaced inline the same way.
    """
    try:
        text = json.dumps(value, sort_keys=True, ensure_ascii=False, default=_fallback)
    except (TypeError, ValueError, RecursionError, OverflowError):
        placeholder = _fallback(value)[:max_chars]
        return placeholder, placeholder
    if len(text) <= max_chars:
        return text, json.loads(text)
    capped = text[:max_chars]
    return capped, capped

"""Applies edit scripts to workspace copies and reverts them.

Matching runs in three strictness tiers per block: exact byte lines, then
trailing-whitespace-insensitive, then whitespace-run-insensitive. The first
tier with any match is binding; two or more matches at that tier is an
ambiguity error. Application is all-or-nothing: nothing touches disk until
every block of the script has resolved against the evolving file contents.

Files are treated as byte lines decoded with surrogateescape so non-UTF-8
bytes survive a round trip; each file's dominant line ending is preserved.
"""
from __future__ import annotations

import difflib
import hashlib
import json
import re
import shutil
from dataclasses import dataclass
from pathlib import Path

from .errors import HarnessError
from .parsing import EditScript

BACKUP_DIR_NAME = ".devlore-backup"


class PatchError(HarnessError):
    """Base class for patch application failures."""


class SearchNotFound(PatchError):
    """A block's search text matches nowhere at any tier."""


class AmbiguousMatch(PatchError):
    """A block's search text matches two or more places at the binding tier."""


class FileOutsideWorkspace(PatchError):
    """A block names a file that escapes the workspace root."""


class RevertFailed(PatchError):
    """The workspace was modified externally since the patch was applied."""


@dataclass(frozen=True)
class PatchResult:
    modified_files: tuple[str, ...]
    unified_diff: str
    applied_blocks: int


@dataclass
class _FileBuffer:
    lines: list[str]
    eol: str
    ends_with_newline: bool
    original_bytes: bytes

    def text_lines(self) -> list[str]:
        return list(self.lines)

    def to_bytes(self) -> bytes:
        body = self.eol.join(self.lines)
        if self.ends_with_newline and self.lines:
            body += self.eol
        return body.encode("utf-8", errors="surrogateescape")


def _load_file(path: Path) -> _FileBuffer:
    raw = path.read_bytes()
    text = raw.decode("utf-8", errors="surrogateescape")
    crlf = text.count("\r\n")
    lf = text.count("\n") - crlf
    eol = "\r\n" if crlf > lf else "\n"
    ends_with_newline = text.endswith(("\n", "\r\n")) or not text
    normalized = text.replace("\r\n", "\n")
    lines = normalized.split("\n")
    if normalized.endswith("\n"):
        lines.pop()
    return _FileBuffer(lines=lines, eol=eol, ends_with_newline=ends_with_newline, original_bytes=raw)


def _norm_exact(line: str) -> str:
    return line


def _norm_trailing(line: str) -> str:
    return line.rstrip(" \t")


_WS_RUN_RE = re.compile(r"[ \t]+")


def _norm_whitespace(line: str) -> str:
    return _WS_RUN_RE.sub(" ", line).rstrip(" ")


_TIERS = (_norm_exact, _norm_trailing, _norm_whitespace)


def _find_matches(file_lines: list[str], search_lines: tuple[str, ...], norm) -> list[int]:
    needle = [norm(s) for s in search_lines]
    width = len(needle)
    hits = []
    for start in range(0, len(file_lines) - width + 1):
        if all(norm(file_lines[start + k]) == needle[k] for k in range(width)):
            hits.append(start)
    return hits


def _resolve_inside(workspace: Path, rel: str) -> Path:
    candidate = (workspace / rel).resolve()
    root = workspace.resolve()
    if candidate != root and root not in candidate.parents:
        raise FileOutsideWorkspace(f"{rel!r} escapes the workspace")
    return candidate


def apply_edit_script(workspace_copy: Path, script: EditScript) -> PatchResult:
    """Apply every block of `script` inside `workspace_copy`.

    Blocks apply in order against the evolving in-memory contents; disk is
    written only after all blocks succeed. A backup of each touched file is
    stored inside the copy so revert() can restore the pristine tree.
    """
    workspace_copy = Path(workspace_copy)
    backup_root = workspace_copy / BACKUP_DIR_NAME
    if backup_root.exists():
        raise PatchError("workspace copy already has an applied patch; revert first")

    buffers: dict[str, _FileBuffer] = {}
    rel_paths: dict[str, str] = {}
    for block in script.blocks:
        target = _resolve_inside(workspace_copy, block.file_path)
        rel = target.relative_to(workspace_copy.resolve()).as_posix()
        if rel not in buffers:
            if not target.is_file():
                raise SearchNotFound(f"{block.file_path!r}: file does not exist in the workspace")
            buffers[rel] = _load_file(target)
            rel_paths[rel] = block.file_path
        buffer = buffers[rel]

        matched = None
        for tier_index, norm in enumerate(_TIERS):
            hits = _find_matches(buffer.lines, block.search_lines, norm)
            if len(hits) > 1:
                raise AmbiguousMatch(
                    f"{block.file_path!r}: search text matches {len(hits)} places (tier {tier_index + 1})"
                )
            if len(hits) == 1:
                matched = hits[0]
                break
        if matched is None:
            raise SearchNotFound(f"{block.file_path!r}: search text not found at any whitespace tier")
        buffer.lines[matched : matched + len(block.search_lines)] = list(block.replace_lines)

    # every block resolved; persist with a backup for revert
    pristine: dict[str, bytes] = {rel: buf.original_bytes for rel, buf in buffers.items()}
    diffs: list[str] = []
    manifest = {}
    (backup_root / "files").mkdir(parents=True)
    for rel in sorted(buffers):
        buffer = buffers[rel]
        new_bytes = buffer.to_bytes()
        old_text = pristine[rel].decode("utf-8", errors="surrogateescape")
        new_text = new_bytes.decode("utf-8", errors="surrogateescape")
        diff = difflib.unified_diff(
            old_text.splitlines(keepends=True),
            new_text.splitlines(keepends=True),
            fromfile=rel,
            tofile=rel,
        )
        diffs.append("".join(diff))

        backup_file = backup_root / "files" / rel
        backup_file.parent.mkdir(parents=True, exist_ok=True)
        backup_file.write_bytes(pristine[rel])
        (workspace_copy / rel).write_bytes(new_bytes)
        manifest[rel] = hashlib.sha256(new_bytes).hexdigest()

    (backup_root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return PatchResult(
        modified_files=tuple(sorted(buffers)),
        unified_diff="".join(diffs),
        applied_blocks=len(script.blocks),
    )


def revert(workspace_copy: Path) -> None:
    """Restore the pristine tree recorded by the last apply_edit_script call.

    No-op when nothing was applied. Raises RevertFailed when a patched file
    was modified externally after application.
    """
    workspace_copy = Path(workspace_copy)
    backup_root = workspace_copy / BACKUP_DIR_NAME
    if not backup_root.exists():
        return
    manifest = json.loads((backup_root / "manifest.json").read_text(encoding="utf-8"))
    for rel, expected_sha in manifest.items():
        current = workspace_copy / rel
        if not current.is_file() or hashlib.sha256(current.read_bytes()).hexdigest() != expected_sha:
            raise RevertFailed(f"{rel!r} was modified outside the patch engine; refusing to revert")
    for rel in manifest:
        shutil.copyfile(backup_root / "files" / rel, workspace_copy / rel)
    shutil.rmtree(backup_root)

"""Shared data model: bug manifests, artifact configurations, and location types.

Everything downstream (tracing, prompts, patching, metrics) speaks in terms of
the types defined here. Manifest paths are resolved relative to the manifest
file so a corpus directory can be relocated wholesale.
"""
from __future__ import annotations

import json
import os
import shlex
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .errors import HarnessError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .tracing import DebugTrace, RelatedMethods

ARTIFACT_NAMES = ("issue", "stack", "debug")


class MalformedManifest(HarnessError):
    """Manifest JSON is unreadable or violates the documented schema."""


class DuplicateBugId(HarnessError):
    """Two manifest entries share one bug id."""


class MissingWorkspace(HarnessError):
    """A manifest entry points at a workspace directory that does not exist."""


def estimate_tokens(text: str) -> int:
    """Rough token count: one token per four characters, rounded up."""
    return (len(text) + 3) // 4


# ===== Locations =====


@dataclass(frozen=True)
class MethodLocation:
    """A method or field named by its container class path and member name."""

    class_path: str
    member: str

    def __post_init__(self) -> None:
        if not self.class_path or not self.member:
            raise ValueError("MethodLocation parts must be non-empty")

    @classmethod
    def parse(cls, text: str) -> "MethodLocation":
        head, sep, tail = text.partition("::")
        if not sep:
            raise ValueError(f"not a <class_path>::<member> location: {text!r}")
        return cls(head.strip(), tail.strip())

    def canonical(self) -> str:
        return f"{self.class_path}::{self.member}"


@dataclass(frozen=True)
class LineLocationSet:
    """Predicted line numbers grouped by class path, in canonical sorted form.

    Stored as a sorted tuple-of-tuples so two sets naming the same locations
    compare (and hash) equal regardless of input ordering.
    """

    classes: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self) -> None:
        for class_path, lines in self.classes:
            if not class_path:
                raise ValueError("empty class path in line location set")
            for line in lines:
                if line < 1:
                    raise ValueError(f"line numbers must be positive: {line}")

    @classmethod
    def from_dict(cls, entries: Mapping[str, Iterable[int]]) -> "LineLocationSet":
        normalized = tuple(
            sorted((path, tuple(sorted(set(int(n) for n in lines)))) for path, lines in entries.items())
        )
        return cls(normalized)

    def entries(self) -> dict[str, tuple[int, ...]]:
        return {path: lines for path, lines in self.classes}

    def lines_for(self, class_path: str) -> tuple[int, ...]:
        return self.entries().get(class_path, ())

    def is_empty(self) -> bool:
        return not any(lines for _, lines in self.classes)


# ===== Artifact configuration =====


@dataclass(frozen=True)
class ArtifactConfig:
    """Which optional artifacts a run feeds to the model."""

    use_issue: bool = False
    use_stack: bool = False
    use_debug: bool = False

    @classmethod
    def from_string(cls, text: str) -> "ArtifactConfig":
        """Parse `none` or a '+'-joined (commas tolerated) artifact subset."""
        token = text.strip().lower()
        if token in ("none", ""):
            return cls()
        flags = {name: False for name in ARTIFACT_NAMES}
        for part in token.replace(",", "+").split("+"):
            name = part.strip()
            if name not in flags:
                raise ValueError(f"unknown artifact token: {name!r} (expected issue, stack, debug, or none)")
            flags[name] = True
        return cls(use_issue=flags["issue"], use_stack=flags["stack"], use_debug=flags["debug"])

    def enabled(self) -> tuple[str, ...]:
        out = []
        if self.use_issue:
            out.append("issue")
        if self.use_stack:
            out.append("stack")
        if self.use_debug:
            out.append("debug")
        return tuple(out)

    def canonical(self) -> str:
        names = self.enabled()
        return "+".join(names) if names else "none"

    def restricted(self, names: Iterable[str]) -> "ArtifactConfig":
        """The same config with toggles outside `names` forced off."""
        keep = set(names)
        return ArtifactConfig(
            use_issue=self.use_issue and "issue" in keep,
            use_stack=self.use_stack and "stack" in keep,
            use_debug=self.use_debug and "debug" in keep,
        )


def parse_config_list(text: str) -> list[ArtifactConfig]:
    """Parse a ';'-separated config list, preserving order, dropping duplicates."""
    configs: list[ArtifactConfig] = []
    seen: set[str] = set()
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        config = ArtifactConfig.from_string(chunk)
        if config.canonical() not in seen:
            seen.add(config.canonical())
            configs.append(config)
    return configs


# ===== Ground truth and bug cases =====


@dataclass(frozen=True)
class GroundTruth:
    """Developer-fix facts used only for scoring, never for repair."""

    dev_patch_path: Path
    buggy_methods: tuple[MethodLocation, ...]
    first_added_line: tuple[str, int] | None
    is_single_method: bool

    def __post_init__(self) -> None:
        if not self.buggy_methods:
            raise ValueError("ground truth needs at least one buggy method")
        if self.first_added_line is not None and self.first_added_line[1] < 1:
            raise ValueError("first added line must be positive")


@dataclass(frozen=True)
class BugCase:
    """One reproducible bug: workspace, trigger tests, and command templates."""

    id: str
    workspace_root: Path
    failing_tests: tuple[str, ...]
    failing_test_command: str
    full_test_command: str
    tracer_command: str
    issue_path: Path | None = None
    ground_truth: GroundTruth | None = None

    def __post_init__(self) -> None:
        if not self.failing_tests:
            raise ValueError(f"bug {self.id}: failing_tests must be non-empty")


@dataclass(frozen=True)
class ArtifactBundle:
    """Artifacts gathered for one (bug, config) trial.

    `debug` is filled in by the pipeline at the line-localization stage;
    use dataclasses.replace rather than mutation.
    """

    config: ArtifactConfig
    related_methods: "RelatedMethods | None" = None
    issue: str | None = None
    error_stack: str | None = None
    debug: "DebugTrace | None" = None

    def missing_artifacts(self, config: ArtifactConfig | None = None) -> tuple[str, ...]:
        config = config or self.config
        missing = []
        if config.use_issue and self.issue is None:
            missing.append("issue")
        if config.use_stack and self.error_stack is None:
            missing.append("stack")
        if config.use_debug and self.debug is None:
            missing.append("debug")
        return tuple(missing)


def artifact_availability(bug: BugCase, bundle: ArtifactBundle, config: ArtifactConfig) -> bool:
    """True when every artifact the config toggles on is present in the bundle."""
    return not bundle.missing_artifacts(config)


# ===== Manifest I/O =====

_REQUIRED_BUG_KEYS = (
    "id",
    "workspace",
    "failing_tests",
    "failing_test_command",
    "full_test_command",
    "tracer_command",
)


def load_manifest(path: Path | str) -> list[BugCase]:
    """Read a bug manifest; paths inside it resolve relative to the file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MalformedManifest(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("bugs"), list):
        raise MalformedManifest(f"manifest {path} must be an object with a 'bugs' list")

    base = path.resolve().parent
    bugs: list[BugCase] = []
    seen: set[str] = set()
    for index, entry in enumerate(raw["bugs"]):
        if not isinstance(entry, dict):
            raise MalformedManifest(f"bugs[{index}] is not an object")
        for key in _REQUIRED_BUG_KEYS:
            if key not in entry:
                raise MalformedManifest(f"bugs[{index}] missing required key {key!r}")
        bug_id = str(entry["id"])
        if bug_id in seen:
            raise DuplicateBugId(f"bug id {bug_id!r} appears more than once")
        seen.add(bug_id)

        workspace = _resolve(base, entry["workspace"])
        if not workspace.is_dir():
            raise MissingWorkspace(f"bug {bug_id}: workspace {workspace} does not exist")

        tests = entry["failing_tests"]
        if not isinstance(tests, list) or not tests or not all(isinstance(t, str) for t in tests):
            raise MalformedManifest(f"bug {bug_id}: failing_tests must be a non-empty string list")

        issue = entry.get("issue")
        issue_path = _resolve(base, issue) if issue else None

        truth = None
        raw_truth = entry.get("ground_truth")
        if raw_truth is not None:
            if not isinstance(raw_truth, dict):
                raise MalformedManifest(f"bug {bug_id}: ground_truth must be an object")
            try:
                methods = tuple(MethodLocation.parse(m) for m in raw_truth["buggy_methods"])
                anchor = None
                if raw_truth.get("first_added_line") is not None:
                    fal = raw_truth["first_added_line"]
                    anchor = (str(fal["file"]), int(fal["line"]))
                truth = GroundTruth(
                    dev_patch_path=_resolve(base, raw_truth["dev_patch"]),
                    buggy_methods=methods,
                    first_added_line=anchor,
                    is_single_method=bool(raw_truth["single_method"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedManifest(f"bug {bug_id}: bad ground_truth: {exc}") from exc

        try:
            bugs.append(
                BugCase(
                    id=bug_id,
                    workspace_root=workspace,
                    failing_tests=tuple(tests),
                    failing_test_command=str(entry["failing_test_command"]),
                    full_test_command=str(entry["full_test_command"]),
                    tracer_command=str(entry["tracer_command"]),
                    issue_path=issue_path,
                    ground_truth=truth,
                )
            )
        except ValueError as exc:
            raise MalformedManifest(str(exc)) from exc
    return bugs


def dump_manifest(bugs: Sequence[BugCase], path: Path | str) -> None:
    """Write bugs back out in manifest form (inverse of load_manifest)."""
    path = Path(path)
    base = path.resolve().parent
    entries = []
    for bug in bugs:
        entry: dict = {
            "id": bug.id,
            "workspace": _relativize(base, bug.workspace_root),
            "failing_tests": list(bug.failing_tests),
            "failing_test_command": bug.failing_test_command,
            "full_test_command": bug.full_test_command,
            "tracer_command": bug.tracer_command,
            "issue": _relativize(base, bug.issue_path) if bug.issue_path else None,
            "ground_truth": None,
        }
        if bug.ground_truth is not None:
            truth = bug.ground_truth
            entry["ground_truth"] = {
                "dev_patch": _relativize(base, truth.dev_patch_path),
                "buggy_methods": [m.canonical() for m in truth.buggy_methods],
                "first_added_line": (
                    {"file": truth.first_added_line[0], "line": truth.first_added_line[1]}
                    if truth.first_added_line
                    else None
                ),
                "single_method": truth.is_single_method,
            }
        entries.append(entry)
    path.write_text(json.dumps({"bugs": entries}, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resolve(base: Path, value: str) -> Path:
    p = Path(str(value))
    return p if p.is_absolute() else (base / p).resolve()


def _relativize(base: Path, target: Path) -> str:
    try:
        return os.path.relpath(target, base).replace(os.sep, "/")
    except ValueError:  # different drive on windows; keep absolute
        return str(target)


# ===== Command templates =====


def expand_command(template: str, substitutions: Mapping[str, str | Sequence[str]]) -> list[str]:
    """Expand a manifest command template into argv.

    The template is tokenized first, then placeholders are substituted per
    token, so paths with spaces survive. A token that is exactly a
    list-valued placeholder (e.g. "{tests}") expands to multiple argv
    entries; embedded list placeholders are joined with spaces.
    """
    argv: list[str] = []
    for token in shlex.split(template):
        list_key = next(
            (key for key, value in substitutions.items() if token == "{" + key + "}" and not isinstance(value, str)),
            None,
        )
        if list_key is not None:
            argv.extend(str(v) for v in substitutions[list_key])
            continue
        expanded = token
        for key, value in substitutions.items():
            marker = "{" + key + "}"
            if marker in expanded:
                joined = value if isinstance(value, str) else " ".join(str(v) for v in value)
                expanded = expanded.replace(marker, joined)
        argv.append(expanded)
    return argv

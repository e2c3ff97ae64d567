"""Trace-informed automated program repair harness.

The pipeline runs three model stages per bug and artifact configuration
(method localization, line localization, patch generation), validates every
candidate patch against the trigger tests and then the full suite, and
persists one replayable trial record per (bug, config) pair. Scoring and
report generation run offline over those records.
"""
from __future__ import annotations

from .errors import HarnessError
from .llm import LLMClient, ModelConfig, UsageRecord, compute_cost, total_cost
from .model import (
    ArtifactBundle,
    ArtifactConfig,
    BugCase,
    GroundTruth,
    LineLocationSet,
    MethodLocation,
    estimate_tokens,
    expand_command,
    load_manifest,
    parse_config_list,
)
from .parsing import (
    EditBlock,
    EditScript,
    parse_edit_script,
    parse_line_locations,
    parse_method_locations,
    render_edit_script,
)
from .patching import PatchResult, apply_edit_script, revert
from .pipeline import (
    Pipeline,
    PipelineSettings,
    PatchAttempt,
    TrialRecord,
    extract_method_body,
    load_all_trial_records,
    load_trial_record,
    save_trial_record,
)
from .prompts import (
    MethodBody,
    PromptTriple,
    build_line_localization_prompt,
    build_method_localization_prompt,
    build_repair_prompt,
)
from .metrics import (
    MatchSpec,
    cost_time_summary,
    line_match,
    method_hit,
    rates,
    top_n_hit,
    union_and_overlap,
    write_reports,
)
from .tracing import (
    DebugTrace,
    MethodRecord,
    PruneLimits,
    RelatedMethods,
    StepEvent,
    capture_error_stack,
    prune_debug_trace,
    record_debug_trace,
    record_related_methods,
    render_debug_lines,
)
from .validation import Verdict, side_by_side_report, validate_patch

__version__ = "0.1.0"

__all__ = [
    "ArtifactBundle",
    "ArtifactConfig",
    "BugCase",
    "DebugTrace",
    "EditBlock",
    "EditScript",
    "GroundTruth",
    "HarnessError",
    "LLMClient",
    "LineLocationSet",
    "MatchSpec",
    "MethodBody",
    "MethodLocation",
    "MethodRecord",
    "ModelConfig",
    "PatchAttempt",
    "PatchResult",
    "Pipeline",
    "PipelineSettings",
    "PromptTriple",
    "PruneLimits",
    "RelatedMethods",
    "StepEvent",
    "TrialRecord",
    "UsageRecord",
    "Verdict",
    "apply_edit_script",
    "build_line_localization_prompt",
    "build_method_localization_prompt",
    "build_repair_prompt",
    "capture_error_stack",
    "compute_cost",
    "cost_time_summary",
    "estimate_tokens",
    "expand_command",
    "extract_method_body",
    "line_match",
    "load_all_trial_records",
    "load_manifest",
    "load_trial_record",
    "method_hit",
    "parse_config_list",
    "parse_edit_script",
    "parse_line_locations",
    "parse_method_locations",
    "prune_debug_trace",
    "rates",
    "record_debug_trace",
    "record_related_methods",
    "render_debug_lines",
    "render_edit_script",
    "revert",
    "save_trial_record",
    "side_by_side_report",
    "top_n_hit",
    "total_cost",
    "union_and_overlap",
    "validate_patch",
    "write_reports",
]

"""Scoring and reporting over persisted trial records.

Hit predicates (method-level, line-level with exact or windowed matching, and
plausible-patch) are pure functions so they can be checked against brute-force
oracles. Rates are computed per artifact configuration with explicit
denominator accounting: a bug only counts when its trial ran (status ok), it
has ground truth, and, for line metrics, the ground-truth anchor resolves to a
traced class. Excluded bugs are reported, never silently dropped.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Sequence

from .errors import HarnessError
from .model import BugCase, GroundTruth, LineLocationSet
from .pipeline import STATUS_OK, TrialRecord

METRICS = ("method", "line_exact", "line_range3", "line_range5", "plausible")
PARTITIONS = ("all", "single_method", "non_single")


class DuplicateTrial(HarnessError):
    """Two records exist for the same (bug, config) pair."""


class UnknownMetric(HarnessError):
    """Metric name not one of METRICS."""


# ===== Match predicates =====


@dataclass(frozen=True)
class MatchSpec:
    """How a predicted line is compared against the ground-truth anchor."""

    kind: str  # "exact" or "range"
    radius: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("exact", "range"):
            raise ValueError(f"unknown match kind: {self.kind!r}")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    @classmethod
    def exact(cls) -> "MatchSpec":
        return cls(kind="exact")

    @classmethod
    def within(cls, radius: int) -> "MatchSpec":
        return cls(kind="range", radius=radius)

    def matches(self, predicted_line: int, anchor_line: int) -> bool:
        if self.kind == "exact":
            return predicted_line == anchor_line
        return abs(predicted_line - anchor_line) <= self.radius


def _strip_params(method: str) -> str:
    cut = method.find("(")
    return method[:cut] if cut >= 0 else method


def method_hit(predicted: Sequence[str], truth_methods: Sequence[str]) -> bool:
    """True when any predicted method names a buggy method (parameters ignored)."""
    truth = {_strip_params(m) for m in truth_methods}
    return any(_strip_params(p) in truth for p in predicted)


def top_n_hit(predicted: Sequence[str], truth_methods: Sequence[str], n: int) -> bool:
    """method_hit restricted to the first n predictions."""
    if n < 1:
        raise ValueError("n must be positive")
    return method_hit(list(predicted)[:n], truth_methods)


def line_match(
    line_sets: Sequence[LineLocationSet],
    anchor_class: str,
    anchor_line: int,
    spec: MatchSpec,
) -> bool:
    """True when any predicted set puts a line near the anchor in its class."""
    for set_ in line_sets:
        for line in set_.lines_for(anchor_class):
            if spec.matches(line, anchor_line):
                return True
    return False


def anchor_for(record: TrialRecord, truth: GroundTruth) -> tuple[str, int] | None:
    """Resolve the ground-truth anchor (file, line) to (class_path, line).

    The mapping comes from the trial's traced class files; an anchor in a file
    no traced class lives in cannot be scored and yields None.
    """
    if truth.first_added_line is None:
        return None
    anchor_file, anchor_line = truth.first_added_line
    for class_path, class_file in record.class_files.items():
        if class_file == anchor_file:
            return class_path, anchor_line
    return None


_LINE_SPECS = {
    "line_exact": MatchSpec.exact(),
    "line_range3": MatchSpec.within(3),
    "line_range5": MatchSpec.within(5),
}


def record_hit(record: TrialRecord, truth: GroundTruth | None, metric: str) -> bool | None:
    """Score one record; None means the record cannot be scored on this metric."""
    if metric not in METRICS:
        raise UnknownMetric(metric)
    if record.status != STATUS_OK:
        return None
    if metric == "plausible":
        return record.has_plausible()
    if truth is None:
        return None
    if metric == "method":
        truth_names = [loc.canonical() for loc in truth.buggy_methods]
        return method_hit(record.predicted_methods, truth_names)
    anchor = anchor_for(record, truth)
    if anchor is None:
        return None
    anchor_class, anchor_line = anchor
    return line_match(record.unique_line_sets, anchor_class, anchor_line, _LINE_SPECS[metric])


# ===== Rates =====


@dataclass
class RateResult:
    config: str
    partition: str
    hits: int = 0
    denominator: int = 0
    excluded: dict[str, int] = field(default_factory=dict)
    hit_bugs: tuple[str, ...] = ()

    @property
    def rate(self) -> float | None:
        if self.denominator == 0:
            return None
        return self.hits / self.denominator

    def cell(self) -> str:
        return rate_cell(self.hits, self.denominator)


def rate_cell(hits: int, denominator: int) -> str:
    if denominator == 0:
        return "0/0"
    return f"{hits}/{denominator}={100.0 * hits / denominator:.1f}%"


def index_records(records: Iterable[TrialRecord]) -> dict[str, dict[str, TrialRecord]]:
    """config -> bug_id -> record; raises on duplicates."""
    by_config: dict[str, dict[str, TrialRecord]] = {}
    for record in records:
        slot = by_config.setdefault(record.config, {})
        if record.bug_id in slot:
            raise DuplicateTrial(f"{record.bug_id}/{record.config}")
        slot[record.bug_id] = record
    return by_config


def _in_partition(bug: BugCase, partition: str) -> bool:
    if partition == "all":
        return True
    if bug.ground_truth is None:
        return False
    if partition == "single_method":
        return bug.ground_truth.is_single_method
    if partition == "non_single":
        return not bug.ground_truth.is_single_method
    raise ValueError(f"unknown partition: {partition!r}")


def rates(
    records: Iterable[TrialRecord],
    bugs: Sequence[BugCase],
    metric: str,
    partition: str = "all",
) -> dict[str, RateResult]:
    """Hit rates per config over the bugs in the partition.

    Exclusion accounting per config: `missing_record` (no trial persisted),
    `unavailable` (trial skipped for missing artifacts), `error` (harness
    failure), `no_ground_truth`, and `no_anchor` (line metrics only).
    """
    if metric not in METRICS:
        raise UnknownMetric(metric)
    bug_index = {bug.id: bug for bug in bugs}
    by_config = index_records(records)
    results: dict[str, RateResult] = {}
    for config in sorted(by_config):
        result = RateResult(config=config, partition=partition)
        hit_bugs: list[str] = []
        for bug_id in sorted(bug_index):
            bug = bug_index[bug_id]
            if not _in_partition(bug, partition):
                continue
            record = by_config[config].get(bug_id)
            if record is None:
                result.excluded["missing_record"] = result.excluded.get("missing_record", 0) + 1
                continue
            if record.status != STATUS_OK:
                key = "unavailable" if record.status == "unavailable" else "error"
                result.excluded[key] = result.excluded.get(key, 0) + 1
                continue
            truth = bug.ground_truth
            if metric != "plausible" and truth is None:
                result.excluded["no_ground_truth"] = result.excluded.get("no_ground_truth", 0) + 1
                continue
            hit = record_hit(record, truth, metric)
            if hit is None:
                result.excluded["no_anchor"] = result.excluded.get("no_anchor", 0) + 1
                continue
            result.denominator += 1
            if hit:
                result.hits += 1
                hit_bugs.append(bug_id)
        result.hit_bugs = tuple(hit_bugs)
        results[config] = result
    return results


# ===== Union and overlap =====


@dataclass
class OverlapReport:
    metric: str
    configs: tuple[str, ...]
    hit_sets: dict[str, frozenset[str]]
    union: frozenset[str]
    exclusive: dict[str, frozenset[str]]
    region_counts: dict[frozenset[str], tuple[str, ...]]


def union_and_overlap(
    records: Iterable[TrialRecord],
    bugs: Sequence[BugCase],
    metric: str,
    partition: str = "all",
) -> OverlapReport:
    """Which configs hit which bugs: union, per-config exclusives, and every
    non-empty overlap region keyed by the exact set of configs that hit."""
    per_config = rates(records, bugs, metric, partition)
    configs = tuple(sorted(per_config))
    hit_sets = {config: frozenset(result.hit_bugs) for config, result in per_config.items()}
    union: frozenset[str] = frozenset().union(*hit_sets.values()) if hit_sets else frozenset()
    exclusive = {
        config: frozenset(
            bug for bug in hit_sets[config]
            if all(bug not in hit_sets[other] for other in configs if other != config)
        )
        for config in configs
    }
    regions: dict[frozenset[str], list[str]] = {}
    for bug in sorted(union):
        membership = frozenset(config for config in configs if bug in hit_sets[config])
        regions.setdefault(membership, []).append(bug)
    region_counts = {region: tuple(bug_ids) for region, bug_ids in regions.items()}
    return OverlapReport(
        metric=metric,
        configs=configs,
        hit_sets=hit_sets,
        union=union,
        exclusive=exclusive,
        region_counts=region_counts,
    )


# ===== Cost and time =====


@dataclass
class CostSummary:
    total_cost: Decimal
    input_tokens: int
    output_tokens: int
    llm_wall_seconds: float
    stage_seconds: dict[str, float]
    requests: int
    plausible_bugs: int

    @property
    def cost_per_fix(self) -> Decimal | None:
        if self.plausible_bugs == 0:
            return None
        return self.total_cost / self.plausible_bugs


def cost_time_summary(records: Iterable[TrialRecord]) -> CostSummary:
    """Aggregate spend and timing over records; plausible counted per bug."""
    total_cost = Decimal("0")
    input_tokens = 0
    output_tokens = 0
    wall = 0.0
    requests = 0
    stage_seconds: dict[str, float] = {}
    plausible: set[str] = set()
    for record in records:
        for usage in record.usage:
            total_cost += usage.cost
            input_tokens += usage.input_tokens
            output_tokens += usage.output_tokens
            wall += usage.wall_time
            requests += 1
        for stage, seconds in record.stage_timings.items():
            stage_seconds[stage] = stage_seconds.get(stage, 0.0) + seconds
        if record.has_plausible():
            plausible.add(record.bug_id)
    return CostSummary(
        total_cost=total_cost,
        input_tokens=input_tokens,
        output_tokens=output_tokens,
        llm_wall_seconds=wall,
        stage_seconds=dict(sorted(stage_seconds.items())),
        requests=requests,
        plausible_bugs=len(plausible),
    )


# ===== Report writing =====


def write_reports(
    records: Sequence[TrialRecord],
    bugs: Sequence[BugCase],
    out_dir: Path,
    metrics: Sequence[str] = METRICS,
) -> list[Path]:
    """Write rates_<metric>.csv, overlap_<metric>.csv, and summary.md."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for metric in metrics:
        if metric not in METRICS:
            raise UnknownMetric(metric)
        rates_path = out_dir / f"rates_{metric}.csv"
        with rates_path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["config", "partition", "hits", "denominator", "rate", "excluded"])
            for partition in PARTITIONS:
                for config, result in sorted(rates(records, bugs, metric, partition).items()):
                    rate_text = "" if result.rate is None else f"{result.rate:.6f}"
                    excluded = ";".join(f"{k}={v}" for k, v in sorted(result.excluded.items()))
                    writer.writerow(
                        [config, partition, result.hits, result.denominator, rate_text, excluded]
                    )
        written.append(rates_path)

        overlap = union_and_overlap(records, bugs, metric)
        overlap_path = out_dir / f"overlap_{metric}.csv"
        with overlap_path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["region", "count", "bugs"])
            writer.writerow(["union", len(overlap.union), "|".join(sorted(overlap.union))])
            for config in overlap.configs:
                writer.writerow(
                    [
                        f"only:{config}",
                        len(overlap.exclusive[config]),
                        "|".join(sorted(overlap.exclusive[config])),
                    ]
                )
            for region in sorted(overlap.region_counts, key=lambda r: (len(r), sorted(r))):
                bugs_in_region = overlap.region_counts[region]
                writer.writerow(["&".join(sorted(region)), len(bugs_in_region), "|".join(bugs_in_region)])
        written.append(overlap_path)

    summary_path = out_dir / "summary.md"
    summary_path.write_text(render_summary(records, bugs, metrics), encoding="utf-8")
    written.append(summary_path)
    return written


def render_summary(
    records: Sequence[TrialRecord],
    bugs: Sequence[BugCase],
    metrics: Sequence[str] = METRICS,
) -> str:
    lines: list[str] = ["# Ablation summary", ""]
    for metric in metrics:
        lines.append(f"## {metric}")
        lines.append("")
        lines.append("| config | " + " | ".join(PARTITIONS) + " |")
        lines.append("|" + "---|" * (len(PARTITIONS) + 1))
        per_partition = {p: rates(records, bugs, metric, p) for p in PARTITIONS}
        configs = sorted(per_partition["all"])
        for config in configs:
            cells = [per_partition[p][config].cell() for p in PARTITIONS]
            lines.append(f"| {config} | " + " | ".join(cells) + " |")
        lines.append("")
        overlap = union_and_overlap(records, bugs, metric)
        lines.append(
            f"Union across configs: {len(overlap.union)}. Exclusive hits: "
            + ", ".join(f"{c}={len(overlap.exclusive[c])}" for c in overlap.configs)
            + "."
        )
        lines.append("")
    summary = cost_time_summary(records)
    lines.append("## Cost and time")
    lines.append("")
    lines.append(f"- requests: {summary.requests}")
    lines.append(f"- input tokens: {summary.input_tokens}")
    lines.append(f"- output tokens: {summary.output_tokens}")
    lines.append(f"- total cost: {summary.total_cost}")
    per_fix = summary.cost_per_fix
    lines.append(f"- plausible bugs: {summary.plausible_bugs}")
    lines.append(f"- cost per fix: {'n/a' if per_fix is None else per_fix}")
    lines.append(f"- model wall seconds: {summary.llm_wall_seconds:.3f}")
    for stage, seconds in summary.stage_seconds.items():
        lines.append(f"- stage {stage}: {seconds:.3f}s")
    lines.append("")
    return "\n".join(lines)

"""Grounding-accuracy metrics: counting precision/recall/F1/accuracy and
spatial-relation accuracy, with micro-averaged aggregation and the CSV /
Markdown report renderers.

Counting follows the min-matching convention: per category the matched
count is min(predicted, ground truth); precision and recall are micro
sums over all cases; accuracy is per-case exact match. Spatial accuracy
is per-relation by default, with an all-or-nothing per-prompt mode.
"""
from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from .errors import EmptyInput
from .geometry import Layout, Relation, classify_relation


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass(frozen=True)
class CountingStats:
    """Per-case counting outcome under min-matching."""

    matched: int
    pred_total: int
    gt_total: int
    exact: bool

    def __post_init__(self) -> None:
        if self.matched > min(self.pred_total, self.gt_total):
            raise ValueError("matched exceeds min(pred_total, gt_total)")

    @property
    def precision(self) -> float:
        return _safe_div(self.matched, self.pred_total)

    @property
    def recall(self) -> float:
        return _safe_div(self.matched, self.gt_total)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return _safe_div(2.0 * p * r, p + r)


def layout_counts(layout: Layout) -> dict[str, int]:
    """Category to instance-count map; names compared case-insensitively."""
    return dict(Counter(obj.name.strip().lower() for obj in layout.objects))


def counting_metrics(pred: Mapping[str, int], gt: Mapping[str, int]) -> CountingStats:
    """Min-matching over the union of categories."""
    matched = sum(
        min(pred.get(category, 0), gt.get(category, 0))
        for category in set(pred) | set(gt)
    )
    return CountingStats(
        matched=matched,
        pred_total=sum(pred.values()),
        gt_total=sum(gt.values()),
        exact=dict(pred) == dict(gt),
    )


@dataclass(frozen=True)
class GroundTruthRelation:
    subject: str
    object_name: str
    relation: Relation

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "object": self.object_name,
            "relation": self.relation.token,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GroundTruthRelation":
        return cls(
            subject=str(data["subject"]).strip().lower(),
            object_name=str(data["object"]).strip().lower(),
            relation=Relation.from_token(str(data["relation"])),
        )


@dataclass(frozen=True)
class RelationCheck:
    relation: GroundTruthRelation
    predicted: Relation | None
    correct: bool


@dataclass(frozen=True)
class SpatialStats:
    """Per-relation correctness rows for one case."""

    checks: tuple[RelationCheck, ...]

    @property
    def correct(self) -> int:
        return sum(1 for check in self.checks if check.correct)

    @property
    def total(self) -> int:
        return len(self.checks)

    @property
    def accuracy(self) -> float:
        return _safe_div(self.correct, self.total)

    @property
    def all_correct(self) -> bool:
        return self.correct == self.total


def spatial_accuracy(
    layout: Layout, relations: Sequence[GroundTruthRelation]
) -> SpatialStats:
    """Check each ground-truth relation against the first matching instances.

    A relation whose subject or object is missing from the layout is
    incorrect; otherwise the center-based classifier must agree exactly.
    """
    checks = []
    for relation in relations:
        subject = layout.find(relation.subject)
        target = layout.find(relation.object_name)
        if subject is None or target is None:
            checks.append(RelationCheck(relation=relation, predicted=None, correct=False))
            continue
        predicted = classify_relation(subject.box, target.box)
        checks.append(
            RelationCheck(
                relation=relation, predicted=predicted, correct=predicted == relation.relation
            )
        )
    return SpatialStats(checks=tuple(checks))


class Detector(Protocol):
    """Image-side detector interface; returns detections in Layout form.

    No detector ships here; plugging one in turns the layout metrics into
    image metrics unchanged.
    """

    def detect(self, image_ref: str) -> Layout: ...


@dataclass(frozen=True)
class SummaryRow:
    """Micro-averaged counting summary over a batch of cases."""

    precision: float
    recall: float
    f1: float
    accuracy: float
    cases: int


def aggregate(stats: Sequence[CountingStats]) -> SummaryRow:
    """Micro P/R/F1 over summed counts; accuracy is the exact-match rate."""
    if not stats:
        raise EmptyInput("no counting stats to aggregate")
    matched = sum(s.matched for s in stats)
    pred_total = sum(s.pred_total for s in stats)
    gt_total = sum(s.gt_total for s in stats)
    precision = _safe_div(matched, pred_total)
    recall = _safe_div(matched, gt_total)
    return SummaryRow(
        precision=precision,
        recall=recall,
        f1=_safe_div(2.0 * precision * recall, precision + recall),
        accuracy=_safe_div(sum(1 for s in stats if s.exact), len(stats)),
        cases=len(stats),
    )


@dataclass(frozen=True)
class SpatialSummary:
    accuracy: float
    correct: int
    total: int
    cases: int


def aggregate_spatial(
    stats: Sequence[SpatialStats], per_prompt: bool = False
) -> SpatialSummary:
    """Micro per-relation accuracy, or all-or-nothing per prompt."""
    if not stats:
        raise EmptyInput("no spatial stats to aggregate")
    if per_prompt:
        correct = sum(1 for s in stats if s.all_correct)
        return SpatialSummary(
            accuracy=_safe_div(correct, len(stats)),
            correct=correct,
            total=len(stats),
            cases=len(stats),
        )
    correct = sum(s.correct for s in stats)
    total = sum(s.total for s in stats)
    return SpatialSummary(
        accuracy=_safe_div(correct, total), correct=correct, total=total, cases=len(stats)
    )


@dataclass(frozen=True)
class CaseRow:
    """One per-case report line; spatial fields are None on counting tasks."""

    case_id: str
    task: str
    matched: int | None = None
    pred_total: int | None = None
    gt_total: int | None = None
    exact: bool | None = None
    spatial_correct: int | None = None
    spatial_total: int | None = None


@dataclass(frozen=True)
class Report:
    """Aggregated benchmark output mirroring the Prec./Rec./F1/Acc. layout."""

    numerical: SummaryRow | None
    spatial: SpatialSummary | None
    rows: tuple[CaseRow, ...]


_CSV_COLUMNS = (
    "case_id",
    "task",
    "matched",
    "pred_total",
    "gt_total",
    "exact",
    "spatial_correct",
    "spatial_total",
)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def render_csv(report: Report) -> str:
    """Per-case CSV with fixed formatting; rows sorted by case id."""
    out = io.StringIO()
    out.write(",".join(_CSV_COLUMNS) + "\n")
    for row in sorted(report.rows, key=lambda r: r.case_id):
        out.write(
            ",".join(_cell(getattr(row, column)) for column in _CSV_COLUMNS) + "\n"
        )
    return out.getvalue()


def render_markdown(report: Report, config_json: str | None = None) -> str:
    """Summary table in the Prec./Rec./F1/Acc. column layout.

    Counting accuracy is per-prompt exact match; spatial accuracy is
    per-relation. The run config is embedded verbatim when provided.
    """
    lines = [
        "# Benchmark report",
        "",
        "Counting Acc. is per-prompt exact match; spatial Acc. is per-relation.",
        "",
        "| Task | Cases | Prec. | Rec. | F1 | Acc. |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    if report.numerical is not None:
        n = report.numerical
        lines.append(
            f"| numerical | {n.cases} | {n.precision:.4f} | {n.recall:.4f}"
            f" | {n.f1:.4f} | {n.accuracy:.4f} |"
        )
    if report.spatial is not None:
        s = report.spatial
        lines.append(f"| spatial | {s.cases} | - | - | - | {s.accuracy:.4f} |")
    if config_json is not None:
        lines.extend(["", "## Run config", "", "```json", config_json, "```"])
    return "\n".join(lines) + "\n"

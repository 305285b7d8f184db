"""JSONL benchmark dataset: one case per line, either counting ground
truth or spatial-relation ground truth, optionally with reference boxes.

Line schema:
    {"id": str, "prompt": str, "task": "numerical" | "spatial",
     "gt_counts": {category: count},            # numerical tasks only
     "gt_relations": [{"subject", "object", "relation"}],  # spatial only
     "gt_boxes": [{"name", "box": [x1, y1, x2, y2]}]}      # optional
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateId, SchemaViolation
from .geometry import BoundingBox, Layout, build_layout
from .metrics import GroundTruthRelation
from .reasoning import ReasoningTask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchCase:
    id: str
    prompt: str
    task: ReasoningTask
    gt_counts: dict[str, int] | None = None
    gt_relations: tuple[GroundTruthRelation, ...] | None = None
    gt_boxes: Layout | None = None

    def __post_init__(self) -> None:
        has_counts = self.gt_counts is not None
        has_relations = self.gt_relations is not None
        if has_counts == has_relations:
            raise SchemaViolation(
                f"case {self.id!r}: exactly one of gt_counts / gt_relations required"
            )
        if self.task is ReasoningTask.NUMERICAL and not has_counts:
            raise SchemaViolation(f"case {self.id!r}: numerical task needs gt_counts")
        if self.task is ReasoningTask.SPATIAL and not has_relations:
            raise SchemaViolation(f"case {self.id!r}: spatial task needs gt_relations")

    def to_dict(self) -> dict:
        data: dict = {"id": self.id, "prompt": self.prompt, "task": self.task.value}
        if self.gt_counts is not None:
            data["gt_counts"] = dict(self.gt_counts)
        if self.gt_relations is not None:
            data["gt_relations"] = [r.to_dict() for r in self.gt_relations]
        if self.gt_boxes is not None:
            data["gt_boxes"] = [
                {"name": obj.name, "box": list(obj.box.as_tuple())}
                for obj in self.gt_boxes.objects
            ]
        return data


def case_from_dict(data: dict) -> BenchCase:
    if not isinstance(data, dict):
        raise SchemaViolation(f"expected an object, got {type(data).__name__}")
    for key in ("id", "prompt", "task"):
        if key not in data:
            raise SchemaViolation(f"missing required field {key!r}")
    case_id = str(data["id"])
    try:
        task = ReasoningTask.from_token(str(data["task"]))
    except ValueError as exc:
        raise SchemaViolation(str(exc)) from exc

    gt_counts = None
    if "gt_counts" in data:
        raw = data["gt_counts"]
        if not isinstance(raw, dict) or not raw:
            raise SchemaViolation(f"case {case_id!r}: gt_counts must be a non-empty object")
        gt_counts = {}
        for category, count in raw.items():
            if not isinstance(count, int) or count < 1:
                raise SchemaViolation(
                    f"case {case_id!r}: count for {category!r} must be a positive integer"
                )
            gt_counts[str(category).strip().lower()] = count

    gt_relations = None
    if "gt_relations" in data:
        raw = data["gt_relations"]
        if not isinstance(raw, list) or not raw:
            raise SchemaViolation(
                f"case {case_id!r}: gt_relations must be a non-empty array"
            )
        try:
            gt_relations = tuple(GroundTruthRelation.from_dict(item) for item in raw)
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"case {case_id!r}: bad relation entry: {exc}") from exc

    gt_boxes = None
    if "gt_boxes" in data:
        try:
            gt_boxes = build_layout(
                (str(item["name"]).strip().lower(), BoundingBox(*item["box"]))
                for item in data["gt_boxes"]
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"case {case_id!r}: bad gt_boxes entry: {exc}") from exc

    return BenchCase(
        id=case_id,
        prompt=str(data["prompt"]),
        task=task,
        gt_counts=gt_counts,
        gt_relations=gt_relations,
        gt_boxes=gt_boxes,
    )


def load_dataset(path: str | Path) -> list[BenchCase]:
    """Parse a JSONL dataset, rejecting schema violations and duplicate ids."""
    path = Path(path)
    cases: list[BenchCase] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"{path}:{line_number}: invalid JSON: {exc}") from exc
            try:
                case = case_from_dict(data)
            except SchemaViolation as exc:
                raise SchemaViolation(f"{path}:{line_number}: {exc}") from exc
            if case.id in seen:
                raise DuplicateId(f"{path}:{line_number}: duplicate case id {case.id!r}")
            seen.add(case.id)
            cases.append(case)
    if not cases:
        logger.warning("dataset %s is empty", path)
    return cases


def save_dataset(cases: list[BenchCase], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for case in cases:
            handle.write(json.dumps(case.to_dict(), sort_keys=True) + "\n")

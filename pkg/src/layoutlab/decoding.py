"""Prefix-controlled layout decoding.

Numerical constraints expand into one forced "category:" prefix per
requested instance, so counts are satisfied by construction. Spatial
constraints expand into "name(position):" prefixes that steer each box
toward its bucket. The decode loop forces each prefix into the growing
context, lets the backend complete the coordinate tuple, and validates
the parse; decoded boxes stay visible to later completions.
"""
from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .backends import GenerationBackend, GenerationRequest
from .errors import DegenerateBox, ExhaustedRetries, NonEmptyRequired, ParseFailure
from .geometry import (
    DEFAULT_CANVAS,
    BoundingBox,
    Layout,
    PlacedObject,
    PositionBucket,
    bucket_of,
    normalize_box,
)
from .reasoning import (
    ConstraintSet,
    NumericalConstraint,
    ReasoningTask,
    SpatialConstraint,
    load_exemplars,
    negation_block,
)

logger = logging.getLogger(__name__)

# Completion budget per box line; not a tuning knob.
_BOX_MAX_TOKENS = 48

_PLANNING_INSTRUCTION = (
    "Read the description and the object list, then give one bounding box"
    " per object as 'name: (x1, y1, x2, y2)' with integer pixel coordinates"
    " on a 512 x 512 canvas, top-left origin."
)

_BOX_TUPLE = re.compile(
    r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)?"
)


@dataclass(frozen=True)
class ControlPrefix:
    """One forced control string: 'name:' or 'name(position):'."""

    name: str
    bucket: PositionBucket | None = None

    @property
    def text(self) -> str:
        if self.bucket is None:
            return f"{self.name}:"
        return f"{self.name}({self.bucket.token}):"


@dataclass(frozen=True)
class PrefixPlan:
    """Ordered control prefixes driving one decode session."""

    kind: ReasoningTask
    entries: tuple[ControlPrefix, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise NonEmptyRequired("a prefix plan needs at least one entry")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def prefixes(self) -> tuple[str, ...]:
        return tuple(entry.text for entry in self.entries)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "prefixes": list(self.prefixes)}


@dataclass(frozen=True)
class DecodeConfig:
    max_retries_per_box: int = 3
    coordinate_range: int = DEFAULT_CANVAS
    temperature: float = 0.0
    enforce_spatial_bucket: bool = False

    def __post_init__(self) -> None:
        if self.max_retries_per_box < 0:
            raise ValueError("max_retries_per_box must be >= 0")
        if self.coordinate_range <= 0:
            raise ValueError("coordinate_range must be positive")


@dataclass(frozen=True)
class Violation:
    """One constraint-violation record."""

    kind: str
    message: str
    object_index: int | None = None
    category: str | None = None
    expected: str | None = None
    actual: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class DecodeReport:
    layout: Layout
    violations: list[Violation] = field(default_factory=list)
    retries_used: int = 0

    def to_dict(self) -> dict:
        from .geometry import layout_to_dict

        return {
            "layout": layout_to_dict(self.layout),
            "violations": [v.to_dict() for v in self.violations],
            "retries_used": self.retries_used,
        }


def build_numeric_prefixes(constraints: Sequence[NumericalConstraint]) -> PrefixPlan:
    """Expand each (category, quantity) into quantity copies of 'category:'."""
    if not constraints:
        raise NonEmptyRequired("numerical constraints are empty")
    entries = []
    for constraint in constraints:
        entries.extend(ControlPrefix(constraint.category) for _ in range(constraint.quantity))
    return PrefixPlan(kind=ReasoningTask.NUMERICAL, entries=tuple(entries))


def build_spatial_prefixes(constraints: Sequence[SpatialConstraint]) -> PrefixPlan:
    """One 'name(position):' prefix per constraint, order preserved."""
    if not constraints:
        raise NonEmptyRequired("spatial constraints are empty")
    entries = tuple(
        ControlPrefix(c.object_name, bucket=c.position) for c in constraints
    )
    return PrefixPlan(kind=ReasoningTask.SPATIAL, entries=entries)


def plan_from_constraints(constraints: ConstraintSet) -> PrefixPlan:
    if constraints.numerical is not None:
        return build_numeric_prefixes(constraints.numerical)
    assert constraints.spatial is not None
    return build_spatial_prefixes(constraints.spatial)


def build_planning_prompt(
    meta_prompt: str,
    plan: PrefixPlan,
    exemplar_count: int = 2,
    include_negation: bool = True,
) -> str:
    """Deterministic visual-planning prompt for the decode session.

    Toggling include_negation changes the output by exactly the negation
    section; everything else is byte-identical.
    """
    exemplars = load_exemplars("planning")[:exemplar_count]
    if len(exemplars) < exemplar_count:
        raise ValueError(f"only {len(exemplars)} planning exemplars available")
    parts = [_PLANNING_INSTRUCTION, ""]
    for block in exemplars:
        parts.append("Example:")
        parts.append(block)
        parts.append("")
    if include_negation:
        parts.append("Negation example:")
        parts.append(negation_block())
        parts.append("")
    summary = ", ".join(entry.text.rstrip(":") for entry in plan.entries)
    parts.append("Now the task.")
    parts.append(f"Description: {meta_prompt}")
    parts.append(f"Objects: {summary}")
    parts.append("Layout:")
    return "\n".join(parts) + "\n"


def parse_box_line(text: str, coordinate_range: int = DEFAULT_CANVAS) -> tuple[int, int, int, int]:
    """First '(a, b, c, d)' integer 4-tuple in the text.

    Tolerates surrounding whitespace, trailing text, and a missing closing
    parenthesis (some servers strip stop strings). Values outside
    [0, coordinate_range] are a ParseFailure.
    """
    match = _BOX_TUPLE.search(text)
    if not match:
        raise ParseFailure(f"no coordinate 4-tuple in {text!r}")
    values = tuple(int(g) for g in match.groups())
    for value in values:
        if not 0 <= value <= coordinate_range:
            raise ParseFailure(
                f"coordinate {value} outside [0, {coordinate_range}] in {text!r}"
            )
    return values  # type: ignore[return-value]


def _bucket_fallback_box(bucket: PositionBucket) -> BoundingBox:
    cx, cy = bucket.center
    return BoundingBox(cx - 0.1, cy - 0.1, cx + 0.1, cy + 0.1)


def decode_layout(
    backend: GenerationBackend,
    meta_prompt: str,
    plan: PrefixPlan,
    config: DecodeConfig = DecodeConfig(),
    *,
    exemplar_count: int = 2,
    include_negation: bool = True,
) -> DecodeReport:
    """Run the forced-prefix decode loop and return a validated layout.

    Each prefix is appended verbatim to the context, the backend completes
    the coordinate line, and the box is parsed and normalized. Failed
    parses (and, under enforce_spatial_bucket, bucket mismatches) are
    re-sampled up to max_retries_per_box; after that the last parseable
    box is accepted with a violation, or a bucket-center fallback is used.
    ExhaustedRetries is raised only when a prefix without a position
    bucket never yields a parseable completion.
    """
    context = build_planning_prompt(
        meta_prompt, plan, exemplar_count=exemplar_count, include_negation=include_negation
    )
    violations: list[Violation] = []
    retries_used = 0
    named_boxes: list[tuple[str, BoundingBox]] = []
    instance_counts: Counter[str] = Counter()

    for index, entry in enumerate(plan.entries):
        context += entry.text
        accepted: BoundingBox | None = None
        accepted_text: str | None = None
        last_parsed: BoundingBox | None = None
        last_parsed_text: str | None = None
        bucket_mismatch: PositionBucket | None = None

        for attempt in range(config.max_retries_per_box + 1):
            if attempt:
                retries_used += 1
            response = backend.complete(
                GenerationRequest(
                    context=context,
                    max_tokens=_BOX_MAX_TOKENS,
                    temperature=config.temperature,
                )
            )
            try:
                raw = parse_box_line(response.text, config.coordinate_range)
                box = normalize_box(raw, config.coordinate_range)
            except (ParseFailure, DegenerateBox):
                continue
            last_parsed = box
            last_parsed_text = response.text
            if (
                config.enforce_spatial_bucket
                and entry.bucket is not None
                and bucket_of(box) != entry.bucket
            ):
                bucket_mismatch = bucket_of(box)
                continue
            accepted = box
            accepted_text = response.text
            break

        if accepted is None:
            if last_parsed is not None:
                accepted = last_parsed
                accepted_text = last_parsed_text
                violations.append(
                    Violation(
                        kind="bucket",
                        message=(
                            f"object {index} ({entry.text}) kept last parse after retries"
                        ),
                        object_index=index,
                        category=entry.name,
                        expected=entry.bucket.token if entry.bucket else None,
                        actual=bucket_mismatch.token if bucket_mismatch else None,
                    )
                )
            elif entry.bucket is not None:
                accepted = _bucket_fallback_box(entry.bucket)
                pixels = accepted.to_pixels(config.coordinate_range)
                accepted_text = " ({}, {}, {}, {})".format(*pixels)
                violations.append(
                    Violation(
                        kind="fallback",
                        message=(
                            f"object {index} ({entry.text}) used bucket-center fallback"
                        ),
                        object_index=index,
                        category=entry.name,
                        expected=entry.bucket.token,
                    )
                )
            else:
                raise ExhaustedRetries(
                    f"no parseable completion for prefix {entry.text!r} "
                    f"after {config.max_retries_per_box + 1} attempts"
                )

        assert accepted_text is not None
        context += accepted_text.rstrip("\n") + "\n"
        named_boxes.append((entry.name, accepted))
        instance_counts[entry.name] += 1

    objects = []
    seen: Counter[str] = Counter()
    for name, box in named_boxes:
        objects.append(PlacedObject(name=name, box=box, instance_index=seen[name]))
        seen[name] += 1
    layout = Layout(
        objects=tuple(objects), canvas=config.coordinate_range, prompt=meta_prompt
    )
    return DecodeReport(layout=layout, violations=violations, retries_used=retries_used)


def validate_layout_against_constraints(
    layout: Layout, constraints: ConstraintSet
) -> list[Violation]:
    """Empty list iff the layout fully satisfies the constraint set."""
    violations: list[Violation] = []
    if constraints.numerical is not None:
        counts = Counter(obj.name for obj in layout.objects)
        expected = {c.category: c.quantity for c in constraints.numerical}
        for category, quantity in expected.items():
            actual = counts.get(category, 0)
            if actual != quantity:
                violations.append(
                    Violation(
                        kind="count",
                        message=f"{category} expected {quantity} got {actual}",
                        category=category,
                        expected=str(quantity),
                        actual=str(actual),
                    )
                )
        for category, actual in counts.items():
            if category not in expected:
                violations.append(
                    Violation(
                        kind="count",
                        message=f"{category} expected 0 got {actual}",
                        category=category,
                        expected="0",
                        actual=str(actual),
                    )
                )
        return violations

    assert constraints.spatial is not None
    spatial = constraints.spatial
    if len(layout.objects) != len(spatial):
        violations.append(
            Violation(
                kind="count",
                message=f"expected {len(spatial)} objects got {len(layout.objects)}",
                expected=str(len(spatial)),
                actual=str(len(layout.objects)),
            )
        )
    for index, (constraint, obj) in enumerate(zip(spatial, layout.objects)):
        if obj.name != constraint.object_name:
            violations.append(
                Violation(
                    kind="order",
                    message=(
                        f"object {index} expected name {constraint.object_name!r}"
                        f" got {obj.name!r}"
                    ),
                    object_index=index,
                    expected=constraint.object_name,
                    actual=obj.name,
                )
            )
            continue
        actual_bucket = bucket_of(obj.box)
        if actual_bucket != constraint.position:
            violations.append(
                Violation(
                    kind="bucket",
                    message=(
                        f"object {index} ({obj.name}) expected bucket"
                        f" {constraint.position.token} got {actual_bucket.token}"
                    ),
                    object_index=index,
                    category=obj.name,
                    expected=constraint.position.token,
                    actual=actual_bucket.token,
                )
            )
    return violations

"""Stage-1 reasoning: prompt construction from exemplar fixtures and
parsing of the model's free-text answer into numerical or spatial
constraints.

Exemplars live as plain-text files under the packaged prompts/ directory
(<task>_<index>.txt plus negation.txt); the exemplar-count knob selects a
prefix of that list.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .errors import NonEmptyRequired, ParseFailure
from .geometry import PositionBucket

logger = logging.getLogger(__name__)

EXEMPLAR_RANGE = (1, 4)

_INSTRUCTIONS = {
    "numerical": (
        "Read the description and list how many of each object the image"
        " should contain, as comma separated 'count object' pairs."
    ),
    "spatial": (
        "Read the description and list each object with its approximate"
        " position, as 'object, position;' items. Positions are one of:"
        " top-left, top, top-right, left, center, right, bottom-left,"
        " bottom, bottom-right."
    ),
}

# Words whose plural does not follow the suffix rules below.
_IRREGULAR_PLURALS = {
    "people": "person",
    "men": "man",
    "women": "woman",
    "children": "child",
    "mice": "mouse",
    "geese": "goose",
    "feet": "foot",
    "teeth": "tooth",
    "oxen": "ox",
    "knives": "knife",
    "wives": "wife",
    "loaves": "loaf",
    "leaves": "leaf",
    "wolves": "wolf",
    "scarves": "scarf",
    "shelves": "shelf",
}

_NO_SINGULAR = {"sheep", "deer", "fish", "scissors", "glasses", "jeans"}


class ReasoningTask(Enum):
    NUMERICAL = "numerical"
    SPATIAL = "spatial"

    @classmethod
    def from_token(cls, token: str) -> "ReasoningTask":
        normalized = token.strip().lower()
        for member in cls:
            if member.value == normalized:
                return member
        raise ValueError(f"unknown task {token!r}")


@dataclass(frozen=True)
class ReasoningRequest:
    """Input to the reasoning prompt builder."""

    meta_prompt: str
    task: ReasoningTask
    exemplar_count: int = 2
    include_negation: bool = False

    def __post_init__(self) -> None:
        lo, hi = EXEMPLAR_RANGE
        if not lo <= self.exemplar_count <= hi:
            raise ValueError(
                f"exemplar_count must be in [{lo}, {hi}], got {self.exemplar_count}"
            )
        if not self.meta_prompt.strip():
            raise ValueError("meta_prompt must be non-empty")


@dataclass(frozen=True)
class NumericalConstraint:
    category: str
    quantity: int

    def __post_init__(self) -> None:
        if self.quantity < 1:
            raise ValueError(f"quantity must be >= 1, got {self.quantity}")
        if not self.category:
            raise ValueError("category must be non-empty")


@dataclass(frozen=True)
class SpatialConstraint:
    object_name: str
    position: PositionBucket

    def __post_init__(self) -> None:
        if not self.object_name:
            raise ValueError("object_name must be non-empty")


@dataclass(frozen=True)
class ConstraintSet:
    """Either numerical or spatial constraints, never both, never empty."""

    numerical: tuple[NumericalConstraint, ...] | None = None
    spatial: tuple[SpatialConstraint, ...] | None = None

    def __post_init__(self) -> None:
        if (self.numerical is None) == (self.spatial is None):
            raise ValueError("exactly one of numerical / spatial must be set")
        if self.numerical is not None:
            object.__setattr__(self, "numerical", tuple(self.numerical))
            if not self.numerical:
                raise NonEmptyRequired("numerical constraints are empty")
            categories = [c.category for c in self.numerical]
            if len(set(categories)) != len(categories):
                raise ValueError("duplicate categories in one constraint set")
        if self.spatial is not None:
            object.__setattr__(self, "spatial", tuple(self.spatial))
            if not self.spatial:
                raise NonEmptyRequired("spatial constraints are empty")

    @property
    def kind(self) -> ReasoningTask:
        return ReasoningTask.NUMERICAL if self.numerical is not None else ReasoningTask.SPATIAL

    @classmethod
    def from_numerical(cls, constraints: Iterable[NumericalConstraint]) -> "ConstraintSet":
        return cls(numerical=tuple(constraints))

    @classmethod
    def from_spatial(cls, constraints: Iterable[SpatialConstraint]) -> "ConstraintSet":
        return cls(spatial=tuple(constraints))

    def to_dict(self) -> dict:
        if self.numerical is not None:
            return {
                "kind": "numerical",
                "constraints": [
                    {"category": c.category, "quantity": c.quantity} for c in self.numerical
                ],
            }
        assert self.spatial is not None
        return {
            "kind": "spatial",
            "constraints": [
                {"object": c.object_name, "position": c.position.token} for c in self.spatial
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConstraintSet":
        kind = data["kind"]
        if kind == "numerical":
            return cls.from_numerical(
                NumericalConstraint(str(c["category"]), int(c["quantity"]))
                for c in data["constraints"]
            )
        if kind == "spatial":
            return cls.from_spatial(
                SpatialConstraint(str(c["object"]), PositionBucket.from_token(c["position"]))
                for c in data["constraints"]
            )
        raise ValueError(f"unknown constraint kind {kind!r}")


def singularize(word: str) -> str:
    """Suffix-based singularization with a small irregular lookup."""
    if word in _NO_SINGULAR:
        return word
    if word in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[word]
    if word.endswith("ies") and len(word) > 3:
        return word[:-3] + "y"
    if word.endswith("es") and len(word) > 2:
        stem = word[:-2]
        if stem.endswith(("s", "x", "z", "ch", "sh")):
            return stem
    if word.endswith("s") and not word.endswith("ss") and len(word) > 1:
        return word[:-1]
    return word


def canonical_category(text: str) -> str:
    """Lowercase, collapse whitespace, singularize the final word."""
    words = text.strip().lower().split()
    if not words:
        return ""
    words[-1] = singularize(words[-1])
    return " ".join(words)


@lru_cache(maxsize=None)
def _fixture_text(name: str) -> str:
    path = resources.files(__package__) / "prompts" / name
    return path.read_text(encoding="utf-8").rstrip("\n")


@lru_cache(maxsize=None)
def load_exemplars(kind: str) -> tuple[str, ...]:
    """All packaged exemplar blocks for 'numerical', 'spatial' or 'planning'."""
    blocks = []
    index = 0
    while True:
        try:
            blocks.append(_fixture_text(f"{kind}_{index}.txt"))
        except FileNotFoundError:
            break
        index += 1
    if not blocks:
        raise FileNotFoundError(f"no exemplar fixtures for kind {kind!r}")
    return tuple(blocks)


def negation_block() -> str:
    return _fixture_text("negation.txt")


def build_reasoning_prompt(request: ReasoningRequest) -> str:
    """Deterministic reasoning prompt: instruction, exemplars, meta prompt.

    The emitted text contains exactly request.exemplar_count exemplar
    blocks, each introduced by an 'Example:' line.
    """
    if request.include_negation:
        logger.warning(
            "include_negation applies to the planning prompt only; ignored here"
        )
    exemplars = load_exemplars(request.task.value)[: request.exemplar_count]
    parts = [_INSTRUCTIONS[request.task.value], ""]
    for block in exemplars:
        parts.append("Example:")
        parts.append(block)
        parts.append("")
    parts.append("Now the task.")
    parts.append(f"Description: {request.meta_prompt}")
    parts.append("Answer:")
    return "\n".join(parts)


_NUMERIC_PAIR = re.compile(r"(\d+)\s+([a-zA-Z][a-zA-Z\- ]*)")


def parse_numerical(text: str) -> tuple[NumericalConstraint, ...]:
    """Extract (quantity, category) pairs from a 'N category, ...' answer.

    Duplicate categories merge by summation; names are lowercased and
    singularized. Zero-quantity pairs are dropped.
    """
    merged: dict[str, int] = {}
    for segment in text.split(","):
        match = _NUMERIC_PAIR.search(segment)
        if not match:
            continue
        quantity = int(match.group(1))
        category = canonical_category(match.group(2))
        if not category or quantity == 0:
            continue
        merged[category] = merged.get(category, 0) + quantity
    if not merged:
        raise ParseFailure(f"no 'count object' pair found in {text!r}")
    return tuple(NumericalConstraint(category, qty) for category, qty in merged.items())


def parse_spatial(text: str) -> tuple[SpatialConstraint, ...]:
    """Extract ordered 'name, position;' items onto the nine-bucket vocabulary."""
    constraints = []
    for item in text.split(";"):
        item = item.strip().strip(".")
        if not item:
            continue
        head, sep, tail = item.rpartition(",")
        if not sep:
            raise ParseFailure(f"expected 'name, position' in {item!r}")
        name = canonical_category(head)
        if not name:
            raise ParseFailure(f"empty object name in {item!r}")
        try:
            position = PositionBucket.from_token(tail)
        except ValueError as exc:
            raise ParseFailure(str(exc)) from exc
        constraints.append(SpatialConstraint(name, position))
    if not constraints:
        raise ParseFailure(f"no 'name, position' item found in {text!r}")
    return tuple(constraints)


def render_numerical(constraints: Sequence[NumericalConstraint]) -> str:
    """Canonical 'q c, ...' rendering; parse_numerical inverts it."""
    return ", ".join(f"{c.quantity} {c.category}" for c in constraints)


def render_spatial(constraints: Sequence[SpatialConstraint]) -> str:
    """Canonical 'name, position; ...' rendering; parse_spatial inverts it."""
    return " ".join(f"{c.object_name}, {c.position.token};" for c in constraints)

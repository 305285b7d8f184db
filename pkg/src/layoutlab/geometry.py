"""Geometry core shared by every other module: normalized bounding boxes,
placed objects, layouts, the nine-cell position vocabulary, and the
relation classifier used for grounding evaluation.

Coordinates follow the image convention: origin at the top-left corner,
x grows rightward, y grows downward. Boxes are stored normalized to the
unit square; integer pixel values appear only at the decoding and
serialization boundaries.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DegenerateBox

DEFAULT_CANVAS = 512


class Relation(Enum):
    """Pairwise left-right / top-bottom relation between two boxes."""

    LEFT_OF = "left-of"
    RIGHT_OF = "right-of"
    ABOVE = "above"
    BELOW = "below"

    @property
    def token(self) -> str:
        return self.value

    @property
    def inverse(self) -> "Relation":
        return _RELATION_INVERSE[self]

    @classmethod
    def from_token(cls, token: str) -> "Relation":
        normalized = token.strip().lower().replace("_", "-").replace(" ", "-")
        for member in cls:
            if member.value == normalized:
                return member
        raise ValueError(f"unknown relation token {token!r}")


_RELATION_INVERSE = {
    Relation.LEFT_OF: Relation.RIGHT_OF,
    Relation.RIGHT_OF: Relation.LEFT_OF,
    Relation.ABOVE: Relation.BELOW,
    Relation.BELOW: Relation.ABOVE,
}


class PositionBucket(Enum):
    """Cell of the 3x3 partition of the unit square, row major from the
    top-left corner.

    A coordinate c maps to cell index floor(3 * c), with c == 1.0 clamped
    to index 2, so every point of the unit square lands in exactly one
    bucket and boundary points resolve deterministically.
    """

    TOP_LEFT = "top-left"
    TOP = "top"
    TOP_RIGHT = "top-right"
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"
    BOTTOM_LEFT = "bottom-left"
    BOTTOM = "bottom"
    BOTTOM_RIGHT = "bottom-right"

    @property
    def token(self) -> str:
        return self.value

    @property
    def cell(self) -> tuple[int, int]:
        """(row, col) of this bucket in the 3x3 grid."""
        index = _BUCKET_ORDER.index(self)
        return divmod(index, 3)

    @property
    def center(self) -> tuple[float, float]:
        """(x, y) of the cell center."""
        row, col = self.cell
        return (col + 0.5) / 3.0, (row + 0.5) / 3.0

    @classmethod
    def from_cell(cls, row: int, col: int) -> "PositionBucket":
        if not (0 <= row <= 2 and 0 <= col <= 2):
            raise ValueError(f"cell ({row}, {col}) outside the 3x3 grid")
        return _BUCKET_ORDER[row * 3 + col]

    @classmethod
    def from_token(cls, token: str) -> "PositionBucket":
        normalized = token.strip().lower().replace("_", "-")
        normalized = "-".join(part for part in normalized.replace("-", " ").split())
        for member in cls:
            if member.value == normalized:
                return member
        raise ValueError(f"unknown position token {token!r}")

    @classmethod
    def tokens(cls) -> tuple[str, ...]:
        return tuple(member.value for member in cls)


_BUCKET_ORDER = (
    PositionBucket.TOP_LEFT,
    PositionBucket.TOP,
    PositionBucket.TOP_RIGHT,
    PositionBucket.LEFT,
    PositionBucket.CENTER,
    PositionBucket.RIGHT,
    PositionBucket.BOTTOM_LEFT,
    PositionBucket.BOTTOM,
    PositionBucket.BOTTOM_RIGHT,
)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box on the unit square with x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value!r} outside [0, 1]")
        if self.x1 >= self.x2 or self.y1 >= self.y2:
            raise DegenerateBox(
                f"box ({self.x1}, {self.y1}, {self.x2}, {self.y2}) has no area"
            )

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        """Half-open membership test: x1 <= x < x2 and y1 <= y < y2."""
        return self.x1 <= x < self.x2 and self.y1 <= y < self.y2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.x1, self.y1, self.x2, self.y2

    def to_pixels(self, canvas: int = DEFAULT_CANVAS) -> tuple[int, int, int, int]:
        return tuple(round(v * canvas) for v in self.as_tuple())  # type: ignore[return-value]


def normalize_box(raw: Sequence[float], canvas: int = DEFAULT_CANVAS) -> BoundingBox:
    """Turn raw pixel corners into a validated normalized box.

    Coordinates are divided by the canvas size, clipped to [0, 1], and
    reordered so x1 < x2 and y1 < y2. Raises DegenerateBox when the box
    has zero width or height after normalization.
    """
    if canvas <= 0:
        raise ValueError(f"canvas must be positive, got {canvas}")
    if len(raw) != 4:
        raise ValueError(f"expected 4 coordinates, got {len(raw)}")
    x1, y1, x2, y2 = (min(max(v / canvas, 0.0), 1.0) for v in raw)
    if x1 > x2:
        x1, x2 = x2, x1
    if y1 > y2:
        y1, y2 = y2, y1
    if x1 == x2 or y1 == y2:
        raise DegenerateBox(f"zero-area box from raw coordinates {tuple(raw)!r}")
    return BoundingBox(x1, y1, x2, y2)


def denormalize_box(box: BoundingBox, canvas: int = DEFAULT_CANVAS) -> tuple[int, int, int, int]:
    """Inverse of normalize_box for coordinates that sit on the pixel grid."""
    return box.to_pixels(canvas)


def classify_relation(a: BoundingBox, b: BoundingBox) -> Relation:
    """Classify the relation of a with respect to b from box centers.

    When the horizontal center distance exceeds the vertical one the pair
    is left-right, otherwise (ties included) top-bottom.
    """
    ax, ay = a.center
    bx, by = b.center
    dx = bx - ax
    dy = by - ay
    if abs(dx) > abs(dy):
        return Relation.LEFT_OF if dx > 0 else Relation.RIGHT_OF
    return Relation.ABOVE if dy > 0 else Relation.BELOW


def _axis_cell(coord: float) -> int:
    return min(int(coord * 3.0), 2)


def bucket_of(box: BoundingBox) -> PositionBucket:
    """Bucket containing the box center under the 3x3 partition."""
    cx, cy = box.center
    return PositionBucket.from_cell(_axis_cell(cy), _axis_cell(cx))


@dataclass(frozen=True)
class PlacedObject:
    """One named object instance placed on the canvas."""

    name: str
    box: BoundingBox
    instance_index: int = 0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("object name must be non-empty")
        if self.name != self.name.strip().lower():
            raise ValueError(f"object name {self.name!r} must be lowercase and stripped")
        if self.instance_index < 0:
            raise ValueError("instance_index must be >= 0")


@dataclass(frozen=True)
class Layout:
    """Ordered name-box pairs plus the reference canvas resolution.

    Object order is decoding order and is significant for spatial
    constraint validation.
    """

    objects: tuple[PlacedObject, ...]
    canvas: int = DEFAULT_CANVAS
    prompt: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.canvas <= 0:
            raise ValueError(f"canvas must be positive, got {self.canvas}")

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(obj.name for obj in self.objects)

    def find(self, name: str) -> PlacedObject | None:
        """First instance with the given (case-insensitive) name."""
        wanted = name.strip().lower()
        for obj in self.objects:
            if obj.name == wanted:
                return obj
        return None


def build_layout(
    named_boxes: Iterable[tuple[str, BoundingBox]],
    canvas: int = DEFAULT_CANVAS,
    prompt: str = "",
) -> Layout:
    """Assemble a Layout, assigning per-category instance indices in order."""
    seen: dict[str, int] = {}
    objects = []
    for name, box in named_boxes:
        index = seen.get(name, 0)
        objects.append(PlacedObject(name=name, box=box, instance_index=index))
        seen[name] = index + 1
    return Layout(objects=tuple(objects), canvas=canvas, prompt=prompt)


def layout_to_dict(layout: Layout) -> dict:
    return {
        "prompt": layout.prompt,
        "canvas": layout.canvas,
        "objects": [
            {"name": obj.name, "box": list(obj.box.as_tuple())} for obj in layout.objects
        ],
    }


def layout_from_dict(data: dict) -> Layout:
    objects = (
        (str(entry["name"]), BoundingBox(*entry["box"])) for entry in data["objects"]
    )
    return build_layout(
        objects,
        canvas=int(data.get("canvas", DEFAULT_CANVAS)),
        prompt=str(data.get("prompt", "")),
    )


def save_layout(layout: Layout, path: str | Path) -> None:
    Path(path).write_text(json.dumps(layout_to_dict(layout), indent=2) + "\n")


def load_layout(path: str | Path) -> Layout:
    return layout_from_dict(json.loads(Path(path).read_text()))


def layout_hash(layout: Layout) -> str:
    """Stable content hash of the layout JSON form."""
    payload = json.dumps(layout_to_dict(layout), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()

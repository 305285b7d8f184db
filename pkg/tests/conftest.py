"""Shared test helpers."""
from __future__ import annotations

from pathlib import Path

import pytest

from layoutlab import BoundingBox, Layout, build_layout

DATA_DIR = Path(__file__).resolve().parents[1] / "data"
SMOKE_DATASET = DATA_DIR / "smoke20" / "cases.jsonl"
SMOKE_FIXTURES = DATA_DIR / "smoke20" / "fixtures"


def box(x1: float, y1: float, x2: float, y2: float) -> BoundingBox:
    return BoundingBox(x1, y1, x2, y2)


def layout_of(*named_boxes: tuple[str, BoundingBox]) -> Layout:
    return build_layout(named_boxes)


@pytest.fixture
def out_dir(tmp_path: Path) -> Path:
    return tmp_path / "out"

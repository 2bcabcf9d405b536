"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import json

import numpy as np
import pytest

from parkpref.layout import Layout, load_layout


def layout_json(
    layout_id: int = 1,
    rows: int = 28,
    cols: int = 20,
    cell_size_m: float = 0.75,
    default_terrain: str = "grass",
    terrain_patches: list | None = None,
    placements: list | None = None,
    heights: dict | None = None,
    **extra,
) -> str:
    """Serialize a layout description to the JSON text load_layout expects."""
    doc = {
        "id": layout_id,
        "rows": rows,
        "cols": cols,
        "cell_size_m": cell_size_m,
        "default_terrain": default_terrain,
    }
    if terrain_patches is not None:
        doc["terrain_patches"] = terrain_patches
    if placements is not None:
        doc["placements"] = placements
    if heights is not None:
        doc["heights"] = heights
    doc.update(extra)
    return json.dumps(doc)


def make_layout(**kwargs) -> Layout:
    """Build a Layout directly from keyword pieces (see layout_json)."""
    return load_layout(layout_json(**kwargs))


@pytest.fixture
def small_layout() -> Layout:
    """A 6x5 layout with one of each cell category, for fast unit tests."""
    return make_layout(
        layout_id=9,
        rows=6,
        cols=5,
        terrain_patches=[
            {"kind": "trail", "row0": 0, "col0": 0, "row1": 5, "col1": 0},
            {"kind": "soil", "row0": 4, "col0": 3, "row1": 5, "col1": 4},
        ],
        placements=[
            {"kind": "bench", "row": 1, "col": 2},
            {"kind": "picnic_table", "row": 2, "col": 3},
            {"kind": "playground", "row": 3, "col": 1},
            {"kind": "tree", "row": 4, "col": 4},
            {"kind": "bush", "row": 0, "col": 3},
        ],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

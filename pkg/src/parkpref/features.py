"""Per-cell feature encoding: the fixed 18-dimensional schema shared by
the simulator (utilities are linear in these features) and the models.

Schema layout (all values in [0, 1]):

====  =======================  =========================================
idx   name                     encoding
====  =======================  =========================================
0-4   furniture_*              one-hot bench, picnic_table, playground,
                               monument, amenity
5-8   terrain_*                one-hot trail, grass, soil, running_track
9-10  obstacle_*               one-hot bush, tree
11    has_object               1 if any furniture or obstacle present
12    temperature              (T - 10) / 20
13    light                    from the environment model, already [0,1]
14    shadow                   binary shadow flag
15    occupancy_here           own-cell agent count, clipped at 3, / 3
16    occupancy_adjacent       8-neighbor agent count sum, clipped at 3, / 3
17    nearest_agent_dist       Euclidean cell distance to closest agent,
                               / grid diagonal; 0 when no agents present
====  =======================  =========================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envdyn import EnvField
from .layout import (
    FURNITURE_KINDS,
    OBSTACLE_KINDS,
    TERRAIN_KINDS,
    Layout,
)

TEMP_NORM_OFFSET = 10.0
TEMP_NORM_SCALE = 20.0
OCCUPANCY_CLIP = 3.0


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names; the single source of truth for indices."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature name {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.names


_FURNITURE_NAMES = tuple(f"furniture_{k.value}" for k in FURNITURE_KINDS)
_TERRAIN_NAMES = tuple(f"terrain_{k.value}" for k in TERRAIN_KINDS)
_OBSTACLE_NAMES = tuple(f"obstacle_{k.value}" for k in OBSTACLE_KINDS)

SCHEMA = FeatureSchema(
    names=_FURNITURE_NAMES
    + _TERRAIN_NAMES
    + _OBSTACLE_NAMES
    + (
        "has_object",
        "temperature",
        "light",
        "shadow",
        "occupancy_here",
        "occupancy_adjacent",
        "nearest_agent_dist",
    )
)

FEATURE_DIM = SCHEMA.dim  # 18


@dataclass(frozen=True)
class FeatureTensor:
    """Encoded features for every cell of one layout at one instant.

    values has shape (rows, cols, FEATURE_DIM) and every entry lies in
    [0, 1]; violating encodings are rejected at construction.
    """

    layout_id: int
    hour: float
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or v.shape[2] != FEATURE_DIM:
            raise ValueError(f"values must be (rows, cols, {FEATURE_DIM}), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("feature values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("feature values must lie in [0, 1]")
        v.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def cell_vector(self, row: int, col: int) -> np.ndarray:
        """One cell's feature vector (read-only view, length FEATURE_DIM)."""
        return self.values[row, col]


def _shift2d(arr: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """out[r, c] = arr[r + dr, c + dc], zero outside the grid."""
    rows, cols = arr.shape
    out = np.zeros_like(arr)
    n_r = max(0, rows - abs(dr))
    n_c = max(0, cols - abs(dc))
    if n_r and n_c:
        src_r0, dst_r0 = max(dr, 0), max(-dr, 0)
        src_c0, dst_c0 = max(dc, 0), max(-dc, 0)
        out[dst_r0:dst_r0 + n_r, dst_c0:dst_c0 + n_c] = \
            arr[src_r0:src_r0 + n_r, src_c0:src_c0 + n_c]
    return out


def _adjacent_sum(occupancy: np.ndarray) -> np.ndarray:
    """Sum of the 8 Moore-neighbor values for every cell."""
    total = np.zeros_like(occupancy, dtype=np.float64)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            total += _shift2d(occupancy.astype(np.float64), dr, dc)
    return total


def _nearest_agent_distance(occupancy: np.ndarray) -> np.ndarray:
    """Euclidean distance (in cells) from every cell to the closest agent.

    All-zero occupancy gives all-zero distances: "nobody around" encodes
    as 0 like the other social features, rather than as maximal distance.
    """
    rows, cols = occupancy.shape
    positions = np.argwhere(occupancy > 0)
    if len(positions) == 0:
        return np.zeros((rows, cols))
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    dist = np.full((rows, cols), np.inf)
    for pr, pc in positions:
        np.minimum(dist, np.hypot(rr - pr, cc - pc), out=dist)
    return dist


def encode_features(layout: Layout, env: EnvField, occupancy: np.ndarray,
                    hour: float) -> FeatureTensor:
    """Encode every cell of a layout into the fixed feature schema.

    occupancy is a (rows, cols) array of non-negative agent counts at the
    instant being encoded; env must have been computed for the same layout
    and hour.
    """
    rows, cols = layout.dims.rows, layout.dims.cols
    occupancy = np.asarray(occupancy)
    for name, arr in (("env.shadow", env.shadow), ("occupancy", occupancy)):
        if arr.shape != (rows, cols):
            raise ValueError(f"{name} shape {arr.shape} does not match layout "
                             f"{rows}x{cols}")
    if (occupancy < 0).any():
        raise ValueError("occupancy counts must be non-negative")

    values = np.zeros((rows, cols, FEATURE_DIM))
    for i, kind in enumerate(FURNITURE_KINDS):
        values[:, :, i] = (layout.element == kind)
    for i, kind in enumerate(TERRAIN_KINDS):
        values[:, :, len(FURNITURE_KINDS) + i] = (layout.terrain == kind)
    base = len(FURNITURE_KINDS) + len(TERRAIN_KINDS)
    for i, kind in enumerate(OBSTACLE_KINDS):
        values[:, :, base + i] = (layout.obstacle == kind)

    idx = SCHEMA.index
    n_onehot = len(FURNITURE_KINDS) + len(TERRAIN_KINDS) + len(OBSTACLE_KINDS)
    furniture_or_obstacle = np.delete(values[:, :, :n_onehot],
                                      np.s_[len(FURNITURE_KINDS):base], axis=2)
    values[:, :, idx("has_object")] = furniture_or_obstacle.any(axis=2)
    values[:, :, idx("temperature")] = (env.temperature - TEMP_NORM_OFFSET) / TEMP_NORM_SCALE
    values[:, :, idx("light")] = env.light
    values[:, :, idx("shadow")] = env.shadow
    occ = occupancy.astype(np.float64)
    values[:, :, idx("occupancy_here")] = np.minimum(occ, OCCUPANCY_CLIP) / OCCUPANCY_CLIP
    values[:, :, idx("occupancy_adjacent")] = (
        np.minimum(_adjacent_sum(occ), OCCUPANCY_CLIP) / OCCUPANCY_CLIP
    )
    values[:, :, idx("nearest_agent_dist")] = (
        _nearest_agent_distance(occupancy) / layout.dims.diagonal_cells
    )
    return FeatureTensor(layout_id=layout.id, hour=hour, values=values)

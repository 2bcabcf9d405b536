"""Grid-discretized park layouts: elements, terrain, obstacles, and the
geometric transform group used for data augmentation.

A layout is a dense rows x cols grid of cells. Rows run along the long
(21 m) side of the park, columns along the short (15 m) side; flat cell
indices are row-major. Layouts are immutable after loading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .errors import ParkPrefError

PARK_LENGTH_M = 21.0  # along the row axis
PARK_WIDTH_M = 15.0  # along the column axis


class LayoutError(ParkPrefError, ValueError):
    """Raised for malformed layout files or invalid placements."""


class ElementKind(Enum):
    BENCH = "bench"
    PICNIC_TABLE = "picnic_table"
    PLAYGROUND = "playground"
    MONUMENT = "monument"
    AMENITY = "amenity"
    TRAIL = "trail"
    GRASS = "grass"
    SOIL = "soil"
    RUNNING_TRACK = "running_track"
    BUSH = "bush"
    TREE = "tree"
    EMPTY = "empty"


FURNITURE_KINDS = (
    ElementKind.BENCH,
    ElementKind.PICNIC_TABLE,
    ElementKind.PLAYGROUND,
    ElementKind.MONUMENT,
    ElementKind.AMENITY,
)
TERRAIN_KINDS = (
    ElementKind.TRAIL,
    ElementKind.GRASS,
    ElementKind.SOIL,
    ElementKind.RUNNING_TRACK,
)
OBSTACLE_KINDS = (ElementKind.BUSH, ElementKind.TREE)

# Heights only matter for shadow casting; overridable per layout file.
DEFAULT_HEIGHTS_M = {
    ElementKind.BENCH: 0.9,
    ElementKind.PICNIC_TABLE: 0.9,
    ElementKind.PLAYGROUND: 2.5,
    ElementKind.MONUMENT: 4.0,
    ElementKind.AMENITY: 2.0,
    ElementKind.BUSH: 1.0,
    ElementKind.TREE: 5.0,
}

_KIND_BY_NAME = {k.value: k for k in ElementKind}


@dataclass(frozen=True)
class GridDims:
    """Grid shape and cell size. The canonical park is 28 x 20 cells of 0.75 m."""

    rows: int
    cols: int
    cell_size: float = 0.75

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise LayoutError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if self.cell_size <= 0:
            raise LayoutError(f"cell_size must be positive, got {self.cell_size}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def flat(self, row: int, col: int) -> int:
        return row * self.cols + col

    def unflat(self, idx: int) -> tuple[int, int]:
        return divmod(idx, self.cols)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    @property
    def diagonal_cells(self) -> float:
        """Longest possible cell-to-cell distance, in cell units."""
        return float(np.hypot(self.rows - 1, self.cols - 1))


CANONICAL_DIMS = GridDims(rows=28, cols=20, cell_size=0.75)


@dataclass(frozen=True)
class Cell:
    row: int
    col: int
    element: ElementKind = ElementKind.EMPTY
    terrain: ElementKind = ElementKind.GRASS
    obstacle: Optional[ElementKind] = None
    height: float = 0.0


class Layout:
    """Immutable park layout backed by dense per-cell arrays.

    Attributes
    ----------
    id : int
        Layout identifier (1-4 for the canonical set).
    dims : GridDims
    element, terrain, obstacle : (rows, cols) object arrays of ElementKind
        (obstacle entries may be None).
    heights : (rows, cols) float array, metres of the tallest object per cell.
    """

    def __init__(self, layout_id, dims, element, terrain, obstacle, heights):
        self.id = int(layout_id)
        self.dims = dims
        self.element = element
        self.terrain = terrain
        self.obstacle = obstacle
        self.heights = np.asarray(heights, dtype=np.float64)
        self._validate()
        for arr in (self.element, self.terrain, self.obstacle, self.heights):
            arr.setflags(write=False)

    def _validate(self):
        shape = (self.dims.rows, self.dims.cols)
        for name, arr in (
            ("element", self.element),
            ("terrain", self.terrain),
            ("obstacle", self.obstacle),
            ("heights", self.heights),
        ):
            if arr.shape != shape:
                raise LayoutError(f"{name} array has shape {arr.shape}, expected {shape}")
        for r in range(shape[0]):
            for c in range(shape[1]):
                e, t, o = self.element[r, c], self.terrain[r, c], self.obstacle[r, c]
                if e is not ElementKind.EMPTY and e not in FURNITURE_KINDS:
                    raise LayoutError(f"cell ({r},{c}): {e} is not a furniture element")
                if t not in TERRAIN_KINDS:
                    raise LayoutError(f"cell ({r},{c}): {t} is not a terrain kind")
                if o is not None and o not in OBSTACLE_KINDS:
                    raise LayoutError(f"cell ({r},{c}): {o} is not an obstacle kind")
                h = self.heights[r, c]
                if h < 0:
                    raise LayoutError(f"cell ({r},{c}): negative height {h}")
                occupied = e is not ElementKind.EMPTY or o is not None
                if (h == 0) == occupied:
                    raise LayoutError(
                        f"cell ({r},{c}): height {h} inconsistent with contents"
                    )

    def cell(self, row: int, col: int) -> Cell:
        return Cell(
            row=row,
            col=col,
            element=self.element[row, col],
            terrain=self.terrain[row, col],
            obstacle=self.obstacle[row, col],
            height=float(self.heights[row, col]),
        )

    @property
    def cells(self) -> list[Cell]:
        """Row-major list of all cells."""
        return [
            self.cell(r, c)
            for r in range(self.dims.rows)
            for c in range(self.dims.cols)
        ]

    def kind_mask(self, kinds: Iterable[ElementKind]) -> np.ndarray:
        """Boolean (rows, cols) mask of cells whose element or terrain is in `kinds`."""
        kinds = set(kinds)
        elem = np.vectorize(lambda k: k in kinds)(self.element)
        terr = np.vectorize(lambda k: k in kinds)(self.terrain)
        return elem | terr


class Transform(Enum):
    """Augmentation group: identity, 180-degree rotation, and the two planar flips."""

    IDENTITY = "identity"
    ROT180 = "rot180"
    HFLIP = "hflip"
    VFLIP = "vflip"


# Klein four-group: every element is its own inverse and the three
# non-identity elements compose pairwise into the third.
_COMPOSE = {
    (Transform.IDENTITY, Transform.IDENTITY): Transform.IDENTITY,
    (Transform.IDENTITY, Transform.ROT180): Transform.ROT180,
    (Transform.IDENTITY, Transform.HFLIP): Transform.HFLIP,
    (Transform.IDENTITY, Transform.VFLIP): Transform.VFLIP,
    (Transform.ROT180, Transform.IDENTITY): Transform.ROT180,
    (Transform.ROT180, Transform.ROT180): Transform.IDENTITY,
    (Transform.ROT180, Transform.HFLIP): Transform.VFLIP,
    (Transform.ROT180, Transform.VFLIP): Transform.HFLIP,
    (Transform.HFLIP, Transform.IDENTITY): Transform.HFLIP,
    (Transform.HFLIP, Transform.ROT180): Transform.VFLIP,
    (Transform.HFLIP, Transform.HFLIP): Transform.IDENTITY,
    (Transform.HFLIP, Transform.VFLIP): Transform.ROT180,
    (Transform.VFLIP, Transform.IDENTITY): Transform.VFLIP,
    (Transform.VFLIP, Transform.ROT180): Transform.HFLIP,
    (Transform.VFLIP, Transform.HFLIP): Transform.ROT180,
    (Transform.VFLIP, Transform.VFLIP): Transform.IDENTITY,
}


def compose(first: Transform, then: Transform) -> Transform:
    """Transform equivalent to applying `first`, then `then`."""
    return _COMPOSE[(first, then)]


def transform_index(dims: GridDims, idx: int, t: Transform) -> int:
    """Map a flat cell index under a transform."""
    if not 0 <= idx < dims.n_cells:
        raise IndexError(f"cell index {idx} out of range for {dims.rows}x{dims.cols}")
    r, c = dims.unflat(idx)
    if t is Transform.ROT180:
        r, c = dims.rows - 1 - r, dims.cols - 1 - c
    elif t is Transform.HFLIP:
        c = dims.cols - 1 - c
    elif t is Transform.VFLIP:
        r = dims.rows - 1 - r
    return dims.flat(r, c)


def transform_grid(values: np.ndarray, t: Transform) -> np.ndarray:
    """Transform an array whose first two axes are (rows, cols).

    Per-cell payloads (trailing axes) move with their cell unchanged.
    Returns a contiguous copy, the input is not modified.
    """
    if t is Transform.IDENTITY:
        out = values
    elif t is Transform.ROT180:
        out = values[::-1, ::-1]
    elif t is Transform.HFLIP:
        out = values[:, ::-1]
    else:
        out = values[::-1, :]
    return np.array(out, order="C")


def transform_layout(layout: Layout, t: Transform) -> Layout:
    return Layout(
        layout_id=layout.id,
        dims=layout.dims,
        element=transform_grid(layout.element, t),
        terrain=transform_grid(layout.terrain, t),
        obstacle=transform_grid(layout.obstacle, t),
        heights=transform_grid(layout.heights, t),
    )


def transform(obj, t: Transform, dims: Optional[GridDims] = None):
    """Apply a transform to a Layout, a (rows, cols, ...) array, or a flat index."""
    if isinstance(obj, Layout):
        return transform_layout(obj, t)
    if isinstance(obj, np.ndarray):
        return transform_grid(obj, t)
    if isinstance(obj, (int, np.integer)):
        if dims is None:
            raise ValueError("transforming a flat cell index requires dims")
        return transform_index(dims, int(obj), t)
    raise TypeError(f"cannot transform object of type {type(obj).__name__}")


def neighbors8(dims: GridDims, idx: int) -> list[int]:
    """In-bounds Moore neighbors of a cell as sorted flat indices (no self)."""
    if not 0 <= idx < dims.n_cells:
        raise IndexError(f"cell index {idx} out of range for {dims.rows}x{dims.cols}")
    r, c = dims.unflat(idx)
    out = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            if dims.in_bounds(r + dr, c + dc):
                out.append(dims.flat(r + dr, c + dc))
    out.sort()
    return out


# ---------------------------------------------------------------------------
# Layout file loading
# ---------------------------------------------------------------------------

def _require(cond: bool, msg: str):
    if not cond:
        raise LayoutError(msg)


def _parse_kind(name, context: str, allowed: tuple) -> ElementKind:
    kind = _KIND_BY_NAME.get(name)
    if kind is None:
        raise LayoutError(f"{context}: unknown element kind {name!r}")
    if kind not in allowed:
        raise LayoutError(f"{context}: kind {name!r} not allowed here")
    return kind


def load_layout(source: str) -> Layout:
    """Parse a layout file (JSON text) into a Layout.

    The file declares grid dimensions, a default terrain, rectangular
    terrain patches (later patches override earlier ones), and individual
    placements of furniture and obstacles. A cell may hold at most one
    furniture element and at most one obstacle; assigning two of the same
    category to one cell is an error.
    """
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise LayoutError(f"layout file is not valid JSON: {e}") from e
    _require(isinstance(doc, dict), "layout file must be a JSON object")

    for key in ("id", "rows", "cols", "cell_size_m", "default_terrain"):
        _require(key in doc, f"layout file missing required field {key!r}")

    dims = GridDims(rows=int(doc["rows"]), cols=int(doc["cols"]),
                    cell_size=float(doc["cell_size_m"]))
    default_terrain = _parse_kind(doc["default_terrain"], "default_terrain", TERRAIN_KINDS)

    heights_table = dict(DEFAULT_HEIGHTS_M)
    for name, h in doc.get("heights", {}).items():
        kind = _parse_kind(name, "heights", FURNITURE_KINDS + OBSTACLE_KINDS)
        _require(float(h) > 0, f"heights: {name} must be positive")
        heights_table[kind] = float(h)

    shape = (dims.rows, dims.cols)
    element = np.full(shape, ElementKind.EMPTY, dtype=object)
    terrain = np.full(shape, default_terrain, dtype=object)
    obstacle = np.full(shape, None, dtype=object)
    heights = np.zeros(shape)

    for i, patch in enumerate(doc.get("terrain_patches", [])):
        ctx = f"terrain_patches[{i}]"
        kind = _parse_kind(patch.get("kind"), ctx, TERRAIN_KINDS)
        try:
            r0, c0, r1, c1 = (int(patch[k]) for k in ("row0", "col0", "row1", "col1"))
        except KeyError as e:
            raise LayoutError(f"{ctx}: missing field {e.args[0]!r}") from e
        _require(r0 <= r1 and c0 <= c1, f"{ctx}: empty rectangle {r0},{c0}..{r1},{c1}")
        _require(dims.in_bounds(r0, c0) and dims.in_bounds(r1, c1),
                 f"{ctx}: rectangle {r0},{c0}..{r1},{c1} out of bounds")
        terrain[r0:r1 + 1, c0:c1 + 1] = kind

    for i, placement in enumerate(doc.get("placements", [])):
        ctx = f"placements[{i}]"
        kind = _parse_kind(placement.get("kind"), ctx, FURNITURE_KINDS + OBSTACLE_KINDS)
        try:
            r, c = int(placement["row"]), int(placement["col"])
        except KeyError as e:
            raise LayoutError(f"{ctx}: missing field {e.args[0]!r}") from e
        _require(dims.in_bounds(r, c),
                 f"{ctx}: cell ({r},{c}) out of bounds for {dims.rows}x{dims.cols}")
        h = float(placement.get("height_m", heights_table[kind]))
        _require(h > 0, f"{ctx}: height must be positive")
        if kind in FURNITURE_KINDS:
            _require(element[r, c] is ElementKind.EMPTY,
                     f"{ctx}: duplicate furniture at cell ({r},{c})")
            element[r, c] = kind
        else:
            _require(obstacle[r, c] is None,
                     f"{ctx}: duplicate obstacle at cell ({r},{c})")
            obstacle[r, c] = kind
        heights[r, c] = max(heights[r, c], h)

    return Layout(layout_id=int(doc["id"]), dims=dims, element=element,
                  terrain=terrain, obstacle=obstacle, heights=heights)


def load_layout_file(path) -> Layout:
    with open(path, encoding="utf-8") as f:
        return load_layout(f.read())

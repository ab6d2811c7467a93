"""Keyboard geometry, the heatmap grid, and the geometric primitives built on them.

All coordinates are float pixels in the keyboard frame: origin at the keyboard's
top-left corner, x to the right, y downwards.  The heatmap grid is the bottom
``GRID_ROWS`` rows of the full sensor frame and is bottom-aligned with the
keyboard, so its top edge sits at ``H - GRID_ROWS * cell_px`` (negative).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

KEYS: tuple[str, ...] = tuple("abcdefghijklmnopqrstuvwxyz") + ("SPACE", "PERIOD")
K = len(KEYS)
KEY_INDEX = {k: i for i, k in enumerate(KEYS)}

FRAME_ROWS = 39
GRID_ROWS = 16
GRID_COLS = 18

# SPACE is measured from its inner edges, half a common key width in from each side.
SPACE = KEY_INDEX["SPACE"]
PERIOD = KEY_INDEX["PERIOD"]


class LayoutError(ValueError):
    pass


def key_index(key: str | int) -> int:
    """Canonical class index of a key label (``'a'``, ``'SPACE'``, ``' '``, ``'.'``)."""
    if isinstance(key, (int, np.integer)):
        if not 0 <= key < K:
            raise LayoutError(f"key index out of range: {key}")
        return int(key)
    if key == " ":
        return SPACE
    if key == ".":
        return PERIOD
    try:
        return KEY_INDEX[key if len(key) > 1 else key.lower()]
    except KeyError:
        raise LayoutError(f"unknown key: {key!r}") from None


def key_char(k: int) -> str:
    """Text character typed by key ``k``."""
    if k == SPACE:
        return " "
    if k == PERIOD:
        return "."
    return KEYS[k]


@dataclass(frozen=True)
class Point:
    x: float
    y: float


@dataclass(frozen=True)
class KeyGeometry:
    label: str
    left: float
    top: float
    width: float
    height: float

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + self.width / 2, self.top + self.height / 2)

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        return self.left <= x <= self.right and self.top <= y <= self.bottom


@dataclass(frozen=True)
class KeyboardLayout:
    name: str
    W: float
    H: float
    w: float
    h: float
    cell_px: float
    keys: tuple[KeyGeometry, ...]

    def __post_init__(self):
        if min(self.W, self.H, self.w, self.h, self.cell_px) <= 0:
            raise LayoutError("layout constants must be positive")
        if len(self.keys) != K or tuple(k.label for k in self.keys) != KEYS:
            raise LayoutError(f"layout must list the {K} keys in canonical order")
        if abs(self.cell_px * GRID_COLS - self.W) > 1e-9:
            raise LayoutError("grid must span the keyboard width (cell_px * 18 == W)")
        for k in self.keys:
            if k.width <= 0 or k.height <= 0:
                raise LayoutError(f"key {k.label} has non-positive size")
            if k.left < 0 or k.top < 0 or k.right > self.W or k.bottom > self.H:
                raise LayoutError(f"key {k.label} lies outside the keyboard")
        for i, a in enumerate(self.keys):
            for b in self.keys[i + 1:]:
                if (min(a.right, b.right) > max(a.left, b.left)
                        and min(a.bottom, b.bottom) > max(a.top, b.top)):
                    raise LayoutError(f"keys {a.label} and {b.label} overlap")

    # -- grid --------------------------------------------------------------

    @property
    def grid_top(self) -> float:
        return self.H - GRID_ROWS * self.cell_px

    def cell_rect(self, i: int, j: int) -> tuple[float, float, float, float]:
        """(left, top, right, bottom) of grid cell at row ``i``, column ``j``."""
        if not (0 <= i < GRID_ROWS and 0 <= j < GRID_COLS):
            raise IndexError(f"cell ({i}, {j}) outside the {GRID_ROWS}x{GRID_COLS} grid")
        top = self.grid_top + i * self.cell_px
        left = j * self.cell_px
        return (left, top, left + self.cell_px, top + self.cell_px)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """(16, 18, 2) array of cell-center coordinates."""
        c = self.cell_px
        ys = self.grid_top + c * (np.arange(GRID_ROWS) + 0.5)
        xs = c * (np.arange(GRID_COLS) + 0.5)
        return np.stack(np.meshgrid(xs, ys), axis=-1)

    # -- key arrays ----------------------------------------------------------

    @cached_property
    def centers(self) -> np.ndarray:
        return np.array([k.center for k in self.keys], dtype=float)

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([(k.width, k.height) for k in self.keys], dtype=float)

    @cached_property
    def overlap_weights(self) -> np.ndarray:
        """(28, 288) matrix of O(k, i, j) / A_k with cells in row-major order."""
        m = np.empty((K, GRID_ROWS * GRID_COLS))
        for k, key in enumerate(self.keys):
            for i in range(GRID_ROWS):
                for j in range(GRID_COLS):
                    m[k, i * GRID_COLS + j] = overlap_area(self, k, i, j) / key.area
        m.setflags(write=False)
        return m

    @cached_property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name, "W": self.W, "H": self.H, "w": self.w, "h": self.h,
            "cell_px": self.cell_px,
            "keys": [
                {"label": k.label, "left": k.left, "top": k.top,
                 "width": k.width, "height": k.height}
                for k in self.keys
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KeyboardLayout":
        try:
            keys = [
                KeyGeometry(str(k["label"]), float(k["left"]), float(k["top"]),
                            float(k["width"]), float(k["height"]))
                for k in d["keys"]
            ]
            labels = sorted(k.label for k in keys)
            if labels != sorted(KEYS):
                raise LayoutError(f"layout must define exactly the keys {KEYS}")
            keys = tuple(sorted(keys, key=lambda k: KEY_INDEX[k.label]))
            return cls(str(d["name"]), float(d["W"]), float(d["H"]), float(d["w"]),
                       float(d["h"]), float(d["cell_px"]), keys)
        except (KeyError, TypeError) as e:
            raise LayoutError(f"malformed layout: {e}") from e


def load_layout(path: str | Path | None = None) -> KeyboardLayout:
    """Load a layout JSON file; ``None`` loads the shipped QWERTY layout."""
    if path is None:
        text = resources.files("heattap").joinpath("data/qwerty.json").read_text()
    else:
        text = Path(path).read_text()
    return KeyboardLayout.from_dict(json.loads(text))


_DEFAULT: KeyboardLayout | None = None


def default_layout() -> KeyboardLayout:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_layout()
    return _DEFAULT


def overlap_area(layout: KeyboardLayout, k: int, i: int, j: int) -> float:
    """Intersection area (px^2) of key ``k``'s box and grid cell (i, j)."""
    key = layout.keys[key_index(k)]
    left, top, right, bottom = layout.cell_rect(i, j)
    dx = min(key.right, right) - max(key.left, left)
    dy = min(key.bottom, bottom) - max(key.top, top)
    return max(dx, 0.0) * max(dy, 0.0)


def containing_or_closest_key(layout: KeyboardLayout, p: Point) -> int:
    """Key whose box contains ``p``; otherwise the key with the nearest center.

    Ties (shared borders, equidistant centers) go to the lower canonical index.
    """
    for k, key in enumerate(layout.keys):
        if key.contains(p.x, p.y):
            return k
    d2 = ((layout.centers - (p.x, p.y)) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def space_dx(layout: KeyboardLayout, x: float) -> float:
    """Signed horizontal offset of ``x`` from SPACE's inner edges (0 between them)."""
    key = layout.keys[SPACE]
    inner_left = key.left + layout.w / 2
    inner_right = key.right - layout.w / 2
    if x < inner_left:
        return x - inner_left
    if x > inner_right:
        return x - inner_right
    return 0.0


def key_offsets(layout: KeyboardLayout, p: Point) -> np.ndarray:
    """(28, 2) offsets of ``p`` from every key center, SPACE using its inner edges."""
    off = np.array([p.x, p.y]) - layout.centers
    off[SPACE, 0] = space_dx(layout, p.x)
    return off


def normalized_distances(layout: KeyboardLayout, p: Point) -> np.ndarray:
    """Distances to all 28 keys scaled by the keyboard width and height."""
    off = key_offsets(layout, p) / (layout.W, layout.H)
    return np.sqrt((off ** 2).sum(axis=1))


def normalized_distance(layout: KeyboardLayout, p: Point, k: int | str) -> float:
    return float(normalized_distances(layout, p)[key_index(k)])

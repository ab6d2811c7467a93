"""Tap records and the five feature representations (C, Hf, CHf, Ho, CHo)."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .layout import (FRAME_ROWS, GRID_COLS, GRID_ROWS, K, KEYS, KeyboardLayout,
                     Point, key_index)

TAP_SCHEMA = 1


class FeatureError(ValueError):
    pass


class FeatureSetKind(str, Enum):
    C = "C"
    Hf = "Hf"
    CHf = "CHf"
    Ho = "Ho"
    CHo = "CHo"

    @property
    def dim(self) -> int:
        return FEATURE_DIMS[self]

    @property
    def uses_centroid(self) -> bool:
        return self.value.startswith("C")

    @property
    def uses_heatmap(self) -> bool:
        return self is not FeatureSetKind.C


FEATURE_DIMS = {
    FeatureSetKind.C: 2 * K,
    FeatureSetKind.Hf: GRID_ROWS * GRID_COLS,
    FeatureSetKind.CHf: 2 * K + GRID_ROWS * GRID_COLS,
    FeatureSetKind.Ho: K,
    FeatureSetKind.CHo: 3 * K,
}


@dataclass(frozen=True, eq=False)
class TapSample:
    """One tap: reported centroid plus the first heatmap frame of the touch.

    ``heatmap`` is either the full 39x18 sensor frame or its bottom 16x18
    keyboard region (``cropped``).  ``label`` is a canonical key index.
    """

    centroid: Point
    heatmap: np.ndarray | None
    t_ms: float = 0.0
    label: int | None = None
    user_id: str = ""
    prompt_id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.centroid.x) and np.isfinite(self.centroid.y)):
            raise FeatureError("tap centroid must be finite")
        if self.heatmap is not None:
            hm = np.asarray(self.heatmap)
            if hm.shape not in ((FRAME_ROWS, GRID_COLS), (GRID_ROWS, GRID_COLS)):
                raise FeatureError(f"heatmap must be 39x18 or 16x18, got {hm.shape}")
            if (hm < 0).any():
                raise FeatureError("heatmap intensities must be non-negative")
            object.__setattr__(self, "heatmap", hm)
        if self.label is not None:
            object.__setattr__(self, "label", key_index(self.label))

    @property
    def cropped(self) -> bool:
        return self.heatmap is not None and self.heatmap.shape[0] == GRID_ROWS

    @property
    def region(self) -> np.ndarray:
        """The 16x18 keyboard region of the heatmap."""
        if self.heatmap is None:
            raise FeatureError("tap has no heatmap")
        return self.heatmap[-GRID_ROWS:]

    def to_json(self, cropped: bool = False) -> dict:
        d = {
            "schema": TAP_SCHEMA, "user_id": self.user_id, "prompt_id": self.prompt_id,
            "t_ms": self.t_ms, "centroid": [self.centroid.x, self.centroid.y],
        }
        if self.heatmap is not None:
            hm = self.region if cropped else self.heatmap
            d["heatmap"] = hm.astype(int).tolist()
        if self.label is not None:
            d["label"] = KEYS[self.label]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TapSample":
        if d.get("schema", TAP_SCHEMA) != TAP_SCHEMA:
            raise FeatureError(f"unsupported tap schema {d.get('schema')}")
        try:
            x, y = d["centroid"]
            hm = d.get("heatmap")
            return cls(
                centroid=Point(float(x), float(y)),
                heatmap=None if hm is None else np.asarray(hm, dtype=np.int16),
                t_ms=float(d.get("t_ms", 0.0)),
                label=d.get("label"),
                user_id=str(d.get("user_id", "")),
                prompt_id=str(d.get("prompt_id", "")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise FeatureError(f"malformed tap record: {e}") from e


def centroid_features(layout: KeyboardLayout, p: Point) -> np.ndarray:
    """[dx_1, dy_1, ..., dx_28, dy_28] in units of the common key width/height."""
    return _centroid_block(layout, np.array([[p.x, p.y]]))[0]


def _centroid_block(layout: KeyboardLayout, xy: np.ndarray) -> np.ndarray:
    d = (xy[:, None, :] - layout.centers[None]) / (layout.w, layout.h)
    return d.reshape(len(xy), 2 * K)


def flatten_heatmap(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.shape not in ((FRAME_ROWS, GRID_COLS), (GRID_ROWS, GRID_COLS)):
        raise FeatureError(f"heatmap must be 39x18 or 16x18, got {frame.shape}")
    return frame[-GRID_ROWS:].astype(float).ravel()


def heatmap_overlap_vector(layout: KeyboardLayout, frame: np.ndarray) -> np.ndarray:
    return layout.overlap_weights @ flatten_heatmap(frame)


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension min-max scaling onto [-1, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, vectors) -> "Normalizer":
        x = np.asarray(vectors, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] == 0:
            raise FeatureError("cannot fit a normalizer on an empty set")
        return cls(x.min(axis=0), x.max(axis=0))

    def __len__(self) -> int:
        return len(self.lo)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != len(self.lo):
            raise FeatureError(f"expected {len(self.lo)} features, got {x.shape[-1]}")
        span = self.hi - self.lo
        flat = span <= 0
        z = 2.0 * (x - self.lo) / np.where(flat, 1.0, span) - 1.0
        z = np.where(flat, 0.0, z)
        return np.clip(z, -1.0, 1.0)

    def to_json(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


def fit_normalizer(vectors) -> Normalizer:
    return Normalizer.fit(vectors)


def apply_normalizer(n: Normalizer, vector) -> np.ndarray:
    return n.apply(vector)


def raw_feature_matrix(layout: KeyboardLayout, kind: FeatureSetKind | str,
                       taps: Sequence[TapSample]) -> np.ndarray:
    """(N, d) un-normalized features, centroid block first."""
    kind = FeatureSetKind(kind)
    blocks = []
    if kind.uses_centroid:
        xy = np.array([[t.centroid.x, t.centroid.y] for t in taps], dtype=float)
        blocks.append(_centroid_block(layout, xy.reshape(-1, 2)))
    if kind.uses_heatmap:
        if any(t.heatmap is None for t in taps):
            raise FeatureError(f"feature set {kind.value} needs a heatmap on every tap")
        flat = np.array([t.region.ravel() for t in taps], dtype=float)
        flat = flat.reshape(-1, GRID_ROWS * GRID_COLS)
        if kind in (FeatureSetKind.Hf, FeatureSetKind.CHf):
            blocks.append(flat)
        else:
            blocks.append(flat @ layout.overlap_weights.T)
    return np.hstack(blocks)


def feature_matrix(layout: KeyboardLayout, kind: FeatureSetKind | str,
                   taps: Sequence[TapSample], n: Normalizer | None = None) -> np.ndarray:
    x = raw_feature_matrix(layout, kind, taps)
    return x if n is None else n.apply(x)


def build_features(layout: KeyboardLayout, kind: FeatureSetKind | str, tap: TapSample,
                   n: Normalizer | None = None) -> np.ndarray:
    return feature_matrix(layout, kind, [tap], n)[0]

"""Tap decoding: spatial key scores fused with a character LM.

Two optional filters run around the fusion: taps landing near a key center
are answered directly, and the candidate set can be restricted to keys near
the tap.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Protocol, Sequence

import numpy as np

from .features import TapSample
from .layout import (KEYS, PERIOD, K, KeyboardLayout, Point,
                     containing_or_closest_key, key_offsets)
from .lm import CharLM

NOT_AMBIGUOUS = "not_ambiguous"
MODEL_WITHOUT_LM = "model_without_lm"
MODEL_WITH_LM = "model_with_lm"
BUCKETS = (NOT_AMBIGUOUS, MODEL_WITHOUT_LM, MODEL_WITH_LM)


class KeyScorer(Protocol):
    name: str

    def key_proba(self, layout: KeyboardLayout, taps: Sequence[TapSample]) -> np.ndarray: ...


@dataclass(frozen=True)
class DecodeConfig:
    use_lm: bool = False
    use_suc: bool = False
    use_filter: bool = False
    suc_fraction: float = 0.25
    window_x: float = 1.5  # neighbor window half-width, in common key widths
    window_y: float = 1.5  # neighbor window half-height, in common key heights
    uninformative_eps: float = 1e-9

    def __post_init__(self):
        if not 0 < self.suc_fraction < 0.5:
            raise ValueError("suc_fraction must lie in (0, 0.5)")
        if self.window_x <= 0 or self.window_y <= 0:
            raise ValueError("neighbor window must be positive")

    @classmethod
    def all_on(cls, **kw) -> "DecodeConfig":
        return cls(use_lm=True, use_suc=True, use_filter=True, **kw)


@dataclass
class DecodeTrace:
    tap_id: str
    bucket: str
    candidates: list[str]
    p_sm: list[float] | None
    p_lm: list[float] | None
    decided: str

    def to_json(self) -> dict:
        return asdict(self)


def _point(tap: TapSample | Point) -> Point:
    return tap.centroid if isinstance(tap, TapSample) else tap


def is_unambiguous(layout: KeyboardLayout, tap: TapSample | Point,
                   fraction: float = 0.25) -> int | None:
    """Key whose center is within ``fraction`` of its own size on both axes, if any."""
    p = _point(tap)
    off = np.abs(np.array([p.x, p.y]) - layout.centers)
    inside = (off < fraction * layout.sizes).all(axis=1)
    hits = np.flatnonzero(inside)
    return int(hits[0]) if len(hits) else None


def candidate_filter(layout: KeyboardLayout, tap: TapSample | Point,
                     window_x: float = 1.5, window_y: float = 1.5) -> list[int]:
    """Keys whose center lies in a window around the tap, plus the key under it.

    SPACE is measured from its inner edges horizontally.  Returned in canonical order.
    """
    p = _point(tap)
    off = np.abs(key_offsets(layout, p))
    near = (off[:, 0] <= window_x * layout.w) & (off[:, 1] <= window_y * layout.h)
    near[containing_or_closest_key(layout, p)] = True
    return [int(k) for k in np.flatnonzero(near)]


def at_word_start(context: str) -> bool:
    return context == "" or context.endswith(" ")


def _restrict(p: np.ndarray, keep: list[int]) -> np.ndarray:
    out = np.zeros(K)
    out[keep] = p[keep]
    s = out.sum()
    if s > 0:
        return out / s
    out[keep] = 1.0 / len(keep)
    return out


def fuse(layout: KeyboardLayout, p_sm: np.ndarray, tap: TapSample | Point, context: str,
         lm: CharLM | None, cfg: DecodeConfig, tap_id: str = "") -> tuple[int, DecodeTrace]:
    """Decide one tap given its spatial distribution ``p_sm`` over all 28 keys."""
    if cfg.use_suc:
        k = is_unambiguous(layout, tap, cfg.suc_fraction)
        if k is not None:
            return k, DecodeTrace(tap_id, NOT_AMBIGUOUS, [KEYS[k]], None, None, KEYS[k])

    cands = candidate_filter(layout, tap, cfg.window_x, cfg.window_y) if cfg.use_filter \
        else list(range(K))
    p_sm = _restrict(np.asarray(p_sm, dtype=float), cands)
    names = [KEYS[c] for c in cands]
    best = int(np.argmax(p_sm))

    p_lm = None
    if cfg.use_lm and lm is not None and best != PERIOD and not at_word_start(context):
        lm_probs = np.asarray(lm.next_key_probs(context), dtype=float)
        sub = lm_probs[cands]
        if sub.max() - sub.min() >= cfg.uninformative_eps:
            p_lm = lm_probs
    if p_lm is None:
        return best, DecodeTrace(tap_id, MODEL_WITHOUT_LM, names, p_sm[cands].tolist(),
                                 None, KEYS[best])
    score = np.zeros(K)
    score[cands] = p_sm[cands] * p_lm[cands]
    k = int(np.argmax(score))
    return k, DecodeTrace(tap_id, MODEL_WITH_LM, names, p_sm[cands].tolist(),
                          p_lm[cands].tolist(), KEYS[k])


def decode(layout: KeyboardLayout, model: KeyScorer, lm: CharLM | None, tap: TapSample,
           context: str, cfg: DecodeConfig, tap_id: str = "") -> tuple[int, DecodeTrace]:
    if cfg.use_suc:
        k = is_unambiguous(layout, tap, cfg.suc_fraction)
        if k is not None:
            return k, DecodeTrace(tap_id, NOT_AMBIGUOUS, [KEYS[k]], None, None, KEYS[k])
    p_sm = model.key_proba(layout, [tap])[0]
    return fuse(layout, p_sm, tap, context, lm, cfg, tap_id)


def decode_many(layout: KeyboardLayout, model: KeyScorer, lm: CharLM | None,
                taps: Sequence[TapSample], contexts: Sequence[str], cfg: DecodeConfig,
                tap_ids: Sequence[str] | None = None,
                p_sm: np.ndarray | None = None) -> tuple[list[int], list[DecodeTrace]]:
    """Decode a batch; spatial scores are computed once for all taps.

    ``p_sm`` may be supplied to reuse spatial scores across decode passes.
    """
    if len(contexts) != len(taps):
        raise ValueError("need one context per tap")
    if p_sm is None:
        p_sm = model.key_proba(layout, taps) if len(taps) else np.zeros((0, K))
    ids = tap_ids or [str(i) for i in range(len(taps))]
    keys, traces = [], []
    for i, tap in enumerate(taps):
        k, tr = fuse(layout, p_sm[i], tap, contexts[i], lm, cfg, ids[i])
        keys.append(k)
        traces.append(tr)
    return keys, traces


def bucket_shares(traces: Sequence[DecodeTrace]) -> dict[str, float]:
    n = len(traces)
    return {b: (100.0 * sum(t.bucket == b for t in traces) / n if n else 0.0) for b in BUCKETS}


__all__ = [
    "DecodeConfig", "DecodeTrace", "decode", "decode_many", "fuse", "is_unambiguous",
    "candidate_filter", "bucket_shares", "BUCKETS",
]

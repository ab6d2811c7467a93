"""Text-entry metrics: character error rate, word error rate, words per minute."""

from __future__ import annotations

from typing import Sequence

from .align import AlignedPair, TypingEvent, fold_events
from .features import TapSample
from .layout import key_index


class MetricError(ValueError):
    pass


def _ref(x) -> int:
    if isinstance(x, AlignedPair):
        return x.reference
    if isinstance(x, TapSample):
        if x.label is None:
            raise MetricError("unlabeled tap")
        return x.label
    return key_index(x)


def cer(pairs: Sequence, predictions: Sequence) -> float:
    """Percent of keypresses decoded to a key other than the reference.

    ``pairs`` may hold AlignedPairs, labeled taps, or plain key ids.
    """
    if len(pairs) != len(predictions):
        raise MetricError(f"{len(pairs)} references but {len(predictions)} predictions")
    if not pairs:
        raise MetricError("CER of an empty set")
    wrong = sum(_ref(r) != key_index(p) for r, p in zip(pairs, predictions))
    return 100.0 * wrong / len(pairs)


def _words(x: str | Sequence[str]) -> list[str]:
    return x.split() if isinstance(x, str) else [w for w in x if w.strip()]


def word_edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j - 1] + (r != h), prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[-1]


def wer(reference_words: str | Sequence[str], hypothesis_words: str | Sequence[str]) -> float:
    ref, hyp = _words(reference_words), _words(hypothesis_words)
    if not ref:
        raise MetricError("WER needs a non-empty reference")
    return 100.0 * word_edit_distance(ref, hyp) / len(ref)


def wpm(trials: Sequence[Sequence[TypingEvent]]) -> float:
    """(committed characters / 5) per minute of typing, pooled over trials.

    A trial's duration runs from its first to its last tap.
    """
    if trials and isinstance(trials[0], TypingEvent):
        trials = [trials]
    chars, ms = 0, 0.0
    for events in trials:
        taps = [e for e in events if e.kind == "tap"]
        if not taps:
            raise MetricError("trial without taps")
        chars += len(fold_events(events))
        ms += taps[-1].t_ms - taps[0].t_ms
    if ms <= 0:
        raise MetricError("zero elapsed time")
    return (chars / 5.0) / (ms / 60_000.0)

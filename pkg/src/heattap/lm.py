"""Character n-gram language model over the 28 key symbols."""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Protocol

import numpy as np

from .layout import K, key_char, key_index

LM_SCHEMA = 1
ALPHABET = "".join(key_char(k) for k in range(K))
_OUTSIDE = re.compile(f"[^{re.escape(ALPHABET)}]")
_SPACES = re.compile(" {2,}")


class CharLM(Protocol):
    def next_key_probs(self, context: str) -> np.ndarray: ...


def normalize_text(text: str) -> str:
    """Lowercase; map every character outside the key alphabet to a single space."""
    return _SPACES.sub(" ", _OUTSIDE.sub(" ", text.lower()))


def last_words(context: str, n: int = 5) -> str:
    """Suffix of ``context`` holding at most its last ``n`` words (plus a trailing space)."""
    parts = context.split(" ")
    # a trailing space leaves an empty final part, which is not a word
    keep = n + 1 if parts and parts[-1] == "" else n
    return " ".join(parts[-keep:])


class NgramCharLM:
    """Add-k smoothed character n-gram model that backs off to shorter contexts.

    The longest context suffix seen in training (up to ``order - 1`` characters)
    is used; the empty context is always seen, so every key gets positive mass.
    """

    def __init__(self, order: int = 5, k: float = 0.1, max_words: int = 5):
        if order < 1 or k <= 0:
            raise ValueError("order must be >= 1 and k > 0")
        self.order = order
        self.k = k
        self.max_words = max_words
        self.counts: dict[str, np.ndarray] = {}
        self.fingerprint = ""

    def fit(self, text: str) -> "NgramCharLM":
        text = normalize_text(text).strip()
        self.fingerprint = hashlib.sha256(text.encode()).hexdigest()[:16]
        counts: dict[str, np.ndarray] = {}
        for i, ch in enumerate(text):
            nxt = key_index(ch)
            for n in range(min(self.order - 1, i) + 1):
                ctx = text[i - n:i]
                row = counts.get(ctx)
                if row is None:
                    row = counts[ctx] = np.zeros(K)
                row[nxt] += 1
        self.counts = counts
        return self

    def next_key_probs(self, context: str) -> np.ndarray:
        context = last_words(normalize_text(context), self.max_words)
        for n in range(min(self.order - 1, len(context)), -1, -1):
            row = self.counts.get(context[len(context) - n:])
            if row is not None:
                return (row + self.k) / (row.sum() + K * self.k)
        return np.full(K, 1.0 / K)

    def to_json(self) -> dict:
        return {
            "schema": LM_SCHEMA, "order": self.order, "k": self.k, "max_words": self.max_words,
            "fingerprint": self.fingerprint,
            "counts": {c: {key_char(j): int(v) for j, v in enumerate(row) if v}
                       for c, row in sorted(self.counts.items())},
        }

    @classmethod
    def from_json(cls, d: dict) -> "NgramCharLM":
        if d.get("schema") != LM_SCHEMA:
            raise ValueError(f"unsupported LM schema {d.get('schema')}")
        lm = cls(d["order"], d["k"], d.get("max_words", 5))
        lm.fingerprint = d.get("fingerprint", "")
        for c, row in d["counts"].items():
            arr = np.zeros(K)
            for ch, v in row.items():
                arr[key_index(ch)] = v
            lm.counts[c] = arr
        return lm

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "NgramCharLM":
        return cls.from_json(json.loads(Path(path).read_text()))


def default_corpus() -> str:
    from importlib import resources
    return resources.files("heattap").joinpath("data/corpus_en.txt").read_text()

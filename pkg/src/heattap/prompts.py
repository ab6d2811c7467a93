"""Prompt-pool filtering and greedy character-entropy prompt selection."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .layout import K, key_index

CORPUS = "corpus"
ADDED = "added"
MAX_WORDS = 6
_ALLOWED = re.compile(r"[a-z]+( [a-z]+)*\.?")


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class Prompt:
    text: str
    origin: str = CORPUS

    @property
    def words(self) -> list[str]:
        return self.text.lower().rstrip(".").split()


@dataclass
class PromptPool:
    prompts: list[Prompt]
    common_words: set[str] | None = None

    def rare_count(self, p: Prompt) -> int:
        if self.common_words is None:
            raise PromptError("no common-word list loaded")
        return sum(w not in self.common_words for w in p.words)


def load_common_words(path: str | Path, limit: int = 50_000) -> set[str]:
    """The first ``limit`` entries of a one-word-per-line frequency list."""
    words = [w.strip().lower() for w in Path(path).read_text().splitlines() if w.strip()]
    return set(words[:limit])


def load_pool(corpus_path: str | Path | None = None, added_path: str | Path | None = None,
              common_words: set[str] | None = None) -> PromptPool:
    prompts = []
    for path, origin in ((corpus_path, CORPUS), (added_path, ADDED)):
        if path is not None:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
            prompts += [Prompt(s.strip(), origin) for s in lines if s.strip()]
    return PromptPool(prompts, common_words)


def is_plain(text: str) -> bool:
    """Letters and single spaces only, optionally ending in one period."""
    return _ALLOWED.fullmatch(text.lower()) is not None


def keep_prompt(pool: PromptPool, p: Prompt) -> bool:
    if not is_plain(p.text):
        return False
    n, rare = len(p.words), pool.rare_count(p)
    if p.origin == ADDED:
        return n + rare <= MAX_WORDS
    return n <= MAX_WORDS and rare == 0


def filter_pool(pool: PromptPool) -> PromptPool:
    if pool.common_words is None:
        raise PromptError("filtering needs the common-word list")
    return PromptPool([p for p in pool.prompts if keep_prompt(pool, p)], pool.common_words)


def char_counts(text: str) -> np.ndarray:
    counts = np.zeros(K)
    for c in text.lower():
        counts[key_index(c)] += 1
    return counts


def char_entropy(dist) -> float:
    """Shannon entropy (bits) of a count vector over the keys."""
    c = np.asarray(dist, dtype=float)
    total = c.sum()
    if total <= 0:
        raise PromptError("entropy of an empty distribution")
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum())


def greedy_select(prompts: Sequence[str | Prompt], n: int = 90,
                  tie_tol: float = 1e-12) -> list[str]:
    """Repeatedly add the prompt that maximizes the entropy of the selected set.

    Entropy is taken over the pooled character counts of the whole selection.
    Ties (within ``tie_tol`` bits) go to the shorter prompt, then lexicographic order.
    """
    texts = [p.text if isinstance(p, Prompt) else p for p in prompts]
    if n > len(texts):
        raise PromptError(f"pool has {len(texts)} prompts, cannot select {n}")
    remaining = list(range(len(texts)))
    counts = [char_counts(t) for t in texts]
    total = np.zeros(K)
    chosen: list[str] = []
    for _ in range(n):
        ent = [char_entropy(total + counts[i]) for i in remaining]
        top = max(ent)
        best = min((i for i, e in zip(remaining, ent) if e >= top - tie_tol),
                   key=lambda i: (len(texts[i]), texts[i]))
        remaining.remove(best)
        total += counts[best]
        chosen.append(texts[best])
    return chosen


def selection_entropies(selected: Iterable[str]) -> list[float]:
    """Entropy of the running selection after each step."""
    total = np.zeros(K)
    out = []
    for t in selected:
        total += char_counts(t)
        out.append(char_entropy(total))
    return out

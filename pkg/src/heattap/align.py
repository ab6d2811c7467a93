"""Turning typing logs into (tap, reference key) training pairs.

Strings are aligned with a unit-cost edit distance that also allows swapping
two adjacent characters.  Committed text is aligned to the whole prompt;
every deleted tap is aligned, just before its backspace, against the prompt
prefix the user had reached.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from .decoder import candidate_filter
from .features import TapSample
from .layout import KEYS, KeyboardLayout, key_char, key_index

log = logging.getLogger(__name__)

MATCH = "match"
SUBSTITUTION = "substitution"
TRANSPOSITION = "transposition"
OMISSION = "omission"
INSERTION = "insertion"


@dataclass(frozen=True)
class EditOp:
    """One step of an edit script.

    ``ref`` / ``hyp`` are the first reference / hypothesis positions the op
    consumes (None when it consumes none).  A transposition consumes two of each.
    """

    kind: str
    ref: int | None
    hyp: int | None

    @property
    def cost(self) -> int:
        return 0 if self.kind == MATCH else 1


@dataclass(frozen=True)
class TypingEvent:
    kind: str  # "tap" | "backspace"
    t_ms: float
    tap: TapSample | None = None
    decoded: int | None = None
    index: int = -1  # position in the source log

    def __post_init__(self):
        if self.kind not in ("tap", "backspace"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "tap" and (self.tap is None or self.decoded is None):
            raise ValueError("tap events need a tap and its decoded key")


@dataclass(frozen=True)
class AlignedPair:
    tap: TapSample
    reference: int
    source: str  # "committed" | "deleted"
    event_index: int = -1

    def to_json(self) -> dict:
        return {"tap_ref": self.event_index, "label": KEYS[self.reference], "source": self.source}


def _canon(text: str) -> str:
    return "".join(key_char(key_index(c)) for c in text.lower())


def _swap(a: str, b: str, i: int, j: int) -> bool:
    """Whether a[i:i+2] and b[j:j+2] are the same two distinct characters swapped."""
    return (i + 1 < len(a) and j + 1 < len(b) and a[i] != a[i + 1]
            and a[i] == b[j + 1] and a[i + 1] == b[j])


def distance_table(ref: str, hyp: str) -> list[list[int]]:
    """D[i][j] = edit distance between ref[:i] and hyp[:j]."""
    m, n = len(ref), len(hyp)
    D = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        D[i][0] = i
    for j in range(n + 1):
        D[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            best = min(D[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]),
                       D[i - 1][j] + 1, D[i][j - 1] + 1)
            if i > 1 and j > 1 and _swap(ref, hyp, i - 2, j - 2):
                best = min(best, D[i - 2][j - 2] + 1)
            D[i][j] = best
    return D


def edit_distance(ref: str, hyp: str) -> int:
    return distance_table(ref, hyp)[len(ref)][len(hyp)]


def _predecessors(ref: str, hyp: str, D, i: int, j: int):
    """Optimal last ops reaching (i, j), in tie-break preference order."""
    out = []
    if i > 0 and j > 0:
        same = ref[i - 1] == hyp[j - 1]
        if D[i][j] == D[i - 1][j - 1] + (not same):
            out.append((EditOp(MATCH if same else SUBSTITUTION, i - 1, j - 1), i - 1, j - 1))
    if i > 1 and j > 1 and _swap(ref, hyp, i - 2, j - 2) and D[i][j] == D[i - 2][j - 2] + 1:
        out.append((EditOp(TRANSPOSITION, i - 2, j - 2), i - 2, j - 2))
    if i > 0 and D[i][j] == D[i - 1][j] + 1:
        out.append((EditOp(OMISSION, i - 1, None), i - 1, j))
    if j > 0 and D[i][j] == D[i][j - 1] + 1:
        out.append((EditOp(INSERTION, None, j - 1), i, j - 1))
    return out


def align_strings(reference: str, hypothesis: str) -> list[EditOp]:
    """One minimal edit script turning ``reference`` into ``hypothesis``.

    Among equal-cost scripts, traceback prefers match, then substitution,
    transposition, omission, insertion.
    """
    ref, hyp = _canon(reference), _canon(hypothesis)
    D = distance_table(ref, hyp)
    i, j = len(ref), len(hyp)
    ops = []
    while i or j:
        op, i, j = _predecessors(ref, hyp, D, i, j)[0]
        ops.append(op)
    return ops[::-1]


def all_alignments(reference: str, hypothesis: str, limit: int = 10_000) -> list[list[EditOp]]:
    """Every minimal edit script (up to ``limit``)."""
    ref, hyp = _canon(reference), _canon(hypothesis)
    D = distance_table(ref, hyp)
    out: list[list[EditOp]] = []

    def walk(i, j, tail):
        if len(out) >= limit:
            return
        if i == 0 and j == 0:
            out.append(tail[::-1])
            return
        for op, pi, pj in _predecessors(ref, hyp, D, i, j):
            walk(pi, pj, tail + [op])

    walk(len(ref), len(hyp), [])
    return out


def hyp_to_ref(ops: Iterable[EditOp]) -> dict[int, int | None]:
    """Reference position each hypothesis character aligns to (None for insertions).

    A transposed pair is labeled crosswise: each typed character takes the
    reference position holding the same character.
    """
    out: dict[int, int | None] = {}
    for op in ops:
        if op.kind in (MATCH, SUBSTITUTION):
            out[op.hyp] = op.ref
        elif op.kind == TRANSPOSITION:
            out[op.hyp] = op.ref + 1
            out[op.hyp + 1] = op.ref
        elif op.kind == INSERTION:
            out[op.hyp] = None
    return out


def reference_options(reference: str, hypothesis: str, j: int) -> tuple[int, set[int | None]]:
    """(cost, every reference position hyp[j] takes in some minimal script)."""
    ref, hyp = _canon(reference), _canon(hypothesis)
    fwd = distance_table(ref, hyp)
    bwd = distance_table(ref[::-1], hyp[::-1])
    m, n = len(ref), len(hyp)
    total = fwd[m][n]

    def rest(i, jj):  # distance between ref[i:] and hyp[jj:]
        return bwd[m - i][n - jj]

    opts: set[int | None] = set()
    for i in range(m + 1):
        before = fwd[i][j]
        if j + 1 <= n:
            if i < m and before + (ref[i] != hyp[j]) + rest(i + 1, j + 1) == total:
                opts.add(i)
            if before + 1 + rest(i, j + 1) == total:
                opts.add(None)
        # hyp[j] as the first or the second character of a swapped pair
        if _swap(ref, hyp, i, j) and before + 1 + rest(i + 2, j + 2) == total:
            opts.add(i + 1)
        if j >= 1 and _swap(ref, hyp, i, j - 1) and fwd[i][j - 1] + 1 + rest(i + 2, j + 1) == total:
            opts.add(i)
    return total, opts


# -- typing logs ---------------------------------------------------------------


def fold_events(events: Sequence[TypingEvent]) -> list[TypingEvent]:
    """Tap events surviving all backspaces, in typing order."""
    buf: list[TypingEvent] = []
    for ev in events:
        if ev.kind == "tap":
            buf.append(ev)
        elif buf:
            buf.pop()
    return buf


def _text(buf: Sequence[TypingEvent]) -> str:
    return "".join(key_char(ev.decoded) for ev in buf)


def align_committed(prompt: str, events: Sequence[TypingEvent]) -> list[AlignedPair]:
    if not prompt:
        raise ValueError("empty prompt")
    ref = _canon(prompt)
    buf = fold_events(events)
    mapping = hyp_to_ref(align_strings(ref, _text(buf)))
    pairs = []
    for j, ev in enumerate(buf):
        r = mapping.get(j)
        if r is not None:
            pairs.append(AlignedPair(ev.tap, key_index(ref[r]), "committed", ev.index))
    return pairs


def replay_deleted(prompt: str, events: Sequence[TypingEvent],
                   committed: Sequence[AlignedPair] = ()) -> list[AlignedPair]:
    """Label each deleted tap by aligning the buffer just before its backspace.

    The buffer is aligned against the prompt prefixes one and zero characters
    longer than it; the deleted tap is kept only if every minimal alignment
    gives it the same reference character.
    """
    ref = _canon(prompt)
    seen = {id(p.tap) for p in committed}
    buf: list[TypingEvent] = []
    pairs = []
    for ev in events:
        if ev.kind == "tap":
            buf.append(ev)
            continue
        if not buf:
            log.warning("backspace on an empty buffer at event %d; skipped", ev.index)
            continue
        hyp = _text(buf)
        m = len(hyp)
        best, opts = None, set()
        for length in sorted({min(m, len(ref)), min(m + 1, len(ref))}):
            cost, o = reference_options(ref[:length], hyp, m - 1)
            if best is None or cost < best:
                best, opts = cost, set(o)
            elif cost == best:
                opts |= o
        gone = buf.pop()
        if len(opts) != 1 or None in opts or id(gone.tap) in seen:
            continue
        (r,) = opts
        pairs.append(AlignedPair(gone.tap, key_index(ref[r]), "deleted", gone.index))
    return pairs


def far_key_filter(layout: KeyboardLayout, pairs: Sequence[AlignedPair]) -> list[AlignedPair]:
    """Drop pairs whose reference key is not among the tap's neighbor candidates."""
    return [p for p in pairs if p.reference in candidate_filter(layout, p.tap)]


def align_trial(layout: KeyboardLayout, prompt: str,
                events: Sequence[TypingEvent]) -> list[AlignedPair]:
    committed = align_committed(prompt, events)
    deleted = replay_deleted(prompt, events, committed)
    return far_key_filter(layout, committed + deleted)

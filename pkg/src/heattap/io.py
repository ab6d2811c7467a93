"""JSONL and TSV readers/writers.  Output is byte-stable: sorted keys, compact separators."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .align import AlignedPair, TypingEvent
from .features import FeatureError, TapSample
from .layout import KEYS, key_index


class DataError(ValueError):
    pass


def dumps(record) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(dumps(rec) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: expected an object")
            yield rec


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n",
                          encoding="utf-8")


# -- taps ---------------------------------------------------------------------


def read_taps(path: str | Path) -> list[TapSample]:
    out = []
    for i, rec in enumerate(read_jsonl(path), 1):
        try:
            out.append(TapSample.from_json(rec))
        except (FeatureError, ValueError) as e:
            raise DataError(f"{path}: record {i}: {e}") from e
    return out


def write_taps(path: str | Path, taps: Iterable[TapSample], cropped: bool = False) -> int:
    return write_jsonl(path, (t.to_json(cropped) for t in taps))


# -- typing events --------------------------------------------------------------


def event_to_json(ev: TypingEvent, user_id: str, prompt_id: str) -> dict:
    d = {"kind": ev.kind, "t_ms": ev.t_ms, "user_id": user_id, "prompt_id": prompt_id}
    if ev.kind == "tap":
        d["tap"] = {**ev.tap.to_json(), "decoded": KEYS[ev.decoded]}
    return d


def read_events(path: str | Path) -> dict[tuple[str, str], list[TypingEvent]]:
    """Events grouped by (user_id, prompt_id); ``index`` is the line's position in the file."""
    trials: dict[tuple[str, str], list[TypingEvent]] = {}
    for i, rec in enumerate(read_jsonl(path)):
        try:
            key = (str(rec["user_id"]), str(rec["prompt_id"]))
            tap = decoded = None
            if rec["kind"] == "tap":
                tap = TapSample.from_json(rec["tap"])
                decoded = key_index(rec["tap"]["decoded"])
            ev = TypingEvent(rec["kind"], float(rec["t_ms"]), tap, decoded, i)
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}: event {i}: {e}") from e
        trials.setdefault(key, []).append(ev)
    return trials


def pair_to_json(p: AlignedPair, user_id: str = "", prompt_id: str = "") -> dict:
    return {**p.to_json(), "user_id": user_id, "prompt_id": prompt_id}


def labeled_taps_from_pairs(events_path: str | Path, pairs_path: str | Path) -> list[TapSample]:
    """Taps of an event log relabeled with the reference keys an alignment assigned."""
    taps = {}
    for i, rec in enumerate(read_jsonl(events_path)):
        if rec.get("kind") == "tap":
            taps[i] = rec["tap"]
    out = []
    for rec in read_jsonl(pairs_path):
        try:
            raw = dict(taps[int(rec["tap_ref"])])
        except (KeyError, ValueError) as e:
            raise DataError(f"pair refers to a missing tap event: {rec}") from e
        raw["label"] = rec["label"]
        out.append(TapSample.from_json(raw))
    return out


# -- prompts ------------------------------------------------------------------


def read_prompts(path: str | Path) -> dict[str, str]:
    """prompt_id<TAB>text per line."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        pid, sep, text = line.partition("\t")
        if not sep or not text.strip():
            raise DataError(f"{path}:{lineno}: expected prompt_id<TAB>text")
        out[pid] = text.strip()
    return out


def write_prompts(path: str | Path, prompts: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k}\t{v}\n" for k, v in prompts.items()), encoding="utf-8")

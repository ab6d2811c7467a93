"""Command-line pipeline: gen, select-prompts, train, decode, align, eval, lm-train.

Exit status: 0 success, 1 usage error, 2 invalid data or configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .align import align_committed, far_key_filter, replay_deleted
from .decoder import DecodeConfig, decode_many
from .features import FeatureSetKind
from .harness import (by_user, compare, fixed_split, loocv, plan_folds, resolve_kind, tap_ids,
                      trials)
from .layout import KEYS, key_char, load_layout
from .lm import NgramCharLM, default_corpus
from .prompts import filter_pool, greedy_select, is_plain, load_common_words, load_pool
from .spatial import DistanceModel, LogRegModel, OnKeyModel, TrainConfig, TrainingError, train
from .synth import SynthConfig, generate_dataset, generate_sessions

log = logging.getLogger("heattap")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# -- shared options ---------------------------------------------------------------


def _config(args) -> dict:
    if not args.config:
        return {}
    cfg = json.loads(Path(args.config).read_text())
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def _train_cfg(args) -> TrainConfig:
    section = dict(_config(args).get("train", {}))
    if getattr(args, "C_grid", None):
        section["C_grid"] = args.C_grid
    for name in ("ftol", "dtype"):
        if getattr(args, name, None) is not None:
            section[name] = getattr(args, name)
    section.setdefault("seed", args.seed)
    return TrainConfig(**section)


def _decode_cfg(args) -> DecodeConfig:
    section = dict(_config(args).get("decode", {}))
    for name in ("use_lm", "use_suc", "use_filter"):
        if getattr(args, name, None) is not None:
            section[name] = getattr(args, name)
    return DecodeConfig(**section)


def _lm(args):
    return NgramCharLM.load(args.lm) if getattr(args, "lm", None) else None


def _grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad C grid {text!r}")


def _decode_flags(p):
    p.add_argument("--use-lm", dest="use_lm", action="store_true", default=None)
    p.add_argument("--no-lm", dest="use_lm", action="store_false")
    p.add_argument("--use-suc", dest="use_suc", action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument("--use-filter", dest="use_filter", action=argparse.BooleanOptionalAction,
                   default=None)


def _train_flags(p):
    p.add_argument("--C-grid", dest="C_grid", type=_grid)
    p.add_argument("--ftol", type=float)
    p.add_argument("--dtype", choices=["float64", "float32"])


# -- commands -------------------------------------------------------------------


def cmd_gen(args, layout):
    section = dict(_config(args).get("synth", {}))
    section["seed"] = args.seed
    if args.users is not None:
        section["n_users"] = args.users
    if args.taps_per_user is not None:
        section["taps_per_user"] = args.taps_per_user
    cfg = SynthConfig(**section)
    if args.sessions:
        sessions = generate_sessions(layout, cfg, args.sessions)
        io.write_jsonl(args.out, (io.event_to_json(ev, s.user_id, s.prompt_id)
                                  for s in sessions for ev in s.events))
        if args.prompts_out:
            io.write_prompts(args.prompts_out, {s.prompt_id: s.prompt for s in sessions})
        log.info("wrote %d sessions", len(sessions))
    else:
        n = io.write_taps(args.out, generate_dataset(layout, cfg), cropped=args.cropped)
        log.info("wrote %d taps", n)


def cmd_select_prompts(args, layout):
    pool = load_pool(args.pool, args.added,
                     load_common_words(args.common_words) if args.common_words else None)
    if pool.common_words is not None:
        pool = filter_pool(pool)
    else:
        pool.prompts = [p for p in pool.prompts if is_plain(p.text)]
    chosen = greedy_select(pool.prompts, min(args.n, len(pool.prompts)))
    Path(args.out).write_text("".join(f"{i:03d}\t{t}\n" for i, t in enumerate(chosen)))


def _load_training_taps(args):
    if args.taps:
        return io.read_taps(args.taps)
    if args.events and args.pairs:
        return io.labeled_taps_from_pairs(args.events, args.pairs)
    raise UsageError("train needs --taps or both --events and --pairs")


def cmd_train(args, layout):
    taps = _load_training_taps(args)
    users = sorted(by_user(taps))
    if args.val_users:
        val = set(args.val_users.split(","))
    else:
        rng = np.random.default_rng(args.seed)
        val = set(rng.choice(users, size=min(3, len(users) - 1), replace=False).tolist())
    tr = [t for t in taps if t.user_id not in val]
    va = [t for t in taps if t.user_id in val]
    model = train(tr, va, FeatureSetKind(args.kind), layout, _train_cfg(args))
    Path(args.out).write_text(io.dumps(model.to_json()) + "\n")
    log.info("C=%g, validation accuracy %.4f", model.C, model.meta["val_accuracy"])


def _scorer(name: str, layout):
    if name.lower() in ("distance",):
        return DistanceModel()
    if name.lower() in ("on-key", "onkey"):
        return OnKeyModel()
    return LogRegModel.load(name, layout)


def cmd_decode(args, layout):
    taps = io.read_taps(args.taps)
    scorer = _scorer(args.model, layout)
    lm, cfg = _lm(args), _decode_cfg(args)
    p_sm = scorer.key_proba(layout, taps)
    ids = tap_ids(taps)
    preds: list[int | None] = [None] * len(taps)
    traces = [None] * len(taps)
    # the LM sees what the keyboard has produced so far in the trial
    for idx in trials(taps).values():
        text = ""
        for i in idx:
            (k,), (tr,) = decode_many(layout, scorer, lm, [taps[i]], [text], cfg, [ids[i]],
                                      p_sm=p_sm[i:i + 1])
            preds[i], traces[i] = k, tr
            text += key_char(k)
    io.write_jsonl(args.out, (
        {"tap_id": ids[i], "user_id": t.user_id, "prompt_id": t.prompt_id,
         "decoded": KEYS[preds[i]], **({"label": KEYS[t.label]} if t.label is not None else {})}
        for i, t in enumerate(taps)))
    if args.traces:
        io.write_jsonl(args.traces, (tr.to_json() for tr in traces))


def cmd_align(args, layout):
    prompts = io.read_prompts(args.prompts)
    records = []
    for (uid, pid), events in io.read_events(args.events).items():
        if pid not in prompts:
            raise io.DataError(f"no prompt text for prompt_id {pid!r}")
        committed = align_committed(prompts[pid], events)
        pairs = committed + replay_deleted(prompts[pid], events, committed)
        if not args.keep_far:
            pairs = far_key_filter(layout, pairs)
        records += [io.pair_to_json(p, uid, pid) for p in pairs]
    records.sort(key=lambda r: r["tap_ref"])
    io.write_jsonl(args.out, records)


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k != "seconds"}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def cmd_eval(args, layout):
    taps = io.read_taps(args.taps)
    cfg, tcfg, lm = _decode_cfg(args), _train_cfg(args), _lm(args)
    kinds = [resolve_kind(k) for k in (args.kind or ["C"])]
    reports = []
    for kind in kinds:
        if args.mode == "loocv":
            rep = loocv(taps, kind, cfg, tcfg, layout=layout, lm=lm, seed=args.seed,
                        keep_traces=bool(args.traces))
        else:
            groups = by_user(taps)
            test = set(args.test_users.split(",")) if args.test_users else None
            if test is None:
                plan = plan_folds(list(groups), args.seed)[0]
                test, val = {plan.test_user}, set(plan.val_users)
            else:
                rest = [u for u in groups if u not in test]
                rng = np.random.default_rng(args.seed)
                val = set(rng.choice(rest, size=min(3, len(rest) - 1), replace=False).tolist())
            pick = lambda us: [t for u in sorted(us) for t in groups[u]]
            train_users = set(groups) - test - val
            rep = fixed_split(pick(train_users), pick(val), pick(test), kind, cfg, tcfg,
                              layout=layout, lm=lm, keep_traces=bool(args.traces))
        log.info(rep.summary())
        reports.append(rep)
    out = compare(reports).to_json() if len(reports) > 1 else reports[0].to_json()
    io.write_json(args.out, out if args.timings else _strip_timing(out))
    if args.traces:
        io.write_jsonl(args.traces, (dict(tr.to_json(), condition=r.condition)
                                     for r in reports for tr in r.traces))


def cmd_lm_train(args, layout):
    text = Path(args.corpus).read_text(encoding="utf-8") if args.corpus else default_corpus()
    NgramCharLM(args.order, args.k).fit(text).save(args.out)


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--layout", help="keyboard layout JSON (default: bundled QWERTY)")
    common.add_argument("--config", help="JSON with optional synth/train/decode sections")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="heattap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="synthesize taps or typing sessions")
    g.add_argument("--out", required=True)
    g.add_argument("--users", type=int)
    g.add_argument("--taps-per-user", type=int)
    g.add_argument("--sessions", type=int, metavar="TRIALS_PER_USER",
                   help="emit typing-event logs instead of labeled taps")
    g.add_argument("--prompts-out")
    g.add_argument("--cropped", action="store_true", help="store only the 16x18 keyboard region")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("select-prompts", parents=[common], help="greedy entropy prompt selection")
    s.add_argument("--pool", required=True)
    s.add_argument("--added")
    s.add_argument("--common-words")
    s.add_argument("--n", type=int, default=90)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select_prompts)

    t = sub.add_parser("train", parents=[common], help="train a spatial model")
    t.add_argument("--taps")
    t.add_argument("--events")
    t.add_argument("--pairs")
    t.add_argument("--kind", required=True, choices=[k.value for k in FeatureSetKind])
    t.add_argument("--val-users")
    t.add_argument("--out", required=True)
    _train_flags(t)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decode", parents=[common], help="decode taps")
    d.add_argument("--model", required=True, help="model JSON, or Distance / On-key")
    d.add_argument("--taps", required=True)
    d.add_argument("--lm")
    d.add_argument("--out", required=True)
    d.add_argument("--traces")
    _decode_flags(d)
    d.set_defaults(func=cmd_decode)

    a = sub.add_parser("align", parents=[common], help="label taps of typing-event logs")
    a.add_argument("--events", required=True)
    a.add_argument("--prompts", required=True, help="TSV: prompt_id<TAB>text")
    a.add_argument("--out", required=True)
    a.add_argument("--keep-far", action="store_true", help="skip the far-key filter")
    a.set_defaults(func=cmd_align)

    e = sub.add_parser("eval", parents=[common], help="LOOCV or fixed-split evaluation")
    e.add_argument("--taps", required=True)
    e.add_argument("--kind", action="append",
                   help="C, Hf, CHf, Ho, CHo, Distance or On-key; repeat to compare")
    e.add_argument("--mode", choices=["loocv", "fixed"], default="loocv")
    e.add_argument("--test-users")
    e.add_argument("--lm")
    e.add_argument("--out", required=True)
    e.add_argument("--traces")
    e.add_argument("--timings", action="store_true", help="keep wall-clock times in the report")
    _decode_flags(e)
    _train_flags(e)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("lm-train", parents=[common], help="fit the character n-gram LM")
    m.add_argument("--corpus", help="text file (default: bundled English corpus)")
    m.add_argument("--order", type=int, default=5)
    m.add_argument("--k", type=float, default=0.1)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_lm_train)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        layout = load_layout(args.layout)
        args.func(args, layout)
    except UsageError as e:
        print(f"heattap {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, TypeError, TrainingError) as e:
        print(f"heattap {args.command}: error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

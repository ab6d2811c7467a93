"""Leave-one-user-out evaluation, fixed-split and ensemble evaluation, and reports."""

from __future__ import annotations

import copy
import json
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from typing import Sequence

import numpy as np

from .decoder import BUCKETS, DecodeConfig, DecodeTrace, KeyScorer, bucket_shares, decode_many
from .features import FeatureSetKind, TapSample
from .layout import KeyboardLayout, default_layout, key_char
from .lm import CharLM
from .metrics import cer, wer
from .spatial import DistanceModel, OnKeyModel, TrainConfig, train
from .stats import PairedStats, paired_stats

log = logging.getLogger(__name__)

REPORT_SCHEMA = 1
BASELINES = {"distance": DistanceModel, "on-key": OnKeyModel, "onkey": OnKeyModel}


class HarnessError(ValueError):
    pass


def resolve_kind(kind: str | FeatureSetKind) -> FeatureSetKind | str:
    """A feature-set kind, or the canonical name of a training-free baseline."""
    if isinstance(kind, FeatureSetKind):
        return kind
    try:
        return FeatureSetKind(kind)
    except ValueError:
        pass
    model = BASELINES.get(str(kind).lower())
    if model is None:
        raise HarnessError(f"unknown model kind {kind!r}")
    return model().name


def baseline_model(name: str) -> KeyScorer:
    return BASELINES[name.lower()]()


# -- fold planning -------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    test_user: str
    val_users: tuple[str, ...]
    train_users: tuple[str, ...]

    def __post_init__(self):
        groups = [{self.test_user}, set(self.val_users), set(self.train_users)]
        if sum(map(len, groups)) != len(set().union(*groups)):
            raise HarnessError("fold splits overlap")
        if not self.val_users or not self.train_users:
            raise HarnessError("fold needs validation and training users")


def plan_folds(users: Sequence[str], seed: int = 0, n_val: int = 3) -> list[FoldPlan]:
    """One fold per user; validation users drawn from the others by a per-fold seeded draw."""
    users = sorted(set(users))
    if len(users) < n_val + 2:
        raise HarnessError(f"need at least {n_val + 2} users, got {len(users)}")
    plans = []
    for f, test in enumerate(users):
        rest = [u for u in users if u != test]
        rng = np.random.default_rng([seed, f])
        val = sorted(rng.choice(rest, size=n_val, replace=False).tolist())
        plans.append(FoldPlan(test, tuple(val), tuple(u for u in rest if u not in val)))
    return plans


# -- decoding helpers ----------------------------------------------------------


def by_user(taps: Sequence[TapSample]) -> dict[str, list[TapSample]]:
    out: dict[str, list[TapSample]] = defaultdict(list)
    for t in taps:
        out[t.user_id].append(t)
    return dict(sorted(out.items()))


def trials(taps: Sequence[TapSample]) -> dict[tuple[str, str], list[int]]:
    """Tap indices per (user, prompt trial), in time order."""
    groups: dict[tuple[str, str], list[int]] = defaultdict(list)
    for i, t in enumerate(taps):
        groups[(t.user_id, t.prompt_id)].append(i)
    return {k: sorted(v, key=lambda i: (taps[i].t_ms, i)) for k, v in groups.items()}


def reference_contexts(taps: Sequence[TapSample]) -> list[str]:
    """For each tap, the reference text typed earlier in the same trial."""
    ctx = [""] * len(taps)
    for idx in trials(taps).values():
        text = ""
        for i in idx:
            ctx[i] = text
            if taps[i].label is None:
                raise HarnessError("reference contexts need labeled taps")
            text += key_char(taps[i].label)
    return ctx


def tap_ids(taps: Sequence[TapSample]) -> list[str]:
    seen: dict[tuple[str, str], int] = defaultdict(int)
    out = []
    for t in taps:
        k = (t.user_id, t.prompt_id)
        out.append(f"{t.user_id}/{t.prompt_id}/{seen[k]}")
        seen[k] += 1
    return out


def trial_wer(taps: Sequence[TapSample], predictions: Sequence[int]) -> float:
    """Word error rate pooled over the trials of ``taps``."""
    errors = words = 0
    for idx in trials(taps).values():
        ref = "".join(key_char(taps[i].label) for i in idx)
        hyp = "".join(key_char(predictions[i]) for i in idx)
        n = len(ref.split())
        if n:
            errors += wer(ref, hyp) * n / 100.0
            words += n
    return 100.0 * errors / words if words else 0.0


def trial_wpm(taps: Sequence[TapSample]) -> float | None:
    chars, ms = 0, 0.0
    for idx in trials(taps).values():
        chars += len(idx)
        ms += taps[idx[-1]].t_ms - taps[idx[0]].t_ms
    return (chars / 5.0) / (ms / 60_000.0) if ms > 0 else None


# -- reports -------------------------------------------------------------------


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


@dataclass
class EvalReport:
    condition: str
    kind: str
    per_user: dict[str, float]
    buckets: dict[str, float]
    decode: dict
    lm_on: dict[str, float] | None = None
    lm_off: dict[str, float] | None = None
    wer: dict[str, float] | None = None
    wpm: dict[str, float] | None = None
    folds: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # in-memory only, never serialized
    traces: list[DecodeTrace] = field(default_factory=list, repr=False, compare=False)
    models: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if not self.per_user:
            raise HarnessError("report without users")
        # tuples from dataclass configs become lists, as they would after a JSON trip
        self.decode, self.folds, self.meta = json.loads(
            json.dumps([self.decode, self.folds, self.meta]))

    @property
    def users(self) -> list[str]:
        return list(self.per_user)

    @property
    def mean(self) -> float:
        return _mean_std(list(self.per_user.values()))[0]

    @property
    def std(self) -> float:
        return _mean_std(list(self.per_user.values()))[1]

    def summary(self) -> str:
        return f"{self.condition}: CER {self.mean:.2f} ± {self.std:.2f} %"

    def to_json(self) -> dict:
        d = {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)
             if f.name not in ("traces", "models")}
        d.update(schema=REPORT_SCHEMA, cer_mean=self.mean, cer_std=self.std)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        d = dict(d)
        if d.pop("schema", None) != REPORT_SCHEMA:
            raise HarnessError("unsupported report schema")
        mean, std = d.pop("cer_mean"), d.pop("cer_std")
        rep = cls(**d)
        if not (np.isclose(rep.mean, mean) and np.isclose(rep.std, std)):
            raise HarnessError("report mean/std inconsistent with per-user CERs")
        return rep


@dataclass
class ComparisonReport:
    """Several conditions over the same users plus paired tests between each two."""

    reports: list[EvalReport]
    comparisons: dict[str, PairedStats]

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "reports": [r.to_json() for r in self.reports],
            "comparisons": {k: v.to_json() for k, v in self.comparisons.items()},
        }

    @classmethod
    def from_json(cls, d: dict) -> "ComparisonReport":
        return cls([EvalReport.from_json(r) for r in d["reports"]],
                   {k: PairedStats.from_json(v) for k, v in d["comparisons"].items()})


def compare(reports: Sequence[EvalReport]) -> ComparisonReport:
    comps = {}
    for a, b in combinations(reports, 2):
        if a.users != b.users:
            raise HarnessError(f"{a.condition} and {b.condition} cover different users")
        comps[f"{a.condition} vs {b.condition}"] = paired_stats(
            list(a.per_user.values()), list(b.per_user.values()))
    return ComparisonReport(list(reports), comps)


# -- evaluation ----------------------------------------------------------------


@dataclass
class _UserResult:
    cer: float
    lm_on: float | None
    lm_off: float | None
    wer: float
    wpm: float | None
    traces: list[DecodeTrace]


def _evaluate_user(layout: KeyboardLayout, scorer: KeyScorer, lm: CharLM | None,
                   taps: Sequence[TapSample], cfg: DecodeConfig, lm_toggle: bool) -> _UserResult:
    if not taps:
        raise HarnessError("user with zero taps")
    ctx = reference_contexts(taps)
    ids = tap_ids(taps)
    p_sm = scorer.key_proba(layout, taps)
    pred, traces = decode_many(layout, scorer, lm, taps, ctx, cfg, ids, p_sm=p_sm)
    out = _UserResult(cer(taps, pred), None, None, trial_wer(taps, pred), trial_wpm(taps), traces)
    if lm_toggle and lm is not None:
        other = DecodeConfig(**{**asdict(cfg), "use_lm": not cfg.use_lm})
        alt, _ = decode_many(layout, scorer, lm, taps, ctx, other, ids, p_sm=p_sm)
        on, off = (pred, alt) if cfg.use_lm else (alt, pred)
        out.lm_on, out.lm_off = cer(taps, on), cer(taps, off)
    return out


def _assemble(condition: str, kind: str, results: dict[str, _UserResult], cfg: DecodeConfig,
              folds: list[dict], meta: dict, keep_traces: bool) -> EvalReport:
    traces = [t for r in results.values() for t in r.traces]
    toggled = all(r.lm_on is not None for r in results.values())
    wpms = {u: r.wpm for u, r in results.items() if r.wpm is not None}
    return EvalReport(
        condition=condition, kind=kind,
        per_user={u: r.cer for u, r in results.items()},
        buckets=bucket_shares(traces) if traces else {b: 0.0 for b in BUCKETS},
        decode=asdict(cfg),
        lm_on={u: r.lm_on for u, r in results.items()} if toggled else None,
        lm_off={u: r.lm_off for u, r in results.items()} if toggled else None,
        wer={u: r.wer for u, r in results.items()},
        wpm=wpms or None,
        folds=folds, meta=meta,
        traces=traces if keep_traces else [],
    )


def _condition_name(kind, cfg: DecodeConfig) -> str:
    name = kind.value if isinstance(kind, FeatureSetKind) else kind
    flags = [f for f, on in (("LM", cfg.use_lm), ("SUC", cfg.use_suc), ("filter", cfg.use_filter)) if on]
    return "+".join([name] + flags)


def loocv(taps: Sequence[TapSample], kind: FeatureSetKind | str,
          cfg: DecodeConfig | None = None, train_cfg: TrainConfig | None = None, *,
          layout: KeyboardLayout | None = None, lm: CharLM | None = None, seed: int = 0,
          n_val: int = 3, lm_toggle: bool = True, keep_traces: bool = False,
          keep_models: bool = False, condition: str | None = None) -> EvalReport:
    """Leave-one-user-out CER of one spatial model kind under one decoding config.

    Each fold trains on its training users, selects C on its validation users
    and decodes the held-out user.  Contexts for the LM are the reference text
    preceding each tap in its trial.  With ``train_cfg.warm_start`` a fold's
    optimization starts from the previous fold's model.
    """
    cfg = cfg or DecodeConfig()
    train_cfg = train_cfg or TrainConfig()
    layout = layout or default_layout()
    kind = resolve_kind(kind)
    groups = by_user(taps)
    plans = plan_folds(list(groups), seed, n_val)
    results: dict[str, _UserResult] = {}
    folds, models = [], []
    prev = None
    t0 = time.perf_counter()
    for plan in plans:
        t_fold = time.perf_counter()
        fold = {"test_user": plan.test_user, "val_users": list(plan.val_users)}
        if isinstance(kind, FeatureSetKind):
            tr = [t for u in plan.train_users for t in groups[u]]
            va = [t for u in plan.val_users for t in groups[u]]
            model = train(tr, va, kind, layout, train_cfg, init=prev)
            prev = model
            fold.update(C=model.C, **{k: model.meta[k] for k in
                                      ("iterations", "converged", "val_accuracy", "n_train")})
            if keep_models:
                models.append(model)
        else:
            model = baseline_model(kind)
        results[plan.test_user] = _evaluate_user(layout, model, lm, groups[plan.test_user],
                                                 cfg, lm_toggle)
        fold["seconds"] = round(time.perf_counter() - t_fold, 3)
        folds.append(fold)
        log.info("fold %s: CER %.2f (%.1fs)", plan.test_user, results[plan.test_user].cer,
                 fold["seconds"])
    kind_name = kind.value if isinstance(kind, FeatureSetKind) else kind
    meta = {"protocol": "loocv", "seed": seed, "n_val": n_val, "train": asdict(train_cfg),
            "layout": layout.fingerprint, "seconds": round(time.perf_counter() - t0, 3)}
    rep = _assemble(condition or _condition_name(kind, cfg), kind_name, results, cfg,
                    folds, meta, keep_traces)
    rep.models = models
    return rep


def fixed_split(train_taps: Sequence[TapSample], val_taps: Sequence[TapSample],
                test_taps: Sequence[TapSample], kind: FeatureSetKind | str,
                cfg: DecodeConfig | None = None, train_cfg: TrainConfig | None = None, *,
                layout: KeyboardLayout | None = None, lm: CharLM | None = None,
                lm_toggle: bool = True, keep_traces: bool = False,
                condition: str | None = None) -> EvalReport:
    cfg = cfg or DecodeConfig()
    layout = layout or default_layout()
    kind = resolve_kind(kind)
    if isinstance(kind, FeatureSetKind):
        model = train(train_taps, val_taps, kind, layout, train_cfg)
        folds = [{"C": model.C, **model.meta}]
    else:
        model, folds = baseline_model(kind), []
    results = {u: _evaluate_user(layout, model, lm, t, cfg, lm_toggle)
               for u, t in by_user(test_taps).items()}
    kind_name = kind.value if isinstance(kind, FeatureSetKind) else kind
    return _assemble(condition or _condition_name(kind, cfg), kind_name, results, cfg, folds,
                     {"protocol": "fixed", "layout": layout.fingerprint}, keep_traces)


def ensemble_eval(models: Sequence[KeyScorer], test_taps: Sequence[TapSample],
                  cfg: DecodeConfig | None = None, *, layout: KeyboardLayout | None = None,
                  lm: CharLM | None = None, condition: str = "ensemble") -> EvalReport:
    """Per test user, the CER averaged over several independently trained models."""
    if not models:
        raise HarnessError("no models to average")
    cfg = cfg or DecodeConfig()
    layout = layout or default_layout()
    per_model = [
        {u: _evaluate_user(layout, m, lm, t, cfg, False) for u, t in by_user(test_taps).items()}
        for m in models
    ]
    users = list(per_model[0])
    avg = {u: _UserResult(float(np.mean([pm[u].cer for pm in per_model])), None, None,
                          float(np.mean([pm[u].wer for pm in per_model])), per_model[0][u].wpm,
                          per_model[0][u].traces)
           for u in users}
    kinds = sorted({getattr(m, "name", "?") for m in models})
    return _assemble(condition, "/".join(kinds), avg, cfg, [],
                     {"protocol": "ensemble", "n_models": len(models)}, False)


__all__ = [
    "FoldPlan", "plan_folds", "EvalReport", "ComparisonReport", "compare", "loocv",
    "fixed_split", "ensemble_eval", "reference_contexts", "resolve_kind", "HarnessError",
]

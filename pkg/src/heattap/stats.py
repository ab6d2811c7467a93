"""Paired significance statistics over per-user values.

Everything is computed here from first principles (math + numpy): the
Student-t tail comes from the regularized incomplete beta function evaluated
by its continued fraction, and the Wilcoxon null distribution is enumerated
exactly by dynamic programming for small samples.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

EXACT_WILCOXON_MAX_N = 25
_EPS = 1e-15
_TINY = 1e-300


class StatsError(ValueError):
    pass


def _betacf(a: float, b: float, x: float, max_iter: int = 500) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise StatsError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise StatsError("betainc needs 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast on this side of the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if df <= 0:
        raise StatsError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 < df:  # df / (df + t^2) rounds toward 1 here; work with the complement
        return 1.0 - betainc(0.5, df / 2.0, t2 / (df + t2))
    return betainc(df / 2.0, 0.5, df / (df + t2))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def paired_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    d = _diffs(a, b)
    n = len(d)
    mean, sd = float(d.mean()), float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    return t, t_two_sided_p(t, n - 1)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float | None:
    """mean(a - b) / sd(a - b); None when the differences have zero spread but nonzero mean."""
    d = _diffs(a, b)
    mean, sd = float(d.mean()), float(d.std(ddof=1))
    if sd == 0.0:
        return 0.0 if mean == 0.0 else None
    return mean / sd


def signed_ranks(diffs) -> tuple[np.ndarray, np.ndarray]:
    """(ranks of |d| with ties averaged, signs) after dropping zero differences."""
    d = np.asarray(diffs, dtype=float)
    d = d[d != 0]
    order = np.argsort(np.abs(d), kind="stable")
    absd = np.abs(d)[order]
    ranks = np.empty(len(d))
    i = 0
    while i < len(d):
        j = i
        while j + 1 < len(d) and absd[j + 1] == absd[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks, np.sign(d)


def _exact_cdf(ranks: np.ndarray, w: float) -> float:
    """P(W+ <= w) under the sign-flip null, counting over doubled (integer) ranks."""
    r2 = np.rint(2 * ranks).astype(int)
    counts = np.zeros(int(r2.sum()) + 1)
    counts[0] = 1.0
    for r in r2:  # every doubled rank is >= 2
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r]
        counts += shifted
    total = 2.0 ** len(r2)
    return float(counts[: int(math.floor(2 * w + 1e-9)) + 1].sum() / total)


def wilcoxon(a: Sequence[float], b: Sequence[float],
             exact_max_n: int = EXACT_WILCOXON_MAX_N) -> tuple[float, float, str]:
    """Two-sided signed-rank test; returns (W = min(W+, W-), p, method)."""
    ranks, signs = signed_ranks(_diffs(a, b))
    n = len(ranks)
    if n == 0:
        return 0.0, 1.0, "exact"
    w_plus = float(ranks[signs > 0].sum())
    w_minus = float(ranks[signs < 0].sum())
    w = min(w_plus, w_minus)
    if n <= exact_max_n:
        return w, min(1.0, 2.0 * _exact_cdf(ranks, w)), "exact"
    mean = n * (n + 1) / 4.0
    # tie correction on the variance
    _, tie_sizes = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float((tie_sizes ** 3 - tie_sizes).sum()) / 48.0
    if var <= 0:
        return w, 1.0, "normal"
    z = (w - mean) / math.sqrt(var)
    return w, min(1.0, 2.0 * normal_sf(abs(z))), "normal"


@dataclass(frozen=True)
class PairedStats:
    n: int
    t: float
    p: float
    d: float | None
    W: float
    p_w: float
    wilcoxon_method: str
    note: str = ""

    def to_json(self) -> dict:
        out = asdict(self)
        if math.isinf(self.t):
            out["t"] = "inf" if self.t > 0 else "-inf"
        return out

    @classmethod
    def from_json(cls, d: dict) -> "PairedStats":
        d = dict(d)
        if isinstance(d["t"], str):
            d["t"] = float(d["t"])
        return cls(**d)


def paired_stats(a: Sequence[float], b: Sequence[float]) -> PairedStats:
    d = _diffs(a, b)
    t, p = paired_t(a, b)
    eff = cohens_d(a, b)
    W, p_w, method = wilcoxon(a, b)
    note = "zero-variance differences: effect size undefined" if eff is None else ""
    return PairedStats(len(d), t, p, eff, W, p_w, method, note)


def _diffs(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError("paired samples must be 1-D and of equal length")
    if len(a) < 2:
        raise StatsError("need at least two pairs")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise StatsError("non-finite values")
    return a - b

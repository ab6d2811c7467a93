import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heattap.stats import (PairedStats, StatsError, betainc, paired_stats, signed_ranks,
                           t_two_sided_p, wilcoxon)

scipy_stats = pytest.importorskip("scipy.stats")
scipy_special = pytest.importorskip("scipy.special")


def test_worked_five_pair_example():
    # diffs 1..5: mean 3, sd sqrt(2.5); t = 3 / (sqrt(2.5)/sqrt(5)) = 3 sqrt(2);
    # d = 3 / sqrt(2.5); all ranks positive so W = 0 and exact p = 2 / 2^5
    s = paired_stats([2, 4, 6, 8, 10], [1, 2, 3, 4, 5])
    assert s.t == pytest.approx(3 * math.sqrt(2), rel=1e-12)
    assert s.d == pytest.approx(3 / math.sqrt(2.5), rel=1e-12)
    assert s.W == 0 and s.p_w == pytest.approx(0.0625, abs=1e-15)
    assert s.p == pytest.approx(scipy_stats.t.sf(3 * math.sqrt(2), 4) * 2, rel=1e-10)


def test_identical_samples():
    s = paired_stats([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (s.t, s.d, s.p, s.p_w) == (0.0, 0.0, 1.0, 1.0)


def test_constant_difference_flags_undefined_effect():
    s = paired_stats([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
    assert s.d is None and "undefined" in s.note and math.isinf(s.t)
    assert PairedStats.from_json(s.to_json()) == s


@given(st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0, 1))
def test_betainc_against_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(scipy_special.betainc(a, b, x), abs=1e-11)


@given(st.floats(-50, 50), st.integers(1, 200))
def test_t_tail_against_scipy(t, df):
    assert t_two_sided_p(t, df) == pytest.approx(2 * scipy_stats.t.sf(abs(t), df), abs=1e-11)


@given(st.integers(2, 40), st.integers(0, 2 ** 31))
def test_paired_tests_against_scipy(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    b = a + rng.normal(0.2, 1.0, size=n)
    s = paired_stats(a, b)
    ref = scipy_stats.ttest_rel(a, b)
    assert s.t == pytest.approx(ref.statistic, rel=1e-9)
    assert s.p == pytest.approx(ref.pvalue, abs=1e-10)
    method = "exact" if n <= 25 else "approx"
    w = scipy_stats.wilcoxon(a, b, method=method, correction=False)
    assert s.W == w.statistic and s.p_w == pytest.approx(w.pvalue, abs=1e-10)
    assert s.wilcoxon_method == ("exact" if n <= 25 else "normal")


def test_ranks_average_ties_and_drop_zeros():
    r, s = signed_ranks([0, 1, -1, 2, 0, 3, -3])
    np.testing.assert_array_equal(r, [1.5, 1.5, 3, 4.5, 4.5])
    np.testing.assert_array_equal(s, [1, -1, 1, 1, -1])


def brute_wilcoxon_p(ranks, w):
    """Enumerate every sign assignment."""
    hits = 0
    for mask in range(2 ** len(ranks)):
        plus = sum(r for i, r in enumerate(ranks) if mask >> i & 1)
        hits += min(plus, sum(ranks) - plus) <= w + 1e-9
    return hits / 2 ** len(ranks)


@given(st.lists(st.integers(-4, 4), min_size=2, max_size=10))
def test_exact_wilcoxon_with_ties_by_enumeration(diffs):
    W, p, _ = wilcoxon(np.array(diffs, float), np.zeros(len(diffs)))
    ranks, _ = signed_ranks(diffs)
    if len(ranks):
        assert p == pytest.approx(min(1.0, brute_wilcoxon_p(list(ranks), W)), abs=1e-12)


def test_input_errors():
    with pytest.raises(StatsError):
        paired_stats([1.0], [2.0])
    with pytest.raises(StatsError):
        paired_stats([1.0, 2.0], [1.0])
    with pytest.raises(StatsError):
        paired_stats([1.0, float("nan")], [1.0, 2.0])

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heattap.decoder import (MODEL_WITH_LM, MODEL_WITHOUT_LM, NOT_AMBIGUOUS, DecodeConfig,
                             bucket_shares, candidate_filter, decode, decode_many, fuse,
                             is_unambiguous)
from heattap.features import TapSample
from heattap.layout import KEYS, K, Point, containing_or_closest_key, key_index
from heattap.spatial import DistanceModel, normalized_distances

NONE = DecodeConfig()
LM_ONLY = DecodeConfig(use_lm=True)


class FixedLM:
    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        self.calls = []

    def next_key_probs(self, context):
        self.calls.append(context)
        return self.probs


class FixedScorer:
    name = "fixed"

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    def key_proba(self, layout, taps):
        return np.tile(self.probs, (len(taps), 1))


def dist(**mass):
    p = np.zeros(K)
    for k, v in mass.items():
        p[key_index(k)] = v
    return p


def center(layout, ch, fx=0.0, fy=0.0):
    key = layout.keys[key_index(ch)]
    x, y = key.center
    return TapSample(Point(x + fx * key.width, y + fy * key.height), None)


# -- skipping unambiguous cases -----------------------------------------------


def test_suc_strict_thresholds(layout):
    assert is_unambiguous(layout, center(layout, "g")) == key_index("g")
    assert is_unambiguous(layout, center(layout, "g", 0.25, 0)) is None
    assert is_unambiguous(layout, center(layout, "g", 0, -0.25)) is None
    assert is_unambiguous(layout, center(layout, "g", 0.2, -0.2)) == key_index("g")
    assert is_unambiguous(layout, center(layout, "g", 0.2499, 0.2499)) == key_index("g")
    # SPACE uses its own (wide) size
    assert is_unambiguous(layout, center(layout, "SPACE", 0.24, 0)) == key_index("SPACE")


def test_suc_bypasses_model_and_lm(layout):
    scorer = FixedScorer(dist(q=1.0))
    lm = FixedLM(dist(q=1.0))
    k, tr = decode(layout, scorer, lm, center(layout, "g", 0.1, 0.1), "th",
                   DecodeConfig.all_on())
    assert k == key_index("g") and tr.bucket == NOT_AMBIGUOUS and tr.p_sm is None
    assert lm.calls == []


# -- neighbour filtering ------------------------------------------------------


def test_candidate_set_for_a_tap_on_x(layout):
    got = {KEYS[k] for k in candidate_filter(layout, center(layout, "x"))}
    assert got == {"s", "d", "f", "z", "x", "c", "SPACE"}


def test_candidate_set_for_corner_key(layout):
    got = {KEYS[k] for k in candidate_filter(layout, center(layout, "q"))}
    assert got <= {"q", "w", "a", "s"} and "q" in got


@given(st.floats(0, 1440), st.floats(0, 854))
def test_candidates_contain_on_key(x, y):
    from heattap.layout import default_layout
    layout = default_layout()
    p = Point(x, y)
    c = candidate_filter(layout, p)
    assert containing_or_closest_key(layout, p) in c and c == sorted(c)


# -- fusion logic -------------------------------------------------------------


def test_product_argmax_mid_word(layout):
    tap = center(layout, "h", 0.45, 0)
    k, tr = fuse(layout, dist(h=0.4, j=0.6), tap, "s", FixedLM(dist(h=0.9, j=0.1)), LM_ONLY)
    assert KEYS[k] == "h" and tr.bucket == MODEL_WITH_LM


def test_period_prediction_bypasses_lm(layout):
    lm = FixedLM(dist(e=0.99, PERIOD=0.01))
    k, tr = fuse(layout, dist(PERIOD=0.7, e=0.3), center(layout, "PERIOD"), "th", lm, LM_ONLY)
    assert KEYS[k] == "PERIOD" and tr.bucket == MODEL_WITHOUT_LM and lm.calls == []


@pytest.mark.parametrize("context", ["", "the "])
def test_word_start_bypasses_lm(layout, context):
    lm = FixedLM(dist(j=1.0))
    k, tr = fuse(layout, dist(h=0.6, j=0.4), center(layout, "h"), context, lm, LM_ONLY)
    assert KEYS[k] == "h" and tr.bucket == MODEL_WITHOUT_LM and tr.p_lm is None


def test_uninformative_lm_is_ignored(layout):
    k, tr = fuse(layout, dist(h=0.6, j=0.4), center(layout, "h"), "s",
                 FixedLM(np.full(K, 1 / K)), LM_ONLY)
    assert KEYS[k] == "h" and tr.bucket == MODEL_WITHOUT_LM


def test_no_lm_or_lm_off(layout):
    for lm, cfg in ((None, LM_ONLY), (FixedLM(dist(j=1.0)), NONE)):
        k, tr = fuse(layout, dist(h=0.6, j=0.4), center(layout, "h"), "s", lm, cfg)
        assert KEYS[k] == "h" and tr.bucket == MODEL_WITHOUT_LM


def test_ties_go_to_canonical_order(layout):
    k, _ = fuse(layout, dist(a=0.5, b=0.5), center(layout, "a"), "", None, NONE)
    assert KEYS[k] == "a"


def test_filter_restricts_and_renormalizes(layout):
    p = dist(x=0.2, p=0.8)  # p is far from a tap on x
    k, tr = fuse(layout, p, center(layout, "x"), "", None, DecodeConfig(use_filter=True))
    assert KEYS[k] == "x"
    assert sum(tr.p_sm) == pytest.approx(1.0)
    assert set(tr.candidates) == {"s", "d", "f", "z", "x", "c", "SPACE"}


def test_filter_falls_back_to_uniform(layout):
    k, tr = fuse(layout, dist(p=1.0), center(layout, "x"), "", None, DecodeConfig(use_filter=True))
    assert KEYS[k] == "c" and tr.p_sm == [1 / 7] * 7  # uniform; first candidate in key order


@given(st.floats(0.01, 100.0), st.integers(0, 2 ** 31))
def test_lm_scale_invariance(scale, seed):
    from heattap.layout import default_layout
    layout = default_layout()
    rng = np.random.default_rng(seed)
    p_sm, p_lm = rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(K))
    tap = center(layout, "g", 0.4, 0.4)
    a, _ = fuse(layout, p_sm, tap, "ab", FixedLM(p_lm), LM_ONLY)
    b, _ = fuse(layout, p_sm, tap, "ab", FixedLM(p_lm * scale), LM_ONLY)
    assert a == b


def test_decoded_key_within_filter(layout, small_taps):
    rng = np.random.default_rng(0)
    lm = FixedLM(rng.dirichlet(np.ones(K)))
    cfg = DecodeConfig.all_on()
    keys, traces = decode_many(layout, DistanceModel(), lm, small_taps[:300],
                               ["ab"] * 300, cfg)
    for t, k in zip(small_taps[:300], keys):
        assert k in candidate_filter(layout, t)
    shares = bucket_shares(traces)
    assert sum(shares.values()) == pytest.approx(100.0)


def test_distance_model_plain_decoding_is_nearest_key(layout, small_taps):
    keys, _ = decode_many(layout, DistanceModel(), None, small_taps[:200], [""] * 200, NONE)
    for t, k in zip(small_taps[:200], keys):
        assert k == int(np.argmin(normalized_distances(layout, t.centroid)))


def test_config_validation():
    with pytest.raises(ValueError):
        DecodeConfig(suc_fraction=0.5)
    with pytest.raises(ValueError):
        DecodeConfig(window_x=0)
    with pytest.raises(ValueError):
        decode_many(None, None, None, [1], [], NONE)

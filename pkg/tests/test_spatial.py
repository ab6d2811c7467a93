import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heattap.features import FeatureSetKind, Normalizer, TapSample
from heattap.layout import K, Point, key_index, normalized_distances
from heattap.spatial import (DistanceModel, LogRegModel, ModelError, OnKeyModel, TrainConfig,
                             TrainingError, cross_entropy, distance_proba, fit_weights,
                             gaussian_pdf, loss_and_gradient, onkey_predict, softmax, train)


def random_problem(rng, n=None, d=None):
    n = n or int(rng.integers(1, 40))
    d = d or int(rng.integers(1, 12))
    W = rng.normal(scale=0.5, size=(K, d))
    b = rng.normal(scale=0.5, size=K)
    X = rng.uniform(-1, 1, size=(n, d))
    y = rng.integers(0, K, size=n)
    return W, b, X, y


def numeric_grad(f, x, h=1e-4):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def test_gradient_matches_central_differences(rng):
    for _ in range(20):
        W, b, X, y = random_problem(rng)
        reg = float(rng.uniform(0, 0.5))
        _, gW, gb = loss_and_gradient(W, b, X, y, reg)
        nW = numeric_grad(lambda w: loss_and_gradient(w, b, X, y, reg)[0], W)
        nb = numeric_grad(lambda v: loss_and_gradient(W, v, X, y, reg)[0], b)
        assert rel_err(gW, nW) <= 1e-5 and rel_err(gb, nb) <= 1e-5


def test_loss_by_hand(rng):
    W, b, X, y = random_problem(rng, n=5, d=3)
    p = softmax(X @ W.T + b)
    expected = -np.mean(np.log(p[np.arange(5), y])) + 0.5 * 0.3 * np.sum(W ** 2)
    assert loss_and_gradient(W, b, X, y, 0.3)[0] == pytest.approx(expected, rel=1e-12)


def test_bias_is_not_penalized(rng):
    W, b, X, y = random_problem(rng)
    l0 = loss_and_gradient(W, b, X, y, 0.0)
    l1 = loss_and_gradient(W, b, X, y, 2.0)
    np.testing.assert_allclose(l0[2], l1[2])


@given(st.integers(1, 50), st.integers(1, 10), st.integers(0, 2 ** 31))
def test_zero_model_loss_is_log_k(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, K, size=n)
    assert cross_entropy(np.zeros((K, d)), np.zeros(K), X, y) == pytest.approx(math.log(28), abs=1e-9)


def test_bad_labels():
    with pytest.raises(ModelError):
        loss_and_gradient(np.zeros((K, 2)), np.zeros(K), np.zeros((1, 2)), np.array([28]), 0.0)
    with pytest.raises(ModelError):
        loss_and_gradient(np.zeros((K, 2)), np.zeros(K), np.zeros((0, 2)), np.array([], int), 0.0)


def test_float32_path_close_to_float64(rng):
    W, b, X, y = random_problem(rng, n=200, d=10)
    a = loss_and_gradient(W, b, X, y, 0.1)
    c = loss_and_gradient(W, b, X.astype(np.float32), y, 0.1)
    assert a[0] == pytest.approx(c[0], rel=1e-5)
    np.testing.assert_allclose(a[1], c[1], atol=1e-5)


def test_matches_scikit_learn_objective(rng):
    sklearn = pytest.importorskip("sklearn.linear_model")
    n, d = 600, 4
    X = rng.uniform(-1, 1, size=(n, d))
    y = np.argmax(X @ rng.normal(size=(d, K)) + rng.normal(scale=0.5, size=(n, K)), axis=1)
    C = 1.5
    W, b, _ = fit_weights(X, y, TrainConfig().reg(C, n), TrainConfig(gtol=1e-9, max_iter=5000))
    ref = sklearn.LogisticRegression(C=C, tol=1e-10, max_iter=10_000).fit(X, y)
    # classes missing from y get no column in scikit-learn; compare the present ones
    ours = softmax(X @ W.T + b)[:, ref.classes_]
    ours /= ours.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(ours, ref.predict_proba(X), atol=2e-4)


def separable_taps(layout, rng, n=500):
    keys = [key_index(c) for c in "qgm"]
    taps = []
    for i in range(n):
        k = keys[i % 3]
        cx, cy = layout.keys[k].center
        p = Point(cx + rng.uniform(-20, 20), cy + rng.uniform(-20, 20))
        taps.append(TapSample(p, None, label=k, user_id=f"u{i % 5}"))
    return taps


def test_trains_separable_three_keys(layout, rng):
    taps = separable_taps(layout, rng)
    model = train(taps, taps[:60], "C", layout, TrainConfig(max_iter=1000))
    pred = np.argmax(model.key_proba(layout, taps), axis=1)
    assert np.mean(pred == [t.label for t in taps]) >= 0.99
    assert model.meta["iterations"] <= 1000


def test_selection_by_validation_accuracy_prefers_small_C(layout, rng):
    taps = separable_taps(layout, rng, 90)
    model = train(taps, taps, "C", layout, TrainConfig(C_grid=(2.0, 0.5, 1.0, 0.5)))
    assert model.C == 0.5  # all reach perfect accuracy; ties keep the smallest C


def test_warm_start_needs_same_kind(layout, rng):
    taps = separable_taps(layout, rng, 60)
    m = train(taps, taps, "C", layout)
    with pytest.raises(TrainingError):
        train(taps, taps, "Ho", layout, init=m)
    with pytest.raises(TrainingError):
        train([], taps, "C", layout)
    with pytest.raises(TrainingError):
        train([TapSample(Point(1, 1), None)], taps, "C", layout)


def test_argmax_invariant_to_logit_scaling(rng):
    z = rng.normal(size=(50, K))
    for s in (0.1, 3.0, 1e3):
        assert (np.argmax(softmax(s * z), 1) == np.argmax(z, 1)).all()


def test_round_trip_is_bit_identical(layout, small_taps, tmp_path):
    model = train(small_taps[:400], small_taps[400:600], "CHo", layout, TrainConfig(max_iter=50))
    p = tmp_path / "m.json"
    model.save(p)
    again = LogRegModel.load(p, layout)
    assert np.array_equal(model.key_proba(layout, small_taps[:50]),
                          again.key_proba(layout, small_taps[:50]))
    assert again.C == model.C and again.kind == FeatureSetKind.CHo


def test_fingerprint_mismatch_rejected(layout, small_taps):
    model = LogRegModel("C", np.zeros((K, 56)), np.zeros(K), Normalizer(np.zeros(56), np.ones(56)),
                        1.0, "not-this-layout")
    with pytest.raises(ModelError):
        model.key_proba(layout, small_taps[:1])
    with pytest.raises(ModelError):
        LogRegModel.from_json(model.to_json(), layout)
    with pytest.raises(ModelError):
        LogRegModel("C", np.zeros((K, 5)), np.zeros(K), Normalizer(np.zeros(5), np.ones(5)), 1.0, "")


@given(st.floats(0, 1440), st.floats(0, 854))
def test_distance_ordering_follows_distance(x, y):
    from heattap.layout import default_layout
    layout = default_layout()
    p = Point(x, y)
    probs = distance_proba(layout, p)
    d = normalized_distances(layout, p)
    assert probs.sum() == pytest.approx(1.0)
    order = np.argsort(d, kind="stable")
    assert (np.diff(probs[order]) <= 1e-15).all()


def test_distance_proba_matches_normalized_pdf(layout):
    p = Point(700, 500)
    d = normalized_distances(layout, p)
    s = np.array([gaussian_pdf(v, 0.03) for v in d])
    np.testing.assert_allclose(distance_proba(layout, p), s / s.sum(), rtol=1e-9, atol=1e-300)
    with pytest.raises(ValueError):
        distance_proba(layout, p, sigma=0)


def test_space_inner_rule_in_distance_baseline(layout):
    sp = layout.keys[key_index("SPACE")]
    y = sp.center[1]
    for x in (sp.left + 67.5, sp.center[0], sp.right - 67.5):
        assert normalized_distances(layout, Point(x, y))[key_index("SPACE")] == 0.0
    assert normalized_distances(layout, Point(sp.left + 60, y))[key_index("SPACE")] > 0


def test_baseline_scorers(layout, small_taps):
    taps = small_taps[:20]
    oh = OnKeyModel().key_proba(layout, taps)
    assert (oh.sum(1) == 1).all()
    assert [int(np.argmax(r)) for r in oh] == [onkey_predict(layout, t) for t in taps]
    dm = DistanceModel().key_proba(layout, taps)
    np.testing.assert_allclose(dm[3], distance_proba(layout, taps[3]))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(C_grid=())
    with pytest.raises(ValueError):
        TrainConfig(penalty_scale="other")
    assert TrainConfig(penalty_scale="literal").reg(2.0, 100) == 0.5
    assert TrainConfig().reg(2.0, 100) == 1 / 200

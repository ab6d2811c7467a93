"""Spatial models: softmax regression over key classes plus the On-key and Distance baselines.

Every model exposes ``key_proba(layout, taps) -> (N, 28)`` so the decoder can
treat them uniformly.  On-key is categorical; its "distribution" is one-hot.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import (FeatureSetKind, Normalizer, TapSample, feature_matrix,
                       raw_feature_matrix)
from .layout import K, KeyboardLayout, Point, containing_or_closest_key, normalized_distances
from .optim import lbfgs

log = logging.getLogger(__name__)

MODEL_SCHEMA = 1


class ModelError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


_LOGIT_FLOOR = {np.float32: np.float32(-60.0), np.float64: -600.0}


def loss_and_gradient(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray,
                      reg: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus ``reg * ||W||_F^2 / 2`` and its exact gradient.

    The bias is not penalized.  ``y`` holds class indices.
    """
    y = np.asarray(y)
    if y.size == 0:
        raise ModelError("empty batch")
    if y.min() < 0 or y.max() >= W.shape[0]:
        raise ModelError("label outside the key classes")
    n = len(y)
    # class-major (K, N) logits keep the per-sample reductions contiguous
    z = W.astype(X.dtype, copy=False) @ X.T
    z += b[:, None].astype(X.dtype)
    z -= z.max(axis=0)
    # keep exp() and everything downstream out of subnormal range, which is
    # very slow on x86; the dropped mass is below e^-60 relative
    np.maximum(z, _LOGIT_FLOOR[z.dtype.type], out=z)
    cols = np.arange(n)
    picked = z[y, cols].astype(float)
    np.exp(z, out=z)
    total = z.sum(axis=0, dtype=float)
    ce = float(np.mean(np.log(total) - picked))
    z /= total.astype(z.dtype)
    z[y, cols] -= 1.0
    z /= n
    loss = ce + 0.5 * reg * float(np.sum(W * W))
    grad_W = (z @ X).astype(float) + reg * W
    return loss, grad_W, z.sum(axis=1, dtype=float)


def cross_entropy(W, b, X, y) -> float:
    return loss_and_gradient(W, b, X, y, 0.0)[0]


@dataclass
class TrainConfig:
    C_grid: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    max_iter: int = 1000
    gtol: float = 1e-6
    ftol: float = 0.0
    history: int = 10
    seed: int = 0
    # "per_sample": penalty ||W||^2 / (2 C N), the objective scikit-learn minimizes
    # (rescaled by 1 / (C N)).  "literal": penalty ||W||^2 / (2 C).
    penalty_scale: str = "per_sample"
    warm_start: bool = True
    # float32 halves the cost of the two (N, d) products; gradients stay float64 sums
    dtype: str = "float64"

    def __post_init__(self):
        self.C_grid = tuple(float(c) for c in self.C_grid)
        if not self.C_grid or min(self.C_grid) <= 0:
            raise ValueError("C grid must be non-empty and positive")
        if self.gtol <= 0:
            raise ValueError("gtol must be positive")
        if self.penalty_scale not in ("per_sample", "literal"):
            raise ValueError(f"unknown penalty_scale {self.penalty_scale!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    def reg(self, C: float, n: int) -> float:
        return 1.0 / (C * n) if self.penalty_scale == "per_sample" else 1.0 / C


@dataclass(eq=False)
class LogRegModel:
    """Softmax regression ``softmax(W f + b)`` on normalized features of one kind."""

    kind: FeatureSetKind
    weights: np.ndarray
    bias: np.ndarray
    normalizer: Normalizer
    C: float
    layout_fingerprint: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = FeatureSetKind(self.kind)
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.shape != (K, self.kind.dim) or self.bias.shape != (K,):
            raise ModelError(f"{self.kind.value} model needs W {(K, self.kind.dim)} and b ({K},)")
        if len(self.normalizer) != self.kind.dim:
            raise ModelError("normalizer length does not match the feature dimension")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ModelError("non-finite parameters")

    name = property(lambda self: self.kind.value)

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Key distribution(s) for normalized feature vector(s)."""
        f = np.asarray(features, dtype=float)
        if f.shape[-1] != self.kind.dim:
            raise ModelError(f"expected {self.kind.dim} features, got {f.shape[-1]}")
        if not np.isfinite(f).all():
            raise ModelError("non-finite features")
        return softmax(f @ self.weights.T + self.bias)

    def features(self, layout: KeyboardLayout, taps: Sequence[TapSample]) -> np.ndarray:
        return feature_matrix(layout, self.kind, taps, self.normalizer)

    def key_proba(self, layout: KeyboardLayout, taps: Sequence[TapSample]) -> np.ndarray:
        if layout.fingerprint != self.layout_fingerprint:
            raise ModelError("model was trained on a different layout")
        return self.predict_proba(self.features(layout, taps))

    def to_json(self) -> dict:
        return {
            "schema": MODEL_SCHEMA, "kind": self.kind.value, "C": self.C,
            "layout_fingerprint": self.layout_fingerprint,
            "normalizer": self.normalizer.to_json(),
            "weights": self.weights.tolist(), "bias": self.bias.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict, layout: KeyboardLayout | None = None) -> "LogRegModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ModelError(f"unsupported model schema {d.get('schema')}")
        if layout is not None and d["layout_fingerprint"] != layout.fingerprint:
            raise ModelError("model layout fingerprint does not match the layout")
        return cls(d["kind"], d["weights"], d["bias"], Normalizer.from_json(d["normalizer"]),
                   float(d["C"]), d["layout_fingerprint"], d.get("meta", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path, layout: KeyboardLayout | None = None) -> "LogRegModel":
        return cls.from_json(json.loads(Path(path).read_text()), layout)


SpatialModel = LogRegModel


def _labels(taps: Sequence[TapSample]) -> np.ndarray:
    if any(t.label is None for t in taps):
        raise TrainingError("every training/validation tap needs a label")
    return np.array([t.label for t in taps], dtype=int)


def fit_weights(X: np.ndarray, y: np.ndarray, reg: float, cfg: TrainConfig,
                init: np.ndarray | None = None):
    """Minimize the regularized loss over (W, b); returns (W, b, OptimResult)."""
    n, d = X.shape
    split = K * d
    X = np.ascontiguousarray(X, dtype=cfg.dtype)

    def objective(theta):
        W = theta[:split].reshape(K, d)
        loss, gW, gb = loss_and_gradient(W, theta[split:], X, y, reg)
        return loss, np.concatenate([gW.ravel(), gb])

    x0 = np.zeros(split + K) if init is None else init
    try:
        res = lbfgs(objective, x0, max_iter=cfg.max_iter, gtol=cfg.gtol, ftol=cfg.ftol,
                    history=cfg.history)
    except FloatingPointError as e:
        raise TrainingError(str(e)) from e
    if not np.isfinite(res.fun):
        raise TrainingError("loss became non-finite; check feature scaling")
    return res.x[:split].reshape(K, d), res.x[split:], res


def train(train_taps: Sequence[TapSample], val_taps: Sequence[TapSample],
          kind: FeatureSetKind | str, layout: KeyboardLayout,
          cfg: TrainConfig | None = None, init: LogRegModel | None = None) -> LogRegModel:
    """Fit one model per C (normalizer fitted on training taps only) and keep the best.

    Selection is by validation top-1 accuracy; ties keep the smaller C.  With
    ``cfg.warm_start`` each C starts from the previous solution, and the first
    from ``init`` when given (e.g. the neighbouring cross-validation fold).
    """
    cfg = cfg or TrainConfig()
    kind = FeatureSetKind(kind)
    if not train_taps or not val_taps:
        raise TrainingError("training and validation sets must be non-empty")
    if init is not None and cfg.warm_start and FeatureSetKind(init.kind) != kind:
        raise TrainingError("warm-start model has a different feature kind")
    y_tr, y_va = _labels(train_taps), _labels(val_taps)
    raw_tr = raw_feature_matrix(layout, kind, train_taps)
    norm = Normalizer.fit(raw_tr)
    X_tr = norm.apply(raw_tr)
    X_va = feature_matrix(layout, kind, val_taps, norm)

    best = None
    theta = None
    if init is not None and cfg.warm_start:
        theta = np.concatenate([init.weights.ravel(), init.bias])
    for C in sorted(set(cfg.C_grid)):
        W, b, res = fit_weights(X_tr, y_tr, cfg.reg(C, len(y_tr)), cfg,
                                init=theta if cfg.warm_start else None)
        theta = np.concatenate([W.ravel(), b])
        acc = float(np.mean(np.argmax(X_va @ W.T + b, axis=1) == y_va))
        log.info("%s C=%g: %d iterations (%s), val acc %.4f", kind.value, C, res.n_iter,
                 res.message, acc)
        if best is None or acc > best[0]:
            meta = {
                "iterations": res.n_iter, "converged": res.converged, "message": res.message,
                "train_loss": cross_entropy(W, b, X_tr, y_tr),
                "val_loss": cross_entropy(W, b, X_va, y_va),
                "val_accuracy": acc, "penalty_scale": cfg.penalty_scale,
                "n_train": len(y_tr), "n_val": len(y_va),
            }
            best = (acc, C, W, b, meta)
    _, C, W, b, meta = best
    return LogRegModel(kind, W, b, norm, C, layout.fingerprint, meta)


# -- baselines ---------------------------------------------------------------


def onkey_predict(layout: KeyboardLayout, tap: TapSample) -> int:
    return containing_or_closest_key(layout, tap.centroid)


def distance_proba(layout: KeyboardLayout, tap: TapSample | Point, sigma: float = 0.03) -> np.ndarray:
    """Gaussian-pdf scores of the normalized key distances, normalized to sum to 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    p = tap.centroid if isinstance(tap, TapSample) else tap
    d = normalized_distances(layout, p)
    # The pdf's constant factor cancels in the normalization; work in log space.
    return softmax(-(d ** 2) / (2 * sigma ** 2))


def gaussian_pdf(d: float, sigma: float) -> float:
    return math.exp(-d * d / (2 * sigma * sigma)) / math.sqrt(2 * math.pi * sigma * sigma)


@dataclass(frozen=True)
class DistanceModel:
    sigma: float = 0.03
    name: str = "Distance"

    def key_proba(self, layout: KeyboardLayout, taps: Sequence[TapSample]) -> np.ndarray:
        return np.array([distance_proba(layout, t, self.sigma) for t in taps]).reshape(-1, K)


@dataclass(frozen=True)
class OnKeyModel:
    name: str = "On-key"

    def key_proba(self, layout: KeyboardLayout, taps: Sequence[TapSample]) -> np.ndarray:
        out = np.zeros((len(taps), K))
        for i, t in enumerate(taps):
            out[i, onkey_predict(layout, t)] = 1.0
        return out

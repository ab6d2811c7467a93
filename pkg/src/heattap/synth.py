"""Seeded synthetic taps whose heatmaps carry more information than their centroids.

Each tap starts from the intended key's center, shifted by the user's systematic
offset and per-tap motor scatter; that is the true contact point.  The heatmap
is a Gaussian blob centered on the contact.  The reported centroid is the
contact corrupted by a constant report bias plus isotropic noise, which is the
only information a centroid-only decoder sees.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .align import TypingEvent
from .features import TapSample
from .layout import (FRAME_ROWS, GRID_COLS, GRID_ROWS, KeyboardLayout, Point,
                     key_index)


class SynthError(ValueError):
    pass


def default_prompts() -> list[str]:
    text = resources.files("heattap").joinpath("data/prompts_en.txt").read_text()
    return [line.strip() for line in text.splitlines() if line.strip()]


@dataclass
class SynthConfig:
    seed: int = 0
    n_users: int = 24
    taps_per_user: int = 2000
    # Per-user systematic offset is drawn once per user from N(mean, std^2) per axis.
    user_offset_mean: tuple[float, float] = (0.0, 0.0)
    user_offset_std: tuple[float, float] = (8.0, 12.0)
    # calibrated: scripts/calibrate_synth.py puts the Distance baseline near 5.6% CER
    scatter_x: float = 0.2 * 135
    scatter_y: float = 0.2 * 206
    report_noise: float = 0.15 * 135
    report_bias: tuple[float, float] = (0.0, 0.1 * 206)
    peak: float = 200.0
    blob_radius: float = 60.0
    intensity_noise: int = 3
    inter_tap_ms: tuple[float, float] = (180.0, 320.0)
    prompts: list[str] = field(default_factory=default_prompts)

    def __post_init__(self):
        if min(self.scatter_x, self.scatter_y, self.report_noise, self.blob_radius) <= 0:
            raise SynthError("all spreads must be positive")
        if not 0 < self.peak <= 255:
            raise SynthError("peak must lie in (0, 255]")
        if self.n_users < 1 or self.taps_per_user < 1:
            raise SynthError("need at least one user and one tap")
        if self.intensity_noise < 0:
            raise SynthError("intensity_noise must be >= 0")
        if not self.prompts:
            raise SynthError("no prompts to type")
        self.user_offset_mean = tuple(self.user_offset_mean)
        self.user_offset_std = tuple(self.user_offset_std)
        self.report_bias = tuple(self.report_bias)
        self.inter_tap_ms = tuple(self.inter_tap_ms)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthConfig":
        return cls(**json.loads(Path(path).read_text()))


def prompt_keys(prompt: str) -> list[int]:
    try:
        return [key_index(c) for c in prompt.lower()]
    except ValueError as e:
        raise SynthError(f"prompt {prompt!r} has characters outside the key set") from e


def render_heatmaps(layout: KeyboardLayout, contacts: np.ndarray, cfg: SynthConfig,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """(n, 39, 18) int16 frames with a blob at each contact; upper rows stay zero."""
    contacts = np.asarray(contacts, dtype=float).reshape(-1, 2)
    cc = layout.cell_centers
    d2 = ((cc[None] - contacts[:, None, None, :]) ** 2).sum(-1)
    blob = np.rint(cfg.peak * np.exp(-d2 / (2 * cfg.blob_radius ** 2)))
    if rng is not None and cfg.intensity_noise > 0:
        blob += rng.integers(-cfg.intensity_noise, cfg.intensity_noise + 1, size=blob.shape)
    blob = np.clip(blob, 0, 255)
    frames = np.zeros((len(contacts), FRAME_ROWS, GRID_COLS), dtype=np.int16)
    frames[:, -GRID_ROWS:] = blob
    return frames


def render_heatmap(layout: KeyboardLayout, contact: Point, cfg: SynthConfig,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    return render_heatmaps(layout, [(contact.x, contact.y)], cfg, rng)[0]


def _touch(layout: KeyboardLayout, cfg: SynthConfig, rng: np.random.Generator,
           offset: np.ndarray, labels: np.ndarray):
    """(contact, reported, frames) for taps aimed at ``labels``."""
    n = len(labels)
    contact = (layout.centers[labels] + offset
               + rng.normal(0.0, (cfg.scatter_x, cfg.scatter_y), size=(n, 2)))
    reported = contact + cfg.report_bias + rng.normal(0.0, cfg.report_noise, size=(n, 2))
    return contact, reported, render_heatmaps(layout, contact, cfg, rng)


def user_streams(cfg: SynthConfig) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.n_users)]


def generate_user(layout: KeyboardLayout, cfg: SynthConfig, u: int,
                  rng: np.random.Generator, prompts: list[str] | None = None) -> list[TapSample]:
    """All taps for user ``u``: whole prompts typed until the tap target is met."""
    prompts = cfg.prompts if prompts is None else prompts
    encoded = [prompt_keys(p) for p in prompts]
    offset = rng.normal(cfg.user_offset_mean, cfg.user_offset_std)

    labels, trial_ids = [], []
    trial = 0
    while len(labels) < cfg.taps_per_user:
        for pi in rng.permutation(len(prompts)):
            labels += encoded[pi]
            trial_ids += [f"{pi:03d}-{trial:03d}"] * len(encoded[pi])
            trial += 1
            if len(labels) >= cfg.taps_per_user:
                break
    labels = np.array(labels)
    n = len(labels)
    contact, reported, frames = _touch(layout, cfg, rng, offset, labels)
    t = np.cumsum(rng.uniform(*cfg.inter_tap_ms, size=n))

    uid = f"u{u:02d}"
    return [
        TapSample(Point(float(reported[i, 0]), float(reported[i, 1])), frames[i],
                  t_ms=float(np.round(t[i], 3)), label=int(labels[i]), user_id=uid,
                  prompt_id=trial_ids[i],
                  meta={"contact": (float(contact[i, 0]), float(contact[i, 1]))})
        for i in range(n)
    ]


def generate_dataset(layout: KeyboardLayout, cfg: SynthConfig,
                     prompts: list[str] | None = None) -> list[TapSample]:
    taps: list[TapSample] = []
    for u, rng in enumerate(user_streams(cfg)):
        taps += generate_user(layout, cfg, u, rng, prompts)
    return taps


# -- typing sessions with corrections -------------------------------------------


@dataclass
class Session:
    user_id: str
    prompt_id: str
    prompt: str
    events: list[TypingEvent]


def type_prompt(layout: KeyboardLayout, cfg: SynthConfig, rng: np.random.Generator,
                offset: np.ndarray, prompt: str, user_id: str, prompt_id: str,
                decode=None, fix_prob: float = 0.6, max_retries: int = 3,
                t0: float = 0.0) -> list[TypingEvent]:
    """Events for one prompt typed by a user who sometimes fixes a wrong key at once.

    ``decode(tap) -> key`` stands in for the keyboard; the On-key rule by default.
    A noticed error is erased with one backspace and the key is tapped again.
    """
    from .spatial import onkey_predict

    decode = decode or (lambda tap: onkey_predict(layout, tap))
    events: list[TypingEvent] = []
    t = t0
    for k in prompt_keys(prompt):
        for attempt in range(max_retries + 1):
            contact, reported, frames = _touch(layout, cfg, rng, offset, np.array([k]))
            t += float(rng.uniform(*cfg.inter_tap_ms))
            tap = TapSample(Point(float(reported[0, 0]), float(reported[0, 1])), frames[0],
                            t_ms=round(t, 3), label=k, user_id=user_id, prompt_id=prompt_id,
                            meta={"contact": (float(contact[0, 0]), float(contact[0, 1]))})
            got = int(decode(tap))
            events.append(TypingEvent("tap", tap.t_ms, tap, got, len(events)))
            if got == k or attempt == max_retries or rng.uniform() >= fix_prob:
                break
            t += float(rng.uniform(*cfg.inter_tap_ms))
            events.append(TypingEvent("backspace", round(t, 3), index=len(events)))
    return events


def generate_sessions(layout: KeyboardLayout, cfg: SynthConfig, trials_per_user: int = 10,
                      prompts: list[str] | None = None, fix_prob: float = 0.6) -> list[Session]:
    """Per user, ``trials_per_user`` prompts typed with on-the-spot corrections."""
    prompts = cfg.prompts if prompts is None else prompts
    out = []
    for u, rng in enumerate(user_streams(cfg)):
        offset = rng.normal(cfg.user_offset_mean, cfg.user_offset_std)
        uid = f"u{u:02d}"
        order = rng.permutation(len(prompts))
        for trial in range(trials_per_user):
            pi = int(order[trial % len(prompts)])
            pid = f"{pi:03d}-{trial:03d}"
            events = type_prompt(layout, cfg, rng, offset, prompts[pi], uid, pid,
                                 fix_prob=fix_prob)
            out.append(Session(uid, pid, prompts[pi], events))
    return out

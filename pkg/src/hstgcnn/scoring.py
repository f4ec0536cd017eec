"""Three-branch anomaly scores and their weighted combination."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import FormatError, InvalidConfig, NoCoverage
from .net import ModelParams, predict
from .skeleton import HIGH, LOW, OBSERVED, SceneClip, WindowSample, sliding_windows

NUM_BRANCHES = 3


@dataclass(frozen=True)
class ScoringConfig:
    l3_absolute: bool = True  # False: signed squared-displacement difference
    l1_span_normalize: bool = False  # True: extra 1/(T_e - T_s) factor on L1


@dataclass(frozen=True)
class BranchWeights:
    weights: tuple[float, float, float]
    divisors: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidConfig(f"weights must be 3 nonnegative values summing to 1, got {self.weights}")
        if np.any(np.asarray(self.divisors) <= 0):
            raise InvalidConfig(f"divisors must be positive, got {self.divisors}")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "divisors", tuple(float(x) for x in self.divisors))

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Combined score for an (n, 3) array of raw branch scores."""
        return (np.asarray(raw) / np.asarray(self.divisors)) @ np.asarray(self.weights)


@dataclass
class BranchScores:
    """Raw per-frame branch scores for the frames of one clip that have a window."""

    video_id: str
    frames: np.ndarray  # (n,) int
    values: np.ndarray  # (n, 3): L1, L2, L3

    @property
    def l1(self):
        return self.values[:, 0]

    @property
    def l2(self):
        return self.values[:, 1]

    @property
    def l3(self):
        return self.values[:, 2]


@dataclass(frozen=True)
class FrameScore:
    video_id: str
    frame_idx: int
    score: float
    l1: float
    l2: float
    l3: float

    def to_json(self) -> str:
        return json.dumps({"video_id": self.video_id, "frame_idx": self.frame_idx, "score": self.score,
                           "l1": self.l1, "l2": self.l2, "l3": self.l3}, separators=(",", ":"))


# --- single-frame branch formulas -------------------------------------------


def branch_l1(preds: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> float:
    """Max over persons of the per-person pose MSE (normalized coordinates)."""
    if len(preds) == 0:
        raise NoCoverage("no low-level prediction targets this frame")
    return max(float(np.mean((np.asarray(p) - np.asarray(t)) ** 2)) for p, t in zip(preds, truths))


def branch_l2(pred: np.ndarray, truth: np.ndarray) -> float:
    """Max over persons of squared center error (pixels^2)."""
    pred = np.asarray(pred).reshape(-1, 2)
    if pred.shape[0] == 0:
        raise NoCoverage("no high-level prediction targets this frame")
    return float(np.max(np.sum((pred - np.asarray(truth).reshape(-1, 2)) ** 2, axis=1)))


def branch_l3(pred: np.ndarray, truth: np.ndarray, observed: np.ndarray, absolute: bool = True) -> float:
    """Motion-vector error between the predicted frame and each observed frame.

    ``pred``/``truth`` are (V, 2) centers at the predicted frame, ``observed``
    the (T, V, 2) true centers of the input frames. Zero with one person.
    """
    pred = np.asarray(pred).reshape(-1, 2)
    if pred.shape[0] == 0:
        raise NoCoverage("no high-level prediction targets this frame")
    if pred.shape[0] <= 1:
        return 0.0
    d_pred = np.sum((pred[None] - observed) ** 2, axis=-1)
    d_true = np.sum((np.asarray(truth)[None] - observed) ** 2, axis=-1)
    diff = d_pred - d_true
    return float(np.max(np.abs(diff) if absolute else diff))


def combine(l1: float, l2: float, l3: float, weights: BranchWeights) -> float:
    w, d = weights.weights, weights.divisors
    return w[0] * l1 / d[0] + w[1] * l2 / d[1] + w[2] * l3 / d[2]


# --- clip scoring -----------------------------------------------------------


def branch_scores(clip: SceneClip, params: Mapping[str, ModelParams],
                  config: ScoringConfig = ScoringConfig(),
                  windows: Optional[Mapping[str, Sequence[WindowSample]]] = None) -> BranchScores:
    """Slide stride-1 windows over the clip and score every predicted frame."""
    windows = windows or {}
    low = windows.get(LOW) if LOW in windows else sliding_windows(clip, LOW)
    high = windows.get(HIGH) if HIGH in windows else sliding_windows(clip, HIGH)

    l1: dict[int, float] = {}
    if low:
        preds = predict(params[LOW], low)
        for w, p in zip(low, preds):
            err = float(np.mean((p - w.target) ** 2))
            if config.l1_span_normalize:
                err /= OBSERVED
            t = w.end
            l1[t] = max(l1.get(t, 0.0), err)

    l2: dict[int, float] = {}
    l3: dict[int, float] = {}
    if high:
        preds = predict(params[HIGH], high)
        for w, p in zip(high, preds):
            pred_px = w.to_pixels(p)
            true_px = w.to_pixels(w.target)
            t = w.end
            l2[t] = branch_l2(pred_px, true_px)
            l3[t] = branch_l3(pred_px, true_px, w.positions, config.l3_absolute)

    frames = np.array(sorted(set(l1) | set(l2)), dtype=np.int64)
    values = np.array([[l1.get(t, 0.0), l2.get(t, 0.0), l3.get(t, 0.0)] for t in frames]).reshape(-1, 3)
    return BranchScores(clip.video_id, frames, values)


def score_clip(clip: SceneClip, params: Mapping[str, ModelParams], weights: BranchWeights,
               config: ScoringConfig = ScoringConfig()) -> list[FrameScore]:
    bs = branch_scores(clip, params, config)
    combined = weights.apply(bs.values) if len(bs.frames) else np.zeros(0)
    return [FrameScore(clip.video_id, int(t), float(s), float(v[0]), float(v[1]), float(v[2]))
            for t, s, v in zip(bs.frames, combined, bs.values)]


def write_scores(path, scores: Iterable[FrameScore]) -> None:
    with open(path, "w") as fh:
        for s in scores:
            fh.write(s.to_json() + "\n")


def read_scores(path) -> list[FrameScore]:
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                r = json.loads(line)
                out.append(FrameScore(str(r["video_id"]), int(r["frame_idx"]), float(r["score"]),
                                      float(r["l1"]), float(r["l2"]), float(r["l3"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}: bad score record: {exc!r}") from None
    return out

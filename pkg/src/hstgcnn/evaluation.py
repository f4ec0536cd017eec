"""Frame-level ROC AUC, branch ablation and report output."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .cluster import SUBSETS, SceneGroups, subset_name
from .errors import EmptyDataset, FormatError, SingleClass
from .scoring import BranchWeights, FrameScore
from .skeleton import SceneClip, track_geometry


@dataclass
class LabeledScores:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.scores.shape != self.labels.shape:
            raise ValueError("scores and labels must have equal length")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 or 1")


def roc_auc(scores, labels=None) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    data = scores if isinstance(scores, LabeledScores) else LabeledScores(scores, labels)
    pos = data.labels == 1
    n_pos = int(pos.sum())
    n_neg = data.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"AUC needs both classes (positives={n_pos}, negatives={n_neg})")
    ranks = rankdata(data.scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# --- joining scores with labels --------------------------------------------


@dataclass
class ScoredFrames:
    """Scored frames of a corpus with their labels and scene groups."""

    video_ids: list[str]
    frames: np.ndarray
    branches: np.ndarray  # (n, 3) raw
    scores: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    excluded: int = 0  # labelled frames that received no score


def join_labels(scores: Sequence[FrameScore], clips: Sequence[SceneClip],
                group_of: Mapping[str, int]) -> ScoredFrames:
    by_video = {c.video_id: c for c in clips}
    if len(by_video) != len(clips):
        raise FormatError("duplicate video_id in labelled clips")
    vids, frames, br, sc, lab, grp = [], [], [], [], [], []
    seen: dict[str, set] = {}
    for s in scores:
        clip = by_video.get(s.video_id)
        if clip is None or clip.frame_labels is None:
            raise SingleClass(f"no frame labels for video {s.video_id}")
        vids.append(s.video_id)
        frames.append(s.frame_idx)
        br.append((s.l1, s.l2, s.l3))
        sc.append(s.score)
        lab.append(int(clip.frame_labels[s.frame_idx]))
        grp.append(group_of[s.video_id])
        seen.setdefault(s.video_id, set()).add(s.frame_idx)
    excluded = 0
    for clip in clips:
        if clip.frame_labels is not None:
            excluded += clip.num_frames - len(seen.get(clip.video_id, ()))
    return ScoredFrames(vids, np.array(frames, dtype=np.int64), np.array(br).reshape(-1, 3),
                        np.array(sc), np.array(lab, dtype=np.int64), np.array(grp, dtype=np.int64), excluded)


def recombine(frames: ScoredFrames, groups: SceneGroups, subset: Sequence[int]) -> np.ndarray:
    """Scores from raw branches using each group's weights refit on ``subset``."""
    name = subset_name(subset)
    out = np.zeros(len(frames.scores))
    for g in np.unique(frames.groups):
        gw = groups.weights[int(g)]
        w = BranchWeights(gw.subsets[name], gw.weights.divisors)
        sel = frames.groups == g
        out[sel] = w.apply(frames.branches[sel])
    return out


def ablation_report(frames: ScoredFrames, groups: SceneGroups) -> dict[str, float]:
    """AUC for every nonempty branch subset."""
    if len(frames.scores) == 0:
        raise EmptyDataset("no scored frames to evaluate")
    return {subset_name(s): roc_auc(recombine(frames, groups, s), frames.labels) for s in SUBSETS}


def constant_velocity_scores(clip: SceneClip) -> dict[int, float]:
    """Reference detector: max over persons of the height-normalized squared
    distance between each center and its constant-velocity extrapolation."""
    out: dict[int, float] = {}
    for track in clip.tracks:
        centers, heights, _ = track_geometry(track)
        f = track.frame_idx
        for i in range(2, len(f)):
            if f[i] - f[i - 2] != 2:
                continue
            guess = 2 * centers[i - 1] - centers[i - 2]
            err = float(np.sum((centers[i] - guess) ** 2) / heights[i] ** 2)
            out[int(f[i])] = max(out.get(int(f[i]), 0.0), err)
    return out


# --- output -----------------------------------------------------------------


def format_table(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    cells = [list(map(str, header))] + [[f"{c:.4f}" if isinstance(c, float) else str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def ablation_table(aucs: Mapping[str, float]) -> str:
    rows = []
    for letter, s in zip("abcdefg", SUBSETS):
        marks = ["x" if i in s else "-" for i in range(3)]
        rows.append([f"({letter})", *marks, aucs[subset_name(s)]])
    return format_table(rows, ["row", "L1", "L2", "L3", "AUC"])


def write_curve_csv(path, frames: ScoredFrames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "frame_idx", "score", "label"])
        for v, f, s, l in zip(frames.video_ids, frames.frames, frames.scores, frames.labels):
            w.writerow([v, int(f), repr(float(s)), int(l)])


def write_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")

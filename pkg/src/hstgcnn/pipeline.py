"""End-to-end workflows: cluster, train per group, fit weights, score, evaluate."""
from __future__ import annotations

import logging
from typing import Mapping, Optional, Sequence

import numpy as np

from .cluster import (SceneGroups, assign_group, cluster_scenes, default_k, fit_group_weights,
                      weight_objective)
from .errors import EmptyDataset, EmptyGroup
from .evaluation import ablation_report, constant_velocity_scores, join_labels, roc_auc
from .net import ModelConfig
from .scoring import FrameScore, ScoringConfig, branch_scores, score_clip
from .skeleton import LEVELS, SceneClip, WindowSample, sliding_windows
from .train import Checkpoint, TrainConfig, train
from .workers import ordered_map

log = logging.getLogger(__name__)


def collect_windows(clips: Sequence[SceneClip], level: str) -> list[WindowSample]:
    return [w for c in sorted(clips, key=lambda c: c.video_id) for w in sliding_windows(c, level)]


def group_clips(clips: Sequence[SceneClip], groups: SceneGroups) -> dict[int, list[SceneClip]]:
    out: dict[int, list[SceneClip]] = {}
    for c in sorted(clips, key=lambda c: c.video_id):
        out.setdefault(assign_group(c, groups), []).append(c)
    return out


def train_groups(clips: Sequence[SceneClip], groups: SceneGroups, config: TrainConfig,
                 model_configs: Optional[Mapping[str, ModelConfig]] = None) -> dict[int, Checkpoint]:
    ckpts = {}
    for g, members in sorted(group_clips(clips, groups).items()):
        windows = {level: collect_windows(members, level) for level in config.levels}
        if not any(windows.values()):
            raise EmptyDataset(f"group {g} has no training windows")
        log.info("group %d: %d clips, %s windows", g, len(members), {k: len(v) for k, v in windows.items()})
        ckpts[g] = train(windows, config, model_configs, group=str(g))
    return ckpts


def params_of(ckpt: Checkpoint):
    missing = [lvl for lvl in LEVELS if lvl not in ckpt.params]
    if missing:
        raise EmptyGroup(f"checkpoint for group {ckpt.group} lacks {missing} model(s)")
    return ckpt.params


def training_branch_scores(clips: Sequence[SceneClip], ckpt: Checkpoint,
                           scoring: ScoringConfig = ScoringConfig()) -> np.ndarray:
    rows = [branch_scores(c, params_of(ckpt), scoring).values for c in clips]
    return np.concatenate(rows) if rows else np.zeros((0, 3))


def fit_weights(clips: Sequence[SceneClip], groups: SceneGroups, ckpts: Mapping[int, Checkpoint],
                scoring: ScoringConfig = ScoringConfig(), step: float = 0.1) -> SceneGroups:
    for g, members in sorted(group_clips(clips, groups).items()):
        if g not in ckpts:
            raise EmptyGroup(f"no checkpoint for group {g}")
        raw = training_branch_scores(members, ckpts[g], scoring)
        groups.weights[g] = fit_group_weights(raw, step)
        log.info("group %d weights %s objective %.4f", g, groups.weights[g].weights.weights,
                 groups.weights[g].objective)
    return groups


def _score_task(task) -> list[FrameScore]:
    clip, params, weights, scoring = task
    return score_clip(clip, params, weights, scoring)


def score_corpus(clips: Sequence[SceneClip], groups: SceneGroups, ckpts: Mapping[int, Checkpoint],
                 scoring: ScoringConfig = ScoringConfig(), jobs: int = 1) -> list[FrameScore]:
    """Score every clip with its group's models and weights, in video_id order."""
    tasks = []
    for clip in sorted(clips, key=lambda c: c.video_id):
        g = assign_group(clip, groups)
        if g not in ckpts:
            raise EmptyGroup(f"{clip.video_id}: no checkpoint for group {g}")
        tasks.append((clip, params_of(ckpts[g]), groups.branch_weights(g), scoring))
    return [s for part in ordered_map(_score_task, tasks, jobs) for s in part]


def evaluate(scores: Sequence[FrameScore], clips: Sequence[SceneClip], groups: SceneGroups,
             ablation: bool = False) -> dict:
    group_of = {c.video_id: assign_group(c, groups) for c in clips}
    frames = join_labels(scores, clips, group_of)
    if len(frames.scores) == 0:
        raise EmptyDataset("no scored frames to evaluate")
    summary = {
        "auc": roc_auc(frames.scores, frames.labels),
        "scored_frames": int(len(frames.scores)),
        "positive_frames": int(frames.labels.sum()),
        "excluded_frames": int(frames.excluded),
    }
    cv_scores, cv_labels = [], []
    for c in clips:
        for t, s in constant_velocity_scores(c).items():
            cv_scores.append(s)
            cv_labels.append(int(c.frame_labels[t]))
    if cv_labels and 0 < sum(cv_labels) < len(cv_labels):
        summary["constant_velocity_auc"] = roc_auc(cv_scores, cv_labels)
    if ablation:
        summary["ablation"] = ablation_report(frames, groups)
    return summary


def fitted_objective(clips: Sequence[SceneClip], groups: SceneGroups,
                     ckpts: Mapping[int, Checkpoint], scoring: ScoringConfig = ScoringConfig()) -> float:
    """Frame-weighted mean of each group's fitted weight objective."""
    total, n = 0.0, 0
    for g, members in group_clips(clips, groups).items():
        raw = training_branch_scores(members, ckpts[g], scoring)
        bw = groups.branch_weights(g)
        total += weight_objective(bw.weights, raw / np.asarray(bw.divisors)) * len(raw)
        n += len(raw)
    return total / n


def choose_k(clips: Sequence[SceneClip], config: TrainConfig, seed: int = 0,
             model_configs: Optional[Mapping[str, ModelConfig]] = None,
             scoring: ScoringConfig = ScoringConfig(), k_max: int = 12) -> int:
    """Scene-id count when available, else the k in 1..min(k_max, n) with lowest fitted objective."""
    k = default_k(clips)
    if k is not None:
        return k
    best_k, best = 1, np.inf
    for k in range(1, min(k_max, len(clips)) + 1):
        groups = cluster_scenes(clips, k, seed)
        ckpts = train_groups(clips, groups, config, model_configs)
        fit_weights(clips, groups, ckpts, scoring)
        obj = fitted_objective(clips, groups, ckpts, scoring)
        log.info("k=%d objective %.5f", k, obj)
        if obj < best - 1e-12:
            best_k, best = k, obj
    return best_k

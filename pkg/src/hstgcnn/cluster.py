"""Scene grouping with k-means and per-group branch weight search."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyClip, EmptyGroup, FormatError, InvalidConfig, InvalidK
from .scoring import BranchWeights
from .skeleton import SceneClip, track_geometry

BRANCH_NAMES = ("L1", "L2", "L3")
# Seven nonempty branch subsets in the order of the ablation table.
SUBSETS: tuple[tuple[int, ...], ...] = ((0,), (1,), (2,), (0, 1), (1, 2), (0, 2), (0, 1, 2))
UNIFORM = (1 / 3, 1 / 3, 1 / 3)


def subset_name(subset: Sequence[int]) -> str:
    return "+".join(BRANCH_NAMES[i] for i in subset)


@dataclass(frozen=True)
class SceneFeatures:
    mean_persons: float
    mean_height: float
    mean_box_area: float
    mean_displacement: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mean_persons, self.mean_height, self.mean_box_area, self.mean_displacement])


def extract_scene_features(clip: SceneClip) -> SceneFeatures:
    """Crowd density, body scale and motion (track displacement stands in for optical flow)."""
    if not clip.tracks or all(len(t) == 0 for t in clip.tracks):
        raise EmptyClip(f"{clip.video_id}: no skeletons")
    counts = clip.presence().sum(axis=0)
    heights, areas, steps = [], [], []
    for t in clip.tracks:
        centers, h, _ = track_geometry(t)
        heights.append(h)
        areas.append(np.ptp(t.joints[:, :, 0], axis=1) * np.ptp(t.joints[:, :, 1], axis=1))
        consecutive = np.diff(t.frame_idx) == 1
        steps.append(np.linalg.norm(np.diff(centers, axis=0), axis=1)[consecutive])
    steps = np.concatenate(steps)
    return SceneFeatures(
        mean_persons=float(counts[counts > 0].mean()),
        mean_height=float(np.concatenate(heights).mean()),
        mean_box_area=float(np.concatenate(areas).mean()),
        mean_displacement=float(steps.mean()) if steps.size else 0.0,
    )


# --- k-means ----------------------------------------------------------------


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: list[float]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)


def kmeans(points: np.ndarray, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """k-means++ seeding then Lloyd iterations until assignments stop changing."""
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = [x[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = _sq_dists(x, np.array(centroids)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            # remaining points coincide with chosen centroids; take unused indices in order
            chosen = {tuple(c) for c in centroids}
            idx = next((i for i in range(n) if tuple(x[i]) not in chosen), int(rng.integers(n)))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids.append(x[idx])
    c = np.array(centroids)
    labels = np.full(n, -1)
    inertia = []
    for _ in range(max_iter):
        d2 = _sq_dists(x, c)
        new = d2.argmin(axis=1)  # argmin picks the lowest id on ties
        inertia.append(float(d2[np.arange(n), new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = x[labels == j]
            if members.size:
                c[j] = members.mean(axis=0)
    return KMeansResult(c, labels, inertia)


# --- groups -----------------------------------------------------------------


@dataclass
class GroupWeights:
    weights: BranchWeights
    objective: float
    subsets: dict[str, tuple[float, float, float]] = field(default_factory=dict)


@dataclass
class SceneGroups:
    k: int
    centroids: np.ndarray  # standardized feature space
    feature_mean: np.ndarray
    feature_std: np.ndarray
    assignments: dict[str, int]
    seed: int = 0
    weights: dict[int, GroupWeights] = field(default_factory=dict)

    def standardize(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.feature_mean) / self.feature_std

    def members(self, group: int) -> list[str]:
        return sorted(v for v, g in self.assignments.items() if g == group)

    def branch_weights(self, group: int) -> BranchWeights:
        if group not in self.weights:
            raise EmptyGroup(f"group {group} has no fitted weights")
        return self.weights[group].weights

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "centroids": self.centroids.tolist(),
            "assignments": dict(sorted(self.assignments.items())),
            "groups": {
                str(g): {
                    "W": list(gw.weights.weights),
                    "d": list(gw.weights.divisors),
                    "objective": gw.objective,
                    "subsets": {name: list(w) for name, w in gw.subsets.items()},
                }
                for g, gw in sorted(self.weights.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGroups":
        try:
            weights = {}
            for g, gw in d.get("groups", {}).items():
                weights[int(g)] = GroupWeights(
                    BranchWeights(tuple(gw["W"]), tuple(gw["d"])),
                    float(gw["objective"]),
                    {name: tuple(w) for name, w in gw.get("subsets", {}).items()},
                )
            return cls(
                k=int(d["k"]),
                centroids=np.array(d["centroids"], dtype=np.float64).reshape(int(d["k"]), -1),
                feature_mean=np.array(d["feature_mean"], dtype=np.float64),
                feature_std=np.array(d["feature_std"], dtype=np.float64),
                assignments={str(v): int(g) for v, g in d["assignments"].items()},
                seed=int(d.get("seed", 0)),
                weights=weights,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad groups document: {exc!r}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SceneGroups":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None


def cluster_scenes(clips: Sequence[SceneClip], k: int, seed: int = 0) -> SceneGroups:
    """Standardize scene features over the corpus and run k-means.

    Clips are processed in video_id order and group ids are numbered by first
    appearance in that order, so the result does not depend on input order.
    """
    clips = sorted(clips, key=lambda c: c.video_id)
    if not clips:
        raise InvalidK("cannot cluster an empty corpus")
    feats = np.array([extract_scene_features(c).as_array() for c in clips])
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    z = (feats - mean) / std
    res = kmeans(z, k, seed)
    relabel: dict[int, int] = {}
    for lab in res.labels:
        relabel.setdefault(int(lab), len(relabel))
    centroids = np.array([res.centroids[old] for old, _ in sorted(relabel.items(), key=lambda kv: kv[1])])
    assignments = {c.video_id: relabel[int(lab)] for c, lab in zip(clips, res.labels)}
    return SceneGroups(len(relabel), centroids, mean, std, assignments, seed)


def assign_group(clip: SceneClip, groups: SceneGroups) -> int:
    if clip.video_id in groups.assignments:
        return groups.assignments[clip.video_id]
    z = groups.standardize(extract_scene_features(clip).as_array())
    return int(_sq_dists(z[None], groups.centroids)[0].argmin())


def default_k(clips: Sequence[SceneClip]) -> Optional[int]:
    """One group per distinct scene id, or None when clips carry no scene ids."""
    scenes = {c.scene_id for c in clips}
    if None in scenes:
        return None
    return len(scenes)


# --- weight search ----------------------------------------------------------


def branch_divisors(raw: np.ndarray) -> tuple[float, float, float]:
    """Training-set mean of each branch; 1.0 for a branch that is identically zero."""
    raw = np.asarray(raw, dtype=np.float64).reshape(-1, 3)
    if raw.shape[0] == 0:
        raise EmptyGroup("no training branch scores")
    m = raw.mean(axis=0)
    return tuple(float(x) if x > 1e-300 else 1.0 for x in m)


def weight_objective(weights: Sequence[float], normalized: np.ndarray) -> float:
    """Mean plus standard deviation of combined scores over the training frames."""
    s = np.asarray(normalized) @ np.asarray(weights, dtype=np.float64)
    return float(s.mean() + s.std())


def simplex_grid(step: float = 0.1, subset: Sequence[int] = (0, 1, 2)) -> list[tuple[float, float, float]]:
    """Weight triples on the simplex at ``step``, zero outside ``subset``, lexicographic order."""
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise InvalidConfig("1/step must be an integer")
    out = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            w = (i / n, j / n, (n - i - j) / n)
            if all(w[b] == 0 for b in range(3) if b not in subset):
                out.append(w)
    return out


def fit_branch_weights(raw: np.ndarray, step: float = 0.1, subset: Sequence[int] = (0, 1, 2),
                       divisors: Optional[Sequence[float]] = None) -> tuple[BranchWeights, float]:
    """Grid search over the simplex; ties go to the lexicographically lowest triple.

    Branches that are identically zero on the training frames carry no signal
    and would win trivially (zero mean, zero spread), so they are left out of
    the search unless every branch of ``subset`` is zero. The equal-weight
    point of the searched branches is also a candidate, so the result is never
    worse than equal weighting over them.
    """
    raw = np.asarray(raw, dtype=np.float64).reshape(-1, 3)
    if raw.shape[0] == 0:
        raise EmptyGroup("no training branch scores to fit weights on")
    d = tuple(divisors) if divisors is not None else branch_divisors(raw)
    normalized = raw / np.asarray(d)
    active = tuple(b for b in subset if np.any(raw[:, b] != 0)) or tuple(subset)
    candidates = simplex_grid(step, active)
    centroid = tuple(1.0 / len(active) if b in active else 0.0 for b in range(3))
    if centroid not in candidates:
        candidates.append(centroid)
    best, best_obj = None, np.inf
    for w in candidates:
        obj = weight_objective(w, normalized)
        if best is None or obj < best_obj - 1e-12 * max(1.0, abs(best_obj)):
            best, best_obj = w, obj
    return BranchWeights(best, d), best_obj


def fit_group_weights(raw: np.ndarray, step: float = 0.1) -> GroupWeights:
    weights, obj = fit_branch_weights(raw, step)
    subsets = {}
    for s in SUBSETS:
        w, _ = fit_branch_weights(raw, step, s, weights.divisors)
        subsets[subset_name(s)] = w.weights
    return GroupWeights(weights, obj, subsets)

"""Synthetic crowd scenes with injectable anomalies.

Each person walks a smooth, gently turning path; limbs swing with a gait
phase that advances with distance travelled (cadence grows with speed).
Keypoints get isotropic pixel noise, which is what makes small, far-away
people hard to read at the joint level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InvalidConfig
from .skeleton import NUM_JOINTS, TORSO_JOINTS, SceneClip, Track
from .workers import ordered_map

ANOMALY_KINDS = ("speed-burst", "dispersal", "pose-collapse", "erratic-limbs")
ARCHETYPES = ("dense-small", "sparse-large")

# Upright COCO-17 pose, unit height, y pointing down.
_TEMPLATE = np.array([
    [0.00, -0.40], [0.02, -0.43], [-0.02, -0.43], [0.05, -0.41], [-0.05, -0.41],
    [0.10, -0.28], [-0.10, -0.28], [0.13, -0.13], [-0.13, -0.13], [0.14, 0.01], [-0.14, 0.01],
    [0.07, 0.04], [-0.07, 0.04], [0.08, 0.29], [-0.08, 0.29], [0.08, 0.52], [-0.08, 0.52],
])
_TEMPLATE = (_TEMPLATE - _TEMPLATE[list(TORSO_JOINTS)].mean(axis=0)) / np.ptp(_TEMPLATE[:, 1])

# (joint, side sign, swing gain); legs and arms swing in antiphase.
_SWING = ((13, 1, 0.5), (15, 1, 1.0), (14, -1, 0.5), (16, -1, 1.0),
          (7, -1, 0.3), (9, -1, 0.6), (8, 1, 0.3), (10, 1, 0.6))
_LIMBS = (7, 8, 9, 10, 13, 14, 15, 16)

ARCHETYPE_DEFAULTS = {
    "dense-small": dict(person_range=(8, 15), body_height=20.0, base_speed=0.7, frame_size=(320.0, 240.0)),
    "sparse-large": dict(person_range=(1, 3), body_height=120.0, base_speed=4.0, frame_size=(1280.0, 720.0)),
}


@dataclass(frozen=True)
class AnomalySpec:
    kind: str
    onset: int
    duration: int
    magnitude: float
    person: int = 0

    @property
    def frames(self) -> range:
        return range(self.onset, self.onset + self.duration)


@dataclass(frozen=True)
class SynthConfig:
    archetype: str = "sparse-large"
    num_frames: int = 60
    person_range: Optional[tuple[int, int]] = None
    body_height: Optional[float] = None
    base_speed: Optional[float] = None  # pixels / frame
    frame_size: Optional[tuple[float, float]] = None
    gait_amplitude: float = 0.12  # body heights
    stride: float = 0.8  # body heights per gait cycle
    turn_rate: float = 0.01  # max |heading change| rad / frame
    keypoint_noise: float = 1.0  # pixels
    outlier_prob: float = 0.002  # per limb/head keypoint per frame
    outlier_scale: float = 0.15  # body heights
    partial_prob: float = 0.0  # chance a track covers only part of the clip
    anomalies: tuple[AnomalySpec, ...] = ()
    seed: int = 0
    video_id: str = "synth"
    scene_id: Optional[str] = None

    def resolved(self) -> "SynthConfig":
        if self.archetype not in ARCHETYPES:
            raise InvalidConfig(f"unknown archetype {self.archetype!r}")
        d = ARCHETYPE_DEFAULTS[self.archetype]
        return replace(
            self,
            person_range=self.person_range or d["person_range"],
            body_height=self.body_height or d["body_height"],
            base_speed=self.base_speed if self.base_speed is not None else d["base_speed"],
            frame_size=self.frame_size or d["frame_size"],
        )

    def validate(self) -> None:
        c = self.resolved()
        lo, hi = c.person_range
        if not 1 <= lo <= hi:
            raise InvalidConfig(f"bad person range {c.person_range}")
        if c.num_frames < 1 or c.body_height <= 0 or c.base_speed < 0:
            raise InvalidConfig("num_frames, body_height must be positive and base_speed >= 0")
        for a in c.anomalies:
            if a.kind not in ANOMALY_KINDS:
                raise InvalidConfig(f"unknown anomaly kind {a.kind!r}")
            if a.magnitude <= 0 or a.duration < 1 or a.onset < 0:
                raise InvalidConfig(f"anomaly {a}: need magnitude > 0, duration >= 1, onset >= 0")
            if a.onset + a.duration > c.num_frames:
                raise InvalidConfig(f"anomaly {a} runs past frame count {c.num_frames}")


def _rotate(points: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return points @ np.array([[c, s], [-s, c]])


def generate_scene(config: SynthConfig) -> SceneClip:
    config.validate()
    c = config.resolved()
    rng = np.random.default_rng(c.seed)
    T = c.num_frames
    n = int(rng.integers(c.person_range[0], c.person_range[1] + 1))
    W, H = c.frame_size

    start = rng.uniform([0.15 * W, 0.15 * H], [0.85 * W, 0.85 * H], size=(n, 2))
    heading = rng.uniform(0, 2 * np.pi, size=n)
    speed = c.base_speed * rng.uniform(0.8, 1.2, size=n)
    turn = rng.uniform(-c.turn_rate, c.turn_rate, size=n)
    height = c.body_height * rng.uniform(0.9, 1.1, size=n)
    phase0 = rng.uniform(0, 2 * np.pi, size=n)

    speed_mult = np.ones((n, T))
    dispersal = np.zeros((n, T), dtype=bool)
    disp_mult = np.ones((n, T))
    tilt = np.zeros((n, T))
    flail = np.zeros((n, T))
    labels = np.zeros(T, dtype=np.int64)
    for a in c.anomalies:
        f = np.arange(a.onset, a.onset + a.duration)
        p = a.person % n
        labels[f] = 1
        if a.kind == "speed-burst":
            speed_mult[p, f] *= a.magnitude
        elif a.kind == "dispersal":
            dispersal[:, f] = True
            disp_mult[:, f] = a.magnitude
        elif a.kind == "pose-collapse":
            peak = min(a.magnitude, 1.0) * np.pi / 2
            tilt[p, f] = peak * np.sin(np.pi * (f - a.onset + 0.5) / a.duration)
            speed_mult[p, f] = 0.0
        elif a.kind == "erratic-limbs":
            flail[p, f] = a.magnitude

    # paths
    pos = np.zeros((n, T, 2))
    travelled = np.zeros((n, T))
    p_t, h_t, dist = start.copy(), heading.copy(), np.zeros(n)
    for t in range(T):
        pos[:, t] = p_t
        travelled[:, t] = dist
        vel = speed[:, None] * np.stack([np.cos(h_t), np.sin(h_t)], axis=1) * speed_mult[:, t, None]
        if dispersal[:, t].any():
            out = p_t - p_t.mean(axis=0)
            norm = np.linalg.norm(out, axis=1, keepdims=True)
            away = np.where(norm > 1e-9, out / np.maximum(norm, 1e-9), np.stack([np.cos(h_t), np.sin(h_t)], 1))
            vel = np.where(dispersal[:, t, None], away * (speed * disp_mult[:, t])[:, None], vel)
        p_t = p_t + vel
        dist = dist + np.linalg.norm(vel, axis=1)
        h_t = h_t + turn

    joints = np.zeros((n, T, NUM_JOINTS, 2))
    for i in range(n):
        phase = phase0[i] + 2 * np.pi * travelled[i] / (c.stride * height[i])
        facing = 1.0 if math.cos(heading[i]) >= 0 else -1.0
        for t in range(T):
            pose = _TEMPLATE.copy()
            s = math.sin(phase[t])
            for j, side, gain in _SWING:
                pose[j, 0] += facing * side * gain * c.gait_amplitude * s
            pose[15, 1] -= 0.3 * c.gait_amplitude * max(0.0, s)
            pose[16, 1] -= 0.3 * c.gait_amplitude * max(0.0, -s)
            if flail[i, t] > 0:
                pose[list(_LIMBS)] += rng.uniform(-1, 1, size=(len(_LIMBS), 2)) * flail[i, t] * c.gait_amplitude
            if tilt[i, t] != 0:
                pose = _rotate(pose, facing * tilt[i, t])
            joints[i, t] = pos[i, t] + pose * height[i]
    if c.keypoint_noise > 0:
        joints += rng.normal(0.0, c.keypoint_noise, size=joints.shape)
    if c.outlier_prob > 0:
        # misplaced limb/head keypoints, the typical failure on low-resolution people
        hit = rng.random((n, T, NUM_JOINTS)) < c.outlier_prob
        hit[:, :, list(TORSO_JOINTS)] = False
        jump = rng.normal(0.0, c.outlier_scale, size=joints.shape) * height[:, None, None, None]
        joints += np.where(hit[..., None], jump, 0.0)

    anomalous = {a.person % n for a in c.anomalies if a.kind != "dispersal"}
    tracks = []
    for i in range(n):
        lo, hi = 0, T
        if i not in anomalous and c.partial_prob > 0 and T >= 20 and rng.random() < c.partial_prob:
            length = int(rng.integers(10, T))
            lo = int(rng.integers(0, T - length + 1))
            hi = lo + length
        tracks.append(Track(f"p{i:02d}", np.arange(lo, hi), joints[i, lo:hi]))
    return SceneClip(c.video_id, T, tuple(tracks), labels, c.scene_id)


# --- corpora ----------------------------------------------------------------


@dataclass(frozen=True)
class SceneSpec:
    scene_id: str
    archetype: str
    train_videos: int = 8
    test_videos: int = 8


@dataclass(frozen=True)
class CorpusConfig:
    """Train (normal only) and test (anomalous) corpora over a set of scenes.

    Anomaly magnitudes are the fixture's calibration constants.
    """

    scenes: tuple[SceneSpec, ...] = (
        SceneSpec("dense-a", "dense-small"),
        SceneSpec("sparse-a", "sparse-large"),
    )
    num_frames: int = 60
    anomaly_kinds: tuple[str, ...] = ANOMALY_KINDS
    anomalies_per_video: tuple[int, int] = (1, 2)
    duration_range: tuple[int, int] = (8, 14)
    magnitudes: dict = field(default_factory=lambda: {
        "speed-burst": 5.0, "dispersal": 4.0, "pose-collapse": 1.0, "erratic-limbs": 2.0,
    })
    keypoint_noise: float = 0.5
    outlier_prob: float = 0.002
    partial_prob: float = 0.15
    person_range: Optional[tuple[int, int]] = None
    seed: int = 0

    def validate(self) -> None:
        if not self.scenes:
            raise InvalidConfig("corpus needs at least one scene")
        for k in self.anomaly_kinds:
            if k not in ANOMALY_KINDS:
                raise InvalidConfig(f"unknown anomaly kind {k!r}")
            if self.magnitudes.get(k, 0) <= 0:
                raise InvalidConfig(f"anomaly {k!r} needs a positive magnitude")
        lo, hi = self.duration_range
        if not 1 <= lo <= hi or hi + 10 > self.num_frames:
            raise InvalidConfig(f"duration range {self.duration_range} does not fit {self.num_frames} frames")
        if not 0 <= self.anomalies_per_video[0] <= self.anomalies_per_video[1]:
            raise InvalidConfig(f"bad anomalies_per_video {self.anomalies_per_video}")


def _sample_anomalies(rng, cfg: CorpusConfig, num_persons_hint: int) -> tuple[AnomalySpec, ...]:
    count = int(rng.integers(cfg.anomalies_per_video[0], cfg.anomalies_per_video[1] + 1))
    specs: list[AnomalySpec] = []
    busy = np.zeros(cfg.num_frames, dtype=bool)
    busy[:5] = True  # keep the first window clean so every onset has a normal run-up
    for _ in range(count):
        kind = cfg.anomaly_kinds[int(rng.integers(len(cfg.anomaly_kinds)))]
        dur = int(rng.integers(cfg.duration_range[0], cfg.duration_range[1] + 1))
        starts = [s for s in range(5, cfg.num_frames - dur + 1)
                  if not busy[max(0, s - 6): s + dur + 6].any()]
        if not starts:
            break
        onset = int(starts[int(rng.integers(len(starts)))])
        busy[onset : onset + dur] = True
        specs.append(AnomalySpec(kind, onset, dur, float(cfg.magnitudes[kind]),
                                 int(rng.integers(num_persons_hint))))
    return tuple(specs)


def corpus_plan(cfg: CorpusConfig) -> list[tuple[str, SynthConfig]]:
    """Per-video generator configs in file order, with every seed drawn up front."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    plan = []
    for scene in cfg.scenes:
        for split, count in (("train", scene.train_videos), ("test", scene.test_videos)):
            for v in range(count):
                seed = int(rng.integers(2**31))
                anomalies = _sample_anomalies(rng, cfg, 16) if split == "test" else ()
                plan.append((split, SynthConfig(
                    archetype=scene.archetype,
                    num_frames=cfg.num_frames,
                    person_range=cfg.person_range,
                    keypoint_noise=cfg.keypoint_noise,
                    outlier_prob=cfg.outlier_prob,
                    partial_prob=cfg.partial_prob,
                    anomalies=anomalies,
                    seed=seed,
                    video_id=f"{scene.scene_id}-{split}-{v:02d}",
                    scene_id=scene.scene_id,
                )))
    return plan


def generate_corpus(cfg: CorpusConfig, jobs: int = 1) -> tuple[list[SceneClip], list[SceneClip]]:
    """Normal-only training clips and labelled test clips."""
    plan = corpus_plan(cfg)
    clips = ordered_map(generate_scene, [c for _, c in plan], jobs)
    train = [c for (split, _), c in zip(plan, clips) if split == "train"]
    test = [c for (split, _), c in zip(plan, clips) if split == "test"]
    return train, test

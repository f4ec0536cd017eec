"""Skeleton data model, body-size normalization and sliding-window extraction.

Joint order is COCO-17 (0-based):

    0 nose, 1 l_eye, 2 r_eye, 3 l_ear, 4 r_ear, 5 l_shoulder, 6 r_shoulder,
    7 l_elbow, 8 r_elbow, 9 l_wrist, 10 r_wrist, 11 l_hip, 12 r_hip,
    13 l_knee, 14 r_knee, 15 l_ankle, 16 r_ankle
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegeneratePose, EmptyFrame, FormatError

NUM_JOINTS = 17
TORSO_JOINTS = (5, 6, 11, 12)
WINDOW = 5
OBSERVED = WINDOW - 1
EPS_HEIGHT = 1e-6

LOW = "low"
HIGH = "high"
LEVELS = (LOW, HIGH)


class Joint2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class PoseFrame:
    person_id: str
    frame_idx: int
    joints: np.ndarray  # (17, 2)

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.shape != (NUM_JOINTS, 2):
            raise FormatError(f"expected {NUM_JOINTS} joints with (x, y), got shape {joints.shape}")
        if not np.all(np.isfinite(joints)):
            raise FormatError("non-finite joint coordinate")
        if self.frame_idx < 0:
            raise FormatError(f"negative frame index {self.frame_idx}")
        object.__setattr__(self, "joints", joints)

    def joint(self, n: int) -> Joint2D:
        return Joint2D(float(self.joints[n, 0]), float(self.joints[n, 1]))


@dataclass(frozen=True)
class Track:
    """One person's skeletons over time, stored as stacked arrays."""

    person_id: str
    frame_idx: np.ndarray  # (F,) int, strictly increasing
    joints: np.ndarray  # (F, 17, 2)

    def __post_init__(self):
        idx = np.asarray(self.frame_idx, dtype=np.int64).reshape(-1)
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.shape != (idx.size, NUM_JOINTS, 2):
            raise FormatError(f"track {self.person_id}: joints shape {joints.shape} does not match {idx.size} frames")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise FormatError(f"track {self.person_id}: frame indices must be strictly increasing and >= 0")
        if not np.all(np.isfinite(joints)):
            raise FormatError(f"track {self.person_id}: non-finite joint coordinate")
        object.__setattr__(self, "frame_idx", idx)
        object.__setattr__(self, "joints", joints)

    def __len__(self) -> int:
        return int(self.frame_idx.size)

    @property
    def frames(self) -> list[PoseFrame]:
        return [PoseFrame(self.person_id, int(f), j) for f, j in zip(self.frame_idx, self.joints)]

    @classmethod
    def from_frames(cls, frames: Sequence[PoseFrame]) -> "Track":
        if not frames:
            raise FormatError("track needs at least one frame")
        pid = frames[0].person_id
        if any(f.person_id != pid for f in frames):
            raise FormatError("all frames of a track must share person_id")
        return cls(pid, np.array([f.frame_idx for f in frames]), np.stack([f.joints for f in frames]))


@dataclass(frozen=True)
class SceneClip:
    video_id: str
    num_frames: int
    tracks: tuple[Track, ...]
    frame_labels: Optional[np.ndarray] = None
    scene_id: Optional[str] = None

    def __post_init__(self):
        tracks = tuple(sorted(self.tracks, key=lambda t: t.person_id))
        ids = [t.person_id for t in tracks]
        if len(set(ids)) != len(ids):
            raise FormatError(f"{self.video_id}: duplicate person ids")
        for t in tracks:
            if len(t) and t.frame_idx[-1] >= self.num_frames:
                raise FormatError(f"{self.video_id}: frame index {t.frame_idx[-1]} >= num_frames {self.num_frames}")
        object.__setattr__(self, "tracks", tracks)
        if self.frame_labels is not None:
            labels = np.asarray(self.frame_labels, dtype=np.int64)
            if labels.shape != (self.num_frames,) or not np.all((labels == 0) | (labels == 1)):
                raise FormatError(f"{self.video_id}: frame labels must be {self.num_frames} values in {{0,1}}")
            object.__setattr__(self, "frame_labels", labels)

    def presence(self) -> np.ndarray:
        """Boolean matrix (persons, frames): is track i present at frame t."""
        mask = np.zeros((len(self.tracks), self.num_frames), dtype=bool)
        for i, t in enumerate(self.tracks):
            mask[i, t.frame_idx] = True
        return mask


@dataclass(frozen=True)
class HighLevelFrame:
    centers: np.ndarray  # (M, 2) pixels
    person_ids: tuple[str, ...]


@dataclass(frozen=True)
class LowLevelPose:
    local_coords: np.ndarray  # (17, 2)
    center: np.ndarray  # (2,)
    height: float


@dataclass(frozen=True)
class WindowSample:
    """Four observed feature frames plus the frame to predict.

    ``inputs``/``target`` live in model space. For the low level that is the
    body-normalized pose; for the high level it is each person's center offset
    from its last observed position, divided by ``scale`` (mean body height in
    the window). ``positions`` are the per-frame node coordinates the graph is
    built from.
    """

    level: str
    video_id: str
    node_ids: tuple[str, ...]
    start: int
    inputs: np.ndarray  # (4, V, 2)
    target: np.ndarray  # (V, 2)
    positions: np.ndarray  # (4, V, 2)
    anchor: Optional[np.ndarray] = None  # (V, 2) pixels, high level only
    scale: float = 1.0

    @property
    def end(self) -> int:
        return self.start + OBSERVED

    @property
    def num_nodes(self) -> int:
        return self.inputs.shape[1]

    def to_pixels(self, coords: np.ndarray) -> np.ndarray:
        """Map high-level model-space offsets back to image coordinates."""
        if self.anchor is None:
            raise ValueError("only high-level windows have a pixel frame")
        return self.anchor + coords * self.scale


# --- per-pose preprocessing -------------------------------------------------


def body_height(pose: PoseFrame) -> float:
    y = pose.joints[:, 1]
    h = float(y.max() - y.min())
    if h <= EPS_HEIGHT:
        raise DegeneratePose(f"person {pose.person_id} frame {pose.frame_idx}: height {h}")
    return h


def body_center(pose: PoseFrame) -> tuple[float, float]:
    c = pose.joints[list(TORSO_JOINTS)].mean(axis=0)
    return float(c[0]), float(c[1])


def low_level_features(pose: PoseFrame) -> LowLevelPose:
    h = body_height(pose)
    center = np.array(body_center(pose))
    local = normalize_joints(pose.joints, center, h)
    return LowLevelPose(local, center, h)


def normalize_joints(joints: np.ndarray, center: np.ndarray, height) -> np.ndarray:
    """Center on the torso, then scale x by h/2 and y by h. Broadcasts over leading axes."""
    height = np.asarray(height, dtype=np.float64)[..., None]
    scale = np.concatenate([height / 2.0, height], axis=-1)[..., None, :]
    return (joints - center[..., None, :]) / scale


def denormalize_joints(local: np.ndarray, center: np.ndarray, height) -> np.ndarray:
    height = np.asarray(height, dtype=np.float64)[..., None]
    scale = np.concatenate([height / 2.0, height], axis=-1)[..., None, :]
    return local * scale + center[..., None, :]


def track_geometry(track: Track) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (centers (F,2), heights (F,), valid (F,) bool) for a whole track."""
    centers = track.joints[:, list(TORSO_JOINTS)].mean(axis=1)
    y = track.joints[:, :, 1]
    heights = y.max(axis=1) - y.min(axis=1)
    return centers, heights, heights > EPS_HEIGHT


def high_level_features(clip: SceneClip, t: int) -> HighLevelFrame:
    if not 0 <= t < clip.num_frames:
        raise IndexError(f"frame {t} outside clip of {clip.num_frames} frames")
    centers, ids = [], []
    for track in clip.tracks:
        hit = np.searchsorted(track.frame_idx, t)
        if hit < len(track) and track.frame_idx[hit] == t:
            centers.append(track.joints[hit, list(TORSO_JOINTS)].mean(axis=0))
            ids.append(track.person_id)
    if not ids:
        raise EmptyFrame(f"{clip.video_id}: nobody present at frame {t}")
    return HighLevelFrame(np.array(centers), tuple(ids))


# --- windows ----------------------------------------------------------------


def consecutive_runs(frames: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of consecutive integers as (start_pos, length) into ``frames``."""
    if frames.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(frames) != 1) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [frames.size]])
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def sliding_windows(clip: SceneClip, level: str) -> list[WindowSample]:
    if level == LOW:
        return _low_windows(clip)
    if level == HIGH:
        return _high_windows(clip)
    raise ValueError(f"unknown level {level!r}")


def _low_windows(clip: SceneClip) -> list[WindowSample]:
    out = []
    for track in clip.tracks:
        centers, heights, valid = track_geometry(track)
        # degenerate poses break a run just like a tracker gap
        usable = np.flatnonzero(valid)
        if usable.size < WINDOW:
            continue
        local = normalize_joints(track.joints[usable], centers[usable], heights[usable])
        for pos, length in consecutive_runs(track.frame_idx[usable]):
            for s in range(pos, pos + length - OBSERVED):
                feats = local[s : s + WINDOW]
                out.append(
                    WindowSample(
                        level=LOW,
                        video_id=clip.video_id,
                        node_ids=(track.person_id,),
                        start=int(track.frame_idx[usable[s]]),
                        inputs=feats[:OBSERVED],
                        target=feats[OBSERVED],
                        positions=feats[:OBSERVED],
                    )
                )
    return out


def _high_windows(clip: SceneClip) -> list[WindowSample]:
    T = clip.num_frames
    n = len(clip.tracks)
    if n == 0 or T < WINDOW:
        return []
    centers = np.zeros((n, T, 2))
    heights = np.zeros((n, T))
    present = np.zeros((n, T), dtype=bool)
    for i, track in enumerate(clip.tracks):
        c, h, ok = track_geometry(track)
        centers[i, track.frame_idx] = c
        heights[i, track.frame_idx] = h
        present[i, track.frame_idx] = ok
    # persons present in all five frames of the window starting at s
    csum = np.concatenate([np.zeros((n, 1), dtype=np.int64), np.cumsum(present, axis=1)], axis=1)
    full = (csum[:, WINDOW:] - csum[:, : T - OBSERVED]) == WINDOW  # (n, T-4)
    out = []
    for s in range(T - OBSERVED):
        nodes = np.flatnonzero(full[:, s])
        if nodes.size == 0:
            continue
        c = centers[nodes, s : s + WINDOW].transpose(1, 0, 2)  # (5, V, 2)
        scale = float(heights[nodes, s : s + WINDOW].mean())
        anchor = c[OBSERVED - 1]
        rel = (c - anchor) / scale
        out.append(
            WindowSample(
                level=HIGH,
                video_id=clip.video_id,
                node_ids=tuple(clip.tracks[i].person_id for i in nodes),
                start=s,
                inputs=rel[:OBSERVED],
                target=rel[OBSERVED],
                positions=c[:OBSERVED],
                anchor=anchor,
                scale=scale,
            )
        )
    return out


# --- JSONL corpus I/O -------------------------------------------------------


def read_jsonl(path) -> list[SceneClip]:
    path = Path(path)
    text = path.read_text()
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return clips_from_records(records, source=str(path))


def clips_from_records(records: Iterable[dict], source: str = "<records>") -> list[SceneClip]:
    by_video: dict[str, dict] = {}
    for n, rec in enumerate(records):
        try:
            vid = str(rec["video_id"])
            frame = int(rec["frame_idx"])
            pid = str(rec["person_id"])
            joints = np.asarray(rec["joints"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{source}: record {n}: {exc!r}") from None
        if joints.shape != (NUM_JOINTS, 2):
            raise FormatError(f"{source}: record {n}: joints must be 17 [x, y] pairs")
        v = by_video.setdefault(vid, {"persons": {}, "labels": {}, "scene": None, "max": -1})
        v["persons"].setdefault(pid, []).append((frame, joints))
        v["max"] = max(v["max"], frame)
        if "label" in rec and rec["label"] is not None:
            lab = int(rec["label"])
            if lab not in (0, 1):
                raise FormatError(f"{source}: record {n}: label must be 0 or 1")
            v["labels"][frame] = max(v["labels"].get(frame, 0), lab)
        if rec.get("scene_id") is not None:
            v["scene"] = str(rec["scene_id"])
        if "num_frames" in rec:
            v["max"] = max(v["max"], int(rec["num_frames"]) - 1)

    clips = []
    for vid in sorted(by_video):
        v = by_video[vid]
        tracks = []
        for pid, items in v["persons"].items():
            items.sort(key=lambda it: it[0])
            frames = np.array([f for f, _ in items])
            if np.any(np.diff(frames) == 0):
                raise FormatError(f"{source}: {vid}/{pid}: duplicate frame index")
            tracks.append(Track(pid, frames, np.stack([j for _, j in items])))
        T = v["max"] + 1
        labels = None
        if v["labels"]:
            labels = np.zeros(T, dtype=np.int64)
            for f, lab in v["labels"].items():
                labels[f] = lab
        clips.append(SceneClip(vid, T, tuple(tracks), labels, v["scene"]))
    return clips


def clip_records(clip: SceneClip) -> Iterator[dict]:
    """Records in (frame, person) order, the order ``write_jsonl`` uses."""
    rows = []
    for track in clip.tracks:
        for f, j in zip(track.frame_idx, track.joints):
            rows.append((int(f), track.person_id, j))
    rows.sort(key=lambda r: (r[0], r[1]))
    for f, pid, j in rows:
        rec = {"video_id": clip.video_id, "frame_idx": f, "person_id": pid, "joints": j.tolist(),
               "num_frames": clip.num_frames}
        if clip.frame_labels is not None:
            rec["label"] = int(clip.frame_labels[f])
        if clip.scene_id is not None:
            rec["scene_id"] = clip.scene_id
        yield rec


def write_jsonl(path, clips: Sequence[SceneClip]) -> None:
    with open(path, "w") as fh:
        for clip in clips:
            for rec in clip_records(clip):
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")

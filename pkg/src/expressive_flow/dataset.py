"""Demonstration clips: recording format, windowing into training pairs,
and normalization statistics.

A clip is one JSONL file: a header line identifying the schema, emotion,
source and seed, then one line per 10 Hz frame. Numeric fields use the
wire orders fixed by the pose and face types, so a save/load round trip
is bit-exact.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flowgen.types import ActionChunk, Condition, NormStats, minmax_denormalize, minmax_normalize
from .geometry import Pose
from .retarget import FaceDofs

CLIP_SCHEMA = "expressive-flow/clip/v1"

OBS_DIM = 27   # head 6 + hands 12 + target 3 + 6 reserved slots
ACT_DIM = 25   # head 6 + hands 12 + face 7
_OBS_RESERVED = 6


class EmotionLabel(str, enum.Enum):
    """The seven emotion classes; order is a wire contract."""

    HAPPY = "happy"
    SAD = "sad"
    ANGRY = "angry"
    FEAR = "fear"
    BORED = "bored"
    CURIOUS = "curious"
    CALM = "calm"

    @property
    def index(self) -> int:
        return _EMOTION_ORDER.index(self)

    def onehot(self) -> np.ndarray:
        v = np.zeros(len(_EMOTION_ORDER))
        v[self.index] = 1.0
        return v

    @classmethod
    def from_index(cls, i: int) -> "EmotionLabel":
        return _EMOTION_ORDER[i]


_EMOTION_ORDER = tuple(EmotionLabel)
EMOTIONS = tuple(e.value for e in _EMOTION_ORDER)


class ClipFormatError(Exception):
    """A clip file failed to parse; carries the file, the offending line
    number (1-based), and the valid prefix as ``partial``."""

    def __init__(self, message: str, path=None, line: int | None = None, partial=None):
        loc = f"{path}:{line}: " if path is not None else ""
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line
        self.partial = partial


@dataclass(frozen=True)
class Frame:
    """One 10 Hz observation-action sample."""

    t_ms: int
    head: Pose
    hand_left: Pose
    hand_right: Pose
    face: FaceDofs
    target_pos: np.ndarray
    mark: bool = False

    def __post_init__(self):
        tp = np.asarray(self.target_pos, dtype=float)
        if tp.shape != (3,) or not np.all(np.isfinite(tp)):
            raise ValueError(f"target_pos must be a finite 3-vector, got {tp}")
        tp.setflags(write=False)
        object.__setattr__(self, "target_pos", tp)
        object.__setattr__(self, "t_ms", int(self.t_ms))

    def obs_vector(self) -> np.ndarray:
        """Observation layout: head 6, hand_l 6, hand_r 6, target 3, reserved 6."""
        return np.concatenate([
            self.head.to_vec6(),
            self.hand_left.to_vec6(),
            self.hand_right.to_vec6(),
            self.target_pos,
            np.zeros(_OBS_RESERVED),
        ])

    def action_vector(self) -> np.ndarray:
        """Action layout: head 6, hand_l 6, hand_r 6, face 7."""
        return np.concatenate([
            self.head.to_vec6(),
            self.hand_left.to_vec6(),
            self.hand_right.to_vec6(),
            self.face.to_vec(),
        ])


def action_vector_to_parts(vec) -> tuple[Pose, Pose, Pose, FaceDofs]:
    """Split a 25-dim action vector back into poses and face DoFs."""
    a = np.asarray(vec, dtype=float)
    if a.shape != (ACT_DIM,):
        raise ValueError(f"action vector must have shape ({ACT_DIM},), got {a.shape}")
    return (
        Pose.from_vec6(a[0:6]),
        Pose.from_vec6(a[6:12]),
        Pose.from_vec6(a[12:18]),
        FaceDofs.clamped(*a[18:25]),
    )


@dataclass
class DemoClip:
    """A recorded demonstration: one emotion, ordered frames, provenance."""

    emotion: EmotionLabel
    frames: list
    source: str = "synthetic"
    seed: int | None = None
    created_at: str | None = None

    def __post_init__(self):
        if self.source not in ("human", "synthetic"):
            raise ValueError(f"source must be 'human' or 'synthetic', got {self.source!r}")
        ts = [f.t_ms for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    def obs_matrix(self) -> np.ndarray:
        return np.stack([f.obs_vector() for f in self.frames])

    def action_matrix(self) -> np.ndarray:
        return np.stack([f.action_vector() for f in self.frames])

    def mean_action(self) -> np.ndarray:
        return self.action_matrix().mean(axis=0)


def window(clip: DemoClip, history: int, horizon: int, stride: int = 1):
    """Slice a clip into (Condition, ActionChunk) training pairs.

    For each anchor index i, the condition holds frames [i-H+1, i] and the
    chunk holds the H-step-later actions [i+1, i+Tp]. Stride 1 yields
    len - H - Tp + 1 pairs.
    """
    if history < 1 or horizon < 1 or stride < 1:
        raise ValueError("history, horizon and stride must all be >= 1")
    n = len(clip.frames)
    minimum = history + horizon
    if n < minimum:
        raise ValueError(
            f"clip has {n} frames; windowing with H={history}, Tp={horizon} "
            f"needs at least {minimum}"
        )
    obs = clip.obs_matrix()
    act = clip.action_matrix()
    onehot = clip.emotion.onehot()
    pairs = []
    for i in range(history - 1, n - horizon, stride):
        cond = Condition(onehot, obs[i - history + 1 : i + 1])
        chunk = ActionChunk(act[i + 1 : i + horizon + 1])
        pairs.append((cond, chunk))
    return pairs


def window_corpus(clips, history: int, horizon: int, stride: int = 1):
    pairs = []
    for clip in clips:
        pairs.extend(window(clip, history, horizon, stride))
    return pairs


def compute_norm_stats(clips) -> NormStats:
    """Per-dimension min/max of observation and action vectors over a corpus."""
    if not clips:
        raise ValueError("cannot compute normalization stats over an empty corpus")
    obs = np.concatenate([c.obs_matrix() for c in clips])
    act = np.concatenate([c.action_matrix() for c in clips])
    return NormStats(obs.min(axis=0), obs.max(axis=0), act.min(axis=0), act.max(axis=0))


# the generic min-max maps, re-exported for direct use on raw vectors
normalize = minmax_normalize
denormalize = minmax_denormalize


# ---------------------------------------------------------------------------
# clip files

def _frame_to_obj(frame: Frame) -> dict:
    obj = {
        "t_ms": frame.t_ms,
        "head": frame.head.to_vec6().tolist(),
        "hand_l": frame.hand_left.to_vec6().tolist(),
        "hand_r": frame.hand_right.to_vec6().tolist(),
        "face": frame.face.to_vec().tolist(),
        "target": frame.target_pos.tolist(),
    }
    if frame.mark:
        obj["mark"] = True
    return obj


def _vec(obj: dict, key: str, n: int, where: str) -> np.ndarray:
    if key not in obj:
        raise ValueError(f"{where} is missing '{key}'")
    a = np.asarray(obj[key], dtype=float)
    if a.shape != (n,):
        raise ValueError(f"{where} field '{key}' must have {n} numbers, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{where} field '{key}' contains non-finite values")
    return a


def _frame_from_obj(obj: dict) -> Frame:
    if not isinstance(obj, dict):
        raise ValueError("frame line must be a JSON object")
    t_ms = obj.get("t_ms")
    if not isinstance(t_ms, (int, float)) or not math.isfinite(t_ms):
        raise ValueError("frame is missing a finite 't_ms'")
    return Frame(
        t_ms=int(t_ms),
        head=Pose.from_vec6(_vec(obj, "head", 6, "frame")),
        hand_left=Pose.from_vec6(_vec(obj, "hand_l", 6, "frame")),
        hand_right=Pose.from_vec6(_vec(obj, "hand_r", 6, "frame")),
        face=FaceDofs.from_vec(_vec(obj, "face", 7, "frame")),
        target_pos=_vec(obj, "target", 3, "frame"),
        mark=bool(obj.get("mark", False)),
    )


def save_clip(clip: DemoClip, path) -> None:
    path = Path(path)
    header = {
        "schema": CLIP_SCHEMA,
        "emotion": clip.emotion.value,
        "source": clip.source,
        "seed": clip.seed,
    }
    if clip.created_at is not None:
        header["created_at"] = clip.created_at
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for frame in clip.frames:
            fh.write(json.dumps(_frame_to_obj(frame)) + "\n")


def load_clip(path) -> DemoClip:
    """Parse one clip file; raise :class:`ClipFormatError` on any defect.

    The error's ``partial`` attribute carries everything that parsed
    cleanly before the offending line.
    """
    path = Path(path)
    frames: list[Frame] = []
    header = None

    def fail(message: str, line_no: int):
        partial = None
        if header is not None:
            partial = DemoClip(
                emotion=EmotionLabel(header["emotion"]),
                frames=frames,
                source=header.get("source", "human"),
                seed=header.get("seed"),
                created_at=header.get("created_at"),
            )
        raise ClipFormatError(message, path=path, line=line_no, partial=partial)

    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                fail(f"invalid JSON ({e.msg})", line_no)
            if line_no == 1:
                if not isinstance(obj, dict) or obj.get("schema") != CLIP_SCHEMA:
                    fail(f"header must declare schema {CLIP_SCHEMA!r}", line_no)
                if obj.get("emotion") not in EMOTIONS:
                    fail(f"unknown emotion {obj.get('emotion')!r}", line_no)
                header = obj
                continue
            try:
                frame = _frame_from_obj(obj)
            except ValueError as e:
                fail(str(e), line_no)
            if frames and frame.t_ms <= frames[-1].t_ms:
                fail(f"t_ms {frame.t_ms} does not increase past {frames[-1].t_ms}", line_no)
            frames.append(frame)
    if header is None:
        raise ClipFormatError("clip file is empty", path=path, line=1)
    return DemoClip(
        emotion=EmotionLabel(header["emotion"]),
        frames=frames,
        source=header.get("source", "human"),
        seed=header.get("seed"),
        created_at=header.get("created_at"),
    )


def load_corpus(directory) -> list[DemoClip]:
    """Load every ``*.jsonl`` clip under a directory (sorted by name)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ClipFormatError(f"not a directory: {directory}", path=directory)
    return [load_clip(p) for p in sorted(directory.glob("*.jsonl"))]


def save_corpus(clips, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for clip in clips:
        name = f"{clip.emotion.value}_{clip.seed}.jsonl"
        p = directory / name
        save_clip(clip, p)
        paths.append(p)
    return paths

"""Core domain types for skeleton-based exercise scoring.

Recordings, joint addressing, score labels, repetitions, and feature vectors
shared by the ingestion, preprocessing, feature, and model layers. All types
are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

N_JOINTS = 25
REP_LENGTH = 104        # frames per standardized repetition
SCORE_MAX = 50.0        # raw clinical score upper bound
QUAT_NORM_TOL = 1e-3    # accepted deviation of quaternion norms from 1

# Kinect v2 enumeration of the three joints consumer VR gear can track.
# Datasets with other orderings override this via the ingest manifest.
DEFAULT_JOINT_NAMES: Mapping[str, int] = {
    "HEAD": 3,
    "HAND_LEFT": 7,
    "HAND_RIGHT": 11,
}


class RehabScoreError(Exception):
    """Base class for pipeline errors. `code` is a stable machine tag."""

    code = "ERROR"

    def __init__(self, message: str):
        super().__init__(f"{self.code}: {message}")
        self.message = message


class JointMapError(RehabScoreError):
    code = "JOINT_MAP_INVALID"


class ScoreOutOfRangeError(RehabScoreError):
    code = "SCORE_OUT_OF_RANGE"


class Group(Enum):
    CONTROL = "control"
    PATIENT = "patient"


class StreamKind(Enum):
    """Whether joint data are 3D positions (meters) or unit quaternions."""

    POSITION = "position"
    ORIENTATION = "orientation"

    @property
    def components(self) -> int:
        return 3 if self is StreamKind.POSITION else 4


@dataclass(frozen=True)
class JointMap:
    """Joint name -> index table.

    Indices must be distinct and within [0, 25). At minimum HEAD, HAND_LEFT,
    and HAND_RIGHT must be present; call sites address joints through this
    map instead of hard-coding sensor indices.
    """

    names: Mapping[str, int]

    REQUIRED = ("HEAD", "HAND_LEFT", "HAND_RIGHT")

    def __post_init__(self):
        for name in self.REQUIRED:
            if name not in self.names:
                raise JointMapError(f"missing required joint name {name!r}")
        for name, idx in self.names.items():
            if not (isinstance(idx, (int, np.integer)) and 0 <= idx < N_JOINTS):
                raise JointMapError(f"{name!r} index {idx!r} outside [0, {N_JOINTS - 1}]")
        indices = list(self.names.values())
        if len(set(indices)) != len(indices):
            raise JointMapError(f"duplicate joint indices in map: {dict(self.names)}")
        object.__setattr__(self, "names", dict(self.names))

    @property
    def head(self) -> int:
        return self.names["HEAD"]

    @property
    def hand_left(self) -> int:
        return self.names["HAND_LEFT"]

    @property
    def hand_right(self) -> int:
        return self.names["HAND_RIGHT"]

    def index_of(self, name: str) -> int:
        try:
            return self.names[name]
        except KeyError:
            raise JointMapError(f"unknown joint name {name!r}") from None

    def name_of(self, index: int) -> str | None:
        for name, idx in self.names.items():
            if idx == index:
                return name
        return None


DEFAULT_JOINT_MAP = JointMap(DEFAULT_JOINT_NAMES)


class JointSelection(Enum):
    """Which joints feed the models: the full skeleton, or head + hands only
    (the three points a headset plus controllers can track)."""

    FULL = "full"
    VR = "vr"

    def indices(self, joints: JointMap) -> tuple[int, ...]:
        if self is JointSelection.FULL:
            return tuple(range(N_JOINTS))
        return (joints.head, joints.hand_left, joints.hand_right)


def normalize_score(raw: float) -> float:
    """Map a raw clinical score in [0, 50] to [0, 1]."""
    if not 0.0 <= raw <= SCORE_MAX:
        raise ScoreOutOfRangeError(f"raw score {raw!r} outside [0, {SCORE_MAX}]")
    return raw / SCORE_MAX


def denormalize_score(value: float) -> float:
    """Inverse of :func:`normalize_score`."""
    return value * SCORE_MAX


@dataclass(frozen=True)
class ScoreLabel:
    """Clinical quality score, raw (0..50) and normalized (0..1)."""

    raw: float
    normalized: float

    @classmethod
    def from_raw(cls, raw: float) -> "ScoreLabel":
        return cls(raw=float(raw), normalized=normalize_score(float(raw)))


def _freeze_frames(obj, frames) -> None:
    arr = np.ascontiguousarray(np.asarray(frames, dtype=np.float64))
    arr.setflags(write=False)
    object.__setattr__(obj, "frames", arr)


@dataclass(frozen=True)
class SkeletonRecording:
    """One subject x exercise time series of per-joint components.

    `frames` has shape (n_frames, 25, components) where components is 3 for
    positions (x, y, z in meters) and 4 for orientations (unit quaternions
    w, x, y, z). Use :func:`validate_recording` to check invariants; the
    constructor only coerces the array so malformed inputs can be inspected.
    """

    subject_id: str
    group: Group
    exercise_id: int
    stream: StreamKind
    frames: np.ndarray
    label: ScoreLabel
    sample_rate_hz: float = 30.0

    def __post_init__(self):
        _freeze_frames(self, self.frames)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])


def validate_recording(rec: SkeletonRecording) -> list[str]:
    """Return one human-readable entry per invariant violation (empty if valid)."""
    violations: list[str] = []
    frames = rec.frames
    if frames.ndim != 3:
        violations.append(f"frames must be 3-dimensional, got ndim={frames.ndim}")
        return violations
    n_frames, n_joints, n_comp = frames.shape
    if n_joints != N_JOINTS:
        violations.append(f"expected {N_JOINTS} joints per frame, got {n_joints}")
    expected_comp = rec.stream.components
    if n_comp != expected_comp:
        violations.append(
            f"{rec.stream.value} frames need {expected_comp} components per joint, got {n_comp}"
        )
    if n_frames < 2:
        violations.append("n_frames < 2")
    if not 1 <= rec.exercise_id <= 5:
        violations.append(f"exercise_id {rec.exercise_id} outside [1, 5]")
    if not rec.sample_rate_hz > 0:
        violations.append(f"sample_rate_hz {rec.sample_rate_hz} is not positive")
    if not np.isfinite(frames).all():
        violations.append("frames contain NaN or infinite values")
    elif rec.stream is StreamKind.ORIENTATION and n_comp == 4:
        norms = np.linalg.norm(frames, axis=2)
        bad = np.abs(norms - 1.0) > QUAT_NORM_TOL
        if bad.any():
            n_bad = int(bad.sum())
            frame_idx, joint_idx = np.argwhere(bad)[0]
            violations.append(
                f"{n_bad} quaternions deviate from unit norm by more than "
                f"{QUAT_NORM_TOL} (first at frame {frame_idx}, joint {joint_idx})"
            )
    if not 0.0 <= rec.label.raw <= SCORE_MAX:
        violations.append(f"label raw score {rec.label.raw} outside [0, {SCORE_MAX}]")
    if abs(rec.label.normalized - rec.label.raw / SCORE_MAX) > 1e-12:
        violations.append("label normalized value does not equal raw / 50")
    return violations


@dataclass(frozen=True)
class Repetition:
    """One segmented exercise repetition, standardized to 104 frames.

    The label is inherited from the source recording: every repetition of a
    file shares the file-level clinical score.
    """

    subject_id: str
    exercise_id: int
    repetition_index: int
    stream: StreamKind
    frames: np.ndarray
    label: ScoreLabel

    def __post_init__(self):
        _freeze_frames(self, self.frames)
        if self.frames.shape[0] != REP_LENGTH:
            raise ValueError(
                f"repetition must have exactly {REP_LENGTH} frames, "
                f"got {self.frames.shape[0]}"
            )

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.subject_id, self.exercise_id, self.repetition_index)


class FeatureVectorError(RehabScoreError):
    code = "FEATURE_VECTOR_INVALID"


@dataclass(frozen=True)
class FeatureVector:
    """Named statistical features computed over one repetition."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or len(self.names) != values.shape[0]:
            raise FeatureVectorError(
                f"{len(self.names)} names vs {values.shape} values"
            )
        if len(set(self.names)) != len(self.names):
            raise FeatureVectorError("feature names are not unique")
        if not np.isfinite(values).all():
            bad = [self.names[i] for i in np.flatnonzero(~np.isfinite(values))[:5]]
            raise FeatureVectorError(f"non-finite feature values: {bad}")

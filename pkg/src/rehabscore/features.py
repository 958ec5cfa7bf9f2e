"""Statistical features over repetition channels.

A feature channel reduces each frame of a repetition to one scalar (a joint
coordinate, an inter-hand gap, or a hand-to-head distance/angle); a feature
is one summary statistic of that 104-long series. The default hand/head
configuration yields 44 features on position streams and 56 on orientation
streams; FULL-body configurations append per-axis channels for the remaining
joints.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_JOINT_MAP,
    N_JOINTS,
    FeatureVector,
    JointMap,
    JointSelection,
    RehabScoreError,
    Repetition,
    StreamKind,
)


class FeatureConfigError(RehabScoreError):
    code = "FEATURE_CONFIG_INVALID"


class JointNotInSelectionError(RehabScoreError):
    code = "JOINT_NOT_IN_SELECTION"


class ChannelKind(Enum):
    PER_AXIS_COORD = "per_axis_coord"
    INTER_HAND_AXIS_DIFF = "inter_hand_axis_diff"
    HAND_HEAD_EUCLID = "hand_head_euclid"
    HAND_HEAD_GEODESIC = "hand_head_geodesic"


class Stat(Enum):
    MAX = "max"
    MIN = "min"
    MEAN = "mean"
    STD = "std"


ALL_STATS = (Stat.MAX, Stat.MIN, Stat.MEAN, Stat.STD)

_POSITION_AXES = "xyz"
_ORIENTATION_AXES = "wxyz"
_SHORT_NAMES = {"HEAD": "head", "HAND_LEFT": "lhand", "HAND_RIGHT": "rhand"}


@dataclass(frozen=True)
class FeatureChannel:
    """One per-frame scalar series. Joint indices are resolved at build time."""

    name: str
    kind: ChannelKind
    joint_a: int | None = None
    joint_b: int | None = None
    component: int | None = None

    def joints(self) -> tuple[int, ...]:
        return tuple(j for j in (self.joint_a, self.joint_b) if j is not None)


@dataclass(frozen=True)
class FeatureConfig:
    channels: tuple[FeatureChannel, ...]
    selection: JointSelection
    stream: StreamKind
    joint_map: JointMap = DEFAULT_JOINT_MAP
    stats: tuple[Stat, ...] = ALL_STATS

    def __post_init__(self):
        if not self.channels or not self.stats:
            raise FeatureConfigError("channels and stats must be non-empty")
        names = [ch.name for ch in self.channels]
        if len(set(names)) != len(names):
            raise FeatureConfigError("channel names are not unique")

    @property
    def n_features(self) -> int:
        return len(self.channels) * len(self.stats)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(
            f"{ch.name}.{stat.value}" for ch in self.channels for stat in self.stats
        )


def _axes(stream: StreamKind) -> str:
    return _POSITION_AXES if stream is StreamKind.POSITION else _ORIENTATION_AXES


def _joint_label(index: int, joints: JointMap) -> str:
    name = joints.name_of(index)
    if name is None:
        return f"joint{index:02d}"
    return _SHORT_NAMES.get(name, name.lower())


def _coord_channels(index: int, stream: StreamKind, joints: JointMap) -> list[FeatureChannel]:
    label = _joint_label(index, joints)
    return [
        FeatureChannel(
            name=f"{label}_{axis}",
            kind=ChannelKind.PER_AXIS_COORD,
            joint_a=index,
            component=c,
        )
        for c, axis in enumerate(_axes(stream))
    ]


def default_config(
    stream: StreamKind,
    selection: JointSelection,
    joints: JointMap = DEFAULT_JOINT_MAP,
    include_head_coords: bool = False,
) -> FeatureConfig:
    """Build the standard feature configuration.

    Position + VR: 3 inter-hand per-axis gaps, 2 hand-to-head distances, and
    per-axis coordinates of both hands — 11 channels x 4 stats = 44 features.
    Orientation streams use per-quaternion-component gaps and geodesic
    hand-to-head angles (14 channels, 56 features). FULL selections append
    per-axis channels for every joint other than the hands; VR selections may
    instead add the head coordinates via `include_head_coords`.
    """
    axes = _axes(stream)
    left, right, head = joints.hand_left, joints.hand_right, joints.head
    channels: list[FeatureChannel] = [
        FeatureChannel(
            name=f"hand_gap_{axis}",
            kind=ChannelKind.INTER_HAND_AXIS_DIFF,
            joint_a=left,
            joint_b=right,
            component=c,
        )
        for c, axis in enumerate(axes)
    ]
    relation = (
        ChannelKind.HAND_HEAD_EUCLID
        if stream is StreamKind.POSITION
        else ChannelKind.HAND_HEAD_GEODESIC
    )
    suffix = "dist" if stream is StreamKind.POSITION else "angle"
    channels += [
        FeatureChannel(
            name=f"{_joint_label(hand, joints)}_head_{suffix}",
            kind=relation,
            joint_a=hand,
            joint_b=head,
        )
        for hand in (left, right)
    ]
    channels += _coord_channels(left, stream, joints)
    channels += _coord_channels(right, stream, joints)
    if selection is JointSelection.FULL:
        for index in range(N_JOINTS):
            if index in (left, right):
                continue
            channels += _coord_channels(index, stream, joints)
    elif include_head_coords:
        channels += _coord_channels(head, stream, joints)
    return FeatureConfig(
        channels=tuple(channels), selection=selection, stream=stream, joint_map=joints
    )


def named_config(
    name: str,
    stream: StreamKind,
    selection: JointSelection,
    joints: JointMap = DEFAULT_JOINT_MAP,
) -> FeatureConfig:
    """Resolve a CLI config name (`paper44` or `full56`)."""
    if name == "paper44":
        return default_config(stream, selection, joints)
    if name == "full56":
        return default_config(stream, selection, joints, include_head_coords=True)
    raise FeatureConfigError(f"unknown feature config name {name!r}")


def config_from_dict(
    data: dict,
    stream: StreamKind,
    selection: JointSelection,
    joints: JointMap = DEFAULT_JOINT_MAP,
) -> FeatureConfig:
    """Build a custom configuration from a JSON-style mapping."""
    axes = _axes(stream)

    def resolve(ref) -> int:
        if isinstance(ref, str):
            return joints.index_of(ref)
        return int(ref)

    channels = []
    for entry in data.get("channels", []):
        kind = ChannelKind(entry["kind"])
        if kind is ChannelKind.PER_AXIS_COORD:
            index = resolve(entry["joint"])
            component = int(entry["component"])
            name = entry.get("name", f"{_joint_label(index, joints)}_{axes[component]}")
            channels.append(
                FeatureChannel(name=name, kind=kind, joint_a=index, component=component)
            )
        elif kind is ChannelKind.INTER_HAND_AXIS_DIFF:
            component = int(entry["component"])
            name = entry.get("name", f"hand_gap_{axes[component]}")
            channels.append(
                FeatureChannel(
                    name=name,
                    kind=kind,
                    joint_a=joints.hand_left,
                    joint_b=joints.hand_right,
                    component=component,
                )
            )
        else:
            hand = resolve(entry["hand"])
            suffix = "dist" if kind is ChannelKind.HAND_HEAD_EUCLID else "angle"
            name = entry.get("name", f"{_joint_label(hand, joints)}_head_{suffix}")
            channels.append(
                FeatureChannel(name=name, kind=kind, joint_a=hand, joint_b=joints.head)
            )
    stats = tuple(Stat(s) for s in data.get("stats", [s.value for s in ALL_STATS]))
    return FeatureConfig(
        channels=tuple(channels),
        selection=selection,
        stream=stream,
        joint_map=joints,
        stats=stats,
    )


def evaluate_channel(
    rep: Repetition, ch: FeatureChannel, allowed_joints: Iterable[int] | None = None
) -> np.ndarray:
    """Per-frame scalar series for one channel of one repetition."""
    if allowed_joints is not None:
        allowed = set(allowed_joints)
        for j in ch.joints():
            if j not in allowed:
                raise JointNotInSelectionError(
                    f"channel {ch.name!r} uses joint {j}, not in the active selection"
                )
    frames = rep.frames
    if ch.kind is ChannelKind.PER_AXIS_COORD:
        return frames[:, ch.joint_a, ch.component]
    if ch.kind is ChannelKind.INTER_HAND_AXIS_DIFF:
        return np.abs(frames[:, ch.joint_a, ch.component] - frames[:, ch.joint_b, ch.component])
    if ch.kind is ChannelKind.HAND_HEAD_EUCLID:
        if rep.stream is not StreamKind.POSITION:
            raise FeatureConfigError(
                f"channel {ch.name!r}: euclidean distance needs a position stream"
            )
        delta = frames[:, ch.joint_a, :] - frames[:, ch.joint_b, :]
        return np.linalg.norm(delta, axis=1)
    if ch.kind is ChannelKind.HAND_HEAD_GEODESIC:
        if rep.stream is not StreamKind.ORIENTATION:
            raise FeatureConfigError(
                f"channel {ch.name!r}: geodesic angle needs an orientation stream"
            )
        dots = np.abs(np.sum(frames[:, ch.joint_a, :] * frames[:, ch.joint_b, :], axis=1))
        # arccos amplifies ulp-level rounding near 1 to ~1e-8 angles; snap so
        # identical rotations measure exactly zero
        dots = np.where(dots >= 1.0 - 1e-12, 1.0, dots)
        return 2.0 * np.arccos(np.clip(dots, 0.0, 1.0))
    raise FeatureConfigError(f"unhandled channel kind {ch.kind}")


_STAT_FUNCS = {
    Stat.MAX: np.max,
    Stat.MIN: np.min,
    Stat.MEAN: np.mean,
    Stat.STD: np.std,  # population: repetitions are complete windows
}


def extract(rep: Repetition, cfg: FeatureConfig) -> FeatureVector:
    """Compute the configured statistics for every channel, in order."""
    if rep.stream is not cfg.stream:
        raise FeatureConfigError(
            f"config built for {cfg.stream.value}, repetition carries {rep.stream.value}"
        )
    allowed = set(cfg.selection.indices(cfg.joint_map))
    values = np.empty(cfg.n_features, dtype=np.float64)
    pos = 0
    for ch in cfg.channels:
        series = evaluate_channel(rep, ch, allowed)
        for stat in cfg.stats:
            values[pos] = _STAT_FUNCS[stat](series)
            pos += 1
    return FeatureVector(names=cfg.feature_names, values=values)


KEY_COLUMNS = ("subject_id", "exercise_id", "repetition_index", "label")


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature vectors for many repetitions, with their identifying keys."""

    feature_names: tuple[str, ...]
    subject_ids: tuple[str, ...]
    exercise_ids: tuple[int, ...]
    repetition_indices: tuple[int, ...]
    labels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        n = len(self.subject_ids)
        labels = np.asarray(self.labels, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if not (
            len(self.exercise_ids) == len(self.repetition_indices) == n
            and labels.shape == (n,)
            and values.shape == (n, len(self.feature_names))
        ):
            raise FeatureConfigError("feature matrix fields disagree on row count")
        labels.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return len(self.subject_ids)

    def keys(self) -> list[tuple[str, int, int]]:
        return list(zip(self.subject_ids, self.exercise_ids, self.repetition_indices))


def extract_matrix(repetitions: Sequence[Repetition], cfg: FeatureConfig) -> FeatureMatrix:
    """Feature-extract a batch of repetitions into one matrix."""
    if not repetitions:
        raise FeatureConfigError("no repetitions to extract features from")
    names = cfg.feature_names
    values = np.empty((len(repetitions), len(names)), dtype=np.float64)
    for i, rep in enumerate(repetitions):
        values[i] = extract(rep, cfg).values
    return FeatureMatrix(
        feature_names=names,
        subject_ids=tuple(r.subject_id for r in repetitions),
        exercise_ids=tuple(r.exercise_id for r in repetitions),
        repetition_indices=tuple(r.repetition_index for r in repetitions),
        labels=np.array([r.label.normalized for r in repetitions]),
        values=values,
    )


def write_feature_matrix(path, matrix: FeatureMatrix) -> None:
    """Write the matrix CSV: key/label columns, then one column per feature."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(KEY_COLUMNS) + list(matrix.feature_names))
        for i in range(matrix.n_rows):
            writer.writerow(
                [
                    matrix.subject_ids[i],
                    matrix.exercise_ids[i],
                    matrix.repetition_indices[i],
                    repr(float(matrix.labels[i])),
                ]
                + [repr(float(v)) for v in matrix.values[i]]
            )


def read_feature_matrix(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:4]) != KEY_COLUMNS:
            raise FeatureConfigError(
                f"feature matrix must start with columns {KEY_COLUMNS}, got {header}"
            )
        names = tuple(header[4:])
        subjects, exercises, reps, labels, rows = [], [], [], [], []
        for row in reader:
            if len(row) != 4 + len(names):
                raise FeatureConfigError(
                    f"row has {len(row)} columns, expected {4 + len(names)}"
                )
            subjects.append(row[0])
            exercises.append(int(row[1]))
            reps.append(int(row[2]))
            labels.append(float(row[3]))
            rows.append([float(v) for v in row[4:]])
    return FeatureMatrix(
        feature_names=names,
        subject_ids=tuple(subjects),
        exercise_ids=tuple(exercises),
        repetition_indices=tuple(reps),
        labels=np.array(labels, dtype=np.float64),
        values=np.array(rows, dtype=np.float64).reshape(len(subjects), len(names)),
    )

"""Manifest-driven dataset ingestion.

A dataset is a directory tree of per-recording CSV files plus one JSON
manifest describing the column layout, the joint table, per-stream file
patterns, and the score file. Nothing about the tree shape is hard-coded:
subject and exercise ids are pulled from path names via the manifest's
regular expressions, so both Kinect exports and future VR-device dumps can
be mapped onto the same recording type.

Corrupt rows (any non-numeric cell) are dropped and counted rather than
failing the file; depth-sensor exports commonly contain dropout frames.
A timestamp column, when declared, is parsed for width checking and then
discarded: downstream code assumes a uniform sample rate, so time is always
frame_index / sample_rate_hz.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import (
    DEFAULT_JOINT_NAMES,
    N_JOINTS,
    QUAT_NORM_TOL,
    Group,
    JointMap,
    RehabScoreError,
    ScoreLabel,
    SkeletonRecording,
    StreamKind,
    validate_recording,
)

MANIFEST_SCHEMA_VERSION = 1


class ManifestError(RehabScoreError):
    code = "MANIFEST_INVALID"


class ColumnMismatchError(RehabScoreError):
    code = "COLUMN_MISMATCH"


class EmptyFileError(RehabScoreError):
    code = "EMPTY_FILE"


class LabelMissingError(RehabScoreError):
    code = "LABEL_MISSING"


class DuplicateKeyError(RehabScoreError):
    code = "DUPLICATE_KEY"


class ScoreFileError(RehabScoreError):
    code = "SCORE_FILE_INVALID"


class RecordingInvalidError(RehabScoreError):
    code = "RECORDING_INVALID"


class ColumnLayout(Enum):
    """Per-joint column grouping of a recording CSV.

    XYZC is XYZ plus a trailing per-joint confidence column, which is parsed
    and discarded.
    """

    JOINT_MAJOR_XYZ = "joint_major_xyz"
    JOINT_MAJOR_XYZC = "joint_major_xyzc"
    JOINT_MAJOR_WXYZ = "joint_major_wxyz"

    @property
    def per_joint_width(self) -> int:
        return 3 if self is ColumnLayout.JOINT_MAJOR_XYZ else 4

    @property
    def stream(self) -> StreamKind:
        if self is ColumnLayout.JOINT_MAJOR_WXYZ:
            return StreamKind.ORIENTATION
        return StreamKind.POSITION


@dataclass(frozen=True)
class StreamFiles:
    """How one stream's recording files look and where they live."""

    column_layout: ColumnLayout
    path_pattern: str  # regex over the /-separated path relative to the root

    def __post_init__(self):
        try:
            compiled = re.compile(self.path_pattern)
        except re.error as exc:
            raise ManifestError(f"invalid path_pattern {self.path_pattern!r}: {exc}")
        for group in ("subject", "exercise"):
            if group not in compiled.groupindex:
                raise ManifestError(
                    f"path_pattern {self.path_pattern!r} lacks a (?P<{group}>...) group"
                )
        object.__setattr__(self, "_compiled", compiled)

    def match(self, relative_path: str):
        return self._compiled.fullmatch(relative_path)


@dataclass(frozen=True)
class IngestManifest:
    root: Path
    streams: Mapping[StreamKind, StreamFiles]
    joint_map: JointMap
    sample_rate_hz: float
    score_file: str
    score_column: str = "score"
    delimiter: str = ","
    has_timestamp_column: bool = False
    source_path: "Path | None" = None  # the manifest file itself, when file-loaded

    def __post_init__(self):
        if not self.streams:
            raise ManifestError("manifest declares no streams")
        for stream, files in self.streams.items():
            if files.column_layout.stream is not stream:
                raise ManifestError(
                    f"column_layout {files.column_layout.value} cannot carry "
                    f"the {stream.value} stream"
                )
        if not self.sample_rate_hz > 0:
            raise ManifestError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if len(self.delimiter) != 1:
            raise ManifestError(f"delimiter must be a single character, got {self.delimiter!r}")
        object.__setattr__(self, "streams", dict(self.streams))

    def layout_for(self, stream: StreamKind) -> StreamFiles:
        try:
            return self.streams[stream]
        except KeyError:
            raise ManifestError(f"manifest declares no {stream.value} stream") from None

    def row_width(self, stream: StreamKind) -> int:
        width = self.layout_for(stream).column_layout.per_joint_width * N_JOINTS
        return width + 1 if self.has_timestamp_column else width

    @property
    def score_path(self) -> Path:
        return self.root / self.score_file


_MANIFEST_KEYS = {
    "schema_version",
    "sample_rate_hz",
    "delimiter",
    "has_timestamp_column",
    "joint_name_map",
    "score_file",
    "score_column",
    "streams",
}


def load_manifest(path) -> IngestManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path} ({exc})")
    except ValueError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise ManifestError(f"manifest {path} must hold a JSON object")
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise ManifestError(f"unknown manifest keys: {sorted(unknown)}")
    version = doc.get("schema_version", MANIFEST_SCHEMA_VERSION)
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(
            f"unsupported manifest schema_version {version!r} "
            f"(expected {MANIFEST_SCHEMA_VERSION})"
        )
    for key in ("sample_rate_hz", "score_file", "streams"):
        if key not in doc:
            raise ManifestError(f"manifest is missing required key {key!r}")

    streams: dict[StreamKind, StreamFiles] = {}
    for stream_name, entry in doc["streams"].items():
        try:
            stream = StreamKind(stream_name)
        except ValueError:
            raise ManifestError(f"unknown stream name {stream_name!r}")
        if not isinstance(entry, dict) or set(entry) != {"column_layout", "path_pattern"}:
            raise ManifestError(
                f"stream {stream_name!r} must define exactly "
                "column_layout and path_pattern"
            )
        try:
            layout = ColumnLayout(entry["column_layout"])
        except ValueError:
            raise ManifestError(f"unknown column_layout {entry['column_layout']!r}")
        streams[stream] = StreamFiles(layout, entry["path_pattern"])

    joint_map = JointMap(doc.get("joint_name_map", DEFAULT_JOINT_NAMES))
    return IngestManifest(
        root=path.parent,
        streams=streams,
        joint_map=joint_map,
        sample_rate_hz=float(doc["sample_rate_hz"]),
        score_file=str(doc["score_file"]),
        score_column=str(doc.get("score_column", "score")),
        delimiter=str(doc.get("delimiter", ",")),
        has_timestamp_column=bool(doc.get("has_timestamp_column", False)),
        source_path=path,
    )


@dataclass
class IngestLog:
    """Per-run accounting: dropped rows and repaired quaternions per file."""

    dropped_rows: dict = field(default_factory=dict)
    renormalized: dict = field(default_factory=dict)
    unmatched: list = field(default_factory=list)

    def record_file(self, path, dropped: int, renormalized: int = 0) -> None:
        self.dropped_rows[str(path)] = int(dropped)
        self.renormalized[str(path)] = int(renormalized)

    def record_unmatched(self, path) -> None:
        self.unmatched.append(str(path))

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped_rows.values())

    @property
    def total_renormalized(self) -> int:
        return sum(self.renormalized.values())

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "files": [
                {
                    "path": p,
                    "dropped_rows": n,
                    "renormalized_quaternions": self.renormalized.get(p, 0),
                }
                for p, n in sorted(self.dropped_rows.items())
            ],
            "total_dropped_rows": self.total_dropped,
            "total_renormalized_quaternions": self.total_renormalized,
            "unmatched": sorted(self.unmatched),
        }

    def write(self, path) -> None:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
        Path(path).write_text(text, encoding="utf-8")


def _relative_path(path: Path, manifest: IngestManifest) -> str:
    """Path as seen from the dataset root; logs and pattern matching use this
    form so identical datasets in different locations produce identical
    artifacts."""
    try:
        return path.resolve().relative_to(manifest.root.resolve()).as_posix()
    except ValueError:
        return path.as_posix()


def _identify(path: Path, manifest: IngestManifest, stream: StreamKind):
    """(subject_id, exercise_id, group) parsed from the path, or None."""
    rel = _relative_path(path, manifest)
    match = manifest.layout_for(stream).match(rel)
    if match is None:
        return None
    captured = match.groupdict()
    group = Group.CONTROL
    if captured.get("group"):
        try:
            group = Group(captured["group"].lower())
        except ValueError:
            raise ManifestError(
                f"path group {captured['group']!r} is neither "
                f"'control' nor 'patient' ({path})"
            )
    try:
        exercise_id = int(captured["exercise"])
    except ValueError:
        raise ManifestError(f"exercise id {captured['exercise']!r} is not an integer ({path})")
    return str(captured["subject"]), exercise_id, group


def load_scores(manifest: IngestManifest) -> dict:
    """(subject_id, exercise_id) -> ScoreLabel from the manifest's score file."""
    path = manifest.score_path
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ScoreFileError(f"cannot read score file {path} ({exc})")
    scores: dict = {}
    with handle:
        reader = csv.DictReader(handle)
        required = {"subject_id", "exercise_id", manifest.score_column}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ScoreFileError(
                f"score file {path} lacks columns {sorted(missing)}"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                key = (str(row["subject_id"]), int(row["exercise_id"]))
                raw = float(row[manifest.score_column])
            except (TypeError, ValueError) as exc:
                raise ScoreFileError(f"{path} line {line_no}: {exc}")
            if key in scores:
                raise DuplicateKeyError(
                    f"score file {path} repeats subject {key[0]!r} exercise {key[1]}"
                )
            scores[key] = ScoreLabel.from_raw(raw)  # raises SCORE_OUT_OF_RANGE
    return scores


def _renormalize_quaternions(frames: np.ndarray):
    """Rescale off-unit quaternions to unit norm; count how many were fixed.

    Only norms deviating by more than QUAT_NORM_TOL are touched, so mildly
    noisy but acceptable rows pass through unchanged. Near-zero quaternions
    cannot be rescaled and are left for validation to reject.
    """
    norms = np.linalg.norm(frames, axis=2)
    fixable = (np.abs(norms - 1.0) > QUAT_NORM_TOL) & (norms > 1e-8)
    count = int(np.count_nonzero(fixable))
    if count:
        frames = frames.copy()
        frames[fixable] /= norms[fixable][:, None]
    return frames, count


def load_recording(
    path,
    manifest: IngestManifest,
    stream: StreamKind,
    scores: dict = None,
    log: IngestLog = None,
) -> SkeletonRecording:
    """Parse one recording CSV into a validated SkeletonRecording.

    `scores` may be preloaded via load_scores to avoid re-reading the score
    file per recording. Dropped-row counts are added to `log` when given.
    """
    path = Path(path)
    identity = _identify(path, manifest, stream)
    if identity is None:
        raise ManifestError(
            f"{path} does not match the {stream.value} path_pattern"
        )
    subject_id, exercise_id, group = identity
    if scores is None:
        scores = load_scores(manifest)
    try:
        label = scores[(subject_id, exercise_id)]
    except KeyError:
        raise LabelMissingError(
            f"no score for subject {subject_id!r} exercise {exercise_id} ({path})"
        ) from None

    expected_width = manifest.row_width(stream)
    per_joint = manifest.layout_for(stream).column_layout.per_joint_width
    rows: list = []
    dropped = 0
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise EmptyFileError(f"cannot read recording {path} ({exc})")
    with handle:
        for line_no, cells in enumerate(csv.reader(handle, delimiter=manifest.delimiter), 1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != expected_width:
                raise ColumnMismatchError(
                    f"{path} line {line_no}: {len(cells)} columns, "
                    f"manifest expects {expected_width}"
                )
            try:
                values = [float(c) for c in cells]
            except ValueError:
                dropped += 1
                continue
            rows.append(values)
    if len(rows) < 2:
        if log is not None:
            log.record_file(_relative_path(path, manifest), dropped)
        raise EmptyFileError(
            f"{path}: {len(rows)} usable rows after dropping {dropped} "
            "(need at least 2)"
        )

    data = np.asarray(rows, dtype=np.float64)
    if manifest.has_timestamp_column:
        data = data[:, 1:]
    frames = data.reshape(len(rows), N_JOINTS, per_joint)
    if manifest.layout_for(stream).column_layout is ColumnLayout.JOINT_MAJOR_XYZC:
        frames = frames[:, :, :3]

    renormalized = 0
    if stream is StreamKind.ORIENTATION:
        frames, renormalized = _renormalize_quaternions(frames)
    if log is not None:
        log.record_file(_relative_path(path, manifest), dropped, renormalized)

    recording = SkeletonRecording(
        subject_id=subject_id,
        group=group,
        exercise_id=exercise_id,
        stream=stream,
        frames=frames,
        label=label,
        sample_rate_hz=manifest.sample_rate_hz,
    )
    violations = validate_recording(recording)
    if violations:
        raise RecordingInvalidError(f"{path}: " + "; ".join(violations))
    return recording


@dataclass(frozen=True)
class DatasetEntry:
    subject_id: str
    exercise_id: int
    stream: StreamKind
    path: Path


@dataclass(frozen=True)
class ScanResult:
    entries: tuple
    unmatched: tuple


def scan_dataset(root, manifest: IngestManifest) -> ScanResult:
    """List recognized recording files under root, lexicographically sorted."""
    root = Path(root)
    skip = {manifest.score_path.resolve()}
    if manifest.source_path is not None:
        skip.add(manifest.source_path.resolve())
    entries = []
    unmatched = []
    for path in sorted(root.rglob("*"), key=lambda p: p.as_posix()):
        if not path.is_file():
            continue
        if path.resolve() in skip:
            continue
        matched = False
        for stream in (StreamKind.POSITION, StreamKind.ORIENTATION):
            if stream not in manifest.streams:
                continue
            identity = _identify(path, manifest, stream)
            if identity is not None:
                subject_id, exercise_id, _group = identity
                entries.append(DatasetEntry(subject_id, exercise_id, stream, path))
                matched = True
                break
        if not matched:
            unmatched.append(path)
    return ScanResult(entries=tuple(entries), unmatched=tuple(unmatched))


def load_all(manifest: IngestManifest, streams=None, log: IngestLog = None):
    """Load every matching recording. Returns (recordings, scan_result)."""
    wanted = set(streams) if streams else set(manifest.streams)
    scan = scan_dataset(manifest.root, manifest)
    if log is not None:
        for path in scan.unmatched:
            log.record_unmatched(_relative_path(path, manifest))
    scores = load_scores(manifest)
    recordings = []
    for entry in scan.entries:
        if entry.stream not in wanted:
            continue
        recordings.append(
            load_recording(entry.path, manifest, entry.stream, scores=scores, log=log)
        )
    return recordings, scan

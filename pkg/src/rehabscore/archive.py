"""Repetition archive: one .npy file per repetition plus a JSON index.

The segment command writes this layout and the featurize/evaluate commands
read it back. Separate .npy files (instead of one zip) keep the archive
byte-deterministic across reruns; the index carries identity, labels, and
the source segment bounds for every repetition.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .core import RehabScoreError, Repetition, ScoreLabel, StreamKind

ARCHIVE_SCHEMA_VERSION = 1
INDEX_NAME = "index.json"


class ArchiveError(RehabScoreError):
    code = "ARCHIVE_INVALID"


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def repetition_file_name(rep: Repetition) -> str:
    return (
        f"{_safe(rep.subject_id)}_ex{rep.exercise_id}_"
        f"{rep.stream.value}_rep{rep.repetition_index:03d}.npy"
    )


def write_archive(
    dir_path,
    repetitions,
    bounds=None,
    sample_rate_hz: float = None,
    joint_names: dict = None,
    recordings: list = None,
    skipped: list = None,
) -> Path:
    """Write repetitions (+ optional per-repetition source bounds) to dir_path.

    `bounds` aligns with `repetitions` when given. Returns the index path.
    """
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    ordered = sorted(
        range(len(repetitions)),
        key=lambda i: (
            repetitions[i].subject_id,
            repetitions[i].exercise_id,
            repetitions[i].stream.value,
            repetitions[i].repetition_index,
        ),
    )
    entries = []
    seen = {}
    for i in ordered:
        rep = repetitions[i]
        file_name = repetition_file_name(rep)
        if file_name in seen and seen[file_name] != rep.key:
            raise ArchiveError(
                f"subject ids {seen[file_name][0]!r} and {rep.subject_id!r} "
                f"collide as file name {file_name!r}"
            )
        seen[file_name] = rep.key
        np.save(dir_path / file_name, np.asarray(rep.frames))
        entry = {
            "file": file_name,
            "subject_id": rep.subject_id,
            "exercise_id": rep.exercise_id,
            "repetition_index": rep.repetition_index,
            "stream": rep.stream.value,
            "label_raw": rep.label.raw,
        }
        if bounds is not None:
            entry["bounds"] = list(bounds[i])
        entries.append(entry)
    index = {
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "repetitions": entries,
    }
    if sample_rate_hz is not None:
        index["sample_rate_hz"] = sample_rate_hz
    if joint_names is not None:
        index["joint_name_map"] = dict(joint_names)
    if recordings is not None:
        index["recordings"] = list(recordings)
    if skipped is not None:
        index["skipped"] = list(skipped)
    index_path = dir_path / INDEX_NAME
    index_path.write_text(
        json.dumps(index, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return index_path


def load_archive(dir_path):
    """Read an archive back. Returns (repetitions, index dict)."""
    dir_path = Path(dir_path)
    index_path = dir_path / INDEX_NAME
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArchiveError(f"cannot read archive index {index_path} ({exc})")
    except ValueError as exc:
        raise ArchiveError(f"archive index {index_path} is not valid JSON ({exc})")
    version = index.get("schema_version")
    if version != ARCHIVE_SCHEMA_VERSION:
        raise ArchiveError(
            f"unsupported archive schema_version {version!r} "
            f"(expected {ARCHIVE_SCHEMA_VERSION})"
        )
    repetitions = []
    for entry in index.get("repetitions", []):
        path = dir_path / entry["file"]
        try:
            frames = np.load(path)
        except OSError as exc:
            raise ArchiveError(f"cannot read repetition file {path} ({exc})")
        try:
            repetitions.append(
                Repetition(
                    subject_id=str(entry["subject_id"]),
                    exercise_id=int(entry["exercise_id"]),
                    repetition_index=int(entry["repetition_index"]),
                    stream=StreamKind(entry["stream"]),
                    frames=frames,
                    label=ScoreLabel.from_raw(float(entry["label_raw"])),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ArchiveError(f"bad archive entry {entry!r}: {exc}")
    return repetitions, index

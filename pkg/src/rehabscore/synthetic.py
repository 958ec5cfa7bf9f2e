"""Deterministic synthetic demo dataset.

Generates a small skeleton-exercise corpus in the same on-disk shape the
ingest manifest describes: per subject x exercise, one position CSV and one
orientation CSV, plus scores.csv and manifest.json. Hand movement amplitude
(and hand rotation range, for the orientation stream) grows monotonically
with the assigned score, so score is recoverable from motion statistics and
a trained model can beat the constant baseline; the rest is mild noise.

Everything is driven by one seeded generator consumed in a fixed order, so
regenerating with the same spec is byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import N_JOINTS, DEFAULT_JOINT_NAMES

_POSITION_PATTERN = (
    r"(?P<group>control|patient)/(?P<subject>S\d+)/"
    r"ex(?P<exercise>[1-5])_position\.csv"
)
_ORIENTATION_PATTERN = (
    r"(?P<group>control|patient)/(?P<subject>S\d+)/"
    r"ex(?P<exercise>[1-5])_orientation\.csv"
)

N_EXERCISES = 5

# Raw score grid: 10..46 step 4, rotated per exercise so each exercise sees
# the full spread. With the default 20 subjects every level appears twice
# per exercise, so a held-out subject's score level stays represented in
# training (piecewise-constant trees extrapolate poorly to unseen levels).
_SCORE_LOW = 10.0
_SCORE_STEP = 4.0
_SCORE_LEVELS = 10


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 20
    cycles: int = 5
    sample_rate_hz: float = 30.0
    period_s: float = 2.0
    lead_frames: int = 15
    seed: int = 7

    def __post_init__(self):
        if self.n_subjects < 4:
            raise ValueError("n_subjects must be >= 4 for a usable split")
        if self.cycles < 2:
            raise ValueError("cycles must be >= 2")
        if self.sample_rate_hz <= 0 or self.period_s <= 0:
            raise ValueError("rates must be positive")


def _raw_score(subject_index: int, exercise_id: int) -> float:
    level = (subject_index + 2 * (exercise_id - 1)) % _SCORE_LEVELS
    return _SCORE_LOW + _SCORE_STEP * level


def _canonical_pose() -> np.ndarray:
    pose = np.zeros((N_JOINTS, 3))
    for j in range(N_JOINTS):
        pose[j] = (0.15 * ((j % 5) - 2), 1.75 - 0.14 * (j // 5), 0.1 * ((j // 5) % 2))
    return pose


def _bump(n_frames: int, lead: int, period: int, cycles: int) -> np.ndarray:
    """One smooth 0->1->0 bump per cycle, zero outside the active window."""
    t = np.arange(n_frames, dtype=np.float64)
    phase = (t - lead) / period
    active = (phase >= 0) & (phase < cycles)
    out = np.zeros(n_frames)
    out[active] = 0.5 * (1.0 - np.cos(2.0 * math.pi * phase[active]))
    return out


def _write_csv(path: Path, rows: np.ndarray, decimals: int) -> None:
    fmt = f"%.{decimals}f"
    lines = [",".join(fmt % v for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _position_frames(spec, rng, base_pose, amplitude, n_frames, period):
    bump = _bump(n_frames, spec.lead_frames, period, spec.cycles)
    frames = np.tile(base_pose, (n_frames, 1, 1))
    frames += rng.normal(0.0, 0.003, size=frames.shape)
    for hand in ("HAND_LEFT", "HAND_RIGHT"):
        j = DEFAULT_JOINT_NAMES[hand]
        frames[:, j, 1] += amplitude * bump
        frames[:, j, 0] += 0.1 * amplitude * bump
    frames[:, DEFAULT_JOINT_NAMES["HEAD"], 1] += 0.1 * amplitude * bump
    return frames


def _orientation_frames(spec, rng, theta_max, n_frames, period):
    bump = _bump(n_frames, spec.lead_frames, period, spec.cycles)
    # Per-joint resting rotation about the x axis, then hands sweep through
    # theta_max each cycle; built from angles so norms are exactly 1.
    rest = rng.normal(0.0, 0.05, size=N_JOINTS)
    noise = rng.normal(0.0, 0.005, size=(n_frames, N_JOINTS))
    theta = rest[None, :] + noise
    for hand in ("HAND_LEFT", "HAND_RIGHT"):
        theta[:, DEFAULT_JOINT_NAMES[hand]] += theta_max * bump
    theta[:, DEFAULT_JOINT_NAMES["HEAD"]] += 0.1 * theta_max * bump
    half = theta / 2.0
    frames = np.zeros((n_frames, N_JOINTS, 4))
    frames[:, :, 0] = np.cos(half)
    frames[:, :, 1] = np.sin(half)
    return frames


def generate_dataset(out_dir, spec: SyntheticSpec = SyntheticSpec()) -> Path:
    """Write the dataset under out_dir; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    period = int(round(spec.period_s * spec.sample_rate_hz))
    n_frames = spec.cycles * period + 2 * spec.lead_frames
    subjects = [f"S{i + 1:02d}" for i in range(spec.n_subjects)]
    half = spec.n_subjects // 2

    score_rows = []
    for s_idx, subject in enumerate(subjects):
        group = "control" if s_idx < half else "patient"
        base_pose = _canonical_pose() + rng.normal(0.0, 0.02, size=(N_JOINTS, 3))
        subject_dir = out_dir / group / subject
        subject_dir.mkdir(parents=True, exist_ok=True)
        for exercise_id in range(1, N_EXERCISES + 1):
            raw = _raw_score(s_idx, exercise_id)
            score_rows.append((subject, exercise_id, raw))
            norm = raw / 50.0
            amplitude = 0.05 + 0.55 * norm + rng.normal(0.0, 0.004)
            theta_max = 0.2 + 1.5 * norm + rng.normal(0.0, 0.01)

            pos = _position_frames(spec, rng, base_pose, amplitude, n_frames, period)
            _write_csv(
                subject_dir / f"ex{exercise_id}_position.csv",
                pos.reshape(n_frames, N_JOINTS * 3),
                decimals=6,
            )
            quat = _orientation_frames(spec, rng, theta_max, n_frames, period)
            _write_csv(
                subject_dir / f"ex{exercise_id}_orientation.csv",
                quat.reshape(n_frames, N_JOINTS * 4),
                decimals=8,
            )

    score_lines = ["subject_id,exercise_id,score"]
    for subject, exercise_id, raw in score_rows:
        score_lines.append(f"{subject},{exercise_id},{raw:.1f}")
    (out_dir / "scores.csv").write_text("\n".join(score_lines) + "\n", encoding="utf-8")

    manifest = {
        "schema_version": 1,
        "sample_rate_hz": spec.sample_rate_hz,
        "delimiter": ",",
        "has_timestamp_column": False,
        "joint_name_map": dict(DEFAULT_JOINT_NAMES),
        "score_file": "scores.csv",
        "score_column": "score",
        "streams": {
            "position": {
                "column_layout": "joint_major_xyz",
                "path_pattern": _POSITION_PATTERN,
            },
            "orientation": {
                "column_layout": "joint_major_wxyz",
                "path_pattern": _ORIENTATION_PATTERN,
            },
        },
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest_path

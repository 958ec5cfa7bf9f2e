"""Shared builders and session fixtures for the test suite.

Recordings built here are deliberately simple: every joint sits at a fixed
canonical pose and only the channels a given test cares about (hand height,
hand orientation angle) move. That keeps ground truth computable by hand.
"""

from __future__ import annotations

import numpy as np
import pytest

from rehabscore.core import (
    DEFAULT_JOINT_MAP,
    N_JOINTS,
    REP_LENGTH,
    Group,
    Repetition,
    ScoreLabel,
    SkeletonRecording,
    StreamKind,
)

HEAD = DEFAULT_JOINT_MAP.head
HAND_L = DEFAULT_JOINT_MAP.hand_left
HAND_R = DEFAULT_JOINT_MAP.hand_right


def make_label(raw: float = 25.0) -> ScoreLabel:
    return ScoreLabel.from_raw(raw)


def canonical_pose() -> np.ndarray:
    """Static 25-joint pose with distinct, easily recognizable coordinates."""
    pose = np.zeros((N_JOINTS, 3))
    for j in range(N_JOINTS):
        pose[j] = (0.01 * j, 0.8 - 0.01 * j, 0.02 * j)
    pose[HEAD] = (0.0, 1.6, 0.0)
    pose[HAND_L] = (-0.3, 0.9, 0.1)
    pose[HAND_R] = (0.3, 0.9, 0.1)
    return pose


def position_recording_from_hand_height(
    hand_y: np.ndarray,
    subject_id: str = "S01",
    exercise_id: int = 1,
    raw_score: float = 25.0,
    sample_rate_hz: float = 30.0,
) -> SkeletonRecording:
    """Position recording whose hands' Y coordinate follows `hand_y` exactly.

    All other channels are static, so the default segmentation channel
    (mean of the two hand Y values) equals `hand_y`.
    """
    hand_y = np.asarray(hand_y, dtype=np.float64)
    frames = np.tile(canonical_pose(), (hand_y.size, 1, 1))
    frames[:, HAND_L, 1] = hand_y
    frames[:, HAND_R, 1] = hand_y
    return SkeletonRecording(
        subject_id=subject_id,
        group=Group.CONTROL,
        exercise_id=exercise_id,
        stream=StreamKind.POSITION,
        frames=frames,
        label=make_label(raw_score),
        sample_rate_hz=sample_rate_hz,
    )


def cycle_signal(
    n_cycles: int,
    period_frames: int = 75,
    lead_frames: int = 45,
    amplitude: float = 0.6,
    base: float = 0.9,
) -> tuple[np.ndarray, list[int]]:
    """Arm-raise style signal: flat lead, then raised-cosine bumps.

    Returns the signal and the ground-truth crest frame of each cycle.
    """
    total = lead_frames + n_cycles * period_frames + lead_frames
    signal = np.full(total, base)
    crests = []
    for k in range(n_cycles):
        start = lead_frames + k * period_frames
        phase = np.arange(period_frames) / period_frames
        signal[start : start + period_frames] += amplitude * 0.5 * (
            1.0 - np.cos(2.0 * np.pi * phase)
        )
        crests.append(start + period_frames // 2)
    return signal, crests


def random_position_repetition(
    seed: int = 0,
    subject_id: str = "S01",
    exercise_id: int = 1,
    repetition_index: int = 0,
) -> Repetition:
    rng = np.random.default_rng(seed)
    frames = rng.normal(0.0, 0.5, size=(REP_LENGTH, N_JOINTS, 3))
    return Repetition(
        subject_id=subject_id,
        exercise_id=exercise_id,
        repetition_index=repetition_index,
        stream=StreamKind.POSITION,
        frames=frames,
        label=make_label(30.0),
    )


def random_orientation_repetition(
    seed: int = 0,
    subject_id: str = "S01",
    exercise_id: int = 1,
    repetition_index: int = 0,
) -> Repetition:
    rng = np.random.default_rng(seed)
    raw = rng.normal(0.0, 1.0, size=(REP_LENGTH, N_JOINTS, 4))
    frames = raw / np.linalg.norm(raw, axis=2, keepdims=True)
    return Repetition(
        subject_id=subject_id,
        exercise_id=exercise_id,
        repetition_index=repetition_index,
        stream=StreamKind.ORIENTATION,
        frames=frames,
        label=make_label(30.0),
    )


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Compact synthetic dataset for ingest and CLI stage tests."""
    from rehabscore.synthetic import SyntheticSpec, generate_dataset

    root = tmp_path_factory.mktemp("smallset")
    manifest_path = generate_dataset(
        root, SyntheticSpec(n_subjects=6, cycles=3, seed=11)
    )
    return manifest_path


@pytest.fixture(scope="session")
def small_manifest(small_dataset):
    from rehabscore.ingest import load_manifest

    return load_manifest(small_dataset)

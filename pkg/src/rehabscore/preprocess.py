"""Signal pipeline: low-pass filtering, peak detection, repetition splitting.

A recording is segmented by filtering one configured joint channel with a
zero-phase Butterworth low-pass, detecting peaks of the requested polarity,
rejecting false peaks (too low, or too close to a stronger peak), and cutting
the original frames at the accepted peak positions. Each cut is then linearly
resampled to a fixed 104-frame repetition.

Only the segmentation channel is filtered; repetitions carry raw motion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.signal import filtfilt, lfilter, lfilter_zi

from .core import (
    DEFAULT_JOINT_MAP,
    REP_LENGTH,
    JointMap,
    RehabScoreError,
    Repetition,
    SkeletonRecording,
    StreamKind,
)


class InvalidCutoffError(RehabScoreError):
    code = "INVALID_CUTOFF"


class SignalTooShortError(RehabScoreError):
    code = "SIGNAL_TOO_SHORT"


class NoRepetitionsError(RehabScoreError):
    code = "NO_REPETITIONS"


class SegmentTooShortError(RehabScoreError):
    code = "SEGMENT_TOO_SHORT"


class SegmentationSpecError(RehabScoreError):
    code = "SEGMENTATION_SPEC_INVALID"


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth low-pass parameters.

    `sample_rate_hz` may be left None and resolved from the recording at use.
    Cutoff defaults to 3 Hz: exercise motion sits below ~2 Hz, so this passes
    the movement while suppressing single-frame sensor spikes.
    """

    order: int = 3
    cutoff_hz: float = 3.0
    sample_rate_hz: float | None = None
    zero_phase: bool = True

    def resolved(self, sample_rate_hz: float) -> "FilterSpec":
        if self.sample_rate_hz is None:
            return replace(self, sample_rate_hz=sample_rate_hz)
        return self


def design_butterworth(spec: FilterSpec) -> tuple[np.ndarray, np.ndarray]:
    """Design digital low-pass coefficients (b, a), a[0] == 1.

    Analog Butterworth prototype poles are pre-warped to hit the requested
    cutoff exactly and discretized with the bilinear transform, which places
    all zeros at the Nyquist point. DC gain is 1 by construction.
    """
    if spec.sample_rate_hz is None or spec.sample_rate_hz <= 0:
        raise InvalidCutoffError(f"sample_rate_hz must be positive, got {spec.sample_rate_hz}")
    if spec.order < 1:
        raise InvalidCutoffError(f"order must be >= 1, got {spec.order}")
    nyquist = spec.sample_rate_hz / 2.0
    if not 0.0 < spec.cutoff_hz < nyquist:
        raise InvalidCutoffError(
            f"cutoff {spec.cutoff_hz} Hz outside (0, {nyquist}) for "
            f"sample rate {spec.sample_rate_hz} Hz"
        )
    order = spec.order
    # prototype poles on the unit circle, left half-plane
    m = np.arange(-order + 1, order, 2)
    poles = -np.exp(1j * np.pi * m / (2 * order))
    # frequency pre-warp so the bilinear map lands the cutoff exactly
    warped = 2.0 * spec.sample_rate_hz * np.tan(np.pi * spec.cutoff_hz / spec.sample_rate_hz)
    poles = warped * poles
    gain = warped**order
    # bilinear transform; zeros all map to z = -1
    fs2 = 2.0 * spec.sample_rate_hz
    poles_z = (fs2 + poles) / (fs2 - poles)
    gain_z = gain * np.real(1.0 / np.prod(fs2 - poles))
    b = gain_z * np.real(np.poly(-np.ones(order)))
    a = np.real(np.poly(poles_z))
    return b, a


def apply_filter(signal: Sequence[float], spec: FilterSpec) -> np.ndarray:
    """Filter a 1-D signal, preserving its length.

    In zero-phase mode the filter runs forward then backward over an
    odd-reflected extension of 3 * (order + 1) samples per edge (capped at
    signal length - 1), so peak positions are not shifted. The non-zero-phase
    path initializes the filter in steady state, so constants pass unchanged
    either way.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise SignalTooShortError(f"expected 1-D signal, got shape {x.shape}")
    if x.shape[0] <= 3 * spec.order:
        raise SignalTooShortError(
            f"signal length {x.shape[0]} <= 3 * order = {3 * spec.order}"
        )
    b, a = design_butterworth(spec)
    if spec.zero_phase:
        padlen = min(3 * (spec.order + 1), x.shape[0] - 1)
        return filtfilt(b, a, x, padtype="odd", padlen=padlen)
    zi = lfilter_zi(b, a) * x[0]
    y, _ = lfilter(b, a, x, zi=zi)
    return y


class Polarity(Enum):
    MAXIMA = "maxima"
    MINIMA = "minima"


class RejectReason(Enum):
    HEIGHT = "height"
    SEPARATION = "separation"


@dataclass(frozen=True)
class SegmentationSpec:
    """How to find repetition boundaries in one recording.

    The segmentation channel is the mean of `joints` (by name) along `axis`.
    Candidate peaks below the `min_height_quantile` of the channel's value
    distribution are false peaks; so is any peak within `min_separation_s`
    of a stronger one.
    """

    joints: tuple[str, ...] = ("HAND_LEFT", "HAND_RIGHT")
    axis: int = 1  # Y
    polarity: Polarity = Polarity.MAXIMA
    min_height_quantile: float = 0.6
    min_separation_s: float = 1.0

    def __post_init__(self):
        if not self.joints:
            raise SegmentationSpecError("at least one joint required")
        if not 0.0 <= self.min_height_quantile <= 1.0:
            raise SegmentationSpecError(
                f"min_height_quantile {self.min_height_quantile} outside [0, 1]"
            )
        if self.min_separation_s <= 0:
            raise SegmentationSpecError(
                f"min_separation_s must be positive, got {self.min_separation_s}"
            )


@dataclass(frozen=True)
class SegmentationConfig:
    """Default segmentation spec plus per-exercise overrides."""

    default: SegmentationSpec = SegmentationSpec()
    per_exercise: dict[int, SegmentationSpec] | None = None

    def for_exercise(self, exercise_id: int) -> SegmentationSpec:
        if self.per_exercise and exercise_id in self.per_exercise:
            return self.per_exercise[exercise_id]
        return self.default

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentationConfig":
        def build(entry: dict) -> SegmentationSpec:
            fields = dict(entry)
            if "joints" in fields:
                fields["joints"] = tuple(fields["joints"])
            if "polarity" in fields:
                fields["polarity"] = Polarity(fields["polarity"])
            return SegmentationSpec(**fields)

        default = build(data.get("default", {}))
        per_exercise = {
            int(eid): build(entry)
            for eid, entry in data.get("per_exercise", {}).items()
        }
        return cls(default=default, per_exercise=per_exercise or None)


@dataclass(frozen=True)
class PeakList:
    """Accepted peak frames plus rejected candidates with their reasons."""

    accepted: tuple[int, ...]
    rejected: tuple[tuple[int, RejectReason], ...]
    min_separation_frames: int
    height_threshold: float


def detect_peaks(
    signal: Sequence[float], spec: SegmentationSpec, sample_rate_hz: float
) -> PeakList:
    """Find local extrema of the requested polarity with false-peak rejection.

    Candidates below the height quantile are rejected as HEIGHT; among
    candidates closer than the minimum separation only the most extreme
    survives, the rest are rejected as SEPARATION.
    """
    min_sep = int(round(spec.min_separation_s * sample_rate_hz))
    if min_sep < 2:
        raise SegmentationSpecError(
            f"min_separation_s * sample_rate_hz = {spec.min_separation_s * sample_rate_hz:.3f} "
            "frames, need >= 2"
        )
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 3:
        return PeakList((), (), min_sep, float("nan"))
    t = x if spec.polarity is Polarity.MAXIMA else -x

    # leading edges of local maxima (plateaus contribute one candidate)
    interior = np.arange(1, t.shape[0] - 1)
    is_cand = (t[interior] > t[interior - 1]) & (t[interior] >= t[interior + 1])
    candidates = interior[is_cand]

    threshold = float(np.quantile(t, spec.min_height_quantile))
    rejected: list[tuple[int, RejectReason]] = []
    tall = []
    for i in candidates:
        if t[i] >= threshold:
            tall.append(int(i))
        else:
            rejected.append((int(i), RejectReason.HEIGHT))

    # strongest first; equal heights resolved by earlier frame
    accepted: list[int] = []
    for i in sorted(tall, key=lambda i: (-t[i], i)):
        if all(abs(i - j) >= min_sep for j in accepted):
            accepted.append(i)
        else:
            rejected.append((i, RejectReason.SEPARATION))

    if spec.polarity is Polarity.MINIMA:
        threshold = -threshold
    return PeakList(
        accepted=tuple(sorted(accepted)),
        rejected=tuple(sorted(rejected)),
        min_separation_frames=min_sep,
        height_threshold=threshold,
    )


def segmentation_channel(
    rec: SkeletonRecording, spec: SegmentationSpec, joints: JointMap = DEFAULT_JOINT_MAP
) -> np.ndarray:
    """The 1-D series peaks are detected on: the configured joints' axis, averaged."""
    if not 0 <= spec.axis < rec.frames.shape[2]:
        raise SegmentationSpecError(
            f"axis {spec.axis} outside [0, {rec.frames.shape[2] - 1}] for {rec.stream.value}"
        )
    idx = [joints.index_of(name) for name in spec.joints]
    return rec.frames[:, idx, spec.axis].mean(axis=1)


@dataclass(frozen=True)
class SegmentationResult:
    """Cut points over the original frames, plus peak diagnostics."""

    bounds: tuple[tuple[int, int], ...]
    peaks: PeakList
    channel_raw: np.ndarray
    channel_filtered: np.ndarray

    def segments(self, frames: np.ndarray) -> list[np.ndarray]:
        return [frames[a:b] for a, b in self.bounds]


def bounds_from_peaks(accepted: Sequence[int], n_frames: int) -> tuple[tuple[int, int], ...]:
    """Segment [p_k, p_{k+1}) per consecutive peak pair over the raw frames.

    A trailing segment from the last peak to the end survives only if it is
    at least half the median pair length; anything under 2 frames is dropped.
    """
    if len(accepted) < 2:
        raise NoRepetitionsError(
            f"need at least 2 accepted peaks to cut repetitions, got {len(accepted)}"
        )
    bounds = [
        (int(accepted[k]), int(accepted[k + 1])) for k in range(len(accepted) - 1)
    ]
    median_len = float(np.median([b - a for a, b in bounds]))
    tail = (int(accepted[-1]), n_frames)
    if tail[1] - tail[0] >= median_len / 2.0:
        bounds.append(tail)
    bounds = [(a, b) for a, b in bounds if b - a >= 2]
    if not bounds:
        raise NoRepetitionsError("all candidate segments shorter than 2 frames")
    return tuple(bounds)


def split_repetitions(
    rec: SkeletonRecording,
    seg: SegmentationSpec,
    filt: FilterSpec,
    joints: JointMap = DEFAULT_JOINT_MAP,
) -> SegmentationResult:
    """Locate repetition boundaries on the filtered channel of one recording."""
    raw = segmentation_channel(rec, seg, joints)
    filtered = apply_filter(raw, filt.resolved(rec.sample_rate_hz))
    peaks = detect_peaks(filtered, seg, rec.sample_rate_hz)
    bounds = bounds_from_peaks(peaks.accepted, rec.n_frames)
    return SegmentationResult(
        bounds=bounds, peaks=peaks, channel_raw=raw, channel_filtered=filtered
    )


def resample_frames(
    segment: np.ndarray, stream: StreamKind, target_len: int = REP_LENGTH
) -> np.ndarray:
    """Linearly interpolate every joint component onto `target_len` points.

    The output grid spans [first frame, last frame], so endpoints are exact
    and a segment already at the target length passes through unchanged.
    Orientation quaternions are renormalized wherever interpolation bent the
    norm away from 1.
    """
    seg = np.asarray(segment, dtype=np.float64)
    if seg.ndim != 3:
        raise SegmentTooShortError(f"expected (frames, joints, components), got {seg.shape}")
    n = seg.shape[0]
    if n < 2:
        raise SegmentTooShortError(f"segment has {n} frames, need >= 2")
    x_old = np.arange(n, dtype=np.float64)
    x_new = np.linspace(0.0, float(n - 1), target_len)
    flat = seg.reshape(n, -1)
    out = np.empty((target_len, flat.shape[1]), dtype=np.float64)
    for c in range(flat.shape[1]):
        out[:, c] = np.interp(x_new, x_old, flat[:, c])
    out = out.reshape(target_len, seg.shape[1], seg.shape[2])
    if stream is StreamKind.ORIENTATION and seg.shape[2] == 4:
        norms = np.linalg.norm(out, axis=2)
        fix = np.abs(norms - 1.0) > 1e-9
        fix &= norms > 1e-9  # cannot rescale a zero quaternion
        if fix.any():
            out[fix] /= norms[fix][:, None]
    return out


def resample_repetition(
    rec: SkeletonRecording,
    segment: np.ndarray,
    repetition_index: int,
    target_len: int = REP_LENGTH,
) -> Repetition:
    """Standardize one segment of `rec` into a fixed-length Repetition."""
    frames = resample_frames(segment, rec.stream, target_len)
    return Repetition(
        subject_id=rec.subject_id,
        exercise_id=rec.exercise_id,
        repetition_index=repetition_index,
        stream=rec.stream,
        frames=frames,
        label=rec.label,
    )


def write_peak_diagnostics(path, result: SegmentationResult) -> None:
    """CSV of the segmentation channel with per-frame peak verdicts."""
    verdict: dict[int, str] = {i: "accepted" for i in result.peaks.accepted}
    reason: dict[int, str] = {}
    for i, why in result.peaks.rejected:
        verdict[i] = "rejected"
        reason[i] = why.value
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame", "raw_value", "filtered_value", "is_accepted_peak", "is_rejected_peak", "reason"]
        )
        for i in range(result.channel_raw.shape[0]):
            writer.writerow(
                [
                    i,
                    repr(float(result.channel_raw[i])),
                    repr(float(result.channel_filtered[i])),
                    int(verdict.get(i) == "accepted"),
                    int(verdict.get(i) == "rejected"),
                    reason.get(i, ""),
                ]
            )

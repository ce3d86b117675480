"""End-to-end annotation of a match half.

The fused per-frame vectors are split into consecutive non-overlapping
windows (the final shorter remainder is processed at its natural length),
each window runs through the classifier, and the per-window probabilities
are stitched back into one score per frame. Thresholding and run extraction
turn scores into pass events.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import opv as opv_mod
from .checkpoint import Checkpoint
from .classifier import forward
from .core import (
    EventSource,
    FeatureRow,
    FrameDetections,
    FrameTimeline,
    LabelVector,
    PassEvent,
    ScoreVector,
    ValidationError,
)

DEFAULT_STRIDE = None  # stride defaults to the window length (partition)


def make_windows(
    sequence: np.ndarray, window_len: int, stride: int | None = DEFAULT_STRIDE
) -> list[tuple[int, np.ndarray]]:
    """Split (n, d) rows into (start_index, window) chunks.

    With the default stride the windows partition the sequence exactly:
    [0, w), [w, 2w), ... plus a final shorter window for any remainder.
    A positive stride smaller than ``window_len`` yields overlapping windows
    for experimentation; the default matches the partition reading.
    """
    if window_len < 1:
        raise ValidationError("window length must be >= 1")
    if stride is None:
        stride = window_len
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    sequence = np.asarray(sequence)
    n = sequence.shape[0]
    windows = []
    for start in range(0, n, stride):
        chunk = sequence[start : start + window_len]
        if chunk.shape[0] == 0:
            break
        windows.append((start, chunk))
        if start + chunk.shape[0] >= n and stride >= window_len:
            break
    return windows


def _feature_matrix(features: Sequence[FeatureRow] | np.ndarray) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=np.float64)
    return np.stack([row.values for row in features])


def build_model_inputs(
    features: Sequence[FeatureRow] | np.ndarray,
    detections: Sequence[FrameDetections] | None,
    timeline: FrameTimeline,
    input_dim: int,
) -> np.ndarray:
    """Assemble the (frame_count, input_dim) model input matrix.

    When ``input_dim`` equals the feature dimension the position-vector
    channel is disabled (the features-only ablation); when it equals
    features + 24 the positions are built from the detections.
    """
    matrix = _feature_matrix(features)
    if matrix.shape[0] != timeline.frame_count:
        raise ValidationError(
            f"features cover {matrix.shape[0]} frames, timeline has {timeline.frame_count}"
        )
    if input_dim == matrix.shape[1]:
        return matrix
    if input_dim == matrix.shape[1] + opv_mod.OPV_LEN:
        if detections is None:
            raise ValidationError(
                "model expects the position-vector channel but no detections were given"
            )
        opvs = opv_mod.build_opv_series(detections, timeline)
        return opv_mod.fuse_matrix(matrix, opvs)
    raise ValidationError(
        f"model input dimension {input_dim} matches neither the feature dimension "
        f"{matrix.shape[1]} nor features+{opv_mod.OPV_LEN}"
    )


def annotate_half(
    features: Sequence[FeatureRow] | np.ndarray,
    detections: Sequence[FrameDetections] | None,
    checkpoint: Checkpoint,
    timeline: FrameTimeline,
    stride: int | None = DEFAULT_STRIDE,
) -> ScoreVector:
    """Score every frame of a half with the trained classifier.

    Windows partition the sequence, so each frame receives exactly one
    model probability; with an overlapping stride the scores of a frame are
    averaged over the windows containing it.
    """
    config = checkpoint.config
    inputs = build_model_inputs(features, detections, timeline, config.input_dim)
    windows = make_windows(inputs, config.window_len, stride)
    scores = np.zeros(timeline.frame_count, dtype=np.float64)
    hits = np.zeros(timeline.frame_count, dtype=np.int64)
    for start, window in windows:
        probs = forward(window, checkpoint.params, config)
        scores[start : start + len(probs)] += probs
        hits[start : start + len(probs)] += 1
    if timeline.frame_count and (hits == 0).any():
        missing = int(np.flatnonzero(hits == 0)[0])
        raise ValidationError(f"frame {missing} received no score (coverage gap)")
    if timeline.frame_count:
        scores /= hits
    return ScoreVector(timeline=timeline, scores=scores)


def apply_threshold(scores: ScoreVector, threshold: float) -> LabelVector:
    """bits[f] = 1 iff scores[f] > threshold (strict inequality)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold {threshold} outside [0, 1]")
    bits = (scores.scores > threshold).astype(np.uint8)
    return LabelVector(timeline=scores.timeline, bits=bits)


def extract_pass_events(labels: LabelVector) -> list[PassEvent]:
    """One predicted event per maximal run of 1s, ordered by start time."""
    bits = labels.bits
    fps = labels.timeline.fps
    padded = np.concatenate([[0], bits, [0]])
    delta = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(delta == 1)
    ends = np.flatnonzero(delta == -1)  # exclusive frame index
    events = []
    for index, (first, stop) in enumerate(zip(starts, ends)):
        events.append(
            PassEvent(
                event_id=f"pred-{index + 1:04d}",
                start_s=first / fps,
                end_s=stop / fps,
                source=EventSource.PREDICTED,
            )
        )
    return events

"""Shared domain types and frame/time arithmetic.

Everything downstream (ingestion, position vectors, the classifier, the
evaluation stack) is expressed in terms of these types. All values are
immutable after construction and safe to share across threads.

Conventions:
    * Times are seconds from the start of a match half.
    * Frame ``f`` of a timeline at ``fps`` spans ``[f/fps, (f+1)/fps)``.
    * Pass intervals are half-open ``[start_s, end_s)`` so that abutting
      passes never double-label a frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

DEFAULT_FPS = 5
DEFAULT_WIDTH_PX = 352
DEFAULT_HEIGHT_PX = 240

BALL = "ball"
PERSON = "person"
OBJECT_CLASSES = (BALL, PERSON)


class ValidationError(ValueError):
    """A structural or contract violation in input data."""


class NumericError(RuntimeError):
    """A non-finite value escaped a numeric operation."""


class EventSource(str, Enum):
    """Provenance of a pass event."""

    REFERENCE = "reference"
    PREDICTED = "predicted"
    MANUAL = "manual"


@dataclass(frozen=True)
class FrameTimeline:
    """A match half as an indexed sequence of frames at a fixed rate.

    Attributes:
        match_id: Identifier of the match the half belongs to.
        half: 1 or 2.
        fps: Frames per second of the processed video.
        frame_count: Number of frames in the half.
        width_px / height_px: Processed frame size in pixels.
    """

    match_id: str
    half: int
    frame_count: int
    fps: int = DEFAULT_FPS
    width_px: int = DEFAULT_WIDTH_PX
    height_px: int = DEFAULT_HEIGHT_PX

    def __post_init__(self) -> None:
        if self.half not in (1, 2):
            raise ValidationError(f"half must be 1 or 2, got {self.half}")
        if self.fps < 1:
            raise ValidationError(f"fps must be >= 1, got {self.fps}")
        if self.frame_count < 0:
            raise ValidationError(f"frame_count must be >= 0, got {self.frame_count}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValidationError(
                f"frame size must be positive, got {self.width_px}x{self.height_px}"
            )

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.fps

    def frame_span(self, frame_index: int) -> tuple[float, float]:
        """Return the half-open time interval covered by a frame."""
        if not 0 <= frame_index < self.frame_count:
            raise ValidationError(
                f"frame index {frame_index} outside [0, {self.frame_count})"
            )
        return frame_index / self.fps, (frame_index + 1) / self.fps


@dataclass(frozen=True)
class Detection:
    """A labeled bounding box; the center is the object's position."""

    object_class: str
    confidence: float
    center_x_px: float
    center_y_px: float
    box_w_px: float = 0.0
    box_h_px: float = 0.0

    def __post_init__(self) -> None:
        if self.object_class not in OBJECT_CLASSES:
            raise ValidationError(f"unknown object class {self.object_class!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        for name in ("center_x_px", "center_y_px", "box_w_px", "box_h_px"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} is not finite")
        if self.box_w_px < 0 or self.box_h_px < 0:
            raise ValidationError("box size must be non-negative")


@dataclass(frozen=True)
class FrameDetections:
    """All detections of one frame; may contain zero balls, multiple balls,
    and any number of persons."""

    frame_index: int
    detections: tuple[Detection, ...] = ()

    def of_class(self, object_class: str) -> tuple[Detection, ...]:
        return tuple(d for d in self.detections if d.object_class == object_class)


@dataclass(frozen=True)
class FeatureRow:
    """Fixed-length feature vector for one frame."""

    frame_index: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValidationError("feature values must be a flat vector")
        if not np.isfinite(values).all():
            raise ValidationError(
                f"feature row {self.frame_index} contains non-finite values"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PassEvent:
    """A pass interval in seconds, half-open ``[start_s, end_s)``."""

    event_id: str
    start_s: float
    end_s: float
    source: EventSource

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValidationError(f"event {self.event_id}: times must be finite")
        if self.start_s < 0:
            raise ValidationError(f"event {self.event_id}: start_s must be >= 0")
        if self.start_s >= self.end_s:
            raise ValidationError(
                f"event {self.event_id}: start_s {self.start_s} >= end_s {self.end_s}"
            )


def _check_bits(bits: np.ndarray, frame_count: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.shape[0] != frame_count:
        raise ValidationError(
            f"label vector length {bits.shape} != frame_count {frame_count}"
        )
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValidationError("label vector entries must be 0 or 1")
    return bits


@dataclass(frozen=True)
class LabelVector:
    """Per-frame binary pass labels; 1 marks a frame belonging to a pass."""

    timeline: FrameTimeline
    bits: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", _check_bits(self.bits, self.timeline.frame_count))

    def __len__(self) -> int:
        return int(self.bits.shape[0])

    @property
    def prevalence(self) -> float:
        """Fraction of frames labeled as pass."""
        if self.bits.size == 0:
            return 0.0
        return float(self.bits.mean())


@dataclass(frozen=True)
class ScoreVector:
    """Per-frame pass probabilities in [0, 1]."""

    timeline: FrameTimeline
    scores: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.shape[0] != self.timeline.frame_count:
            raise ValidationError(
                f"score vector length {scores.shape} != frame_count "
                f"{self.timeline.frame_count}"
            )
        if scores.size and (
            not np.isfinite(scores).all() or scores.min() < 0.0 or scores.max() > 1.0
        ):
            raise ValidationError("scores must be finite and within [0, 1]")
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return int(self.scores.shape[0])


def time_to_frame(t: float, timeline: FrameTimeline) -> int:
    """Map a time in seconds to the frame whose span contains it.

    The result is clamped into ``[0, frame_count - 1]``.
    """
    if timeline.frame_count == 0:
        raise ValidationError("timeline has no frames")
    if not math.isfinite(t) or t < 0:
        raise ValidationError(f"time must be finite and >= 0, got {t}")
    frame = math.floor(t * timeline.fps)
    return min(max(frame, 0), timeline.frame_count - 1)


def label_vector_from_events(
    events: Iterable[PassEvent], timeline: FrameTimeline
) -> LabelVector:
    """Encode pass events as a per-frame binary vector.

    ``bits[f] = 1`` iff the frame span ``[f/fps, (f+1)/fps)`` intersects the
    half-open interval ``[start_s, end_s)`` of any event. A frame counts as a
    pass frame if any part of it overlaps the pass.
    """
    fps = timeline.fps
    n = timeline.frame_count
    bits = np.zeros(n, dtype=np.uint8)

    def intersects(f: int, start_s: float, end_s: float) -> bool:
        return f / fps < end_s and (f + 1) / fps > start_s

    for event in events:
        first = math.floor(event.start_s * fps)
        last = math.ceil(event.end_s * fps) - 1
        # Settle boundary frames with the exact span test so that float
        # rounding in the products above can never flip a frame.
        while first > 0 and intersects(first - 1, event.start_s, event.end_s):
            first -= 1
        while first <= last and not intersects(first, event.start_s, event.end_s):
            first += 1
        while last < n - 1 and intersects(last + 1, event.start_s, event.end_s):
            last += 1
        while last >= first and not intersects(last, event.start_s, event.end_s):
            last -= 1
        first = max(first, 0)
        last = min(last, n - 1)
        if first <= last:
            bits[first : last + 1] = 1
    return LabelVector(timeline=timeline, bits=bits)


def validate_non_overlapping(events: Sequence[PassEvent]) -> None:
    """Reject event lists in which any two intervals overlap.

    Applied at ingestion to reference and manual annotations; abutting events
    (end of one equals start of the next) are allowed.
    """
    ordered = sorted(events, key=lambda e: (e.start_s, e.end_s))
    for previous, current in zip(ordered, ordered[1:]):
        if current.start_s < previous.end_s:
            raise ValidationError(
                f"events {previous.event_id} and {current.event_id} overlap "
                f"([{previous.start_s}, {previous.end_s}) vs "
                f"[{current.start_s}, {current.end_s}))"
            )

"""Objects Position Vector: the 24-element per-frame position encoding.

The vector concatenates six sub-vectors of four elements each,
``[is_player, detected, x, y]``: slot 0 describes the ball, slots 1-5 the
five players closest to the ball. Coordinates are normalized to [-1, 1]
with the frame center at (0, 0) and y growing upward (the screen-down pixel
axis is inverted; flip ``y_up`` to match the opposite convention).

Undetected objects are encoded with flag vectors: ``[0, 0, 0, 0]`` for the
ball and ``[1, 0, 2, 2]`` for a player. The coordinate value 2 is outside
the valid range on purpose, so a flagged slot is always distinguishable.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ingest
from .core import (
    BALL,
    PERSON,
    FeatureRow,
    FrameDetections,
    FrameTimeline,
    ValidationError,
)

OPV_LEN = 24
PLAYER_SLOTS = 5
BALL_FLAG = (0.0, 0.0, 0.0, 0.0)
PLAYER_FLAG = (1.0, 0.0, 2.0, 2.0)


def normalize_position(
    cx_px: float,
    cy_px: float,
    width_px: int,
    height_px: int,
    y_up: bool = True,
) -> tuple[float, float]:
    """Map a pixel center into [-1, 1]^2 with the frame center at (0, 0)."""
    if not (math.isfinite(cx_px) and math.isfinite(cy_px)):
        raise ValidationError("position must be finite")
    half_w = width_px / 2.0
    half_h = height_px / 2.0
    x = (cx_px - half_w) / half_w
    y = (half_h - cy_px) / half_h if y_up else (cy_px - half_h) / half_h
    return (min(max(x, -1.0), 1.0), min(max(y, -1.0), 1.0))


def build_opv(
    frame: FrameDetections, timeline: FrameTimeline, y_up: bool = True
) -> np.ndarray:
    """Build the 24-element position vector for one frame.

    Rules:
        * ball slot: the highest-confidence ball detection; flag vector when
          no ball is detected;
        * reference point: the detected ball, or the frame center when the
          ball is missing but at least one player is present;
        * player slots: the five players nearest the reference point, in
          ascending distance order (ties: higher confidence first, then
          input order); missing slots hold the player flag vector.
    """
    balls = [
        (index, det)
        for index, det in enumerate(frame.detections)
        if det.object_class == BALL
    ]
    players = [
        (index, det)
        for index, det in enumerate(frame.detections)
        if det.object_class == PERSON
    ]

    out = np.empty(OPV_LEN, dtype=np.float64)

    if balls:
        # Best guess for the ball: highest confidence, earliest on ties.
        _, ball = min(balls, key=lambda item: (-item[1].confidence, item[0]))
        ball_xy = normalize_position(
            ball.center_x_px, ball.center_y_px, timeline.width_px, timeline.height_px, y_up
        )
        out[0:4] = (0.0, 1.0, ball_xy[0], ball_xy[1])
        reference = ball_xy
    else:
        out[0:4] = BALL_FLAG
        reference = (0.0, 0.0)

    ranked: list[tuple[float, float, int, tuple[float, float]]] = []
    for index, player in players:
        xy = normalize_position(
            player.center_x_px,
            player.center_y_px,
            timeline.width_px,
            timeline.height_px,
            y_up,
        )
        distance = math.hypot(xy[0] - reference[0], xy[1] - reference[1])
        ranked.append((distance, -player.confidence, index, xy))
    ranked.sort()

    for slot in range(PLAYER_SLOTS):
        offset = 4 * (slot + 1)
        if slot < len(ranked):
            _, _, _, xy = ranked[slot]
            out[offset : offset + 4] = (1.0, 1.0, xy[0], xy[1])
        else:
            out[offset : offset + 4] = PLAYER_FLAG
    return out


def build_opv_series(
    frames: Sequence[FrameDetections], timeline: FrameTimeline, y_up: bool = True
) -> np.ndarray:
    """Stack per-frame position vectors into a (frame_count, 24) matrix."""
    if len(frames) != timeline.frame_count:
        raise ValidationError(
            f"got {len(frames)} frames for a timeline of {timeline.frame_count}"
        )
    out = np.empty((len(frames), OPV_LEN), dtype=np.float64)
    for i, frame in enumerate(frames):
        out[i] = build_opv(frame, timeline, y_up)
    return out


def fuse_features(features: FeatureRow | np.ndarray, opv: np.ndarray) -> np.ndarray:
    """Concatenate a feature vector and a position vector, features first."""
    values = features.values if isinstance(features, FeatureRow) else np.asarray(features)
    opv = np.asarray(opv, dtype=np.float64)
    if values.ndim != 1 or opv.shape != (OPV_LEN,):
        raise ValidationError(
            f"cannot fuse shapes {values.shape} and {opv.shape}; expected (d,) and ({OPV_LEN},)"
        )
    return np.concatenate([np.asarray(values, dtype=np.float64), opv])


def fuse_matrix(features: np.ndarray, opvs: np.ndarray) -> np.ndarray:
    """Row-wise fusion of a feature matrix and a position-vector matrix."""
    features = np.asarray(features, dtype=np.float64)
    opvs = np.asarray(opvs, dtype=np.float64)
    if features.ndim != 2 or opvs.ndim != 2 or opvs.shape[1] != OPV_LEN:
        raise ValidationError("expected (n, d) features and (n, 24) position vectors")
    if features.shape[0] != opvs.shape[0]:
        raise ValidationError(
            f"row counts differ: {features.shape[0]} features vs {opvs.shape[0]} position vectors"
        )
    return np.concatenate([features, opvs], axis=1)


def save_opv_dump(path: Path, opvs: np.ndarray) -> None:
    """Write a (frame_count, 24) dump in the same containers as features."""
    opvs = np.asarray(opvs)
    if opvs.ndim != 2 or opvs.shape[1] != OPV_LEN:
        raise ValidationError("dump must have shape (frame_count, 24)")
    ingest.save_vector_table(Path(path), opvs)


def load_opv_dump(path: Path, timeline: FrameTimeline) -> np.ndarray:
    return ingest.load_vector_table(Path(path), timeline.frame_count, OPV_LEN)

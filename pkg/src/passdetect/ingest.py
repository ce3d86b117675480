"""On-disk artifacts: manifests, detections, features, annotations, predictions.

The video/CNN front end is replaced by a bit-exact file boundary. Formats:

    manifest.json        one match, per-half records with fps, size, frame
                         count and the URIs of the half's data files. All
                         URIs are relative to the manifest's directory.
    *.detections.csv     one record per line: frame_index,class,confidence,
                         cx,cy,w,h in pixel coordinates of the processed
                         resolution. Frames absent from the file mean
                         "nothing detected".
    *.features.csv       frame_index plus the per-frame feature vector.
    *.features.bin       raw little-endian float32 rows, with a JSON sidecar
                         ``<file>.meta.json`` declaring dtype, dimension and
                         frame count. Preferred for speed.
    *.annotations.csv    event_id,start_s,end_s; times kept to millisecond
                         precision; rows sorted by start on save.
    *.scores.csv         frame_index,score.
    *.passvector.csv     frame_index,bit.
    split.json           a named train/test pairing of (manifest, half).

Loaders reject structural errors rather than silently repairing them; the
one exception is out-of-bounds detection centers, which are clamped with a
logged warning. Writers are atomic (temp file + rename).
"""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_FPS,
    DEFAULT_HEIGHT_PX,
    DEFAULT_WIDTH_PX,
    Detection,
    EventSource,
    FeatureRow,
    FrameDetections,
    FrameTimeline,
    LabelVector,
    PassEvent,
    ScoreVector,
    ValidationError,
    validate_non_overlapping,
)

log = logging.getLogger(__name__)

FEATURE_DIM = 512
SCENARIO_NAMES = ("Same", "Similar", "Mixed", "Different", "Custom")

# Annotation times are stored with this many decimals (millisecond precision).
TIME_DECIMALS = 3


def atomic_write_text(path: Path, write: Callable) -> None:
    """Write a text file atomically: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            write(handle)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


# ---------------------------------------------------------------------------
# Manifest and splits


@dataclass(frozen=True)
class HalfRecord:
    """Per-half entry of a match manifest."""

    source_fps: int
    target_fps: int
    width_px: int
    height_px: int
    frame_count: int
    features_uri: str
    detections_uri: str
    annotations_uri: str | None = None
    video_uri: str | None = None

    def __post_init__(self) -> None:
        if self.source_fps < 1 or self.target_fps < 1:
            raise ValidationError("frame rates must be >= 1")
        if self.source_fps % self.target_fps != 0:
            raise ValidationError(
                f"target_fps {self.target_fps} does not divide source_fps {self.source_fps}"
            )
        if self.frame_count < 0:
            raise ValidationError("frame_count must be >= 0")


@dataclass(frozen=True)
class MatchManifest:
    """One match: id plus per-half records. ``base_dir`` anchors relative URIs."""

    match_id: str
    halves: dict[int, HalfRecord]
    base_dir: Path = field(default_factory=Path)

    def timeline(self, half: int) -> FrameTimeline:
        record = self.half(half)
        return FrameTimeline(
            match_id=self.match_id,
            half=half,
            frame_count=record.frame_count,
            fps=record.target_fps,
            width_px=record.width_px,
            height_px=record.height_px,
        )

    def half(self, half: int) -> HalfRecord:
        if half not in self.halves:
            raise ValidationError(f"match {self.match_id} has no half {half}")
        return self.halves[half]

    def resolve(self, uri: str) -> Path:
        return (Path(self.base_dir) / uri).resolve()


def _half_record_to_json(record: HalfRecord) -> dict:
    data = {
        "source_fps": record.source_fps,
        "target_fps": record.target_fps,
        "width_px": record.width_px,
        "height_px": record.height_px,
        "frame_count": record.frame_count,
        "features_uri": record.features_uri,
        "detections_uri": record.detections_uri,
    }
    if record.annotations_uri is not None:
        data["annotations_uri"] = record.annotations_uri
    if record.video_uri is not None:
        data["video_uri"] = record.video_uri
    return data


def save_manifest(manifest: MatchManifest, path: Path) -> None:
    payload = {
        "match_id": manifest.match_id,
        "halves": {str(h): _half_record_to_json(r) for h, r in sorted(manifest.halves.items())},
    }
    atomic_write_text(Path(path), lambda f: json.dump(payload, f, indent=2))


def load_manifest(path: Path, check_files: bool = True) -> MatchManifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    if "match_id" not in payload or "halves" not in payload:
        raise ValidationError(f"manifest {path} is missing match_id or halves")
    halves: dict[int, HalfRecord] = {}
    for key, data in payload["halves"].items():
        try:
            half = int(key)
            record = HalfRecord(
                source_fps=int(data["source_fps"]),
                target_fps=int(data.get("target_fps", DEFAULT_FPS)),
                width_px=int(data.get("width_px", DEFAULT_WIDTH_PX)),
                height_px=int(data.get("height_px", DEFAULT_HEIGHT_PX)),
                frame_count=int(data["frame_count"]),
                features_uri=data["features_uri"],
                detections_uri=data["detections_uri"],
                annotations_uri=data.get("annotations_uri"),
                video_uri=data.get("video_uri"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"manifest {path}, half {key}: {exc}") from exc
        halves[half] = record
    manifest = MatchManifest(
        match_id=str(payload["match_id"]), halves=halves, base_dir=path.parent
    )
    if check_files:
        for half, record in manifest.halves.items():
            uris = [record.features_uri, record.detections_uri]
            if record.annotations_uri:
                uris.append(record.annotations_uri)
            if record.video_uri:
                uris.append(record.video_uri)
            for uri in uris:
                target = manifest.resolve(uri)
                if not target.exists():
                    raise ValidationError(
                        f"manifest {path}, half {half}: referenced file {target} does not exist"
                    )
    return manifest


@dataclass(frozen=True)
class DatasetSplit:
    """A named train/test pairing of (manifest path, half) entries."""

    name: str
    training_halves: tuple[tuple[Path, int], ...]
    test_halves: tuple[tuple[Path, int], ...]

    def __post_init__(self) -> None:
        if self.name not in SCENARIO_NAMES:
            raise ValidationError(
                f"split name {self.name!r} not one of {SCENARIO_NAMES}"
            )


def save_split(split: DatasetSplit, path: Path) -> None:
    path = Path(path)

    def entry(manifest_path: Path, half: int) -> dict:
        rel = os.path.relpath(Path(manifest_path), path.parent)
        return {"manifest": rel, "half": half}

    payload = {
        "name": split.name,
        "training": [entry(m, h) for m, h in split.training_halves],
        "test": [entry(m, h) for m, h in split.test_halves],
    }
    atomic_write_text(path, lambda f: json.dump(payload, f, indent=2))


def load_split(path: Path) -> DatasetSplit:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read split {path}: {exc}") from exc

    def entries(key: str) -> tuple[tuple[Path, int], ...]:
        out = []
        for item in payload.get(key, []):
            out.append(((path.parent / item["manifest"]).resolve(), int(item["half"])))
        return tuple(out)

    split = DatasetSplit(
        name=str(payload.get("name", "Custom")),
        training_halves=entries("training"),
        test_halves=entries("test"),
    )
    seen: dict[tuple[str, int], str] = {}
    for role, halves in (("training", split.training_halves), ("test", split.test_halves)):
        for manifest_path, half in halves:
            match_id = load_manifest(manifest_path, check_files=False).match_id
            key = (match_id, half)
            if key in seen and seen[key] != role:
                raise ValidationError(
                    f"split {path}: ({match_id}, half {half}) appears in both training and test"
                )
            seen[key] = role
    return split


# ---------------------------------------------------------------------------
# Downsampling


def downsample_indices(
    source_fps: int, target_fps: int, source_frame_count: int
) -> list[int]:
    """Source frame indices kept when reducing the frame rate.

    Keeps every k-th frame starting at source index 0, with
    ``k = source_fps / target_fps``.
    """
    if source_fps < 1 or target_fps < 1:
        raise ValidationError("frame rates must be >= 1")
    if source_fps % target_fps != 0:
        raise ValidationError(
            f"target_fps {target_fps} does not divide source_fps {source_fps}"
        )
    if source_frame_count < 0:
        raise ValidationError("source_frame_count must be >= 0")
    step = source_fps // target_fps
    return list(range(0, source_frame_count, step))


# ---------------------------------------------------------------------------
# Generic per-frame vector tables (features and position-vector dumps)


def _sidecar_path(path: Path) -> Path:
    return Path(str(path) + ".meta.json")


def save_vector_table(path: Path, matrix: np.ndarray) -> None:
    """Write a (frame_count, dim) matrix in the container chosen by extension.

    ``.csv`` stores full-precision text; anything else is treated as the raw
    little-endian float32 binary with a JSON sidecar.
    """
    path = Path(path)
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValidationError("vector table must be two-dimensional")
    if path.suffix == ".csv":
        header = ["frame_index"] + [f"v{i:03d}" for i in range(matrix.shape[1])]

        def write(handle) -> None:
            writer = csv.writer(handle)
            writer.writerow(header)
            for index, row in enumerate(matrix):
                writer.writerow([index] + [format(v, ".17g") for v in row])

        atomic_write_text(path, write)
    else:
        data = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
        atomic_write_bytes(path, data)
        meta = {
            "dtype": "float32",
            "byte_order": "little",
            "dim": int(matrix.shape[1]),
            "frame_count": int(matrix.shape[0]),
        }
        atomic_write_text(_sidecar_path(path), lambda f: json.dump(meta, f, indent=2))


def load_vector_table(path: Path, expected_frames: int, expected_dim: int) -> np.ndarray:
    """Read a vector table back as float64, validating shape and finiteness."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"vector table {path} does not exist")
    if path.suffix == ".csv":
        matrix = _load_vector_csv(path, expected_frames, expected_dim)
    else:
        matrix = _load_vector_binary(path, expected_frames, expected_dim)
    bad = np.argwhere(~np.isfinite(matrix))
    if bad.size:
        frame = int(bad[0][0])
        raise ValidationError(f"{path}: non-finite value at frame {frame}")
    return matrix


def _load_vector_csv(path: Path, expected_frames: int, expected_dim: int) -> np.ndarray:
    matrix = np.full((expected_frames, expected_dim), np.nan, dtype=np.float64)
    seen = np.zeros(expected_frames, dtype=bool)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file")
        if len(header) != expected_dim + 1:
            raise ValidationError(
                f"{path}: expected dimension {expected_dim}, file has {len(header) - 1}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != expected_dim + 1:
                raise ValidationError(f"{path}:{line_no}: wrong number of columns")
            try:
                frame = int(row[0])
                values = np.array(row[1:], dtype=np.float64)
            except ValueError as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from exc
            if not 0 <= frame < expected_frames:
                raise ValidationError(
                    f"{path}:{line_no}: frame {frame} outside [0, {expected_frames})"
                )
            if seen[frame]:
                raise ValidationError(f"{path}: duplicate frame {frame}")
            seen[frame] = True
            matrix[frame] = values
    missing = np.flatnonzero(~seen)
    if missing.size:
        raise ValidationError(f"{path}: missing frame {int(missing[0])}")
    return matrix


def _load_vector_binary(path: Path, expected_frames: int, expected_dim: int) -> np.ndarray:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise ValidationError(f"{path}: sidecar {sidecar} does not exist")
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{sidecar}: {exc}") from exc
    if int(meta.get("dim", -1)) != expected_dim:
        raise ValidationError(
            f"{path}: declared dimension {meta.get('dim')} != expected {expected_dim}"
        )
    if int(meta.get("frame_count", -1)) != expected_frames:
        raise ValidationError(
            f"{path}: declared frame_count {meta.get('frame_count')} != expected {expected_frames}"
        )
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != expected_frames * expected_dim:
        raise ValidationError(
            f"{path}: file holds {raw.size} values, expected {expected_frames * expected_dim}"
        )
    return raw.reshape(expected_frames, expected_dim).astype(np.float64)


def save_features(path: Path, matrix: np.ndarray) -> None:
    save_vector_table(path, matrix)


def load_features(
    path: Path, timeline: FrameTimeline, dim: int = FEATURE_DIM
) -> list[FeatureRow]:
    """Exactly one row per frame index, in order; anything else is an error."""
    matrix = load_vector_table(Path(path), timeline.frame_count, dim)
    return [FeatureRow(frame_index=i, values=matrix[i]) for i in range(matrix.shape[0])]


def load_feature_matrix(
    path: Path, timeline: FrameTimeline, dim: int = FEATURE_DIM
) -> np.ndarray:
    return load_vector_table(Path(path), timeline.frame_count, dim)


# ---------------------------------------------------------------------------
# Detections


DETECTION_HEADER = ["frame_index", "class", "confidence", "cx", "cy", "w", "h"]


def save_detections(path: Path, frames: Iterable[FrameDetections]) -> None:
    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(DETECTION_HEADER)
        for frame in frames:
            for det in frame.detections:
                writer.writerow(
                    [
                        frame.frame_index,
                        det.object_class,
                        format(det.confidence, ".17g"),
                        format(det.center_x_px, ".17g"),
                        format(det.center_y_px, ".17g"),
                        format(det.box_w_px, ".17g"),
                        format(det.box_h_px, ".17g"),
                    ]
                )

    atomic_write_text(Path(path), write)


def load_detections(path: Path, timeline: FrameTimeline) -> list[FrameDetections]:
    """One FrameDetections per frame; frames absent from the file are empty.

    Out-of-bounds centers are clamped to the frame bounds with a warning.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"detections file {path} does not exist")
    per_frame: list[list[Detection]] = [[] for _ in range(timeline.frame_count)]
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(DETECTION_HEADER):
                raise ValidationError(f"{path}:{line_no}: wrong number of fields")
            try:
                frame = int(row[0])
                object_class = row[1].strip().lower()
                confidence = float(row[2])
                cx, cy, w, h = (float(v) for v in row[3:7])
            except ValueError as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from exc
            if not 0 <= frame < timeline.frame_count:
                raise ValidationError(
                    f"{path}:{line_no}: frame {frame} outside [0, {timeline.frame_count})"
                )
            clamped_x = min(max(cx, 0.0), float(timeline.width_px))
            clamped_y = min(max(cy, 0.0), float(timeline.height_px))
            if clamped_x != cx or clamped_y != cy:
                log.warning(
                    "%s:%d: detection center (%.2f, %.2f) outside frame bounds; clamped",
                    path,
                    line_no,
                    cx,
                    cy,
                )
            try:
                detection = Detection(
                    object_class=object_class,
                    confidence=confidence,
                    center_x_px=clamped_x,
                    center_y_px=clamped_y,
                    box_w_px=w,
                    box_h_px=h,
                )
            except ValidationError as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from exc
            per_frame[frame].append(detection)
    return [
        FrameDetections(frame_index=i, detections=tuple(dets))
        for i, dets in enumerate(per_frame)
    ]


# ---------------------------------------------------------------------------
# Annotations (pass events)


ANNOTATION_HEADER = ["event_id", "start_s", "end_s"]


def save_annotations(path: Path, events: Sequence[PassEvent]) -> None:
    """Events sorted by start time; times rounded to millisecond precision."""
    ordered = sorted(events, key=lambda e: (e.start_s, e.end_s, e.event_id))

    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(ANNOTATION_HEADER)
        for event in ordered:
            writer.writerow(
                [
                    event.event_id,
                    format(round(event.start_s, TIME_DECIMALS), f".{TIME_DECIMALS}f"),
                    format(round(event.end_s, TIME_DECIMALS), f".{TIME_DECIMALS}f"),
                ]
            )

    atomic_write_text(Path(path), write)


def load_annotations(
    path: Path,
    source: EventSource = EventSource.REFERENCE,
    require_non_overlapping: bool | None = None,
) -> list[PassEvent]:
    """Load pass events sorted by start time.

    Reference and manual annotations must be non-overlapping; predicted
    events are exempt unless ``require_non_overlapping`` forces the check.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"annotations file {path} does not exist")
    events: list[PassEvent] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        next(reader, None)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(ANNOTATION_HEADER):
                raise ValidationError(f"{path}:{line_no}: wrong number of fields")
            try:
                event = PassEvent(
                    event_id=row[0],
                    start_s=float(row[1]),
                    end_s=float(row[2]),
                    source=source,
                )
            except (ValueError, ValidationError) as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from exc
            events.append(event)
    events.sort(key=lambda e: (e.start_s, e.end_s, e.event_id))
    if require_non_overlapping is None:
        require_non_overlapping = source in (EventSource.REFERENCE, EventSource.MANUAL)
    if require_non_overlapping:
        validate_non_overlapping(events)
    return events


# ---------------------------------------------------------------------------
# Prediction outputs (scores, pass vectors)


def save_scores(path: Path, scores: ScoreVector) -> None:
    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(["frame_index", "score"])
        for index, value in enumerate(scores.scores):
            writer.writerow([index, format(value, ".17g")])

    atomic_write_text(Path(path), write)


def load_scores(path: Path, timeline: FrameTimeline) -> ScoreVector:
    matrix = _load_two_column(Path(path), timeline.frame_count, "score")
    return ScoreVector(timeline=timeline, scores=matrix)


def save_passvector(path: Path, labels: LabelVector) -> None:
    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(["frame_index", "bit"])
        for index, value in enumerate(labels.bits):
            writer.writerow([index, int(value)])

    atomic_write_text(Path(path), write)


def load_passvector(path: Path, timeline: FrameTimeline) -> LabelVector:
    values = _load_two_column(Path(path), timeline.frame_count, "bit")
    return LabelVector(timeline=timeline, bits=values.astype(np.uint8))


def _load_two_column(path: Path, expected_frames: int, value_name: str) -> np.ndarray:
    if not path.exists():
        raise ValidationError(f"{path} does not exist")
    values = np.full(expected_frames, np.nan, dtype=np.float64)
    seen = np.zeros(expected_frames, dtype=bool)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        next(reader, None)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}:{line_no}: expected 2 fields")
            try:
                frame = int(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from exc
            if not 0 <= frame < expected_frames:
                raise ValidationError(
                    f"{path}:{line_no}: frame {frame} outside [0, {expected_frames})"
                )
            if seen[frame]:
                raise ValidationError(f"{path}: duplicate frame {frame}")
            seen[frame] = True
            values[frame] = value
    missing = np.flatnonzero(~seen)
    if missing.size:
        raise ValidationError(f"{path}: missing frame {int(missing[0])} ({value_name})")
    return values

"""Annotation service: match metadata, reference events, video, and operator
annotations over HTTP.

Endpoints (JSON unless noted):

    GET  /api/matches
    GET  /api/matches/{id}/halves/{h}/events
    GET  /api/matches/{id}/halves/{h}/video            (byte-range capable)
    PUT  /api/matches/{id}/halves/{h}/events/{eid}/annotation
    GET  /api/matches/{id}/halves/{h}/annotations.csv

Durability: every accepted write is appended to a JSONL journal and fsynced
before the response; a compacted CSV snapshot is written every N writes and
on shutdown. Recovery loads the snapshot and replays the journal, so a
crash between journal append and snapshot loses nothing.

Concurrency: writes are serialized through one lock and carry a revision
number; a PUT whose base revision is stale is rejected with 409 so two
operators cannot silently overwrite each other.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import mimetypes
import os
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence

from . import ingest
from .core import EventSource, PassEvent, ValidationError, validate_non_overlapping

log = logging.getLogger(__name__)

SEEK_REWIND_S = 2.0
SNAPSHOT_EVERY_N_WRITES = 50

JOURNAL_NAME = "annotations.journal.jsonl"
SNAPSHOT_NAME = "annotations.snapshot.csv"

_SNAPSHOT_COLUMNS = [
    "match_id",
    "half",
    "event_id",
    "pass_start_s",
    "pass_end_s",
    "operator_id",
    "updated_at",
    "revision",
]


class ConflictError(Exception):
    """A write based on a stale revision."""


@dataclass(frozen=True)
class AnnotationRecord:
    match_id: str
    half: int
    event_id: str
    pass_start_s: float | None
    pass_end_s: float | None
    operator_id: str
    updated_at: str
    revision: int

    def validate(self) -> None:
        for value in (self.pass_start_s, self.pass_end_s):
            if value is not None and (value < 0 or value != value):
                raise ValidationError("annotation times must be finite and >= 0")
        if (
            self.pass_start_s is not None
            and self.pass_end_s is not None
            and self.pass_start_s >= self.pass_end_s
        ):
            raise ValidationError(
                f"pass start {self.pass_start_s} must be earlier than end {self.pass_end_s}"
            )

    def to_json(self) -> dict:
        return {
            "match_id": self.match_id,
            "half": self.half,
            "event_id": self.event_id,
            "pass_start_s": self.pass_start_s,
            "pass_end_s": self.pass_end_s,
            "operator_id": self.operator_id,
            "updated_at": self.updated_at,
            "revision": self.revision,
        }

    @classmethod
    def from_json(cls, data: dict) -> "AnnotationRecord":
        return cls(
            match_id=str(data["match_id"]),
            half=int(data["half"]),
            event_id=str(data["event_id"]),
            pass_start_s=None if data.get("pass_start_s") is None else float(data["pass_start_s"]),
            pass_end_s=None if data.get("pass_end_s") is None else float(data["pass_end_s"]),
            operator_id=str(data.get("operator_id", "")),
            updated_at=str(data.get("updated_at", "")),
            revision=int(data.get("revision", 1)),
        )


class AnnotationStore:
    """Journaled, snapshot-compacted store of operator annotations."""

    def __init__(self, data_dir: Path, snapshot_every: int = SNAPSHOT_EVERY_N_WRITES):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.journal_path = self.data_dir / JOURNAL_NAME
        self.snapshot_path = self.data_dir / SNAPSHOT_NAME
        self.snapshot_every = snapshot_every
        self._lock = threading.Lock()
        self._records: dict[tuple[str, int, str], AnnotationRecord] = {}
        self._writes_since_snapshot = 0
        self._journal = None
        self._recover()
        self._journal = open(self.journal_path, "a", encoding="utf-8")

    def _recover(self) -> None:
        if self.snapshot_path.exists():
            with open(self.snapshot_path, newline="") as handle:
                for row in csv.DictReader(handle):
                    record = AnnotationRecord(
                        match_id=row["match_id"],
                        half=int(row["half"]),
                        event_id=row["event_id"],
                        pass_start_s=float(row["pass_start_s"]) if row["pass_start_s"] else None,
                        pass_end_s=float(row["pass_end_s"]) if row["pass_end_s"] else None,
                        operator_id=row["operator_id"],
                        updated_at=row["updated_at"],
                        revision=int(row["revision"]),
                    )
                    self._records[(record.match_id, record.half, record.event_id)] = record
        if self.journal_path.exists():
            with open(self.journal_path, encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = AnnotationRecord.from_json(json.loads(line))
                    except (json.JSONDecodeError, KeyError, ValueError):
                        log.warning("skipping corrupt journal line")
                        continue
                    key = (record.match_id, record.half, record.event_id)
                    existing = self._records.get(key)
                    # Replay wins only when it is not older than the snapshot.
                    if existing is None or record.revision >= existing.revision:
                        self._records[key] = record

    def get(self, match_id: str, half: int, event_id: str) -> AnnotationRecord | None:
        with self._lock:
            return self._records.get((match_id, half, event_id))

    def for_half(self, match_id: str, half: int) -> list[AnnotationRecord]:
        with self._lock:
            return [
                record
                for (m, h, _), record in self._records.items()
                if m == match_id and h == half
            ]

    def put(
        self,
        match_id: str,
        half: int,
        event_id: str,
        pass_start_s: float | None,
        pass_end_s: float | None,
        operator_id: str,
        base_revision: int,
    ) -> AnnotationRecord:
        """Upsert one annotation; last write per event wins, stale writes 409."""
        with self._lock:
            key = (match_id, half, event_id)
            existing = self._records.get(key)
            current_revision = existing.revision if existing else 0
            if base_revision != current_revision:
                raise ConflictError(
                    f"annotation {event_id} is at revision {current_revision}, "
                    f"write was based on {base_revision}"
                )
            record = AnnotationRecord(
                match_id=match_id,
                half=half,
                event_id=event_id,
                pass_start_s=pass_start_s,
                pass_end_s=pass_end_s,
                operator_id=operator_id,
                updated_at=datetime.now(timezone.utc).isoformat(),
                revision=current_revision + 1,
            )
            record.validate()
            self._journal.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
            self._journal.flush()
            os.fsync(self._journal.fileno())
            self._records[key] = record
            self._writes_since_snapshot += 1
            if self._writes_since_snapshot >= self.snapshot_every:
                self._write_snapshot_locked()
            return record

    def _write_snapshot_locked(self) -> None:
        records = sorted(
            self._records.values(), key=lambda r: (r.match_id, r.half, r.event_id)
        )

        def write(handle) -> None:
            writer = csv.writer(handle)
            writer.writerow(_SNAPSHOT_COLUMNS)
            for r in records:
                writer.writerow(
                    [
                        r.match_id,
                        r.half,
                        r.event_id,
                        "" if r.pass_start_s is None else format(r.pass_start_s, ".17g"),
                        "" if r.pass_end_s is None else format(r.pass_end_s, ".17g"),
                        r.operator_id,
                        r.updated_at,
                        r.revision,
                    ]
                )

        ingest.atomic_write_text(self.snapshot_path, write)
        self._writes_since_snapshot = 0

    def close(self) -> None:
        with self._lock:
            self._write_snapshot_locked()
            if self._journal is not None:
                self._journal.close()
                self._journal = None


@dataclass(frozen=True)
class _HalfEntry:
    record: ingest.HalfRecord
    reference_events: tuple[PassEvent, ...]
    video_path: Path | None


class MatchRegistry:
    """Loaded manifests plus their reference annotations."""

    def __init__(self, manifests: Sequence[ingest.MatchManifest]):
        self.matches: dict[str, dict[int, _HalfEntry]] = {}
        for manifest in manifests:
            halves = {}
            for half, record in manifest.halves.items():
                events: tuple[PassEvent, ...] = ()
                if record.annotations_uri:
                    events = tuple(
                        ingest.load_annotations(
                            manifest.resolve(record.annotations_uri),
                            source=EventSource.REFERENCE,
                        )
                    )
                video_path = (
                    manifest.resolve(record.video_uri) if record.video_uri else None
                )
                halves[half] = _HalfEntry(
                    record=record, reference_events=events, video_path=video_path
                )
            self.matches[manifest.match_id] = halves

    def half(self, match_id: str, half: int) -> _HalfEntry | None:
        return self.matches.get(match_id, {}).get(half)


def _event_time(reference: PassEvent | None, annotation: AnnotationRecord | None) -> float:
    if reference is not None:
        return reference.start_s
    if annotation is not None and annotation.pass_start_s is not None:
        return annotation.pass_start_s
    return 0.0


def build_events_payload(
    entry: _HalfEntry, annotations: Sequence[AnnotationRecord]
) -> list[dict]:
    by_id = {a.event_id: a for a in annotations}
    items = []
    seen = set()
    for event in entry.reference_events:
        annotation = by_id.get(event.event_id)
        seen.add(event.event_id)
        items.append((event, annotation))
    for annotation in annotations:
        if annotation.event_id not in seen:
            items.append((None, annotation))
    items.sort(key=lambda pair: _event_time(pair[0], pair[1]))

    payload = []
    for reference, annotation in items:
        time_s = _event_time(reference, annotation)
        payload.append(
            {
                "event_id": reference.event_id if reference else annotation.event_id,
                "reference_start_s": reference.start_s if reference else None,
                "reference_end_s": reference.end_s if reference else None,
                "seek_to_s": max(0.0, time_s - SEEK_REWIND_S),
                "annotation": annotation.to_json() if annotation else None,
            }
        )
    return payload


def export_annotations_csv(annotations: Sequence[AnnotationRecord]) -> bytes:
    """Complete annotations as the ingest CSV; validated before emission."""
    events = [
        PassEvent(
            event_id=record.event_id,
            start_s=record.pass_start_s,
            end_s=record.pass_end_s,
            source=EventSource.MANUAL,
        )
        for record in annotations
        if record.pass_start_s is not None and record.pass_end_s is not None
    ]
    events.sort(key=lambda e: (e.start_s, e.end_s, e.event_id))
    validate_non_overlapping(events)
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(ingest.ANNOTATION_HEADER)
    for event in events:
        writer.writerow(
            [
                event.event_id,
                format(round(event.start_s, ingest.TIME_DECIMALS), f".{ingest.TIME_DECIMALS}f"),
                format(round(event.end_s, ingest.TIME_DECIMALS), f".{ingest.TIME_DECIMALS}f"),
            ]
        )
    return out.getvalue().encode("utf-8")


_ROUTE_EVENTS = re.compile(r"^/api/matches/([^/]+)/halves/(\d+)/events$")
_ROUTE_VIDEO = re.compile(r"^/api/matches/([^/]+)/halves/(\d+)/video$")
_ROUTE_ANNOTATION = re.compile(
    r"^/api/matches/([^/]+)/halves/(\d+)/events/([^/]+)/annotation$"
)
_ROUTE_EXPORT = re.compile(r"^/api/matches/([^/]+)/halves/(\d+)/annotations\.csv$")
_RANGE = re.compile(r"bytes=(\d*)-(\d*)$")


class AnnotationHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "AnnotationServer"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s - %s", self.address_string(), fmt % args)

    # -- helpers ----------------------------------------------------------

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def _half_entry(self, match_id: str, half: str) -> _HalfEntry | None:
        entry = self.server.registry.half(match_id, int(half))
        if entry is None:
            self._send_error_json(404, f"unknown match {match_id!r} half {half}")
        return entry

    # -- GET ---------------------------------------------------------------

    def do_GET(self) -> None:
        try:
            self._route_get()
        except BrokenPipeError:
            pass
        except Exception as exc:  # pragma: no cover - defensive 500
            log.exception("GET %s failed", self.path)
            try:
                self._send_error_json(500, str(exc))
            except Exception:
                pass

    def _route_get(self) -> None:
        if self.path == "/api/matches":
            payload = []
            for match_id, halves in sorted(self.server.registry.matches.items()):
                payload.append(
                    {
                        "match_id": match_id,
                        "halves": [
                            {
                                "half": half,
                                "fps": entry.record.target_fps,
                                "frame_count": entry.record.frame_count,
                                "duration_s": entry.record.frame_count / entry.record.target_fps,
                                "has_video": entry.video_path is not None,
                                "event_count": len(entry.reference_events),
                            }
                            for half, entry in sorted(halves.items())
                        ],
                    }
                )
            self._send_json(200, payload)
            return

        match = _ROUTE_EVENTS.match(self.path)
        if match:
            entry = self._half_entry(match.group(1), match.group(2))
            if entry is None:
                return
            annotations = self.server.store.for_half(match.group(1), int(match.group(2)))
            self._send_json(200, {"events": build_events_payload(entry, annotations)})
            return

        match = _ROUTE_EXPORT.match(self.path)
        if match:
            entry = self._half_entry(match.group(1), match.group(2))
            if entry is None:
                return
            annotations = self.server.store.for_half(match.group(1), int(match.group(2)))
            try:
                body = export_annotations_csv(annotations)
            except ValidationError as exc:
                self._send_error_json(422, str(exc))
                return
            self.send_response(200)
            self.send_header("Content-Type", "text/csv")
            self.send_header("Content-Length", str(len(body)))
            self.send_header(
                "Content-Disposition",
                f'attachment; filename="{match.group(1)}-half{match.group(2)}-annotations.csv"',
            )
            self.end_headers()
            self.wfile.write(body)
            return

        match = _ROUTE_VIDEO.match(self.path)
        if match:
            entry = self._half_entry(match.group(1), match.group(2))
            if entry is None:
                return
            self._serve_video(entry)
            return

        self._serve_static()

    def _serve_video(self, entry: _HalfEntry) -> None:
        if entry.video_path is None or not entry.video_path.exists():
            self._send_error_json(404, "no video available for this half")
            return
        size = entry.video_path.stat().st_size
        content_type = mimetypes.guess_type(str(entry.video_path))[0] or "application/octet-stream"
        range_header = self.headers.get("Range")
        start, end = 0, size - 1
        status = 200
        if range_header:
            parsed = _RANGE.match(range_header.strip())
            if not parsed or (not parsed.group(1) and not parsed.group(2)):
                self.send_response(416)
                self.send_header("Content-Range", f"bytes */{size}")
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            if parsed.group(1):
                start = int(parsed.group(1))
                if parsed.group(2):
                    end = min(int(parsed.group(2)), size - 1)
            else:
                # suffix range: last N bytes
                suffix = int(parsed.group(2))
                start = max(0, size - suffix)
            if start >= size:
                self.send_response(416)
                self.send_header("Content-Range", f"bytes */{size}")
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            status = 206
        length = end - start + 1
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Accept-Ranges", "bytes")
        self.send_header("Content-Length", str(length))
        if status == 206:
            self.send_header("Content-Range", f"bytes {start}-{end}/{size}")
        self.end_headers()
        with open(entry.video_path, "rb") as handle:
            handle.seek(start)
            remaining = length
            while remaining > 0:
                chunk = handle.read(min(65536, remaining))
                if not chunk:
                    break
                self.wfile.write(chunk)
                remaining -= len(chunk)

    def _serve_static(self) -> None:
        static_dir = self.server.static_dir
        if static_dir is None:
            self._send_error_json(404, f"no route for {self.path}")
            return
        rel = self.path.split("?", 1)[0].lstrip("/") or "index.html"
        target = (static_dir / rel).resolve()
        if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
            self._send_error_json(404, f"no route for {self.path}")
            return
        body = target.read_bytes()
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    # -- PUT ---------------------------------------------------------------

    def do_PUT(self) -> None:
        match = _ROUTE_ANNOTATION.match(self.path)
        if not match:
            self._send_error_json(404, f"no route for {self.path}")
            return
        entry = self._half_entry(match.group(1), match.group(2))
        if entry is None:
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError as exc:
            self._send_error_json(422, f"invalid JSON body: {exc}")
            return
        operator = self.headers.get("X-Operator-Id") or str(body.get("operator_id", "anonymous"))
        try:
            record = self.server.store.put(
                match_id=match.group(1),
                half=int(match.group(2)),
                event_id=match.group(3),
                pass_start_s=None if body.get("pass_start_s") is None else float(body["pass_start_s"]),
                pass_end_s=None if body.get("pass_end_s") is None else float(body["pass_end_s"]),
                operator_id=operator,
                base_revision=int(body.get("revision", 0)),
            )
        except ConflictError as exc:
            self._send_error_json(409, str(exc))
            return
        except (ValidationError, ValueError, TypeError) as exc:
            self._send_error_json(422, str(exc))
            return
        except OSError as exc:
            self._send_error_json(500, f"storage failure: {exc}")
            return
        self._send_json(200, record.to_json())


class AnnotationServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        registry: MatchRegistry,
        store: AnnotationStore,
        static_dir: Path | None = None,
    ):
        super().__init__(address, AnnotationHandler)
        self.registry = registry
        self.store = store
        self.static_dir = Path(static_dir) if static_dir else None


def create_server(
    manifest_paths: Sequence[Path],
    data_dir: Path,
    host: str = "127.0.0.1",
    port: int = 8008,
    static_dir: Path | None = None,
) -> AnnotationServer:
    manifests = [ingest.load_manifest(Path(p)) for p in manifest_paths]
    registry = MatchRegistry(manifests)
    store = AnnotationStore(Path(data_dir))
    return AnnotationServer((host, port), registry, store, static_dir)


def run_server(server: AnnotationServer) -> None:
    """Serve until interrupted; compacts the store on the way out."""
    try:
        log.info("annotation service listening on %s:%d", *server.server_address[:2])
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.store.close()
        server.server_close()

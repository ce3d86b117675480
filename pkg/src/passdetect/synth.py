"""Deterministic synthetic match generator.

Produces ground-truth world state, reference pass events, noisy detections,
and a 512-dim feature channel so the whole pipeline can be trained and
evaluated at desk scale. The generator writes exactly the ingest formats;
there are no private formats.

World model: players wander between random waypoints; one player holds the
ball. Scheduled episodes alternate with idle play:

    pass  - the ball travels from the holder toward a teammate; these are
            the positive events.
    run   - the holder dashes with the ball at passing speed; the ball
            stays at the holder's feet. Runs are the deliberate confuser:
            high ball speed without ball-to-player separation.

Episodes are snapped to frame boundaries and separated by at least two
frames, so the reference label vector is exact and annotation times are
lossless at millisecond precision.

Features are a fixed random linear projection (constant seed, shared by
every generated match, standing in for a fixed pretrained extractor) of a
small world-state summary: ball velocity, ball-to-player distances, a
pass-phase indicator, and player-centroid geometry, plus Gaussian noise.
Labels are therefore learnable from features alone, and more cleanly from
the position-vector channel.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import ingest
from .core import (
    BALL,
    PERSON,
    Detection,
    EventSource,
    FrameDetections,
    FrameTimeline,
    PassEvent,
    ValidationError,
)

# Constant seed of the summary-to-feature projection; one fixed "extractor"
# shared by all synthetic matches.
PROJECTION_SEED = 4085
SUMMARY_DIM = 11
PROJECTION_SCALE = 0.08
# Per-frame corruption of the summary before projection. Every dim the
# position-vector channel also covers (speed, holder distance, pass
# indicator, velocity, positions) is jittered so the feature channel has an
# information ceiling the clean position-vector channel does not.
SUMMARY_JITTER = (0.8, 0.8, 1.0, 0.8, 0.8, 0.1, 0.1, 0.1, 0.4, 0.4, 0.0)

MIN_EPISODE_GAP_FRAMES = 2
MIN_PASS_DISTANCE_PX = 120.0
WANDER_SPEED_RANGE = (20.0, 60.0)
DASH_SPEED_RANGE = (80.0, 150.0)
RUN_DURATION_RANGE_S = (0.8, 2.0)
WANDER_MARGIN_PX = 10.0


DEFAULT_SEED = 1729  # shared documented default for every seeded entry point


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic generator; rates are per minute."""

    seed: int = DEFAULT_SEED
    duration_s: float = 120.0
    fps: int = 5
    n_players: int = 10
    pass_rate: float = 18.0
    pass_duration_range_s: tuple[float, float] = (0.4, 1.6)
    possession_run_rate: float = 6.0
    detector_miss_prob_ball: float = 0.0066
    detector_miss_prob_player: float = 0.02
    detection_noise_px: float = 1.5
    feature_noise_sigma: float = 0.25
    feature_dim: int = 512
    width_px: int = 352
    height_px: int = 240

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValidationError("duration_s must be positive")
        if self.fps < 1:
            raise ValidationError("fps must be >= 1")
        if self.n_players < 2:
            raise ValidationError("need at least two players to pass between")
        for name in ("detector_miss_prob_ball", "detector_miss_prob_player"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        low, high = self.pass_duration_range_s
        if not 0 < low <= high:
            raise ValidationError("pass_duration_range_s must be increasing and positive")
        if self.pass_rate < 0 or self.possession_run_rate < 0:
            raise ValidationError("rates must be >= 0")
        if self.detection_noise_px < 0 or self.feature_noise_sigma < 0:
            raise ValidationError("noise levels must be >= 0")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["pass_duration_range_s"] = list(self.pass_duration_range_s)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown synth config fields: {sorted(unknown)}")
        if "pass_duration_range_s" in data:
            data = dict(data)
            data["pass_duration_range_s"] = tuple(data["pass_duration_range_s"])
        return cls(**data)


def load_synth_config(path: Path) -> SynthConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read synth config {path}: {exc}") from exc
    return SynthConfig.from_dict(payload)


def save_synth_config(config: SynthConfig, path: Path) -> None:
    ingest.atomic_write_text(Path(path), lambda f: json.dump(config.to_dict(), f, indent=2))


@dataclass(frozen=True)
class WorldState:
    """Ground-truth positions and episode bookkeeping for one half."""

    ball_xy: np.ndarray  # (frames, 2) pixel coordinates
    player_xy: np.ndarray  # (frames, players, 2)
    holder: np.ndarray  # (frames,) player index holding/receiving the ball
    events: tuple[PassEvent, ...]
    runs: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class HalfData:
    timeline: FrameTimeline
    world: WorldState
    detections: list[FrameDetections]
    features: np.ndarray  # (frames, feature_dim) float32
    events: tuple[PassEvent, ...]


@dataclass(frozen=True)
class MatchBundle:
    match_id: str
    config: SynthConfig
    halves: dict[int, HalfData]


@dataclass(frozen=True)
class _Episode:
    kind: str  # "pass" | "run"
    start_frame: int
    n_frames: int

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.n_frames


def _schedule_episodes(
    config: SynthConfig, frame_count: int, rng: np.random.Generator
) -> list[_Episode]:
    """Lay out pass and run episodes on the frame grid, non-overlapping."""
    minutes = config.duration_s / 60.0
    n_passes = int(round(config.pass_rate * minutes))
    n_runs = int(round(config.possession_run_rate * minutes))

    lengths = []
    for _ in range(n_passes):
        duration = rng.uniform(*config.pass_duration_range_s)
        lengths.append(("pass", max(2, int(round(duration * config.fps)))))
    for _ in range(n_runs):
        duration = rng.uniform(*RUN_DURATION_RANGE_S)
        lengths.append(("run", max(2, int(round(duration * config.fps)))))
    if not lengths:
        return []
    order = rng.permutation(len(lengths))
    lengths = [lengths[i] for i in order]

    occupied = sum(n for _, n in lengths) + MIN_EPISODE_GAP_FRAMES * len(lengths)
    free = frame_count - occupied
    if free < 0:
        raise ValidationError(
            f"infeasible synth config: episodes need {occupied} frames, half has {frame_count}"
        )
    slack = rng.multinomial(free, np.full(len(lengths) + 1, 1.0 / (len(lengths) + 1)))

    episodes = []
    cursor = int(slack[0])
    for index, (kind, n_frames) in enumerate(lengths):
        episodes.append(_Episode(kind=kind, start_frame=cursor, n_frames=n_frames))
        cursor += n_frames + MIN_EPISODE_GAP_FRAMES + int(slack[index + 1])
    return episodes


def _simulate_world(
    config: SynthConfig, frame_count: int, rng: np.random.Generator
) -> WorldState:
    episodes = _schedule_episodes(config, frame_count, rng)
    fps = config.fps
    n = config.n_players
    width, height = float(config.width_px), float(config.height_px)
    margin = WANDER_MARGIN_PX

    def random_point() -> np.ndarray:
        return rng.uniform([margin, margin], [width - margin, height - margin])

    positions = np.empty((frame_count, n, 2))
    ball = np.empty((frame_count, 2))
    holder_track = np.empty(frame_count, dtype=np.int64)

    pos = np.stack([random_point() for _ in range(n)])
    targets = np.stack([random_point() for _ in range(n)])
    speeds = rng.uniform(*WANDER_SPEED_RANGE, size=n)
    dash_until = np.full(n, -1, dtype=np.int64)  # frame until which a player dashes
    dash_dir = np.zeros((n, 2))
    dash_speed = np.zeros(n)

    holder = 0
    episode_index = 0
    active: _Episode | None = None
    pass_origin = np.zeros(2)
    receiver = -1
    events: list[PassEvent] = []
    runs: list[tuple[float, float]] = []

    for frame in range(frame_count):
        if active is not None and frame >= active.end_frame:
            if active.kind == "pass":
                holder = receiver
            active = None
        if (
            active is None
            and episode_index < len(episodes)
            and frame >= episodes[episode_index].start_frame
        ):
            active = episodes[episode_index]
            episode_index += 1
            start_s = active.start_frame / fps
            end_s = active.end_frame / fps
            if active.kind == "pass":
                pass_origin = pos[holder].copy()
                distances = np.linalg.norm(pos - pass_origin, axis=1)
                distances[holder] = -1.0
                far = np.flatnonzero(distances >= MIN_PASS_DISTANCE_PX)
                if far.size:
                    receiver = int(rng.choice(far))
                else:
                    receiver = int(np.argmax(distances))
                events.append(
                    PassEvent(
                        event_id=f"p{len(events) + 1:04d}",
                        start_s=start_s,
                        end_s=end_s,
                        source=EventSource.REFERENCE,
                    )
                )
            else:
                angle = rng.uniform(0.0, 2.0 * math.pi)
                dash_dir[holder] = (math.cos(angle), math.sin(angle))
                dash_speed[holder] = rng.uniform(*DASH_SPEED_RANGE)
                dash_until[holder] = active.end_frame
                runs.append((start_s, end_s))

        # Move players: dash overrides wandering until it expires.
        for player in range(n):
            if frame < dash_until[player]:
                step = dash_dir[player] * dash_speed[player] / fps
                candidate = pos[player] + step
                for axis, limit in ((0, width), (1, height)):
                    if candidate[axis] < 0.0 or candidate[axis] > limit:
                        dash_dir[player][axis] *= -1.0
                        candidate[axis] = min(max(candidate[axis], 0.0), limit)
                pos[player] = candidate
            else:
                to_target = targets[player] - pos[player]
                distance = float(np.linalg.norm(to_target))
                step = speeds[player] / fps
                if distance <= step:
                    pos[player] = targets[player]
                    targets[player] = random_point()
                    speeds[player] = rng.uniform(*WANDER_SPEED_RANGE)
                else:
                    pos[player] = pos[player] + to_target * (step / distance)

        positions[frame] = pos
        if active is not None and active.kind == "pass":
            midpoint_s = (frame + 0.5) / fps
            phase = (midpoint_s - active.start_frame / fps) / (active.n_frames / fps)
            ball[frame] = pass_origin + phase * (pos[receiver] - pass_origin)
        else:
            ball[frame] = pos[holder]
        holder_track[frame] = holder

    return WorldState(
        ball_xy=ball,
        player_xy=positions,
        holder=holder_track,
        events=tuple(events),
        runs=tuple(runs),
    )


def _world_summary(world: WorldState, config: SynthConfig) -> np.ndarray:
    """Per-frame summary the feature projection consumes (frames, SUMMARY_DIM)."""
    frames = world.ball_xy.shape[0]
    fps = config.fps
    width, height = config.width_px, config.height_px

    velocity = np.zeros_like(world.ball_xy)
    if frames > 1:
        velocity[1:] = (world.ball_xy[1:] - world.ball_xy[:-1]) * fps
    speed = np.linalg.norm(velocity, axis=1)

    holder_pos = world.player_xy[np.arange(frames), world.holder]
    holder_dist = np.linalg.norm(world.ball_xy - holder_pos, axis=1)

    in_pass = np.zeros(frames)
    midpoints = (np.arange(frames) + 0.5) / fps
    for event in world.events:
        in_pass[(midpoints >= event.start_s) & (midpoints < event.end_s)] = 1.0

    centroid = world.player_xy.mean(axis=1)
    spread = np.linalg.norm(world.player_xy - centroid[:, None, :], axis=2).std(axis=1)

    summary = np.zeros((frames, SUMMARY_DIM))
    summary[:, 0] = speed / 100.0
    summary[:, 1] = holder_dist / 50.0
    summary[:, 2] = in_pass
    summary[:, 3] = velocity[:, 0] / 100.0
    summary[:, 4] = velocity[:, 1] / 100.0
    summary[:, 5] = (centroid[:, 0] - width / 2.0) / width
    summary[:, 6] = (centroid[:, 1] - height / 2.0) / height
    summary[:, 7] = spread / 50.0
    summary[:, 8] = world.ball_xy[:, 0] / width * 2.0 - 1.0
    summary[:, 9] = world.ball_xy[:, 1] / height * 2.0 - 1.0
    summary[:, 10] = 1.0
    return summary


def _projection_matrix(feature_dim: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(PROJECTION_SEED))
    return rng.normal(0.0, PROJECTION_SCALE, size=(SUMMARY_DIM, feature_dim))


def _emit_features(
    world: WorldState, config: SynthConfig, rng: np.random.Generator
) -> np.ndarray:
    summary = _world_summary(world, config)
    jitter = rng.normal(0.0, 1.0, summary.shape) * np.asarray(SUMMARY_JITTER)
    projected = (summary + jitter) @ _projection_matrix(config.feature_dim)
    if config.feature_noise_sigma > 0:
        projected = projected + rng.normal(0.0, config.feature_noise_sigma, projected.shape)
    # float32 keeps the binary feature container lossless on round trip.
    return projected.astype(np.float32)


def _emit_detections(
    world: WorldState,
    config: SynthConfig,
    timeline: FrameTimeline,
    rng: np.random.Generator,
) -> list[FrameDetections]:
    frames = world.ball_xy.shape[0]
    width, height = float(config.width_px), float(config.height_px)
    noise = config.detection_noise_px
    out = []
    for frame in range(frames):
        detections = []
        if rng.random() >= config.detector_miss_prob_ball:
            center = world.ball_xy[frame]
            if noise > 0:
                center = center + rng.normal(0.0, noise, 2)
            detections.append(
                Detection(
                    object_class=BALL,
                    confidence=float(rng.uniform(0.6, 0.99)),
                    center_x_px=float(min(max(center[0], 0.0), width)),
                    center_y_px=float(min(max(center[1], 0.0), height)),
                    box_w_px=6.0,
                    box_h_px=6.0,
                )
            )
        for player in range(config.n_players):
            if rng.random() < config.detector_miss_prob_player:
                continue
            center = world.player_xy[frame, player]
            if noise > 0:
                center = center + rng.normal(0.0, noise, 2)
            detections.append(
                Detection(
                    object_class=PERSON,
                    confidence=float(rng.uniform(0.5, 0.99)),
                    center_x_px=float(min(max(center[0], 0.0), width)),
                    center_y_px=float(min(max(center[1], 0.0), height)),
                    box_w_px=12.0,
                    box_h_px=30.0,
                )
            )
        out.append(FrameDetections(frame_index=frame, detections=tuple(detections)))
    return out


def generate_half(config: SynthConfig, match_id: str, half: int) -> HalfData:
    """Generate one half deterministically from (config.seed, half)."""
    frame_count = int(round(config.duration_s * config.fps))
    timeline = FrameTimeline(
        match_id=match_id,
        half=half,
        frame_count=frame_count,
        fps=config.fps,
        width_px=config.width_px,
        height_px=config.height_px,
    )
    root = np.random.SeedSequence(entropy=config.seed, spawn_key=(half,))
    world_ss, det_ss, feat_ss = root.spawn(3)
    world = _simulate_world(config, frame_count, np.random.default_rng(world_ss))
    detections = _emit_detections(world, config, timeline, np.random.default_rng(det_ss))
    features = _emit_features(world, config, np.random.default_rng(feat_ss))
    return HalfData(
        timeline=timeline,
        world=world,
        detections=detections,
        features=features,
        events=world.events,
    )


def generate(config: SynthConfig, match_id: str = "synth") -> MatchBundle:
    """Generate both halves of a synthetic match."""
    halves = {half: generate_half(config, match_id, half) for half in (1, 2)}
    return MatchBundle(match_id=match_id, config=config, halves=halves)


def write_match(bundle: MatchBundle, out_dir: Path, container: str = "bin") -> Path:
    """Write a generated match in the ingest formats; returns the manifest path."""
    if container not in ("bin", "csv"):
        raise ValidationError("container must be 'bin' or 'csv'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: dict[int, ingest.HalfRecord] = {}
    for half, data in sorted(bundle.halves.items()):
        suffix = "features.bin" if container == "bin" else "features.csv"
        features_uri = f"half{half}.{suffix}"
        detections_uri = f"half{half}.detections.csv"
        annotations_uri = f"half{half}.annotations.csv"
        ingest.save_features(out_dir / features_uri, data.features)
        ingest.save_detections(out_dir / detections_uri, data.detections)
        ingest.save_annotations(out_dir / annotations_uri, list(data.events))
        records[half] = ingest.HalfRecord(
            source_fps=bundle.config.fps * 5,
            target_fps=bundle.config.fps,
            width_px=bundle.config.width_px,
            height_px=bundle.config.height_px,
            frame_count=data.timeline.frame_count,
            features_uri=features_uri,
            detections_uri=detections_uri,
            annotations_uri=annotations_uri,
        )
    manifest = ingest.MatchManifest(
        match_id=bundle.match_id, halves=records, base_dir=out_dir
    )
    manifest_path = out_dir / "manifest.json"
    ingest.save_manifest(manifest, manifest_path)
    return manifest_path


def scenario_bundle(base_config: SynthConfig, out_dir: Path) -> dict[str, Path]:
    """Generate three matches and the four scenario splits.

    Same: halves of one match. Similar: same parameters, new seed.
    Different: shifted noise and rate parameters. Mixed: union training.
    Returns split name -> split file path.
    """
    out_dir = Path(out_dir)
    config_a = base_config
    config_b = replace(base_config, seed=base_config.seed + 1)
    config_c = replace(
        base_config,
        seed=base_config.seed + 2,
        detection_noise_px=base_config.detection_noise_px * 2.0,
        feature_noise_sigma=base_config.feature_noise_sigma * 1.5,
        pass_rate=base_config.pass_rate * 0.85,
    )
    manifest_a = write_match(generate(config_a, "synth-a"), out_dir / "match-a")
    manifest_b = write_match(generate(config_b, "synth-b"), out_dir / "match-b")
    manifest_c = write_match(generate(config_c, "synth-c"), out_dir / "match-c")

    splits = {
        "Same": ingest.DatasetSplit(
            name="Same",
            training_halves=((manifest_a, 1),),
            test_halves=((manifest_a, 2),),
        ),
        "Similar": ingest.DatasetSplit(
            name="Similar",
            training_halves=((manifest_a, 1), (manifest_a, 2)),
            test_halves=((manifest_b, 1),),
        ),
        "Different": ingest.DatasetSplit(
            name="Different",
            training_halves=((manifest_a, 1), (manifest_a, 2)),
            test_halves=((manifest_c, 1),),
        ),
        "Mixed": ingest.DatasetSplit(
            name="Mixed",
            training_halves=((manifest_a, 1), (manifest_b, 1)),
            test_halves=((manifest_c, 1),),
        ),
    }
    paths = {}
    for name, split in splits.items():
        path = out_dir / f"split-{name.lower()}.json"
        ingest.save_split(split, path)
        paths[name] = path
    return paths

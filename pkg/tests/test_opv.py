import math

import numpy as np
import pytest

from conftest import make_timeline
from passdetect.core import BALL, PERSON, Detection, FrameDetections, ValidationError
from passdetect.opv import (
    BALL_FLAG,
    PLAYER_FLAG,
    build_opv,
    build_opv_series,
    fuse_features,
    fuse_matrix,
    load_opv_dump,
    normalize_position,
    save_opv_dump,
)


def opv_oracle(frame, timeline):
    """Brute-force reference: normalize everything, rank all players, apply flags."""

    def norm(det):
        x = (det.center_x_px - timeline.width_px / 2) / (timeline.width_px / 2)
        y = (timeline.height_px / 2 - det.center_y_px) / (timeline.height_px / 2)
        return (min(max(x, -1.0), 1.0), min(max(y, -1.0), 1.0))

    balls = [(i, d) for i, d in enumerate(frame.detections) if d.object_class == BALL]
    players = [(i, d) for i, d in enumerate(frame.detections) if d.object_class == PERSON]

    out = []
    if balls:
        best = sorted(balls, key=lambda p: (-p[1].confidence, p[0]))[0][1]
        bx, by = norm(best)
        out += [0.0, 1.0, bx, by]
        ref = (bx, by)
    else:
        out += list(BALL_FLAG)
        ref = (0.0, 0.0)

    scored = []
    for i, d in players:
        x, y = norm(d)
        dist = math.hypot(x - ref[0], y - ref[1])
        scored.append((dist, -d.confidence, i, (x, y)))
    scored.sort()
    for slot in range(5):
        if slot < len(scored):
            x, y = scored[slot][3]
            out += [1.0, 1.0, x, y]
        else:
            out += list(PLAYER_FLAG)
    return np.array(out)


def random_frame(rng, timeline, n_balls=None, n_players=None):
    n_balls = int(rng.integers(0, 4)) if n_balls is None else n_balls
    n_players = int(rng.integers(0, 16)) if n_players is None else n_players
    dets = []
    for _ in range(n_balls):
        dets.append(
            Detection(
                BALL,
                float(rng.uniform(0, 1)),
                float(rng.uniform(0, timeline.width_px)),
                float(rng.uniform(0, timeline.height_px)),
            )
        )
    for _ in range(n_players):
        dets.append(
            Detection(
                PERSON,
                float(rng.uniform(0, 1)),
                float(rng.uniform(0, timeline.width_px)),
                float(rng.uniform(0, timeline.height_px)),
            )
        )
    order = rng.permutation(len(dets))
    return FrameDetections(frame_index=0, detections=tuple(dets[i] for i in order))


class TestNormalizePosition:
    def test_center_maps_to_origin(self):
        assert normalize_position(176, 120, 352, 240) == (0.0, 0.0)

    def test_corner(self):
        assert normalize_position(352, 240, 352, 240) == (1.0, -1.0)

    def test_ball_subvector_encoding(self):
        # A ball at normalized (0.8, -0.1) encodes as [0, 1, 0.8, -0.1].
        cx = 176 + 0.8 * 176
        cy = 120 + 0.1 * 120
        timeline = make_timeline(1)
        frame = FrameDetections(0, (Detection(BALL, 0.9, cx, cy),))
        vec = build_opv(frame, timeline)
        assert vec[0] == 0.0 and vec[1] == 1.0
        assert vec[2] == pytest.approx(0.8)
        assert vec[3] == pytest.approx(-0.1)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            normalize_position(float("nan"), 0, 352, 240)

    def test_clamped(self):
        x, y = normalize_position(360, -4, 352, 240)
        assert x == 1.0 and y == 1.0

    def test_y_down_convention(self):
        x, y = normalize_position(176, 240, 352, 240, y_up=False)
        assert (x, y) == (0.0, 1.0)


class TestBuildOpv:
    def test_empty_frame_all_flags(self, timeline):
        vec = build_opv(FrameDetections(0, ()), timeline)
        assert vec[0:4].tolist() == list(BALL_FLAG)
        for slot in range(5):
            assert vec[4 * (slot + 1) : 4 * (slot + 2)].tolist() == list(PLAYER_FLAG)

    def test_missing_ball_center_reference(self, timeline):
        # Players at normalized (0.1, 0), (-0.5, 0.5), (0.9, -0.9); no ball.
        def px(x, y):
            return (176 + x * 176, 120 - y * 120)

        players = [px(0.1, 0.0), px(-0.5, 0.5), px(0.9, -0.9)]
        dets = tuple(Detection(PERSON, 0.5, cx, cy) for cx, cy in players)
        vec = build_opv(FrameDetections(0, dets), timeline)
        assert vec[0:4].tolist() == list(BALL_FLAG)
        assert vec[4:8] == pytest.approx([1.0, 1.0, 0.1, 0.0])
        assert vec[8:12] == pytest.approx([1.0, 1.0, -0.5, 0.5])
        assert vec[12:16] == pytest.approx([1.0, 1.0, 0.9, -0.9])
        assert vec[16:20].tolist() == list(PLAYER_FLAG)
        assert vec[20:24].tolist() == list(PLAYER_FLAG)

    def test_highest_confidence_ball_wins(self, timeline):
        frame = FrameDetections(
            0,
            (
                Detection(BALL, 0.4, 10.0, 10.0),
                Detection(BALL, 0.9, 300.0, 200.0),
            ),
        )
        vec = build_opv(frame, timeline)
        expected = normalize_position(300.0, 200.0, 352, 240)
        assert (vec[2], vec[3]) == pytest.approx(expected)

    def test_oracle_equivalence_random_frames(self, timeline):
        rng = np.random.default_rng(42)
        for _ in range(2000):
            frame = random_frame(rng, timeline)
            got = build_opv(frame, timeline)
            want = opv_oracle(frame, timeline)
            assert np.array_equal(got, want)

    def test_full_frame_has_no_flags(self, timeline):
        rng = np.random.default_rng(7)
        frame = random_frame(rng, timeline, n_balls=1, n_players=8)
        vec = build_opv(frame, timeline)
        assert vec[1] == 1.0
        for slot in range(5):
            assert vec[4 * (slot + 1) + 1] == 1.0

    def test_pure_function(self, timeline):
        rng = np.random.default_rng(11)
        frame = random_frame(rng, timeline)
        assert np.array_equal(build_opv(frame, timeline), build_opv(frame, timeline))

    def test_distances_sorted_ascending(self, timeline):
        rng = np.random.default_rng(5)
        frame = random_frame(rng, timeline, n_balls=1, n_players=10)
        vec = build_opv(frame, timeline)
        ref = (vec[2], vec[3])
        dists = [
            math.hypot(vec[4 * (s + 1) + 2] - ref[0], vec[4 * (s + 1) + 3] - ref[1])
            for s in range(5)
        ]
        assert dists == sorted(dists)


class TestFuse:
    def test_zeros(self):
        fused = fuse_features(np.zeros(512), np.zeros(24))
        assert fused.shape == (536,)
        assert not fused.any()

    def test_order_contract(self):
        rng = np.random.default_rng(1)
        features = rng.normal(size=512)
        opv = rng.normal(size=24)
        fused = fuse_features(features, opv)
        assert np.array_equal(fused[:512], features)
        assert np.array_equal(fused[512:], opv)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            fuse_features(np.zeros(512), np.zeros(23))

    def test_matrix_fusion(self):
        features = np.arange(20.0).reshape(2, 10)
        opvs = np.ones((2, 24))
        fused = fuse_matrix(features, opvs)
        assert fused.shape == (2, 34)
        assert np.array_equal(fused[:, :10], features)


class TestOpvDump:
    def test_round_trip(self, tmp_path, timeline):
        rng = np.random.default_rng(2)
        series = build_opv_series(
            [random_frame(rng, timeline) for _ in range(10)], timeline
        )
        path = tmp_path / "x.opv.bin"
        save_opv_dump(path, series.astype(np.float32))
        loaded = load_opv_dump(path, timeline)
        assert np.array_equal(loaded.astype(np.float32), series.astype(np.float32))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import label_oracle, make_event, make_timeline
from passdetect.core import (
    Detection,
    FrameTimeline,
    LabelVector,
    ScoreVector,
    ValidationError,
    label_vector_from_events,
    time_to_frame,
    validate_non_overlapping,
)


class TestTimeToFrame:
    def test_origin(self, timeline):
        assert time_to_frame(0.0, timeline) == 0

    def test_exact_multiple(self):
        timeline = make_timeline(100)
        assert time_to_frame(10.0, timeline) == 50

    def test_inside_span(self):
        # Frame 50 spans [10.0, 10.2) at 5 fps.
        timeline = make_timeline(100)
        assert time_to_frame(10.19, timeline) == 50

    def test_matches_span_enumeration(self):
        timeline = make_timeline(40)
        for t in np.linspace(0.0, 7.99, 321):
            f = time_to_frame(float(t), timeline)
            t0, t1 = timeline.frame_span(f)
            assert t0 <= t < t1

    def test_clamps_past_end(self, timeline):
        assert time_to_frame(100.0, timeline) == 9

    def test_empty_timeline_rejected(self):
        timeline = make_timeline(0)
        with pytest.raises(ValidationError):
            time_to_frame(0.0, timeline)

    @given(st.floats(min_value=0.0, max_value=1000.0, allow_nan=False))
    def test_monotone(self, t):
        timeline = make_timeline(500, fps=5)
        assert time_to_frame(t, timeline) <= time_to_frame(t + 0.25, timeline)


class TestLabelVectorFromEvents:
    def test_empty_events(self, timeline):
        labels = label_vector_from_events([], timeline)
        assert labels.bits.tolist() == [0] * 10

    def test_single_event_matches_oracle(self, timeline):
        events = [make_event(0.4, 1.4)]
        expected = label_oracle(events, timeline)
        labels = label_vector_from_events(events, timeline)
        assert labels.bits.tolist() == expected.tolist()
        # Five consecutive pass frames: [0 0 1 1 1 1 1 0 0 0].
        assert labels.bits.tolist() == [0, 0, 1, 1, 1, 1, 1, 0, 0, 0]

    def test_abutting_events_merge(self, timeline):
        events = [make_event(0.0, 0.4, "a"), make_event(0.4, 0.8, "b")]
        labels = label_vector_from_events(events, timeline)
        assert labels.bits.tolist() == [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
        assert labels.bits.tolist() == label_oracle(events, timeline).tolist()

    def test_subframe_overlap_is_labeled(self, timeline):
        # An event covering a sliver of frame 3 still labels it.
        events = [make_event(0.79, 0.81)]
        labels = label_vector_from_events(events, timeline)
        assert labels.bits.tolist() == label_oracle(events, timeline).tolist()
        assert labels.bits[3] == 1 and labels.bits[4] == 1

    def test_event_past_end_clamped(self, timeline):
        labels = label_vector_from_events([make_event(1.9, 5.0)], timeline)
        assert labels.bits.tolist() == label_oracle([make_event(1.9, 5.0)], timeline).tolist()

    def test_invalid_event_rejected(self):
        with pytest.raises(ValidationError):
            make_event(1.0, 1.0)
        with pytest.raises(ValidationError):
            make_event(2.0, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=0.0, max_value=30.0),
                st.floats(min_value=0.01, max_value=4.0),
            ),
            max_size=8,
        )
    )
    def test_oracle_equivalence_random(self, raw):
        timeline = make_timeline(160)
        events = [
            make_event(start, start + duration, f"e{i}")
            for i, (start, duration) in enumerate(raw)
        ]
        labels = label_vector_from_events(events, timeline)
        assert labels.bits.tolist() == label_oracle(events, timeline).tolist()


class TestDomainTypes:
    def test_label_vector_length_checked(self, timeline):
        with pytest.raises(ValidationError):
            LabelVector(timeline=timeline, bits=np.zeros(9, dtype=np.uint8))

    def test_label_vector_binary_checked(self, timeline):
        with pytest.raises(ValidationError):
            LabelVector(timeline=timeline, bits=np.full(10, 2, dtype=np.uint8))

    def test_score_vector_range_checked(self, timeline):
        with pytest.raises(ValidationError):
            ScoreVector(timeline=timeline, scores=np.full(10, 1.5))

    def test_detection_validation(self):
        with pytest.raises(ValidationError):
            Detection(object_class="goalpost", confidence=0.5, center_x_px=0, center_y_px=0)
        with pytest.raises(ValidationError):
            Detection(object_class="ball", confidence=1.5, center_x_px=0, center_y_px=0)

    def test_timeline_validation(self):
        with pytest.raises(ValidationError):
            FrameTimeline(match_id="m", half=3, frame_count=1)
        with pytest.raises(ValidationError):
            FrameTimeline(match_id="m", half=1, frame_count=-1)
        with pytest.raises(ValidationError):
            FrameTimeline(match_id="m", half=1, frame_count=1, fps=0)

    def test_overlap_validation(self):
        events = [make_event(0.0, 1.0, "a"), make_event(0.5, 2.0, "b")]
        with pytest.raises(ValidationError):
            validate_non_overlapping(events)
        validate_non_overlapping([make_event(0.0, 1.0, "a"), make_event(1.0, 2.0, "b")])

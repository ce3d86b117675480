import numpy as np
import pytest

from passdetect.core import EventSource, FrameTimeline, PassEvent


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One PASS/FAIL line per acceptance criterion, named after its test."""
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        name = item.name.split("[")[0].removeprefix("test_").replace("_", "-")
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {verdict} ({report.duration:.1f}s)")


@pytest.fixture
def timeline():
    """Ten frames at 5 fps on the default 352x240 grid."""
    return FrameTimeline(match_id="m1", half=1, frame_count=10, fps=5)


def make_timeline(frame_count, fps=5, match_id="m1", half=1, width=352, height=240):
    return FrameTimeline(
        match_id=match_id,
        half=half,
        frame_count=frame_count,
        fps=fps,
        width_px=width,
        height_px=height,
    )


def make_event(start, end, event_id="e1", source=EventSource.REFERENCE):
    return PassEvent(event_id=event_id, start_s=start, end_s=end, source=source)


def label_oracle(events, timeline):
    """Independent per-frame interval-intersection oracle."""
    bits = np.zeros(timeline.frame_count, dtype=np.uint8)
    for f in range(timeline.frame_count):
        t0 = f / timeline.fps
        t1 = (f + 1) / timeline.fps
        for event in events:
            if t0 < event.end_s and t1 > event.start_s:
                bits[f] = 1
                break
    return bits

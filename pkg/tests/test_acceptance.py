"""Acceptance suite.

One test per acceptance criterion, each enforcing the stated tolerance and
runtime budget, and printing one line per criterion (visible with -s / -rA):

    ACCEPTANCE <criterion>: PASS (<elapsed>s)

Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import threading
import time

import numpy as np
import pytest
import requests

from conftest import make_timeline
from passdetect import ingest, metrics, pipeline, synth
from passdetect.checkpoint import load_checkpoint, save_checkpoint
from passdetect.classifier import (
    ClassifierConfig,
    backward,
    bce_loss,
    forward,
    init_parameters,
)
from passdetect.cli import main as cli_main
from passdetect.core import (
    EventSource,
    LabelVector,
    label_vector_from_events,
)
from passdetect.agreement import agreement_sweep, inter_rater_agreement, match_events
from passdetect.opv import build_opv
from passdetect.service import create_server
from passdetect.training import train
from test_agreement import events_at
from test_metrics import (
    ap_enumeration_oracle,
    auc_pairwise_oracle,
    random_scores_labels,
    youden_scan_oracle,
)
from test_opv import opv_oracle, random_frame


class Budget:
    """Enforces a criterion's runtime budget; the conftest hook prints the
    PASS/FAIL line for every acceptance test."""

    def __init__(self, name, limit_s):
        self.name = name
        self.limit_s = limit_s
        self.start = time.monotonic()

    def done(self):
        elapsed = time.monotonic() - self.start
        assert elapsed < self.limit_s, (
            f"{self.name} took {elapsed:.1f}s, budget {self.limit_s}s"
        )


def test_baseline_closed_forms():
    budget = Budget("baseline-closed-forms", limit_s=1.0)
    n = 10000
    prevalence = 0.3268
    timeline = make_timeline(n)
    bits = np.zeros(n, dtype=np.uint8)
    bits[: int(round(prevalence * n))] = 1
    truth = LabelVector(timeline=timeline, bits=bits)
    assert truth.prevalence == pytest.approx(prevalence, abs=1e-12)

    least = metrics.metric_report(
        metrics.confusion(metrics.baseline(metrics.BASELINE_LEAST_FREQUENT, timeline), truth)
    )
    assert least.prec * 100 == pytest.approx(32.68, abs=0.01)
    assert least.rec * 100 == pytest.approx(100.0, abs=0.01)
    assert least.f1 * 100 == pytest.approx(49.26, abs=0.01)

    most = metrics.metric_report(
        metrics.confusion(metrics.baseline(metrics.BASELINE_MOST_FREQUENT, timeline), truth)
    )
    assert most.acc * 100 == pytest.approx(67.32, abs=0.01)
    budget.done()


def test_gradient_correctness():
    budget = Budget("gradient-correctness", limit_s=120.0)
    rng = np.random.default_rng(20240)
    worst = 0.0
    step = 1e-5
    for case in range(20):
        config = ClassifierConfig(
            input_dim=int(rng.integers(2, 9)),
            hidden_dim=int(rng.integers(2, 5)),
            window_len=int(rng.integers(1, 4)),
            precision=64,
            seed=case,
        )
        params = init_parameters(config, rng)
        for value in params.values():
            value += rng.normal(0.0, 0.1, value.shape)
        steps = int(rng.integers(1, 4))
        window = rng.normal(0.0, 1.0, (steps, config.input_dim))
        labels = rng.integers(0, 2, steps).astype(np.float64)
        _, grads, dinputs = backward(window, labels, params, config)

        def loss_fn():
            return bce_loss(forward(window, params, config), labels)

        def central(array, index):
            original = array[index]
            array[index] = original + step
            up = loss_fn()
            array[index] = original - step
            down = loss_fn()
            array[index] = original
            return (up - down) / (2.0 * step)

        for name, array in params.items():
            it = np.nditer(array, flags=["multi_index"])
            for _ in it:
                numeric = central(array, it.multi_index)
                analytic = grads[name][it.multi_index]
                worst = max(
                    worst,
                    abs(numeric - analytic) / max(1e-6, abs(numeric), abs(analytic)),
                )
        for index in np.ndindex(window.shape):
            numeric = central(window, index)
            worst = max(
                worst,
                abs(numeric - dinputs[index]) / max(1e-6, abs(numeric), abs(dinputs[index])),
            )
    assert worst < 1e-4, f"max relative gradient error {worst:.3e}"
    budget.done()


def test_opv_oracle_equivalence():
    budget = Budget("opv-oracle-equivalence", limit_s=30.0)
    timeline = make_timeline(1)
    rng = np.random.default_rng(777)
    for _ in range(10000):
        frame = random_frame(rng, timeline)
        assert np.array_equal(build_opv(frame, timeline), opv_oracle(frame, timeline))
    budget.done()


def test_metric_oracles():
    budget = Budget("metric-oracles", limit_s=60.0)
    rng = np.random.default_rng(424242)
    for _ in range(500):
        scores, truth = random_scores_labels(rng, max_n=500)
        auc = metrics.roc_curve(scores, truth).auc
        assert auc == pytest.approx(auc_pairwise_oracle(scores, truth), abs=1e-9)
        ap = metrics.average_precision(scores, truth)
        assert ap == pytest.approx(ap_enumeration_oracle(scores, truth), abs=1e-9)
        got_threshold, got_yi = metrics.youden_threshold(metrics.roc_curve(scores, truth))
        want_threshold, want_yi = youden_scan_oracle(scores, truth)
        assert got_yi == pytest.approx(want_yi, abs=1e-12)
        assert got_threshold == pytest.approx(want_threshold, abs=1e-12)
    budget.done()


@pytest.fixture(scope="module")
def e2e_match():
    config = synth.SynthConfig(seed=2024, duration_s=1800.0)  # 30-minute halves
    return synth.generate(config, "acceptance")


def _train_and_score(bundle, input_dim):
    h1, h2 = bundle.halves[1], bundle.halves[2]
    labels1 = label_vector_from_events(h1.events, h1.timeline)
    inputs = pipeline.build_model_inputs(h1.features, h1.detections, h1.timeline, input_dim)
    dataset = [
        (window, labels1.bits[start : start + window.shape[0]])
        for start, window in pipeline.make_windows(inputs, 25)
    ]
    config = ClassifierConfig(
        input_dim=input_dim,
        hidden_dim=32,
        window_len=25,
        learning_rate=1e-4,
        max_epochs=10,
        seed=8,
        precision=64,
    )
    checkpoint = train(dataset, config)
    detections2 = h2.detections if input_dim != h2.features.shape[1] else None
    scores = pipeline.annotate_half(h2.features, detections2, checkpoint, h2.timeline)
    return scores


def test_end_to_end_synthetic_learning(e2e_match):
    budget = Budget("end-to-end-synthetic-learning", limit_s=900.0)
    h2 = e2e_match.halves[2]
    truth = label_vector_from_events(h2.events, h2.timeline)

    full_scores = _train_and_score(e2e_match, 536)
    roc = metrics.roc_curve(full_scores, truth)
    threshold, _ = metrics.youden_threshold(roc)
    report = metrics.metric_report(
        metrics.confusion(pipeline.apply_threshold(full_scores, threshold), truth), threshold
    )
    least_f1 = metrics.least_frequent_f1(truth.prevalence)
    assert report.f1 >= 0.70, f"F1 at Youden threshold {report.f1:.4f} < 0.70"
    assert report.f1 > least_f1, f"F1 {report.f1:.4f} not above always-pass {least_f1:.4f}"

    full_ap = metrics.average_precision(full_scores, truth)
    ablation_scores = _train_and_score(e2e_match, 512)
    ablation_ap = metrics.average_precision(ablation_scores, truth)
    assert full_ap >= ablation_ap, (
        f"full-model AP {full_ap:.4f} below features-only AP {ablation_ap:.4f}"
    )
    print(
        f"\n  [e2e] F1@Youden={report.f1:.4f} (baseline {least_f1:.4f}), "
        f"AP full={full_ap:.4f} vs features-only={ablation_ap:.4f}"
    )
    budget.done()


def test_determinism_synth_train_predict(tmp_path):
    budget = Budget("determinism", limit_s=300.0)
    outputs = {}
    for run in ("one", "two"):
        base = tmp_path / run
        assert (
            cli_main(
                ["synth", "--out", str(base / "match"), "--seed", "31", "--duration", "90"]
            )
            == 0
        )
        manifest = base / "match" / "manifest.json"
        split = ingest.DatasetSplit(
            name="Same",
            training_halves=((manifest, 1),),
            test_halves=((manifest, 2),),
        )
        split_path = base / "split.json"
        ingest.save_split(split, split_path)
        checkpoint = base / "model.ckpt"
        assert (
            cli_main(
                [
                    "train",
                    "--split",
                    str(split_path),
                    "--out",
                    str(checkpoint),
                    "--hidden-dim",
                    "8",
                    "--epochs",
                    "2",
                    "--seed",
                    "11",
                    "--no-figures",
                ]
            )
            == 0
        )
        pred = base / "pred"
        assert (
            cli_main(
                [
                    "predict",
                    "--checkpoint",
                    str(checkpoint),
                    "--manifest",
                    str(manifest),
                    "--half",
                    "2",
                    "--out-dir",
                    str(pred),
                ]
            )
            == 0
        )
        outputs[run] = {
            "checkpoint": checkpoint.read_bytes(),
            "scores": (pred / "half2.scores.csv").read_bytes(),
            "vector": (pred / "half2.passvector.csv").read_bytes(),
            "events": (pred / "half2.events.csv").read_bytes(),
        }
    for key in outputs["one"]:
        assert outputs["one"][key] == outputs["two"][key], f"{key} files differ between runs"
    budget.done()


def test_agreement_properties():
    budget = Budget("agreement-properties", limit_s=30.0)
    starts = np.sort(np.random.default_rng(5).uniform(0, 2700, 60))
    events = events_at(starts)
    rows = agreement_sweep(events, events, half_duration_s=2700.0)
    assert all(row.rate == pytest.approx(1.0) for row in rows)

    # Isolated events (spacing far beyond any window): shifting every
    # predicted start by more than the tolerance empties the matching.
    grid = [round(0.5 * i, 10) for i in range(1, 11)]
    isolated = events_at(np.arange(60) * 40.0 + 5.0)
    for delta_t in grid:
        shifted = events_at(
            np.arange(60) * 40.0 + 5.0 + delta_t * 2.0, EventSource.PREDICTED
        )
        matching = match_events(shifted, isolated, delta_t)
        result = inter_rater_agreement(matching, 2700.0)
        assert result.p_o == 0.0

    rng = np.random.default_rng(6)
    predicted = events_at(np.sort(rng.uniform(0, 2700, 55)), EventSource.PREDICTED)
    sweep = agreement_sweep(predicted, events, 2700.0, grid)
    matched = [row.matched for row in sweep]
    assert matched == sorted(matched)
    budget.done()


def test_round_trips(tmp_path):
    budget = Budget("round-trips", limit_s=60.0)
    bundle = synth.generate(synth.SynthConfig(seed=61, duration_s=60.0), "rt")
    half = bundle.halves[1]
    timeline = half.timeline

    # annotations
    path = tmp_path / "a.csv"
    ingest.save_annotations(path, list(half.events))
    loaded = ingest.load_annotations(path)
    assert [(e.event_id, e.start_s, e.end_s) for e in loaded] == [
        (e.event_id, e.start_s, e.end_s) for e in sorted(half.events, key=lambda e: e.start_s)
    ]

    # features (binary container, float32 payload)
    path = tmp_path / "f.features.bin"
    ingest.save_features(path, half.features)
    assert np.array_equal(
        ingest.load_feature_matrix(path, timeline).astype(np.float32), half.features
    )

    # detections
    path = tmp_path / "d.csv"
    ingest.save_detections(path, half.detections)
    assert ingest.load_detections(path, timeline) == half.detections

    # predictions: scores and pass vector
    rng = np.random.default_rng(0)
    scores = pipeline.annotate_half(
        half.features,
        half.detections,
        _fresh_checkpoint(),
        timeline,
    )
    spath = tmp_path / "s.csv"
    ingest.save_scores(spath, scores)
    assert np.array_equal(ingest.load_scores(spath, timeline).scores, scores.scores)
    labels = pipeline.apply_threshold(scores, 0.5)
    vpath = tmp_path / "v.csv"
    ingest.save_passvector(vpath, labels)
    assert np.array_equal(ingest.load_passvector(vpath, timeline).bits, labels.bits)
    events = pipeline.extract_pass_events(labels)
    epath = tmp_path / "e.csv"
    ingest.save_annotations(epath, events)
    reloaded = ingest.load_annotations(epath, source=EventSource.PREDICTED)
    assert len(reloaded) == len(events)

    # checkpoint
    checkpoint = _fresh_checkpoint()
    cpath = tmp_path / "m.ckpt"
    save_checkpoint(checkpoint, cpath)
    loaded_ckpt = load_checkpoint(cpath)
    window = np.random.default_rng(1).normal(size=(25, 536))
    assert np.array_equal(
        forward(window, checkpoint.params, checkpoint.config),
        forward(window, loaded_ckpt.params, loaded_ckpt.config),
    )
    budget.done()


def _fresh_checkpoint():
    from passdetect.checkpoint import Checkpoint

    config = ClassifierConfig(input_dim=536, hidden_dim=8, window_len=25, precision=64)
    params = init_parameters(config, np.random.default_rng(3))
    return Checkpoint(
        config=config,
        params=params,
        adam_m={k: np.zeros_like(v) for k, v in params.items()},
        adam_v={k: np.zeros_like(v) for k, v in params.items()},
        adam_t=0,
        epoch=1,
        rng_state={},
        history=[],
    )


def test_annotation_flow_secondary(tmp_path):
    """[SECONDARY] criterion, service side exercised over live HTTP."""
    budget = Budget("annotation-flow (secondary, HTTP)", limit_s=120.0)
    bundle = synth.generate(synth.SynthConfig(seed=71, duration_s=60.0), "flow")
    manifest_path = synth.write_match(bundle, tmp_path / "match")
    store_dir = tmp_path / "store"

    server = create_server([manifest_path], store_dir, host="127.0.0.1", port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        events = requests.get(f"{url}/api/matches/flow/halves/1/events").json()["events"]
        target = next(e for e in events if e["reference_start_s"] >= 2.0)
        assert target["seek_to_s"] == pytest.approx(target["reference_start_s"] - 2.0)

        start = round(target["reference_start_s"] + 0.12, 2)
        end = round(start + 0.8, 2)
        put = requests.put(
            f"{url}/api/matches/flow/halves/1/events/{target['event_id']}/annotation",
            json={"pass_start_s": start, "pass_end_s": end, "revision": 0},
            headers={"X-Operator-Id": "acceptance"},
        )
        assert put.status_code == 200
    finally:
        # Crash without compaction: shut the socket down, skip store.close().
        server.shutdown()
        server.server_close()

    restarted = create_server([manifest_path], store_dir, host="127.0.0.1", port=0)
    thread = threading.Thread(target=restarted.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{restarted.server_address[1]}"
    try:
        events = requests.get(f"{url}/api/matches/flow/halves/1/events").json()["events"]
        recovered = next(e for e in events if e["event_id"] == target["event_id"])
        assert recovered["annotation"] is not None
        assert recovered["annotation"]["pass_start_s"] == pytest.approx(start)

        export = requests.get(f"{url}/api/matches/flow/halves/1/annotations.csv")
        assert export.status_code == 200
        out = tmp_path / "export.csv"
        out.write_bytes(export.content)
        loaded = ingest.load_annotations(out, source=EventSource.MANUAL)
        assert len(loaded) == 1
        assert loaded[0].start_s == pytest.approx(start, abs=1e-3)
    finally:
        restarted.shutdown()
        restarted.store.close()
        restarted.server_close()
    budget.done()

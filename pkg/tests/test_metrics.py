import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_timeline
from passdetect import metrics
from passdetect.core import LabelVector, ValidationError


def auc_pairwise_oracle(scores, truth):
    """Probability a random positive outranks a random negative, ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=int)
    pos = scores[truth == 1]
    neg = scores[truth == 0]
    diff = pos[:, None] - neg[None, :]
    wins = (diff > 0).sum() + 0.5 * (diff == 0).sum()
    return wins / (len(pos) * len(neg))


def ap_enumeration_oracle(scores, truth):
    """Walk descending unique thresholds; at each, predict score >= threshold."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=int)
    positives = truth.sum()
    ap = 0.0
    prev_recall = 0.0
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        tp = int((predicted & (truth == 1)).sum())
        precision = tp / predicted.sum()
        recall = tp / positives
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def youden_scan_oracle(scores, truth):
    """Exhaustive scan of strict-exceedance thresholds; smallest argmax."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=int)
    p = truth.sum()
    n = len(truth) - p
    candidates = [metrics.ROC_SENTINEL_LOW] + sorted(set(scores.tolist())) + [
        metrics.ROC_SENTINEL_HIGH
    ]
    best_yi, best_threshold = -np.inf, None
    for threshold in candidates:
        predicted = scores > threshold
        tpr = (predicted & (truth == 1)).sum() / p
        fpr = (predicted & (truth == 0)).sum() / n
        yi = tpr - fpr
        if yi > best_yi or (yi == best_yi and threshold < best_threshold):
            best_yi, best_threshold = yi, threshold
    return min(max(best_threshold, 0.0), 1.0), best_yi


def random_scores_labels(rng, max_n=500):
    n = int(rng.integers(2, max_n + 1))
    truth = rng.integers(0, 2, n)
    while truth.min() == truth.max():
        truth = rng.integers(0, 2, n)
    # Quantized scores create plenty of ties.
    scores = np.round(rng.random(n), int(rng.integers(1, 4)))
    return scores, truth


class TestConfusion:
    def test_perfect(self):
        counts = metrics.confusion([1, 0, 1], [1, 0, 1])
        assert (counts.tp, counts.tn, counts.fp, counts.fn) == (2, 1, 0, 0)

    def test_inverted(self):
        counts = metrics.confusion([0, 1, 0], [1, 0, 1])
        assert counts.tp == 0 and counts.tn == 0
        assert counts.fp == 1 and counts.fn == 2

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        pred = rng.integers(0, 2, 300)
        truth = rng.integers(0, 2, 300)
        counts = metrics.confusion(pred, truth)
        tp = sum(1 for a, b in zip(pred, truth) if a == 1 and b == 1)
        fp = sum(1 for a, b in zip(pred, truth) if a == 1 and b == 0)
        tn = sum(1 for a, b in zip(pred, truth) if a == 0 and b == 0)
        fn = sum(1 for a, b in zip(pred, truth) if a == 0 and b == 1)
        assert (counts.tp, counts.fp, counts.tn, counts.fn) == (tp, fp, tn, fn)
        assert counts.total == 300

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            metrics.confusion([1, 0], [1, 0, 1])


class TestMetricReport:
    def prevalence_counts(self, p=0.3268, n=10000, predict_all=True):
        positives = int(round(p * n))
        if predict_all:
            return metrics.ConfusionCounts(tp=positives, fp=n - positives, tn=0, fn=0)
        return metrics.ConfusionCounts(tp=0, fp=0, tn=n - positives, fn=positives)

    def test_always_pass_closed_form(self):
        report = metrics.metric_report(self.prevalence_counts())
        assert report.prec * 100 == pytest.approx(32.68, abs=0.01)
        assert report.rec == 1.0
        assert report.f1 * 100 == pytest.approx(49.26, abs=0.01)

    def test_always_no_pass_closed_form(self):
        report = metrics.metric_report(self.prevalence_counts(predict_all=False))
        assert report.acc * 100 == pytest.approx(67.32, abs=0.01)
        assert report.f1 == 0.0
        assert report.rec_no == 1.0
        assert "prec" in report.undefined

    def test_perfect_predictor(self):
        report = metrics.metric_report(metrics.ConfusionCounts(tp=5, fp=0, tn=5, fn=0))
        assert (report.acc, report.f1, report.prec, report.rec) == (1.0, 1.0, 1.0, 1.0)
        assert report.undefined == frozenset()

    def test_f1_identity(self):
        report = metrics.metric_report(metrics.ConfusionCounts(tp=3, fp=2, tn=4, fn=1))
        expected = 2 * report.prec * report.rec / (report.prec + report.rec)
        assert report.f1 == pytest.approx(expected, rel=1e-12)


class TestRocAuc:
    def test_scores_equal_labels(self):
        truth = np.array([0, 1, 0, 1, 1])
        roc = metrics.roc_curve(truth.astype(float), truth)
        assert roc.auc == pytest.approx(1.0)

    def test_constant_scores_auc_half(self):
        truth = np.array([0, 1, 0, 1])
        roc = metrics.roc_curve(np.full(4, 0.7), truth)
        assert roc.auc == pytest.approx(0.5)

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            metrics.roc_curve(np.array([0.1, 0.9]), np.array([1, 1]))

    def test_curve_spans_corners(self):
        rng = np.random.default_rng(1)
        scores, truth = random_scores_labels(rng, max_n=50)
        roc = metrics.roc_curve(scores, truth)
        assert (roc.points[0].fpr, roc.points[0].tpr) == (0.0, 0.0)
        assert (roc.points[-1].fpr, roc.points[-1].tpr) == (1.0, 1.0)

    def test_auc_matches_pairwise_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            scores, truth = random_scores_labels(rng, max_n=200)
            roc = metrics.roc_curve(scores, truth)
            assert roc.auc == pytest.approx(auc_pairwise_oracle(scores, truth), abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=10**9))
    def test_auc_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        scores, truth = random_scores_labels(rng, max_n=80)
        base = metrics.roc_curve(scores, truth).auc
        squashed = metrics.roc_curve(scores**3, truth).auc
        assert squashed == pytest.approx(base, abs=1e-9)


class TestYouden:
    def test_perfect_separation_smallest_threshold(self):
        scores = np.array([0.1, 0.4, 0.6, 0.9])
        truth = np.array([0, 0, 1, 1])
        roc = metrics.roc_curve(scores, truth)
        threshold, yi = metrics.youden_threshold(roc)
        assert yi == pytest.approx(1.0)
        assert threshold == pytest.approx(0.4)

    def test_constant_scores_zero(self):
        roc = metrics.roc_curve(np.full(6, 0.3), np.array([0, 1, 0, 1, 0, 1]))
        threshold, yi = metrics.youden_threshold(roc)
        assert yi == pytest.approx(0.0)
        assert 0.0 <= threshold <= 1.0

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            scores, truth = random_scores_labels(rng, max_n=120)
            roc = metrics.roc_curve(scores, truth)
            got_threshold, got_yi = metrics.youden_threshold(roc)
            want_threshold, want_yi = youden_scan_oracle(scores, truth)
            assert got_yi == pytest.approx(want_yi, abs=1e-12)
            assert got_threshold == pytest.approx(want_threshold, abs=1e-12)


class TestAveragePrecision:
    def test_perfect_ranking(self):
        truth = np.array([0, 0, 1, 1])
        assert metrics.average_precision(np.array([0.1, 0.2, 0.8, 0.9]), truth) == 1.0

    def test_reversed_single_positive(self):
        n = 8
        scores = np.linspace(0.9, 0.1, n)
        truth = np.zeros(n, dtype=int)
        truth[-1] = 1  # the positive has the lowest score
        assert metrics.average_precision(scores, truth) == pytest.approx(1.0 / n)

    def test_zero_positives_rejected(self):
        with pytest.raises(ValidationError):
            metrics.average_precision(np.array([0.5, 0.6]), np.array([0, 0]))

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            scores, truth = random_scores_labels(rng, max_n=200)
            got = metrics.average_precision(scores, truth)
            assert got == pytest.approx(ap_enumeration_oracle(scores, truth), abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=10**9))
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        scores, truth = random_scores_labels(rng, max_n=80)
        base = metrics.average_precision(scores, truth)
        shifted = metrics.average_precision(0.5 + scores / 2.0, truth)
        assert shifted == pytest.approx(base, abs=1e-9)


class TestPrVsThreshold:
    def test_rows_consistent_with_reports(self):
        rng = np.random.default_rng(5)
        scores, truth = random_scores_labels(rng, max_n=150)
        grid = metrics.default_threshold_grid(0.1)
        rows = metrics.pr_vs_threshold(scores, truth, grid)
        for row in rows:
            predicted = (scores > row.threshold).astype(int)
            report = metrics.metric_report(metrics.confusion(predicted, truth))
            assert row.report.prec == report.prec
            assert row.report.rec == report.rec

    def test_threshold_zero_row(self):
        scores = np.array([0.2, 0.4, 0.9])
        truth = np.array([0, 1, 1])
        rows = metrics.pr_vs_threshold(scores, truth, [0.0])
        assert rows[0].report.rec == 1.0

    def test_threshold_one_row(self):
        scores = np.array([0.2, 0.4, 0.9])
        truth = np.array([0, 1, 1])
        rows = metrics.pr_vs_threshold(scores, truth, [1.0])
        assert rows[0].report.rec == 0.0
        assert "prec" in rows[0].report.undefined

    def test_grid_validated(self):
        with pytest.raises(ValidationError):
            metrics.pr_vs_threshold(np.array([0.5]), np.array([1]), [1.2])


class TestBaselines:
    def test_least_frequent_closed_form(self):
        timeline = make_timeline(10000)
        truth_bits = np.zeros(10000, dtype=np.uint8)
        truth_bits[:3268] = 1
        truth = LabelVector(timeline=timeline, bits=truth_bits)
        predicted = metrics.baseline(metrics.BASELINE_LEAST_FREQUENT, timeline)
        report = metrics.metric_report(metrics.confusion(predicted, truth))
        assert report.f1 == pytest.approx(metrics.least_frequent_f1(0.3268), rel=1e-12)
        assert report.f1 * 100 == pytest.approx(49.26, abs=0.01)

    def test_most_frequent(self):
        timeline = make_timeline(100)
        truth_bits = np.zeros(100, dtype=np.uint8)
        truth_bits[:30] = 1
        truth = LabelVector(timeline=timeline, bits=truth_bits)
        predicted = metrics.baseline(metrics.BASELINE_MOST_FREQUENT, timeline)
        report = metrics.metric_report(metrics.confusion(predicted, truth))
        assert report.f1 == 0.0
        assert report.rec_no == 1.0

    def test_random_seeded_and_near_half(self):
        timeline = make_timeline(20000)
        a = metrics.baseline(metrics.BASELINE_RANDOM, timeline, seed=11)
        b = metrics.baseline(metrics.BASELINE_RANDOM, timeline, seed=11)
        assert np.array_equal(a.bits, b.bits)
        truth = LabelVector(
            timeline=timeline,
            bits=(np.random.default_rng(0).random(20000) < 0.3268).astype(np.uint8),
        )
        report = metrics.metric_report(metrics.confusion(a, truth))
        assert abs(report.acc - 0.5) < 0.02

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            metrics.baseline("oracle", make_timeline(5))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=999), st.integers(min_value=1000, max_value=5000))
    def test_least_frequent_closed_form_exact_any_prevalence(self, positives, n):
        positives = min(positives, n)
        timeline = make_timeline(n)
        bits = np.zeros(n, dtype=np.uint8)
        bits[:positives] = 1
        truth = LabelVector(timeline=timeline, bits=bits)
        predicted = metrics.baseline(metrics.BASELINE_LEAST_FREQUENT, timeline)
        report = metrics.metric_report(metrics.confusion(predicted, truth))
        p = positives / n
        assert report.f1 == pytest.approx(2 * p / (1 + p), rel=1e-12)
        assert report.f1 == pytest.approx(metrics.least_frequent_f1(p), rel=1e-12)


class TestCsvEmitters:
    def test_roc_and_pr_and_report(self, tmp_path):
        rng = np.random.default_rng(6)
        scores, truth = random_scores_labels(rng, max_n=50)
        roc = metrics.roc_curve(scores, truth)
        metrics.save_roc_csv(tmp_path / "roc.csv", roc)
        assert (tmp_path / "roc.csv").read_text().startswith("threshold,tpr,fpr")

        rows = metrics.pr_vs_threshold(scores, truth, [0.0, 0.5, 1.0])
        metrics.save_pr_csv(tmp_path / "pr.csv", rows)
        assert len((tmp_path / "pr.csv").read_text().splitlines()) == 4

        report = metrics.metric_report(metrics.confusion(truth, truth), 0.5)
        metrics.save_report_csv(tmp_path / "report.csv", [("model", report)])
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0].startswith("label,threshold,acc,f1")
        assert lines[1].startswith("model,0.5,1,1")

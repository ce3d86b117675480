"""Frame-level evaluation: confusion metrics, ROC/AUC, Youden calibration,
average precision, precision-recall sweeps, and the trivial baselines.

Class "pass" is the positive class throughout. Thresholding follows the
strict-inequality rule used everywhere in the pipeline: a frame is predicted
positive iff its score is strictly greater than the threshold. Metrics with
a zero denominator are reported as 0 and flagged as undefined, so a full
table can always be produced.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import FrameTimeline, LabelVector, ScoreVector, ValidationError
from .ingest import atomic_write_text

BASELINE_RANDOM = "random"
BASELINE_MOST_FREQUENT = "most-frequent"
BASELINE_LEAST_FREQUENT = "least-frequent"
BASELINE_KINDS = (BASELINE_RANDOM, BASELINE_MOST_FREQUENT, BASELINE_LEAST_FREQUENT)

# Out-of-band ROC sentinels: below any score (predict everything positive)
# and above any score (predict nothing positive).
ROC_SENTINEL_LOW = -1.0
ROC_SENTINEL_HIGH = 2.0


def _as_bits(truth) -> np.ndarray:
    bits = truth.bits if isinstance(truth, LabelVector) else np.asarray(truth)
    bits = bits.astype(np.int64)
    if bits.ndim != 1:
        raise ValidationError("labels must be a flat vector")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    return bits


def _as_scores(scores) -> np.ndarray:
    values = scores.scores if isinstance(scores, ScoreVector) else np.asarray(scores)
    values = values.astype(np.float64)
    if values.ndim != 1:
        raise ValidationError("scores must be a flat vector")
    if values.size and not np.isfinite(values).all():
        raise ValidationError("scores must be finite")
    return values


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricReport:
    """Accuracy, F1 and the four per-class precision/recall figures.

    ``undefined`` names the metrics whose denominator was zero; those are
    reported as 0.
    """

    acc: float
    f1: float
    prec: float
    rec: float
    prec_no: float
    rec_no: float
    counts: ConfusionCounts
    threshold: float | None = None
    undefined: frozenset[str] = frozenset()


def confusion(pred, truth) -> ConfusionCounts:
    """Element-wise confusion counts; pass = positive class."""
    pred_bits = _as_bits(pred)
    truth_bits = _as_bits(truth)
    if pred_bits.shape != truth_bits.shape:
        raise ValidationError(
            f"prediction and truth differ in length: {pred_bits.shape} vs {truth_bits.shape}"
        )
    tp = int(np.sum((pred_bits == 1) & (truth_bits == 1)))
    fp = int(np.sum((pred_bits == 1) & (truth_bits == 0)))
    tn = int(np.sum((pred_bits == 0) & (truth_bits == 0)))
    fn = int(np.sum((pred_bits == 0) & (truth_bits == 1)))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def metric_report(counts: ConfusionCounts, threshold: float | None = None) -> MetricReport:
    undefined: set[str] = set()

    def ratio(name: str, numerator: int, denominator: int) -> float:
        if denominator == 0:
            undefined.add(name)
            return 0.0
        return numerator / denominator

    acc = ratio("acc", counts.tp + counts.tn, counts.total)
    prec = ratio("prec", counts.tp, counts.tp + counts.fp)
    rec = ratio("rec", counts.tp, counts.tp + counts.fn)
    prec_no = ratio("prec_no", counts.tn, counts.tn + counts.fn)
    rec_no = ratio("rec_no", counts.tn, counts.tn + counts.fp)
    if prec + rec > 0:
        f1 = 2.0 * prec * rec / (prec + rec)
    else:
        undefined.add("f1")
        f1 = 0.0
    return MetricReport(
        acc=acc,
        f1=f1,
        prec=prec,
        rec=rec,
        prec_no=prec_no,
        rec_no=rec_no,
        counts=counts,
        threshold=threshold,
        undefined=frozenset(undefined),
    )


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]
    auc: float


def roc_curve(scores, truth) -> RocCurve:
    """ROC points over every unique score plus out-of-band sentinels.

    Points are sorted by FPR; AUC is the trapezoidal integral, which equals
    the probability that a random positive outranks a random negative
    (ties counting one half).
    """
    values = _as_scores(scores)
    bits = _as_bits(truth)
    if values.shape != bits.shape:
        raise ValidationError("scores and truth differ in length")
    positives = int(bits.sum())
    negatives = int(bits.size - positives)
    if positives == 0 or negatives == 0:
        raise ValidationError("ROC requires both classes in the truth vector")

    thresholds = np.concatenate(
        [[ROC_SENTINEL_LOW], np.unique(values), [ROC_SENTINEL_HIGH]]
    )
    # Predicted positive iff score > threshold; count via a descending sort.
    order = np.argsort(-values, kind="stable")
    sorted_scores = values[order]
    sorted_truth = bits[order]
    cum_tp = np.concatenate([[0], np.cumsum(sorted_truth)])
    cum_count = np.arange(bits.size + 1)

    points = []
    for threshold in thresholds:
        # Number of items with score strictly greater than the threshold.
        n_above = int(np.searchsorted(-sorted_scores, -threshold, side="left"))
        tp = int(cum_tp[n_above])
        fp = int(cum_count[n_above] - tp)
        points.append(
            RocPoint(
                threshold=float(threshold),
                tpr=tp / positives,
                fpr=fp / negatives,
            )
        )
    points.sort(key=lambda p: (p.fpr, p.tpr))
    fpr = np.array([p.fpr for p in points])
    tpr = np.array([p.tpr for p in points])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(points=tuple(points), auc=auc)


def youden_threshold(roc: RocCurve) -> tuple[float, float]:
    """Threshold maximizing TPR - FPR; ties resolve to the smallest threshold.

    The returned threshold is clamped into [0, 1]; the clamp can only bind
    for the out-of-band sentinels, which never exceed YI = 0.
    """
    if not roc.points:
        raise ValidationError("ROC curve has no points")
    best_yi = -np.inf
    best_threshold = None
    for point in roc.points:
        yi = point.tpr - point.fpr
        if yi > best_yi or (yi == best_yi and point.threshold < best_threshold):
            best_yi = yi
            best_threshold = point.threshold
    return (min(max(best_threshold, 0.0), 1.0), float(best_yi))


def average_precision(scores, truth) -> float:
    """Step-weighted mean of precision over recall increments.

    Thresholds are the unique scores in descending order; at each one the
    frames scoring at least that value count as predicted passes.
    """
    values = _as_scores(scores)
    bits = _as_bits(truth)
    if values.shape != bits.shape:
        raise ValidationError("scores and truth differ in length")
    positives = int(bits.sum())
    if positives == 0:
        raise ValidationError("average precision requires at least one positive")

    order = np.argsort(-values, kind="stable")
    sorted_scores = values[order]
    sorted_truth = bits[order]
    # Boundaries where the score changes mark the unique thresholds.
    boundary = np.flatnonzero(np.diff(sorted_scores) != 0)
    cut_points = np.concatenate([boundary + 1, [values.size]])
    cum_tp = np.cumsum(sorted_truth)

    ap = 0.0
    prev_recall = 0.0
    for cut in cut_points:
        tp = int(cum_tp[cut - 1])
        precision = tp / cut
        recall = tp / positives
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


@dataclass(frozen=True)
class PrRow:
    threshold: float
    report: MetricReport


def pr_vs_threshold(scores, truth, grid: Iterable[float]) -> list[PrRow]:
    """Precision/recall (and the full report) at each grid threshold."""
    values = _as_scores(scores)
    bits = _as_bits(truth)
    rows = []
    for threshold in grid:
        if not 0.0 <= threshold <= 1.0:
            raise ValidationError(f"threshold {threshold} outside [0, 1]")
        pred = (values > threshold).astype(np.int64)
        rows.append(
            PrRow(threshold=float(threshold), report=metric_report(confusion(pred, bits), threshold))
        )
    return rows


def default_threshold_grid(step: float = 0.05) -> list[float]:
    count = int(round(1.0 / step))
    return [round(i * step, 10) for i in range(count + 1)]


def baseline(kind: str, timeline: FrameTimeline, seed: int | None = None) -> LabelVector:
    """Trivial predictors: seeded fair coin, always-no-pass, always-pass."""
    if kind not in BASELINE_KINDS:
        raise ValidationError(f"unknown baseline {kind!r}; expected one of {BASELINE_KINDS}")
    n = timeline.frame_count
    if kind == BASELINE_MOST_FREQUENT:
        bits = np.zeros(n, dtype=np.uint8)
    elif kind == BASELINE_LEAST_FREQUENT:
        bits = np.ones(n, dtype=np.uint8)
    else:
        rng = np.random.default_rng(seed)
        bits = (rng.random(n) < 0.5).astype(np.uint8)
    return LabelVector(timeline=timeline, bits=bits)


def least_frequent_f1(prevalence: float) -> float:
    """Closed form for the always-pass baseline: F1 = 2p / (1 + p)."""
    if prevalence <= 0:
        return 0.0
    return 2.0 * prevalence / (1.0 + prevalence)


# ---------------------------------------------------------------------------
# CSV emitters


def save_roc_csv(path: Path, roc: RocCurve) -> None:
    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(["threshold", "tpr", "fpr"])
        for point in roc.points:
            writer.writerow(
                [
                    format(point.threshold, ".12g"),
                    format(point.tpr, ".12g"),
                    format(point.fpr, ".12g"),
                ]
            )

    atomic_write_text(Path(path), write)


def save_pr_csv(path: Path, rows: Sequence[PrRow]) -> None:
    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(["threshold", "precision", "recall"])
        for row in rows:
            writer.writerow(
                [
                    format(row.threshold, ".12g"),
                    format(row.report.prec, ".12g"),
                    format(row.report.rec, ".12g"),
                ]
            )

    atomic_write_text(Path(path), write)


REPORT_COLUMNS = ["label", "threshold", "acc", "f1", "prec", "rec", "prec_no", "rec_no"]


def save_report_csv(path: Path, rows: Sequence[tuple[str, MetricReport]]) -> None:
    """Rows shaped like the comparison tables: one labeled report per line."""

    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for label, report in rows:
            threshold = "" if report.threshold is None else format(report.threshold, ".12g")
            writer.writerow(
                [label, threshold]
                + [
                    format(value, ".12g")
                    for value in (
                        report.acc,
                        report.f1,
                        report.prec,
                        report.rec,
                        report.prec_no,
                        report.rec_no,
                    )
                ]
            )

    atomic_write_text(Path(path), write)

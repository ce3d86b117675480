"""Figure rendering for the CLI report paths.

Each emitter writes a PNG next to the delimited output it illustrates:
ROC curve with the calibrated operating point, precision/recall against the
activation threshold, agreement against the matching tolerance, and the
per-epoch training history.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .agreement import AgreementRate
from .metrics import PrRow, RocCurve


def _save(fig, path: Path) -> None:
    # Atomic like every other emitter: render to a temp file, then rename.
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp.png")
    os.close(fd)
    try:
        fig.savefig(tmp_name, dpi=150, bbox_inches="tight", format="png")
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    finally:
        plt.close(fig)


def render_roc(roc: RocCurve, path: Path, youden: tuple[float, float] | None = None) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    fpr = [p.fpr for p in roc.points]
    tpr = [p.tpr for p in roc.points]
    ax.plot(fpr, tpr, color="tab:blue", label=f"AUC = {roc.auc:.3f}")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8, label="chance")
    if youden is not None:
        threshold, yi = youden
        best = max(roc.points, key=lambda p: p.tpr - p.fpr)
        ax.scatter([best.fpr], [best.tpr], color="tab:red", zorder=3,
                   label=f"Youden: th={threshold:.3f}, YI={yi:.3f}")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title("ROC")
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, path)


def render_pr_vs_threshold(rows: Sequence[PrRow], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    thresholds = [r.threshold for r in rows]
    ax.plot(thresholds, [r.report.prec for r in rows], label="precision", color="tab:blue")
    ax.plot(thresholds, [r.report.rec for r in rows], label="recall", color="tab:orange")
    ax.set_xlabel("Activation threshold")
    ax.set_ylabel("Score")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Precision and recall vs threshold")
    ax.legend(fontsize=8)
    _save(fig, path)


def render_agreement_sweep(rows: Sequence[AgreementRate], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot([r.delta_t for r in rows], [r.rate for r in rows], marker="o", color="tab:green")
    ax.set_xlabel("Matching tolerance $\\Delta t$ (s)")
    ax.set_ylabel("Agreement rate")
    ax.set_title("Inter-rater agreement vs tolerance")
    ax.axhline(0.0, color="gray", linewidth=0.8, linestyle="--")
    _save(fig, path)


def render_training_history(history: Sequence, path: Path) -> None:
    fig, ax_loss = plt.subplots(figsize=(5.0, 3.5))
    epochs = [r.epoch for r in history]
    ax_loss.plot(epochs, [r.train_loss for r in history], color="tab:blue", label="train loss")
    ax_loss.set_xlabel("Epoch")
    ax_loss.set_ylabel("Training loss", color="tab:blue")
    ax_ap = ax_loss.twinx()
    ax_ap.plot(epochs, [r.val_ap for r in history], color="tab:orange", label="validation AP")
    ax_ap.set_ylabel("Validation AP", color="tab:orange")
    ax_loss.set_title("Training history")
    _save(fig, path)

"""Training loop: Adam updates, per-epoch validation, best-epoch selection.

Training runs with batch size one over windows of fused vectors, shuffling
the window order each epoch with the seeded RNG. After every epoch the
model is scored on a held-out validation slice (the final 20% of the
training windows, contiguous) by average precision, and the checkpoint of
the epoch with the highest validation AP is returned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .checkpoint import Checkpoint
from .classifier import (
    MODE_TRAIN,
    ClassifierConfig,
    Params,
    backward,
    bce_loss,
    clone_params,
    forward,
    init_parameters,
)
from .core import NumericError, ValidationError
from .ingest import atomic_write_text

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

VALIDATION_FRACTION = 0.2

Window = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class EpochRecord:
    """One training epoch: mean window loss and validation average precision."""

    epoch: int
    train_loss: float
    val_ap: float


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            t=0,
        )

    def copy(self) -> "AdamState":
        return AdamState(m=clone_params(self.m), v=clone_params(self.v), t=self.t)


def adam_step(params: Params, grads: Params, state: AdamState, learning_rate: float) -> None:
    """One in-place Adam update over every parameter."""
    state.t += 1
    correction1 = 1.0 - ADAM_BETA1**state.t
    correction2 = 1.0 - ADAM_BETA2**state.t
    for name, grad in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        params[name] -= learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def split_validation(
    dataset: Sequence[Window], fraction: float = VALIDATION_FRACTION
) -> tuple[list[Window], list[Window]]:
    """Hold out the final fraction of windows, contiguous and unshuffled."""
    windows = list(dataset)
    if len(windows) < 2:
        return windows, list(windows)
    n_val = max(1, int(round(fraction * len(windows))))
    n_val = min(n_val, len(windows) - 1)
    return windows[:-n_val], windows[-n_val:]


def _validation_score(val_set: Sequence[Window], params: Params, config: ClassifierConfig) -> float:
    """Validation AP; falls back to negative BCE when AP is undefined."""
    probs = np.concatenate([forward(w, params, config) for w, _ in val_set])
    labels = np.concatenate([l for _, l in val_set]).astype(np.float64)
    if labels.min() == labels.max():
        return -bce_loss(probs, labels)
    return metrics.average_precision(probs, labels)


def train(dataset: Sequence[Window], config: ClassifierConfig) -> Checkpoint:
    """Train on (window, labels) pairs and return the best-epoch checkpoint.

    Deterministic given ``config.seed``: initialization, shuffling, and
    dropout all draw from one seeded generator.
    """
    windows = [
        (np.asarray(w, dtype=config.dtype), np.asarray(l, dtype=np.float64))
        for w, l in dataset
    ]
    if not windows:
        raise ValidationError("training dataset is empty")
    for w, l in windows:
        if w.ndim != 2 or w.shape[1] != config.input_dim:
            raise ValidationError(
                f"training window has shape {w.shape}, expected (steps, {config.input_dim})"
            )
        if l.shape != (w.shape[0],):
            raise ValidationError("window and labels disagree in length")

    train_set, val_set = split_validation(windows)

    rng = np.random.default_rng(config.seed)
    params = init_parameters(config, rng)
    adam = AdamState.zeros_like(params)

    history: list[EpochRecord] = []
    best: Checkpoint | None = None
    best_score = -np.inf

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_losses = np.empty(len(train_set), dtype=np.float64)
        for step, index in enumerate(order):
            window, labels = train_set[index]
            loss, grads, _ = backward(window, labels, params, config, MODE_TRAIN, rng)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, step {step + 1}"
                )
            adam_step(params, grads, adam, config.learning_rate)
            epoch_losses[step] = loss

        score = _validation_score(val_set, params, config)
        history.append(
            EpochRecord(epoch=epoch, train_loss=float(epoch_losses.mean()), val_ap=float(score))
        )
        if score > best_score:
            best_score = score
            best = Checkpoint(
                config=config,
                params=clone_params(params),
                adam_m=clone_params(adam.m),
                adam_v=clone_params(adam.v),
                adam_t=adam.t,
                epoch=epoch,
                rng_state=rng.bit_generator.state,
                history=list(history),
            )

    assert best is not None
    # The returned checkpoint snapshots the best epoch but carries the full
    # training history for inspection.
    best.history = list(history)
    return best


def save_history_csv(path: Path, history: Sequence[EpochRecord]) -> None:
    def write(handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_loss", "val_ap"])
        for record in history:
            writer.writerow(
                [record.epoch, format(record.train_loss, ".12g"), format(record.val_ap, ".12g")]
            )

    atomic_write_text(Path(path), write)

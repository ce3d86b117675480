"""Bidirectional LSTM sequence classifier: forward pass, loss, exact gradients.

The network reads a window of fused input vectors in both temporal
directions with a single LSTM layer per direction, concatenates the two
hidden sequences, and maps each frame through two dense layers into a
sigmoid probability:

    bi-LSTM (H units per direction) -> dense1 (2H -> H, ReLU, dropout)
                                    -> dense2 (H -> 1, linear) -> sigmoid

ReLU is applied after the first dense layer only; a ReLU before the sigmoid
would forbid probabilities below 0.5.

Gradients are computed analytically with backpropagation through time over
both directions and both dense layers; ``numeric gradient`` tests compare
them against central finite differences.

Parameters are plain numpy arrays in a dict keyed by PARAM_NAMES. Gate
layout inside the fused LSTM matrices is input, forget, candidate, output
(slices of width H in that order).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .core import NumericError, ValidationError

DEFAULT_SEED = 1729
PROB_CLAMP_EPS = 1e-7

PARAM_NAMES = (
    "lstm_fwd_wx",
    "lstm_fwd_wh",
    "lstm_fwd_b",
    "lstm_bwd_wx",
    "lstm_bwd_wh",
    "lstm_bwd_b",
    "dense1_w",
    "dense1_b",
    "dense2_w",
    "dense2_b",
)

MODE_TRAIN = "train"
MODE_EVAL = "eval"


@dataclass(frozen=True)
class ClassifierConfig:
    """Hyper-parameters of the sequence classifier.

    ``input_dim`` is 536 for the fused features+positions channel and 512
    for the features-only ablation. Fixed structural choices (one LSTM
    layer, two dense layers, batch size one, Adam) are kept as fields so a
    checkpoint fully documents the model it holds.
    """

    input_dim: int = 536
    hidden_dim: int = 128
    window_len: int = 25
    learning_rate: float = 1e-4
    dropout_rate: float = 0.5
    max_epochs: int = 10
    seed: int = DEFAULT_SEED
    precision: int = 64
    lstm_layers: int = 1
    dense_layers: int = 2
    batch_size: int = 1
    optimizer: str = "adam"

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValidationError("dimensions must be >= 1")
        if self.window_len < 1:
            raise ValidationError("window_len must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must be in [0, 1)")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.precision not in (32, 64):
            raise ValidationError("precision must be 32 or 64")
        if self.lstm_layers != 1 or self.dense_layers != 2 or self.batch_size != 1:
            raise ValidationError(
                "this classifier is fixed at one LSTM layer, two dense layers, batch size one"
            )
        if self.optimizer != "adam":
            raise ValidationError("only the adam optimizer is supported")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float64 if self.precision == 64 else np.float32)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ClassifierConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown classifier config fields: {sorted(unknown)}")
        return cls(**data)


Params = dict[str, np.ndarray]


def init_parameters(config: ClassifierConfig, rng: np.random.Generator) -> Params:
    """Initialize weights uniformly in +-1/sqrt(H); forget-gate biases at 1."""
    h = config.hidden_dim
    d = config.input_dim
    bound = 1.0 / np.sqrt(h)
    dtype = config.dtype

    def uniform(*shape: int) -> np.ndarray:
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    def lstm_bias() -> np.ndarray:
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = 1.0  # forget gate: remember by default
        return b

    return {
        "lstm_fwd_wx": uniform(d, 4 * h),
        "lstm_fwd_wh": uniform(h, 4 * h),
        "lstm_fwd_b": lstm_bias(),
        "lstm_bwd_wx": uniform(d, 4 * h),
        "lstm_bwd_wh": uniform(h, 4 * h),
        "lstm_bwd_b": lstm_bias(),
        "dense1_w": uniform(2 * h, h),
        "dense1_b": np.zeros(h, dtype=dtype),
        "dense2_w": uniform(h, 1),
        "dense2_b": np.zeros(1, dtype=dtype),
    }


def parameter_shapes(config: ClassifierConfig) -> dict[str, tuple[int, ...]]:
    h = config.hidden_dim
    d = config.input_dim
    return {
        "lstm_fwd_wx": (d, 4 * h),
        "lstm_fwd_wh": (h, 4 * h),
        "lstm_fwd_b": (4 * h,),
        "lstm_bwd_wx": (d, 4 * h),
        "lstm_bwd_wh": (h, 4 * h),
        "lstm_bwd_b": (4 * h,),
        "dense1_w": (2 * h, h),
        "dense1_b": (h,),
        "dense2_w": (h, 1),
        "dense2_b": (1,),
    }


def validate_parameters(params: Params, config: ClassifierConfig) -> None:
    expected = parameter_shapes(config)
    for name, shape in expected.items():
        if name not in params:
            raise ValidationError(f"missing parameter {name}")
        if tuple(params[name].shape) != shape:
            raise ValidationError(
                f"parameter {name} has shape {params[name].shape}, expected {shape}"
            )
        if not np.isfinite(params[name]).all():
            raise ValidationError(f"parameter {name} contains non-finite values")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Piecewise form avoids overflow in exp for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _require_finite(name: str, *arrays: np.ndarray) -> None:
    for array in arrays:
        if not np.isfinite(array).all():
            raise NumericError(f"non-finite value in {name}")


class _LstmCache:
    __slots__ = ("xs", "i", "f", "g", "o", "c", "tanh_c", "h")

    def __init__(self, xs, i, f, g, o, c, tanh_c, h):
        self.xs, self.i, self.f, self.g, self.o = xs, i, f, g, o
        self.c, self.tanh_c, self.h = c, tanh_c, h


def _lstm_forward(
    xs: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray, layer: str
) -> _LstmCache:
    """Run one LSTM direction over (T, D) inputs; returns gate caches."""
    steps = xs.shape[0]
    hidden = wh.shape[0]
    dtype = xs.dtype
    i = np.empty((steps, hidden), dtype=dtype)
    f = np.empty((steps, hidden), dtype=dtype)
    g = np.empty((steps, hidden), dtype=dtype)
    o = np.empty((steps, hidden), dtype=dtype)
    c = np.empty((steps, hidden), dtype=dtype)
    tanh_c = np.empty((steps, hidden), dtype=dtype)
    h = np.empty((steps, hidden), dtype=dtype)

    # All timestep inputs can be projected at once; the recurrent part cannot.
    zx = xs @ wx + b
    h_prev = np.zeros(hidden, dtype=dtype)
    c_prev = np.zeros(hidden, dtype=dtype)
    for t in range(steps):
        z = zx[t] + h_prev @ wh
        i[t] = _sigmoid(z[:hidden])
        f[t] = _sigmoid(z[hidden : 2 * hidden])
        g[t] = np.tanh(z[2 * hidden : 3 * hidden])
        o[t] = _sigmoid(z[3 * hidden :])
        c[t] = f[t] * c_prev + i[t] * g[t]
        tanh_c[t] = np.tanh(c[t])
        h[t] = o[t] * tanh_c[t]
        h_prev = h[t]
        c_prev = c[t]
    _require_finite(layer, h, c)
    return _LstmCache(xs, i, f, g, o, c, tanh_c, h)


def _lstm_backward(
    dh_out: np.ndarray, cache: _LstmCache, wx: np.ndarray, wh: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagate through one direction; returns (dxs, dwx, dwh, db)."""
    steps, hidden = dh_out.shape
    dtype = dh_out.dtype
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hidden, dtype=dtype)
    dxs = np.empty_like(cache.xs)

    dh_next = np.zeros(hidden, dtype=dtype)
    dc_next = np.zeros(hidden, dtype=dtype)
    for t in range(steps - 1, -1, -1):
        dh = dh_out[t] + dh_next
        do = dh * cache.tanh_c[t]
        dc = dh * cache.o[t] * (1.0 - cache.tanh_c[t] ** 2) + dc_next
        c_prev = cache.c[t - 1] if t > 0 else np.zeros(hidden, dtype=dtype)
        h_prev = cache.h[t - 1] if t > 0 else np.zeros(hidden, dtype=dtype)
        di = dc * cache.g[t]
        df = dc * c_prev
        dg = dc * cache.i[t]

        dz = np.empty(4 * hidden, dtype=dtype)
        dz[:hidden] = di * cache.i[t] * (1.0 - cache.i[t])
        dz[hidden : 2 * hidden] = df * cache.f[t] * (1.0 - cache.f[t])
        dz[2 * hidden : 3 * hidden] = dg * (1.0 - cache.g[t] ** 2)
        dz[3 * hidden :] = do * cache.o[t] * (1.0 - cache.o[t])

        dwx += np.outer(cache.xs[t], dz)
        dwh += np.outer(h_prev, dz)
        db += dz
        dxs[t] = wx @ dz
        dh_next = wh @ dz
        dc_next = dc * cache.f[t]
    return dxs, dwx, dwh, db


class _ForwardCache:
    __slots__ = ("fwd", "bwd", "concat", "pre1", "act1", "mask", "dropped", "logits", "probs")

    def __init__(self, fwd, bwd, concat, pre1, act1, mask, dropped, logits, probs):
        self.fwd, self.bwd, self.concat = fwd, bwd, concat
        self.pre1, self.act1, self.mask, self.dropped = pre1, act1, mask, dropped
        self.logits, self.probs = logits, probs


def _forward_cached(
    window: np.ndarray,
    params: Params,
    config: ClassifierConfig,
    mode: str,
    rng: np.random.Generator | None,
) -> _ForwardCache:
    window = np.asarray(window, dtype=config.dtype)
    if window.ndim != 2 or window.shape[0] < 1:
        raise ValidationError("window must be a (steps, input_dim) matrix with steps >= 1")
    if window.shape[1] != config.input_dim:
        raise ValidationError(
            f"window has input dimension {window.shape[1]}, model expects {config.input_dim}"
        )
    if mode not in (MODE_TRAIN, MODE_EVAL):
        raise ValidationError(f"unknown mode {mode!r}")

    fwd = _lstm_forward(
        window, params["lstm_fwd_wx"], params["lstm_fwd_wh"], params["lstm_fwd_b"], "lstm-forward"
    )
    bwd = _lstm_forward(
        window[::-1],
        params["lstm_bwd_wx"],
        params["lstm_bwd_wh"],
        params["lstm_bwd_b"],
        "lstm-backward",
    )
    concat = np.concatenate([fwd.h, bwd.h[::-1]], axis=1)

    pre1 = concat @ params["dense1_w"] + params["dense1_b"]
    act1 = np.maximum(pre1, 0.0)
    _require_finite("dense1", act1)

    if mode == MODE_TRAIN and config.dropout_rate > 0.0:
        if rng is None:
            raise ValidationError("train mode requires an rng for dropout")
        keep = 1.0 - config.dropout_rate
        mask = (rng.random(act1.shape) < keep).astype(config.dtype) / keep
        dropped = act1 * mask
    else:
        mask = None
        dropped = act1

    logits = dropped @ params["dense2_w"] + params["dense2_b"]
    logits = logits[:, 0]
    _require_finite("dense2", logits)
    probs = _sigmoid(logits)
    _require_finite("sigmoid", probs)
    return _ForwardCache(fwd, bwd, concat, pre1, act1, mask, dropped, logits, probs)


def forward(
    window: np.ndarray,
    params: Params,
    config: ClassifierConfig,
    mode: str = MODE_EVAL,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-frame pass probabilities for a window of input vectors.

    Eval mode is deterministic; train mode applies inverted dropout after
    the first dense layer, drawing the mask from ``rng``.
    """
    return _forward_cached(window, params, config, mode, rng).probs


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped at 1e-7."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ValidationError(
            f"probabilities and labels differ in length: {probs.shape} vs {labels.shape}"
        )
    clamped = np.clip(probs, PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS)
    losses = -(labels * np.log(clamped) + (1.0 - labels) * np.log1p(-clamped))
    return float(losses.mean())


def backward(
    window: np.ndarray,
    labels: np.ndarray,
    params: Params,
    config: ClassifierConfig,
    mode: str = MODE_EVAL,
    rng: np.random.Generator | None = None,
) -> tuple[float, Params, np.ndarray]:
    """Loss plus exact gradients for every parameter and for the inputs.

    Returns ``(loss, grads, dinputs)`` where grads mirrors the parameter
    dict and dinputs has the window's shape. In train mode the dropout mask
    is drawn from ``rng`` exactly as ``forward`` would draw it.
    """
    cache = _forward_cached(window, params, config, mode, rng)
    labels = np.asarray(labels, dtype=config.dtype)
    if labels.shape != cache.probs.shape:
        raise ValidationError(
            f"labels length {labels.shape} does not match window length {cache.probs.shape}"
        )
    n = labels.shape[0]
    loss = bce_loss(cache.probs, labels)

    probs = cache.probs.astype(np.float64)
    clamped = np.clip(probs, PROB_CLAMP_EPS, 1.0 - PROB_CLAMP_EPS)
    dprob = (-(labels / clamped) + (1.0 - labels) / (1.0 - clamped)) / n
    # Gradient is zero where the clamp is active.
    dprob = np.where((probs > PROB_CLAMP_EPS) & (probs < 1.0 - PROB_CLAMP_EPS), dprob, 0.0)
    dlogits = (dprob * probs * (1.0 - probs)).astype(config.dtype)

    grads: Params = {}
    ddropped = np.outer(dlogits, params["dense2_w"][:, 0])
    grads["dense2_w"] = (cache.dropped.T @ dlogits)[:, None]
    grads["dense2_b"] = np.array([dlogits.sum()], dtype=config.dtype)

    dact1 = ddropped * cache.mask if cache.mask is not None else ddropped
    dpre1 = dact1 * (cache.pre1 > 0.0)
    grads["dense1_w"] = cache.concat.T @ dpre1
    grads["dense1_b"] = dpre1.sum(axis=0)
    dconcat = dpre1 @ params["dense1_w"].T

    h = config.hidden_dim
    dxs_f, dwx_f, dwh_f, db_f = _lstm_backward(
        dconcat[:, :h], cache.fwd, params["lstm_fwd_wx"], params["lstm_fwd_wh"]
    )
    dxs_b, dwx_b, dwh_b, db_b = _lstm_backward(
        dconcat[:, h:][::-1], cache.bwd, params["lstm_bwd_wx"], params["lstm_bwd_wh"]
    )
    grads["lstm_fwd_wx"], grads["lstm_fwd_wh"], grads["lstm_fwd_b"] = dwx_f, dwh_f, db_f
    grads["lstm_bwd_wx"], grads["lstm_bwd_wh"], grads["lstm_bwd_b"] = dwx_b, dwh_b, db_b

    dinputs = dxs_f + dxs_b[::-1]
    _require_finite("backward", dinputs, *grads.values())
    return loss, grads, dinputs


def clone_params(params: Params) -> Params:
    return {name: value.copy() for name, value in params.items()}


def cast_params(params: Params, config: ClassifierConfig) -> Params:
    return {name: value.astype(config.dtype) for name, value in params.items()}

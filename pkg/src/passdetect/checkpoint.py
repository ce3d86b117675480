"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic          8 bytes  b"PDETCKPT"
    version        uint32
    meta length    uint64
    meta           UTF-8 JSON: config, epoch, adam_t, rng_state, history
    array count    uint32
    per array:
        name length   uint16, then UTF-8 name
        dtype code    uint8   (0 = float64, 1 = float32)
        ndim          uint8
        dims          uint64 each
        data          raw little-endian bytes

Arrays are the model parameters plus the Adam moment estimates under
``m.<name>`` / ``v.<name>``. Loading a checkpoint reproduces forward
outputs bit-identically; a version mismatch or truncated file is rejected.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import ClassifierConfig, Params, validate_parameters
from .core import ValidationError
from .ingest import atomic_write_bytes

MAGIC = b"PDETCKPT"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f8"): 0, np.dtype("<f4"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


@dataclass
class Checkpoint:
    """Model parameters plus everything needed to resume or audit training."""

    config: ClassifierConfig
    params: Params
    adam_m: Params
    adam_v: Params
    adam_t: int
    epoch: int
    rng_state: dict
    history: list = field(default_factory=list)
    version: int = VERSION


def _pack_array(out: io.BytesIO, name: str, array: np.ndarray) -> None:
    data = np.ascontiguousarray(array)
    dtype = data.dtype.newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise ValidationError(f"array {name} has unsupported dtype {data.dtype}")
    encoded = name.encode("utf-8")
    out.write(struct.pack("<H", len(encoded)))
    out.write(encoded)
    out.write(struct.pack("<BB", _DTYPE_CODES[dtype], data.ndim))
    for dim in data.shape:
        out.write(struct.pack("<Q", dim))
    out.write(data.astype(dtype, copy=False).tobytes())


def _history_to_json(history: list) -> list[dict]:
    out = []
    for record in history:
        out.append(
            {
                "epoch": int(record.epoch),
                "train_loss": float(record.train_loss),
                "val_ap": float(record.val_ap),
            }
        )
    return out


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", checkpoint.version))
    meta = {
        "config": json.loads(checkpoint.config.to_json()),
        "epoch": checkpoint.epoch,
        "adam_t": checkpoint.adam_t,
        "rng_state": checkpoint.rng_state,
        "history": _history_to_json(checkpoint.history),
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out.write(struct.pack("<Q", len(meta_bytes)))
    out.write(meta_bytes)

    arrays: list[tuple[str, np.ndarray]] = []
    for name in sorted(checkpoint.params):
        arrays.append((name, checkpoint.params[name]))
    for name in sorted(checkpoint.adam_m):
        arrays.append((f"m.{name}", checkpoint.adam_m[name]))
    for name in sorted(checkpoint.adam_v):
        arrays.append((f"v.{name}", checkpoint.adam_v[name]))
    out.write(struct.pack("<I", len(arrays)))
    for name, array in arrays:
        _pack_array(out, name, array)
    atomic_write_bytes(Path(path), out.getvalue())


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def read(self, count: int) -> bytes:
        if self.offset + count > len(self.data):
            raise ValidationError(f"checkpoint {self.path} is truncated or corrupt")
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"checkpoint {path} does not exist")
    reader = _Reader(path.read_bytes(), path)
    if reader.read(len(MAGIC)) != MAGIC:
        raise ValidationError(f"checkpoint {path}: bad magic bytes")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise ValidationError(
            f"checkpoint {path}: unsupported version {version} (expected {VERSION})"
        )
    (meta_len,) = reader.unpack("<Q")
    try:
        meta = json.loads(reader.read(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"checkpoint {path}: corrupt metadata: {exc}") from exc
    config = ClassifierConfig.from_dict(meta["config"])

    (array_count,) = reader.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(array_count):
        (name_len,) = reader.unpack("<H")
        name = reader.read(name_len).decode("utf-8")
        code, ndim = reader.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise ValidationError(f"checkpoint {path}: unknown dtype code {code}")
        shape = tuple(reader.unpack("<Q")[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        dtype = _CODE_DTYPES[code]
        raw = reader.read(count * dtype.itemsize)
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if reader.offset != len(reader.data):
        raise ValidationError(f"checkpoint {path}: trailing bytes after arrays")

    params = {k: v for k, v in arrays.items() if not k.startswith(("m.", "v."))}
    adam_m = {k[2:]: v for k, v in arrays.items() if k.startswith("m.")}
    adam_v = {k[2:]: v for k, v in arrays.items() if k.startswith("v.")}
    validate_parameters(params, config)

    from .training import EpochRecord  # local import avoids a module cycle

    history = [
        EpochRecord(epoch=r["epoch"], train_loss=r["train_loss"], val_ap=r["val_ap"])
        for r in meta.get("history", [])
    ]
    return Checkpoint(
        config=config,
        params=params,
        adam_m=adam_m,
        adam_v=adam_v,
        adam_t=int(meta["adam_t"]),
        epoch=int(meta["epoch"]),
        rng_state=meta["rng_state"],
        history=history,
        version=version,
    )

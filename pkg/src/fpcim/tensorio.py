"""Tensor file format: one JSON header line, then a raw little-endian
payload.  Trivially writable from any framework's export script.

    {"dtype": "f16", "shape": [128, 64], "layer": "conv3"}\n
    <raw row-major payload>

f16 payloads load and save bit-exactly; f32 payloads convert to
half precision (round to nearest even) on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .fp16 import Fp16Value, decode, encode


class TensorFormatError(ValueError):
    """Malformed header, payload mismatch or unsupported dtype."""


_DTYPE_SIZE = {"f16": 2, "f32": 4}


@dataclass(frozen=True)
class TensorMeta:
    dtype: str
    shape: tuple[int, ...]
    layer: str | None = None

    @property
    def count(self) -> int:
        return math.prod(self.shape)


def load_tensor(path: str | Path) -> tuple[list[Fp16Value], TensorMeta]:
    """Read a tensor file; f16 loads preserve every bit pattern."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    if not header_line.endswith(b"\n"):
        raise TensorFormatError(f"{path}: header line is not newline-terminated")
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"{path}: malformed header: {exc}") from None
    if not isinstance(header, dict):
        raise TensorFormatError(f"{path}: header must be a JSON object")
    dtype = header.get("dtype")
    if dtype not in _DTYPE_SIZE:
        raise TensorFormatError(f"{path}: unknown dtype {dtype!r} (expected f16 or f32)")
    shape_raw = header.get("shape")
    if not isinstance(shape_raw, list) or not all(
        isinstance(d, int) and d >= 0 for d in shape_raw
    ):
        raise TensorFormatError(f"{path}: shape must be a list of non-negative ints")
    meta = TensorMeta(dtype, tuple(shape_raw), header.get("layer"))
    expected = meta.count * _DTYPE_SIZE[dtype]
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: payload length mismatch: expected {expected} bytes, "
            f"found {len(payload)}"
        )
    if dtype == "f16":
        raws = np.frombuffer(payload, dtype="<u2")
        values = [decode(int(r)) for r in raws]
    else:
        floats = np.frombuffer(payload, dtype="<f4")
        values = [decode(encode(float(x))) for x in floats]
    return values, meta


def save_tensor(
    values: Sequence[Fp16Value],
    path: str | Path,
    dtype: str = "f16",
    shape: Sequence[int] | None = None,
    layer: str | None = None,
) -> None:
    """Write a tensor file; the exact inverse of load_tensor for f16."""
    if dtype not in _DTYPE_SIZE:
        raise TensorFormatError(f"unknown dtype {dtype!r} (expected f16 or f32)")
    shape_t = tuple(shape) if shape is not None else (len(values),)
    if math.prod(shape_t) != len(values):
        raise TensorFormatError(
            f"shape {list(shape_t)} holds {math.prod(shape_t)} elements, "
            f"got {len(values)} values"
        )
    header: dict = {"dtype": dtype, "shape": list(shape_t)}
    if layer is not None:
        header["layer"] = layer
    if dtype == "f16":
        payload = np.array([v.raw for v in values], dtype="<u2").tobytes()
    else:
        payload = np.array([v.to_float() for v in values], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        fh.write(payload)

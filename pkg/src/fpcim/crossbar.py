"""Analog crossbar model: pre-aligned binary weight cells and the ADC.

The macro is a 128 x 128 array of single-bit cells.  A logical weight
column occupies w_s physical cell columns (one per significand bit, MSB
first); its mantissas are right-shift aligned offline against the column
maximum exponent.  A compute cycle drives a subset of wordlines with one
input bit each and sums cell hits per physical column.  Signs never
enter the array: input sign XOR weight sign splits every column into a
positive and a negative current stream, subtracted digitally after the
ADC.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .align import SIGNIFICAND_BITS, grid_significand
from .fp16 import Fp16Value, decode

MACRO_ROWS = 128
MACRO_CELLS = 128 * 128
ADC_MUX_RATIO = 16  # physical columns sharing one converter
MAX_STORED_WIDTH = 54  # keeps per-cycle column totals inside int64


class AdcMode(Enum):
    IDEAL = "ideal"
    QUANTIZED = "quantized"


@dataclass(frozen=True)
class AdcModel:
    """Uniform mid-tread converter over [0, full_scale].

    Ideal mode is the identity on integer bitline sums.  Quantized mode
    maps sum -> round(sum * (2**bits - 1) / full_scale), clamped to the
    code range; sums above full_scale clip and are reported.
    """

    bits: int = 6
    full_scale: int = MACRO_ROWS
    mode: AdcMode = AdcMode.IDEAL

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ValueError(f"adc bits={self.bits} must be >= 1")
        if self.full_scale < 1:
            raise ValueError(f"adc full_scale={self.full_scale} must be >= 1")

    @property
    def max_code(self) -> int:
        return (1 << self.bits) - 1

    @property
    def dequant_step(self) -> Fraction:
        """Value of one code in bitline-sum units."""
        if self.mode is AdcMode.IDEAL:
            return Fraction(1)
        return Fraction(self.full_scale, self.max_code)

    def to_json(self) -> dict:
        return {"bits": self.bits, "full_scale": self.full_scale, "mode": self.mode.value}

    @classmethod
    def from_json(cls, obj: dict) -> "AdcModel":
        known = {"bits", "full_scale", "mode"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown adc config keys: {sorted(unknown)}")
        kwargs = {k: obj[k] for k in known & set(obj)}
        if "mode" in kwargs:
            kwargs["mode"] = AdcMode(kwargs["mode"])
        return cls(**kwargs)


def adc_convert(total: int, model: AdcModel) -> tuple[int, Fraction, bool]:
    """(code, dequantized value, clipped) for one non-negative bitline sum."""
    if total < 0:
        raise ValueError(f"bitline sum {total} cannot be negative")
    clipped = total > model.full_scale
    if model.mode is AdcMode.IDEAL:
        return total, Fraction(total), clipped
    k = model.max_code
    code = (2 * total * k + model.full_scale) // (2 * model.full_scale)
    code = min(code, k)
    return code, code * model.dequant_step, clipped


def adc_convert_array(sums: np.ndarray, model: AdcModel) -> tuple[np.ndarray, int]:
    """Vector form of adc_convert: (codes, clip event count)."""
    clips = int(np.count_nonzero(sums > model.full_scale))
    if model.mode is AdcMode.IDEAL:
        return sums, clips
    k = model.max_code
    codes = (2 * sums * k + model.full_scale) // (2 * model.full_scale)
    return np.minimum(codes, k), clips


def prealign_weights(
    column: Sequence[Fp16Value], w_s: int = SIGNIFICAND_BITS
) -> tuple[np.ndarray, int, np.ndarray, np.ndarray]:
    """Align one weight column offline and slice it into binary cells.

    The column shared exponent is the maximum exponent field; each
    significand is right-shifted by its distance from it and truncated to
    w_s stored bits (widths above 11 add zero-padded low bits instead, so
    a wide enough w_s stores the column losslessly).  Returns
    (slice bits [len, w_s] with slice 0 = MSB, shared exponent, signs,
    stored significands).
    """
    if w_s < 1:
        raise ValueError(f"w_s={w_s} must be >= 1")
    if w_s > MAX_STORED_WIDTH:
        # 11 significand bits plus the widest possible alignment shift is
        # 42; anything past MAX_STORED_WIDTH only adds zero cells and
        # would break the datapath's int64 accumulation bounds
        raise ValueError(f"w_s={w_s} exceeds the supported {MAX_STORED_WIDTH} bits")
    count = len(column)
    exps = np.fromiter((w.exponent for w in column), dtype=np.int64, count=count)
    fracs = np.fromiter((w.fraction for w in column), dtype=np.int64, count=count)
    signs = np.fromiter((w.sign for w in column), dtype=np.uint8, count=count)
    if (exps == 31).any():
        bad = int(np.argmax(exps == 31))
        raise ValueError(f"non-finite weight at row {bad}: 0x{column[bad].raw:04X}")
    # field-exponent grid: subnormal fractions double, normals gain the
    # hidden bit (see align.grid_significand)
    sigs = np.where(exps == 0, fracs << 1, fracs + (1 << (SIGNIFICAND_BITS - 1)))
    nonzero = sigs > 0
    e_w = int(exps[nonzero].max()) if nonzero.any() else 0
    shift = (e_w - exps) + (SIGNIFICAND_BITS - w_s)
    stored_arr = np.where(
        shift >= 0,
        sigs >> np.maximum(shift, 0),
        sigs << np.maximum(-shift, 0),
    )
    bit_index = np.arange(w_s - 1, -1, -1, dtype=np.int64)  # slice s holds bit w_s-1-s
    slices = ((stored_arr[:, None] >> bit_index[None, :]) & 1).astype(np.uint8)
    return slices, e_w, signs, stored_arr


@dataclass(eq=False)
class CrossbarTile:
    """Immutable pre-aligned weight array.

    slice_bits is [rows, logical_cols, w_s] single-bit cells, col_sign is
    the per-cell sign plane and col_shared_exp the per-column shared
    exponent.  rows * logical_cols * w_s must fit the 16Kb macro.
    """

    rows: int
    logical_cols: int
    w_s: int
    slice_bits: np.ndarray
    col_shared_exp: tuple[int, ...]
    col_sign: np.ndarray
    stored_sig: np.ndarray
    _streams: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    _net: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.rows * self.logical_cols * self.w_s > MACRO_CELLS:
            raise ValueError(
                f"{self.rows}x{self.logical_cols}x{self.w_s} cells exceed the "
                f"{MACRO_CELLS}-cell macro"
            )
        for arr in (self.slice_bits, self.col_sign, self.stored_sig):
            arr.flags.writeable = False

    @property
    def physical_cols(self) -> int:
        return self.logical_cols * self.w_s

    def reconstruct_significands(self) -> np.ndarray:
        """Stored significands rebuilt from the cell bits alone."""
        weights = 1 << np.arange(self.w_s - 1, -1, -1, dtype=np.int64)
        return (self.slice_bits.astype(np.int64) * weights).sum(axis=2)

    def stream_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell planes split by weight sign, flattened to [rows, cols*w_s].

        float32 carries the bit values exactly (per-cycle counts stay at
        or below the row count, far under 2**24) and keeps the serial
        MAC on the fast matmul path.
        """
        if self._streams is None:
            flat = self.slice_bits.reshape(self.rows, -1).astype(np.float32)
            signs = np.repeat(self.col_sign, self.w_s, axis=1).astype(np.float32)
            self._streams = (flat * (1.0 - signs), flat * signs)
        return self._streams

    def net_matrix(self) -> np.ndarray:
        """Sign-folded cell plane, cell * (1 - 2 * weight sign).

        Equals the positive stream minus the negative one; valid as a
        single product whenever the converter is the identity and no
        clipping can occur.
        """
        if self._net is None:
            flat = self.slice_bits.reshape(self.rows, -1).astype(np.float32)
            signs = np.repeat(self.col_sign, self.w_s, axis=1).astype(np.float32)
            self._net = flat * (1.0 - 2.0 * signs)
        return self._net


def build_tile(
    weight_columns: Sequence[Sequence[Fp16Value]],
    rows: int = MACRO_ROWS,
    w_s: int = SIGNIFICAND_BITS,
) -> CrossbarTile:
    """Pre-align a list of weight columns into one tile."""
    if not weight_columns:
        raise ValueError("a tile needs at least one weight column")
    slices = []
    shared = []
    signs = []
    stored = []
    for c, column in enumerate(weight_columns):
        if len(column) != rows:
            raise ValueError(f"column {c} has {len(column)} weights, expected {rows}")
        s, e_w, sg, st = prealign_weights(column, w_s)
        slices.append(s)
        shared.append(e_w)
        signs.append(sg)
        stored.append(st)
    return CrossbarTile(
        rows=rows,
        logical_cols=len(weight_columns),
        w_s=w_s,
        slice_bits=np.stack(slices, axis=1),
        col_shared_exp=tuple(shared),
        col_sign=np.stack(signs, axis=1),
        stored_sig=np.stack(stored, axis=1),
    )


def lossless_width(weight_columns: Sequence[Sequence[Fp16Value]]) -> int:
    """Smallest w_s that stores every column without truncation."""
    worst = 0
    for column in weight_columns:
        exps = [w.exponent for w in column if not w.is_zero]
        if exps:
            worst = max(worst, max(exps) - min(exps))
    return SIGNIFICAND_BITS + worst


def bitline_cycle(
    tile: CrossbarTile,
    active_rows: Sequence[int],
    input_bits: Sequence[int],
    input_signs: Sequence[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Cell-hit sums for one serial cycle, split into sign streams.

    Returns (positive, negative) int64 arrays of shape
    [logical_cols, w_s]; stream membership per cell is input sign XOR
    weight sign and every entry is bounded by the active-row count.
    """
    if len(active_rows) != len(input_bits) or len(active_rows) != len(input_signs):
        raise ValueError("active_rows, input_bits and input_signs must align")
    pos = np.zeros((tile.logical_cols, tile.w_s), dtype=np.int64)
    neg = np.zeros_like(pos)
    if len(active_rows) == 0:
        return pos, neg
    rows_arr = np.asarray(active_rows, dtype=np.int64)
    bits_arr = np.asarray(input_bits, dtype=np.int64)
    signs_arr = np.asarray(input_signs, dtype=np.int64)
    if rows_arr.min() < 0 or rows_arr.max() >= tile.rows:
        raise ValueError(f"active row outside [0, {tile.rows})")
    cells = tile.slice_bits[rows_arr].astype(np.int64)  # [n, cols, w_s]
    wsign = tile.col_sign[rows_arr].astype(np.int64)[:, :, None]
    stream = wsign ^ signs_arr[:, None, None]
    hits = cells * bits_arr[:, None, None]
    pos = (hits * (1 - stream)).sum(axis=0)
    neg = (hits * stream).sum(axis=0)
    return pos, neg


TILE_MAGIC = "fpcim-tile-v1"


def save_tile(tile: CrossbarTile, path: str | Path) -> None:
    """One JSON header line, then packed cell bits and sign bits."""
    header = {
        "format": TILE_MAGIC,
        "rows": tile.rows,
        "logical_cols": tile.logical_cols,
        "w_s": tile.w_s,
        "col_shared_exp": list(tile.col_shared_exp),
    }
    bits = np.packbits(tile.slice_bits.reshape(-1))
    signs = np.packbits(tile.col_sign.reshape(-1))
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        fh.write(bits.tobytes())
        fh.write(signs.tobytes())


def load_tile(path: str | Path) -> CrossbarTile:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed tile header in {path}: {exc}") from None
    if header.get("format") != TILE_MAGIC:
        raise ValueError(f"{path} is not a tile file")
    rows = int(header["rows"])
    cols = int(header["logical_cols"])
    w_s = int(header["w_s"])
    nbits = rows * cols * w_s
    nbytes_bits = (nbits + 7) // 8
    nsign = rows * cols
    nbytes_sign = (nsign + 7) // 8
    if len(payload) != nbytes_bits + nbytes_sign:
        raise ValueError(
            f"tile payload length mismatch in {path}: expected "
            f"{nbytes_bits + nbytes_sign} bytes, found {len(payload)}"
        )
    bits = np.unpackbits(np.frombuffer(payload[:nbytes_bits], dtype=np.uint8))[:nbits]
    signs = np.unpackbits(np.frombuffer(payload[nbytes_bits:], dtype=np.uint8))[:nsign]
    slice_bits = bits.reshape(rows, cols, w_s).astype(np.uint8)
    col_sign = signs.reshape(rows, cols).astype(np.uint8)
    weights = 1 << np.arange(w_s - 1, -1, -1, dtype=np.int64)
    stored = (slice_bits.astype(np.int64) * weights).sum(axis=2)
    return CrossbarTile(
        rows=rows,
        logical_cols=cols,
        w_s=w_s,
        slice_bits=slice_bits,
        col_shared_exp=tuple(int(e) for e in header["col_shared_exp"]),
        col_sign=col_sign,
        stored_sig=stored,
    )

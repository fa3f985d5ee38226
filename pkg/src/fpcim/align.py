"""Mantissa alignment under the fixed-width and dynamic-width input rules.

Aligned significands live on a power-of-two grid anchored at a shared
exponent.  The fixed-width rule (FWI) keeps the standard 11-bit window
and truncates whatever the right shift pushes out; the dynamic-width rule
(DWI) widens the window by m_d extra low-order bits so a shift of up to
m_d loses nothing.  Shifted-out one bits are counted, never rounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .exponents import ExponentGroup
from .fp16 import FRACTION_BITS, Fp16Value, HIDDEN_BIT

SIGNIFICAND_BITS = FRACTION_BITS + 1  # hidden bit included


class WidthKind(Enum):
    FWI = "fwi"
    DWI = "dwi"


@dataclass(frozen=True)
class WidthPolicy:
    """Serial input width: 11 bits for FWI, 11 + m_d for DWI."""

    kind: WidthKind
    m_d: int = 0

    def __post_init__(self) -> None:
        if self.m_d < 0:
            raise ValueError(f"m_d={self.m_d} must be >= 0")
        if self.kind is WidthKind.FWI and self.m_d != 0:
            raise ValueError("fixed-width input carries no extra width")

    @property
    def total_width(self) -> int:
        return SIGNIFICAND_BITS + self.m_d

    @classmethod
    def fwi(cls) -> "WidthPolicy":
        return cls(WidthKind.FWI)

    @classmethod
    def dwi(cls, m_d: int) -> "WidthPolicy":
        return cls(WidthKind.DWI, m_d)

    def to_json(self) -> dict:
        if self.kind is WidthKind.FWI:
            return {"kind": "fwi"}
        return {"kind": "dwi", "m_d": self.m_d}

    @classmethod
    def from_json(cls, obj: dict) -> "WidthPolicy":
        kind = WidthKind(obj.get("kind", "fwi"))
        if kind is WidthKind.FWI:
            return cls.fwi()
        return cls.dwi(int(obj.get("m_d", 0)))


@dataclass(frozen=True)
class AlignedInput:
    """One input after shifting onto its phase grid.

    significand sits on the serial grid (11 or 11 + m_d bits wide), sign
    is carried separately (the crossbar accumulates sign-magnitude
    streams), and dropped_bits counts the one bits truncated away.
    """

    significand: int
    sign: int
    shift_applied: int
    group_flag: ExponentGroup
    dropped_bits: int


def raw_significand(value: Fp16Value) -> tuple[int, int]:
    """(integer significand, sign) of a finite value.

    Normals get the hidden bit (1024 + fraction), subnormals and zero are
    the bare fraction.
    """
    if not value.is_finite:
        raise ValueError(f"0x{value.raw:04X} has no significand to align")
    if value.exponent == 0:
        return value.fraction, value.sign
    return HIDDEN_BIT | value.fraction, value.sign


def grid_significand(value: Fp16Value) -> tuple[int, int]:
    """(significand on the exponent-field grid, sign) of a finite value.

    Identical to raw_significand for normals.  A subnormal has no hidden
    bit, so relative to the grid addressed by its zero exponent field its
    mantissa sits one position up: the fraction doubles.  Under this
    convention value == significand * 2**(exponent_field - 25) for every
    finite pattern and alignment shifts are plain field differences,
    subnormals included.
    """
    sig, sign = raw_significand(value)
    if value.exponent == 0:
        return sig << 1, sign
    return sig, sign


def align(sig: int, shift: int, policy: WidthPolicy) -> tuple[int, int]:
    """Place an 11-bit significand on the serial grid.

    FWI: significand >> shift, counting the one bits shifted out.
    DWI: shifts are normalized so the largest shift uses no extra left
    placement; a shift s <= m_d becomes sig << (m_d - s) with no loss,
    and any excess beyond m_d truncates like FWI.

    Returns (aligned significand, dropped one-bit count).
    """
    if not 0 <= sig < (1 << SIGNIFICAND_BITS):
        raise ValueError(f"significand {sig} outside [0, {1 << SIGNIFICAND_BITS})")
    if shift < 0:
        raise ValueError(f"negative shift {shift}")
    if policy.kind is WidthKind.FWI:
        dropped = (sig & ((1 << shift) - 1)).bit_count() if shift else 0
        return sig >> shift, dropped
    excess = shift - policy.m_d
    if excess > 0:
        dropped = (sig & ((1 << excess) - 1)).bit_count()
        return sig >> excess, dropped
    return sig << (policy.m_d - shift), 0

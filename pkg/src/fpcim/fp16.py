"""IEEE-754 binary16 codec and an exact dot-product accumulator.

Every finite half-precision value is an integer multiple of 2**-24 (the
minimum subnormal), so a product of two values is an integer multiple of
2**-48 and a whole dot product fits in one wide integer with no rounding
anywhere.  That integer is the reference the rest of this package is
checked against: 4096 terms stay below 100 bits, far inside the headroom
of an arbitrary-precision accumulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence, Union

EXPONENT_BIAS = 15
FRACTION_BITS = 10
HIDDEN_BIT = 1 << FRACTION_BITS
EXPONENT_FIELD_MAX = 31
FRACTION_MASK = (1 << FRACTION_BITS) - 1
CANONICAL_NAN = 0x7E00
POSITIVE_INFINITY = 0x7C00
NEGATIVE_INFINITY = 0xFC00
MAX_FINITE = 65504
# value * 2**VALUE_SCALE_BITS is an integer for every finite pattern
VALUE_SCALE_BITS = 24
DOT_SCALE_EXPONENT = -48
MAX_DOT_LENGTH = 4096

Number = Union[int, float, Fraction]


class FpClass(Enum):
    ZERO = "zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"
    INFINITE = "infinite"
    NAN = "nan"


@dataclass(frozen=True)
class Fp16Value:
    """One binary16 pattern split into sign, biased exponent and fraction."""

    sign: int
    exponent: int
    fraction: int
    raw: int

    @property
    def fp_class(self) -> FpClass:
        if self.exponent == EXPONENT_FIELD_MAX:
            return FpClass.NAN if self.fraction else FpClass.INFINITE
        if self.exponent == 0:
            return FpClass.SUBNORMAL if self.fraction else FpClass.ZERO
        return FpClass.NORMAL

    @property
    def is_finite(self) -> bool:
        return self.exponent != EXPONENT_FIELD_MAX

    @property
    def is_zero(self) -> bool:
        return self.exponent == 0 and self.fraction == 0

    def significand(self) -> int:
        """Stored significand, hidden bit included for normal values."""
        if self.exponent == 0:
            return self.fraction
        return HIDDEN_BIT | self.fraction

    def scaled24(self) -> int:
        """value * 2**24 as an exact signed integer.  Finite values only."""
        if not self.is_finite:
            raise ValueError(f"0x{self.raw:04X} is not finite")
        if self.exponent == 0:
            mag = self.fraction
        else:
            mag = (HIDDEN_BIT | self.fraction) << (self.exponent - 1)
        return -mag if self.sign else mag

    def exact_value(self) -> Fraction:
        return Fraction(self.scaled24(), 1 << VALUE_SCALE_BITS)

    def to_float(self) -> float:
        if self.fp_class is FpClass.NAN:
            return math.nan
        if self.fp_class is FpClass.INFINITE:
            return -math.inf if self.sign else math.inf
        exp = (self.exponent or 1) - EXPONENT_BIAS - FRACTION_BITS
        mag = math.ldexp(self.significand(), exp)
        return -mag if self.sign else mag

    def __repr__(self) -> str:
        return f"Fp16Value(0x{self.raw:04X} = {self.to_float()!r})"


def decode(raw: int) -> Fp16Value:
    """Split a 16-bit pattern into fields.  Total over all 65536 patterns."""
    raw &= 0xFFFF
    return Fp16Value(
        sign=raw >> 15,
        exponent=(raw >> 10) & 0x1F,
        fraction=raw & FRACTION_MASK,
        raw=raw,
    )


def _cmp_pow2(num: int, den: int, e: int) -> int:
    """Compare num/den against 2**e without leaving integer arithmetic."""
    lhs = num if e >= 0 else num << -e
    rhs = den << e if e >= 0 else den
    return (lhs > rhs) - (lhs < rhs)


def encode(value: Number) -> int:
    """Round an exact value to the nearest binary16 pattern, ties to even.

    Accepts int, float and Fraction; floats contribute their exact binary
    value.  Magnitudes that round past the largest finite value become
    signed infinity, magnitudes below half the minimum subnormal become
    signed zero, and NaN input maps to the canonical quiet NaN 0x7E00.
    """
    if isinstance(value, float):
        if math.isnan(value):
            return CANONICAL_NAN
        if math.isinf(value):
            return NEGATIVE_INFINITY if value < 0 else POSITIVE_INFINITY
        sign = 1 if math.copysign(1.0, value) < 0 else 0
        mag = Fraction(-value if sign else value)
    elif isinstance(value, (int, Fraction)):
        sign = 1 if value < 0 else 0
        mag = Fraction(-value if sign else value)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")
    if mag == 0:
        return sign << 15

    num, den = mag.numerator, mag.denominator
    exp = num.bit_length() - den.bit_length()
    if _cmp_pow2(num, den, exp + 1) >= 0:
        exp += 1
    elif _cmp_pow2(num, den, exp) < 0:
        exp -= 1
    # LSB position of the rounding grid; subnormals bottom out at 2**-24
    lsb = max(exp - FRACTION_BITS, -VALUE_SCALE_BITS)
    if lsb <= 0:
        n, d = num << -lsb, den
    else:
        n, d = num, den << lsb
    m, rem = divmod(n, d)
    if 2 * rem > d or (2 * rem == d and m & 1):
        m += 1
    if m == 0:
        return sign << 15
    if lsb == -VALUE_SCALE_BITS:
        if m <= FRACTION_MASK:
            return (sign << 15) | m
        exp = 1 - EXPONENT_BIAS  # rounded up into the normal range
    if m == 2 * HIDDEN_BIT:  # carry into the next binade
        m = HIDDEN_BIT
        exp += 1
    biased = exp + EXPONENT_BIAS
    if biased >= EXPONENT_FIELD_MAX:
        return (sign << 15) | POSITIVE_INFINITY
    return (sign << 15) | (biased << 10) | (m - HIDDEN_BIT)


def from_float(value: float) -> Fp16Value:
    return decode(encode(value))


@dataclass(frozen=True)
class ExactAccumulator:
    """Dot product held exactly as scaled_sum * 2**scale_exponent."""

    scaled_sum: int
    scale_exponent: int = DOT_SCALE_EXPONENT

    def value(self) -> Fraction:
        if self.scale_exponent >= 0:
            return Fraction(self.scaled_sum << self.scale_exponent)
        return Fraction(self.scaled_sum, 1 << -self.scale_exponent)

    def to_fp16(self) -> Fp16Value:
        return decode(encode(self.value()))


def exact_dot(inputs: Sequence[Fp16Value], weights: Sequence[Fp16Value]) -> ExactAccumulator:
    """Exact sum of products at scale 2**-48.

    Rejects non-finite operands and length mismatches with a diagnostic;
    an empty pair of lists is the empty sum.
    """
    if len(inputs) != len(weights):
        raise ValueError(
            f"length mismatch: {len(inputs)} inputs vs {len(weights)} weights"
        )
    if len(inputs) > MAX_DOT_LENGTH:
        raise ValueError(f"dot length {len(inputs)} exceeds {MAX_DOT_LENGTH}")
    total = 0
    for i, (a, b) in enumerate(zip(inputs, weights)):
        if not a.is_finite:
            raise ValueError(f"non-finite input at index {i}: 0x{a.raw:04X}")
        if not b.is_finite:
            raise ValueError(f"non-finite weight at index {i}: 0x{b.raw:04X}")
        total += a.scaled24() * b.scaled24()
    return ExactAccumulator(total)

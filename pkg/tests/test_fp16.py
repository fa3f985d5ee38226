"""Codec and exact-accumulator tests.

The reference conversions here are built from the format definition
directly (field formulas, brute-force nearest search), independent of
the code under test.
"""

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpcim import ExactAccumulator, Fp16Value, FpClass, decode, encode, exact_dot, from_float
from fpcim.fp16 import CANONICAL_NAN, MAX_FINITE, POSITIVE_INFINITY


def reference_value(raw: int) -> Fraction | None:
    """Field formula applied literally; None for non-finite patterns."""
    sign = -1 if raw >> 15 else 1
    e = (raw >> 10) & 0x1F
    f = raw & 0x3FF
    if e == 31:
        return None
    if e == 0:
        return sign * Fraction(f, 1024) * Fraction(2) ** -14
    return sign * (1 + Fraction(f, 1024)) * Fraction(2) ** (e - 15)


def reference_table():
    table = {}
    for raw in range(65536):
        v = reference_value(raw)
        if v is not None:
            table[raw] = v
    return table


REFERENCE = reference_table()
# positive finite values ascending, one raw per value (drops -0.0 et al.)
POSITIVE_GRID = sorted(
    (v, raw) for raw, v in REFERENCE.items() if raw < 0x8000
)


def brute_force_encode(value: Fraction) -> int:
    """Nearest representable by exhaustive search, ties to the pattern
    with an even fraction; the virtual next binade above the largest
    finite value rounds to infinity."""
    if value == 0:
        return 0x0000
    sign = 0x8000 if value < 0 else 0
    mag = abs(value)
    top = Fraction(MAX_FINITE)
    if mag > top:
        # candidates: largest finite (odd fraction) and 2**16 (even)
        if mag - top >= Fraction(65536) - mag:
            return sign | POSITIVE_INFINITY
        return sign | 0x7BFF
    best = None
    for v, raw in POSITIVE_GRID:
        d = abs(mag - v)
        if best is None or d < best[0]:
            best = (d, raw)
        elif d == best[0] and not raw & 1:
            best = (d, raw)
        if v > mag and d > best[0]:
            break
    return sign | best[1]


class TestDecode:
    def test_one(self):
        v = decode(0x3C00)
        assert (v.sign, v.exponent, v.fraction) == (0, 15, 0)
        assert v.exact_value() == 1

    def test_zero(self):
        v = decode(0x0000)
        assert (v.sign, v.exponent, v.fraction) == (0, 0, 0)
        assert v.fp_class is FpClass.ZERO

    def test_negative_five_matches_reference_table(self):
        # find -5.0 in the independently built table, check the fields
        raws = [raw for raw, val in REFERENCE.items() if val == -5]
        assert raws == [0xC500]
        v = decode(0xC500)
        assert (v.sign, v.exponent, v.fraction) == (1, 17, 256)

    @pytest.mark.parametrize(
        "raw,cls",
        [
            (0x7C00, FpClass.INFINITE),
            (0xFC00, FpClass.INFINITE),
            (0x7C01, FpClass.NAN),
            (0x7E00, FpClass.NAN),
            (0x0001, FpClass.SUBNORMAL),
            (0x8000, FpClass.ZERO),
            (0x0400, FpClass.NORMAL),
        ],
    )
    def test_classes(self, raw, cls):
        assert decode(raw).fp_class is cls

    def test_exact_value_matches_reference_everywhere(self):
        for raw, expected in REFERENCE.items():
            assert decode(raw).exact_value() == expected


class TestEncode:
    def test_one(self):
        assert encode(1.0) == 0x3C00

    def test_overflow_to_infinity(self):
        assert encode(65520) == POSITIVE_INFINITY
        assert brute_force_encode(Fraction(65520)) == POSITIVE_INFINITY

    def test_just_under_overflow_rounds_down(self):
        assert encode(Fraction(65520) - Fraction(1, 4)) == 0x7BFF

    def test_tie_to_even_underflow(self):
        assert encode(Fraction(1, 1 << 25)) == 0x0000
        assert brute_force_encode(Fraction(1, 1 << 25)) == 0x0000

    def test_infinities_and_nan(self):
        assert encode(math.inf) == POSITIVE_INFINITY
        assert encode(-math.inf) == 0xFC00
        assert encode(math.nan) == CANONICAL_NAN

    def test_signed_zero(self):
        assert encode(-0.0) == 0x8000
        assert encode(0.0) == 0x0000

    def test_against_brute_force_oracle(self, rng):
        for _ in range(300):
            num = rng.randrange(-(1 << 40), 1 << 40)
            den = 1 << rng.randrange(0, 36)
            value = Fraction(num, den)
            assert encode(value) == brute_force_encode(value), value

    def test_midpoints_tie_to_even(self):
        # midpoint between consecutive normals rounds to the even fraction
        lo, hi = decode(0x3C00), decode(0x3C01)
        mid = (lo.exact_value() + hi.exact_value()) / 2
        assert encode(mid) == 0x3C00
        lo, hi = decode(0x3C01), decode(0x3C02)
        mid = (lo.exact_value() + hi.exact_value()) / 2
        assert encode(mid) == 0x3C02


class TestRoundtrip:
    def test_exhaustive_all_patterns(self):
        for raw in range(65536):
            v = decode(raw)
            back = encode(v.to_float())
            if v.fp_class is FpClass.NAN:
                assert back == CANONICAL_NAN
            else:
                assert back == raw, f"0x{raw:04X}"
            assert decode(back).fp_class is v.fp_class

    def test_exact_value_roundtrip_finite(self):
        for raw in list(range(0, 65536, 257)) + [0x7BFF, 0x0001, 0x03FF]:
            v = decode(raw)
            if v.is_finite and not v.is_zero:
                assert encode(v.exact_value()) == raw


class TestExactDot:
    def test_single_product(self):
        acc = exact_dot([from_float(1.0)], [from_float(2.0)])
        assert acc.value() == 2
        assert acc.to_fp16().raw == 0x4000

    def test_empty(self):
        acc = exact_dot([], [])
        assert acc.scaled_sum == 0
        assert acc.scale_exponent == -48

    def test_min_subnormal_product_is_one_unit(self):
        acc = exact_dot([decode(0x0001)], [decode(0x0001)])
        assert acc.scaled_sum == 1

    def test_against_naive_fraction_sum(self, rng):
        # independent陪 term-by-term Fraction arithmetic from the field formula
        for _ in range(128):
            n = rng.randrange(1, 33)
            a = [random_pair(rng) for _ in range(n)]
            b = [random_pair(rng) for _ in range(n)]
            acc = exact_dot([x for x, _ in a], [x for x, _ in b])
            expected = sum(
                (va * vb for (_, va), (_, vb) in zip(a, b)), Fraction(0)
            )
            assert acc.value() == expected

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length mismatch"):
            exact_dot([from_float(1.0)], [])

    def test_nonfinite_rejected_with_index(self):
        good = from_float(1.0)
        bad = decode(0x7C00)
        with pytest.raises(ValueError, match="index 1"):
            exact_dot([good, bad], [good, good])

    def test_length_cap(self):
        vals = [from_float(0.0)] * 4097
        with pytest.raises(ValueError, match="4096"):
            exact_dot(vals, vals)

    @given(st.lists(st.integers(0, 65535), min_size=1, max_size=24))
    def test_order_independence(self, raws):
        vals = [decode(r) for r in raws if decode(r).is_finite]
        if not vals:
            return
        weights = list(reversed(vals))
        forward = exact_dot(vals, weights).scaled_sum
        perm = list(range(len(vals)))
        random.Random(1).shuffle(perm)
        shuffled = exact_dot([vals[i] for i in perm], [weights[i] for i in perm])
        assert shuffled.scaled_sum == forward


def random_pair(rng) -> tuple[Fp16Value, Fraction]:
    while True:
        raw = rng.getrandbits(16)
        ref = REFERENCE.get(raw)
        if ref is not None:
            return decode(raw), ref


class TestAccumulator:
    def test_value_scale(self):
        acc = ExactAccumulator(1 << 48)
        assert acc.value() == 1

    def test_headroom_bound(self):
        # 4096 worst-case magnitude products stay under 100 bits
        worst = decode(0x7BFF)
        acc = exact_dot([worst] * 4096, [worst] * 4096)
        assert abs(acc.scaled_sum).bit_length() < 100

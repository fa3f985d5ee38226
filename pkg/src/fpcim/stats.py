"""Exponent-distribution statistics, synthetic activations, error summaries.

Real activation tensors cluster their exponents in a narrow center band
with a second lump at and around zero.  The synthetic generator here
reproduces that shape
so strategy comparisons can run at desk scale; its parameters are
artifact defaults, not measurements, and any real tensor dump can be
profiled and simulated instead.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from statistics import median
from typing import Iterable, Sequence, Union

from .exponents import ExponentGroup, classify_exponent
from .fp16 import ExactAccumulator, Fp16Value, decode

EXPONENT_BINS = 32
_CENTER_RANGE = range(4, 24)
_NEAR_ZERO_RANGE = range(0, 4)
# biased field 31 encodes infinities and NaNs; finite near-max stops at 30
_NEAR_MAX_FINITE_RANGE = range(24, 31)


@dataclass(frozen=True)
class ExponentHistogram:
    """Counts per biased exponent, zeros and non-finite values apart."""

    counts: tuple[int, ...]
    zero_count: int
    nonfinite_count: int

    @property
    def total(self) -> int:
        return sum(self.counts) + self.zero_count + self.nonfinite_count

    @property
    def nonzero_finite(self) -> int:
        return sum(self.counts)

    def group_fractions(self) -> dict[ExponentGroup, float]:
        """Band shares over the non-zero finite population."""
        denom = self.nonzero_finite
        shares = {g: 0.0 for g in ExponentGroup}
        if denom == 0:
            return shares
        for e, count in enumerate(self.counts):
            if count:
                shares[classify_exponent(e)] += count / denom
        return shares

    def to_json(self) -> dict:
        shares = self.group_fractions()
        return {
            "counts": list(self.counts),
            "zero_count": self.zero_count,
            "nonfinite_count": self.nonfinite_count,
            "total": self.total,
            "group_fractions": {g.value: shares[g] for g in ExponentGroup},
        }


def histogram(values: Iterable[Fp16Value]) -> ExponentHistogram:
    """Exact per-exponent counts; zeros and non-finite values are tallied
    separately and never enter the band fractions."""
    counts = [0] * EXPONENT_BINS
    zeros = 0
    nonfinite = 0
    for v in values:
        if not v.is_finite:
            nonfinite += 1
        elif v.is_zero:
            zeros += 1
        else:
            counts[v.exponent] += 1
    return ExponentHistogram(tuple(counts), zeros, nonfinite)


@dataclass(frozen=True)
class BimodalSpec:
    """Mixture over exact zeros, the three exponent bands and signs.

    Center mass is a discretized bell over biased exponents [4, 23];
    near-zero mass is uniform over [0, 3] (field 0 draws a non-zero
    fraction), near-max mass uniform over the finite fields [24, 30].
    Whatever the four masses leave over goes to the center band.
    """

    p_zero: float = 0.35
    p_nearzero: float = 0.10
    center_mean: float = 15.0
    center_spread: float = 4.0
    p_nearmax: float = 0.0002
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_zero", "p_nearzero", "p_nearmax"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        if self.p_zero + self.p_nearzero + self.p_nearmax > 1.0 + 1e-12:
            raise ValueError("mixture masses exceed 1")
        if self.center_spread <= 0:
            raise ValueError(f"center_spread={self.center_spread} must be positive")

    @property
    def p_center(self) -> float:
        return max(0.0, 1.0 - self.p_zero - self.p_nearzero - self.p_nearmax)

    def to_json(self) -> dict:
        return {
            "p_zero": self.p_zero,
            "p_nearzero": self.p_nearzero,
            "center_mean": self.center_mean,
            "center_spread": self.center_spread,
            "p_nearmax": self.p_nearmax,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BimodalSpec":
        known = {"p_zero", "p_nearzero", "center_mean", "center_spread", "p_nearmax", "seed"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**{k: obj[k] for k in known & set(obj)})


def _center_cumulative(spec: BimodalSpec) -> tuple[list[float], list[int]]:
    exps = list(_CENTER_RANGE)
    weights = [
        math.exp(-0.5 * ((e - spec.center_mean) / spec.center_spread) ** 2)
        for e in exps
    ]
    total = sum(weights)
    cumulative = []
    running = 0.0
    for w in weights:
        running += w / total
        cumulative.append(running)
    cumulative[-1] = 1.0
    return cumulative, exps


def sample_bimodal(spec: BimodalSpec, n: int) -> list[Fp16Value]:
    """Deterministic sample of n values for a fixed spec and seed."""
    if n < 0:
        raise ValueError(f"sample size {n} must be >= 0")
    rng = random.Random(spec.seed)
    cumulative, center_exps = _center_cumulative(spec)
    t_zero = spec.p_zero
    t_nearzero = t_zero + spec.p_nearzero
    t_nearmax = t_nearzero + spec.p_nearmax
    out = []
    for _ in range(n):
        u = rng.random()
        if u < t_zero:
            out.append(decode(0x0000))
            continue
        if u < t_nearzero:
            e = rng.randrange(_NEAR_ZERO_RANGE.start, _NEAR_ZERO_RANGE.stop)
            frac = rng.randrange(1, 1024) if e == 0 else rng.randrange(1024)
        elif u < t_nearmax:
            e = rng.randrange(_NEAR_MAX_FINITE_RANGE.start, _NEAR_MAX_FINITE_RANGE.stop)
            frac = rng.randrange(1024)
        else:
            e = center_exps[bisect_left(cumulative, rng.random())]
            frac = rng.randrange(1024)
        sign = rng.randrange(2)
        out.append(decode((sign << 15) | (e << 10) | frac))
    return out


Oracle = Union[ExactAccumulator, Fraction, int]


def _oracle_value(item: Oracle) -> Fraction:
    if isinstance(item, ExactAccumulator):
        return item.value()
    return Fraction(item)


@dataclass(frozen=True)
class ErrorReport:
    """Per-trial errors against an exact reference plus their summary.

    Relative errors are normalized by the reference magnitude; trials
    with a zero reference keep their absolute error but are counted out
    of the relative aggregates.  A saturated (infinite) output shows up
    as an infinite error.
    """

    abs_errors: tuple[float, ...]
    rel_errors: tuple[float, ...]
    zero_oracle_count: int
    dropped_bits: int | None = None

    @property
    def n_trials(self) -> int:
        return len(self.abs_errors)

    @property
    def abs_median(self) -> float:
        return median(self.abs_errors) if self.abs_errors else 0.0

    @property
    def abs_mean(self) -> float:
        return sum(self.abs_errors) / len(self.abs_errors) if self.abs_errors else 0.0

    @property
    def abs_p99(self) -> float:
        return _nearest_rank(self.abs_errors, 0.99)

    @property
    def rel_median(self) -> float | None:
        return median(self.rel_errors) if self.rel_errors else None

    @property
    def rel_mean(self) -> float | None:
        return sum(self.rel_errors) / len(self.rel_errors) if self.rel_errors else None

    @property
    def rel_p99(self) -> float | None:
        return _nearest_rank(self.rel_errors, 0.99) if self.rel_errors else None

    def to_json(self) -> dict:
        return {
            "trials": self.n_trials,
            "abs_median": self.abs_median,
            "abs_mean": self.abs_mean,
            "abs_p99": self.abs_p99,
            "rel_median": self.rel_median,
            "rel_mean": self.rel_mean,
            "rel_p99": self.rel_p99,
            "zero_oracle_trials": self.zero_oracle_count,
            "dropped_bits": self.dropped_bits,
        }


def _nearest_rank(values: Sequence[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


def error_stats(
    outputs: Sequence[Fp16Value],
    oracle: Sequence[Oracle],
    dropped_bits: int | None = None,
) -> ErrorReport:
    """Elementwise error of rounded outputs against exact references."""
    if len(outputs) != len(oracle):
        raise ValueError(
            f"length mismatch: {len(outputs)} outputs vs {len(oracle)} references"
        )
    abs_errors = []
    rel_errors = []
    zero_oracle = 0
    for out, ref in zip(outputs, oracle):
        exact = _oracle_value(ref)
        err = abs(out.exact_value() - exact) if out.is_finite else None
        abs_errors.append(float(err) if err is not None else math.inf)
        if exact == 0:
            zero_oracle += 1
        else:
            rel_errors.append(float(err / abs(exact)) if err is not None else math.inf)
    return ErrorReport(tuple(abs_errors), tuple(rel_errors), zero_oracle, dropped_bits)

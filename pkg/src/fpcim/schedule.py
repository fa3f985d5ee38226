"""Wordline activation plans and bit-serial cycle accounting.

Two plan shapes exist.  The conventional in-order plan drives every
non-zero wordline in one phase; with dynamic-width input that phase
streams 11 + (exponent spread) bits.  The grouped plan gives each
non-empty exponent band its own phase (near-maximum first, then center,
then near-zero) of 11 serial cycles under fixed-width input, so the
total never exceeds 33 cycles regardless of spread.  Rows holding an
exact zero are never activated; the near-zero band can optionally be
skipped wholesale.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .align import SIGNIFICAND_BITS, WidthKind, WidthPolicy
from .exponents import ExponentGroup, SeaConfig, classify_exponent
from .fp16 import Fp16Value

PHASE_ORDER = (ExponentGroup.NEAR_MAX, ExponentGroup.CENTER, ExponentGroup.NEAR_ZERO)
ALL_ROWS_TAG = "all"


@dataclass(frozen=True)
class Phase:
    tag: str
    rows: tuple[int, ...]
    cycles: int


@dataclass(frozen=True)
class Schedule:
    phases: tuple[Phase, ...]
    skipped_rows: tuple[int, ...]
    zero_skip: bool = True
    skip_nearzero: bool = False

    @property
    def input_cycles(self) -> int:
        return sum(p.cycles for p in self.phases)

    def to_json(self) -> dict:
        return {
            "phases": [
                {"tag": p.tag, "rows": list(p.rows), "cycles": p.cycles}
                for p in self.phases
            ],
            "skipped_rows": list(self.skipped_rows),
            "zero_skip": self.zero_skip,
            "skip_nearzero": self.skip_nearzero,
            "input_cycles": self.input_cycles,
        }


@dataclass(frozen=True)
class CycleReport:
    """Input-cycle accounting for one macro evaluation."""

    input_cycles: int
    phase_count: int
    skipped_rows: int
    adc_cycles: int = 0
    comparison_depth: int = 0
    baseline: str | None = None
    reduction_vs_baseline: float | None = None

    def with_baseline(self, label: str, reduction: float) -> "CycleReport":
        return replace(self, baseline=label, reduction_vs_baseline=reduction)

    def to_json(self) -> dict:
        return {
            "input_cycles": self.input_cycles,
            "phases": self.phase_count,
            "skipped_rows": self.skipped_rows,
            "adc_cycles": self.adc_cycles,
            "comparison_depth": self.comparison_depth,
            "baseline": self.baseline,
            "reduction_vs_baseline": self.reduction_vs_baseline,
        }


def _check_finite(inputs: Sequence[Fp16Value]) -> None:
    for i, v in enumerate(inputs):
        if not v.is_finite:
            raise ValueError(f"non-finite input at row {i}: 0x{v.raw:04X}")


def _phase_cycles(policy: WidthPolicy, exponents: Sequence[int]) -> int:
    """Serial cycles for one phase: 11 fixed, or 11 plus the exponent
    spread of the phase's non-zero rows under dynamic width."""
    if policy.kind is WidthKind.FWI or not exponents:
        return SIGNIFICAND_BITS
    return SIGNIFICAND_BITS + (max(exponents) - min(exponents))


def build_inorder_schedule(
    exponents: Sequence[int],
    zero_flags: Sequence[bool],
    policy: WidthPolicy,
    zero_skip: bool = True,
    spread_override: int | None = None,
) -> Schedule:
    """Single-phase plan from already decoded rows."""
    nonzero = [i for i, z in enumerate(zero_flags) if not z]
    zeros = tuple(i for i, z in enumerate(zero_flags) if z)
    active = nonzero if zero_skip else list(range(len(zero_flags)))
    if not active:
        return Schedule((), zeros, zero_skip=zero_skip)
    exps = [exponents[i] for i in nonzero]
    if spread_override is not None and policy.kind is WidthKind.DWI and exps:
        cycles = SIGNIFICAND_BITS + max(spread_override, 0)
    else:
        cycles = _phase_cycles(policy, exps)
    phase = Phase(ALL_ROWS_TAG, tuple(active), cycles)
    return Schedule((phase,), zeros if zero_skip else (), zero_skip=zero_skip)


def schedule_inorder(
    inputs: Sequence[Fp16Value],
    policy: WidthPolicy,
    zero_skip: bool = True,
    spread_override: int | None = None,
) -> Schedule:
    """Single-phase plan over every non-zero wordline.

    spread_override substitutes an externally chosen exponent spread for
    the dynamic-width cycle count (used when the width is provisioned
    per tensor instead of per call).
    """
    _check_finite(inputs)
    return build_inorder_schedule(
        [v.exponent for v in inputs],
        [v.is_zero for v in inputs],
        policy,
        zero_skip=zero_skip,
        spread_override=spread_override,
    )


def build_dwa_schedule(
    exponents: Sequence[int],
    zero_flags: Sequence[bool],
    group_ids: Sequence[int],
    policy: WidthPolicy,
    skip_nearzero: bool = False,
    zero_skip: bool = True,
) -> Schedule:
    """Per-band plan from already classified rows.

    group_ids carry the two-bit band flags (0 near-zero, 1 center,
    2 near-max); the datapath keeps its row metadata in that form.
    """
    members: list[list[int]] = [[], [], []]
    skipped: list[int] = []
    nz_flag = ExponentGroup.NEAR_ZERO.flag
    for i, gid in enumerate(group_ids):
        if zero_flags[i] and zero_skip:
            skipped.append(i)
            continue
        if skip_nearzero and gid == nz_flag:
            skipped.append(i)
            continue
        members[gid].append(i)
    phases = []
    for group in PHASE_ORDER:
        rows = members[group.flag]
        if not rows:
            continue
        exps = [exponents[i] for i in rows if not zero_flags[i]]
        phases.append(Phase(group.value, tuple(rows), _phase_cycles(policy, exps)))
    return Schedule(
        tuple(phases), tuple(skipped), zero_skip=zero_skip, skip_nearzero=skip_nearzero
    )


def schedule_dwa(
    inputs: Sequence[Fp16Value],
    config: SeaConfig,
    policy: WidthPolicy,
    skip_nearzero: bool = False,
    zero_skip: bool = True,
) -> Schedule:
    """Per-band plan: one phase per non-empty, non-skipped exponent band.

    Every scheduled input carries its two-bit band flag (recoverable from
    the phase tag); config only matters for flag semantics, the cycle
    count per phase is width-policy driven.
    """
    _check_finite(inputs)
    return build_dwa_schedule(
        [v.exponent for v in inputs],
        [v.is_zero for v in inputs],
        [classify_exponent(v.exponent).flag for v in inputs],
        policy,
        skip_nearzero=skip_nearzero,
        zero_skip=zero_skip,
    )


def compare_latency(candidate: CycleReport, baseline: CycleReport) -> float:
    """Fractional cycle reduction of candidate relative to baseline."""
    if baseline.input_cycles <= 0:
        raise ValueError("baseline with zero input cycles cannot anchor a reduction")
    return (baseline.input_cycles - candidate.input_cycles) / baseline.input_cycles

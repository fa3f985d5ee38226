"""Full macro datapath: preprocess, serial crossbar MAC, merge, normalize.

One evaluation walks the stages of the hardware loop.  Inputs are
classified and shifted onto their phase grid, a wordline schedule is
built, and each phase streams its aligned significands MSB first, one
bit per serial cycle.  Every cycle the active wordlines drive the array,
the per-column hit counts pass through the ADC, and a shift-and-add
stage weights the result by 2**(bit position) on both the serial and
the weight-slice axes.  Phase accumulators carry their own power-of-two
scale (input shared exponent plus column weight exponent); after the
last phase the per-column partials are merged exactly in a common frame
and rounded once, to nearest even, into a binary16 output.

Inter-band exponent distance is settled digitally in that merge, never
by extra serial cycles, which is what lets the grouped schedule combine
fixed-width streaming with small alignment loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .align import (
    SIGNIFICAND_BITS,
    AlignedInput,
    WidthKind,
    WidthPolicy,
)
from .crossbar import ADC_MUX_RATIO, AdcMode, AdcModel, CrossbarTile, adc_convert_array
from .exponents import (
    NEAR_MAX_BOTTOM,
    NEAR_ZERO_TOP,
    ExponentGroup,
    SeaConfig,
    SharedExponentPolicy,
    mea_max_exponent,
)
from .fp16 import (
    EXPONENT_BIAS,
    EXPONENT_FIELD_MAX,
    FRACTION_BITS,
    HIDDEN_BIT,
    Fp16Value,
    decode,
    encode,
)
from .schedule import (
    ALL_ROWS_TAG,
    PHASE_ORDER,
    CycleReport,
    Phase,
    Schedule,
    build_dwa_schedule,
    build_inorder_schedule,
)

# a shared exponent never exceeds 31 and a field never goes below 0,
# so this dynamic width covers every alignment shift losslessly
FULL_SHIFT_COVER = 31

MACRO_ROWS = 128

_GROUP_BY_FLAG = (ExponentGroup.NEAR_ZERO, ExponentGroup.CENTER, ExponentGroup.NEAR_MAX)
_TAG_TO_GID = {g.value: g.flag for g in ExponentGroup}

_POW2_CACHE: dict[int, np.ndarray] = {}
_POS_CACHE: dict[int, np.ndarray] = {}


def _pow2_vector(length: int) -> np.ndarray:
    """Descending powers of two [2**(length-1) .. 1] as int64."""
    vec = _POW2_CACHE.get(length)
    if vec is None:
        vec = 1 << np.arange(length - 1, -1, -1, dtype=np.int64)
        vec.flags.writeable = False
        _POW2_CACHE[length] = vec
    return vec


def _pos_vector(length: int) -> np.ndarray:
    """Descending bit positions [length-1 .. 0] as int64."""
    vec = _POS_CACHE.get(length)
    if vec is None:
        vec = np.arange(length - 1, -1, -1, dtype=np.int64)
        vec.flags.writeable = False
        _POS_CACHE[length] = vec
    return vec


class AlignmentMode(Enum):
    MEA = "mea"
    SEA = "sea"


class ScheduleKind(Enum):
    IN_ORDER = "in-order"
    DWA = "dwa"


class SpreadScope(Enum):
    """Where the dynamic-width baseline takes its exponent spread from."""

    CALL = "call"
    LAYER = "layer"


@dataclass(frozen=True)
class MacroConfig:
    """Everything one evaluation needs besides the inputs and the tile.

    w_s is consumed when tiles are built; at run time the tile's own
    stored width governs.  The 64-bit accumulator default is safe by
    construction at default widths (hit counts of at most 128 rows,
    42 serial positions and 11 slice positions stay below 2**60).
    """

    rows: int = MACRO_ROWS
    adc: AdcModel = AdcModel()
    width: WidthPolicy = WidthPolicy.fwi()
    sea: SeaConfig = SeaConfig()
    alignment: AlignmentMode = AlignmentMode.SEA
    schedule: ScheduleKind = ScheduleKind.DWA
    skip_nearzero: bool = False
    zero_skip: bool = True
    w_s: int = SIGNIFICAND_BITS
    accumulator_width: int = 64
    dwi_spread_scope: SpreadScope = SpreadScope.CALL

    def __post_init__(self) -> None:
        if self.rows < 1:
            raise ValueError(f"rows={self.rows} must be >= 1")
        if self.w_s < 1:
            raise ValueError(f"w_s={self.w_s} must be >= 1")
        if self.accumulator_width < 16:
            raise ValueError(f"accumulator_width={self.accumulator_width} too narrow")

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "adc": self.adc.to_json(),
            "width": self.width.to_json(),
            "sea": self.sea.to_json(),
            "alignment": self.alignment.value,
            "schedule": self.schedule.value,
            "skip_nearzero": self.skip_nearzero,
            "zero_skip": self.zero_skip,
            "w_s": self.w_s,
            "accumulator_width": self.accumulator_width,
            "dwi_spread_scope": self.dwi_spread_scope.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MacroConfig":
        known = {
            "rows", "adc", "width", "sea", "alignment", "schedule",
            "skip_nearzero", "zero_skip", "w_s", "accumulator_width",
            "dwi_spread_scope",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown macro config keys: {sorted(unknown)}")
        kwargs: dict = {k: obj[k] for k in known & set(obj)}
        if "adc" in kwargs:
            kwargs["adc"] = AdcModel.from_json(kwargs["adc"])
        if "width" in kwargs:
            kwargs["width"] = WidthPolicy.from_json(kwargs["width"])
        if "sea" in kwargs:
            kwargs["sea"] = SeaConfig.from_json(kwargs["sea"])
        if "alignment" in kwargs:
            kwargs["alignment"] = AlignmentMode(kwargs["alignment"])
        if "schedule" in kwargs:
            kwargs["schedule"] = ScheduleKind(kwargs["schedule"])
        if "dwi_spread_scope" in kwargs:
            kwargs["dwi_spread_scope"] = SpreadScope(kwargs["dwi_spread_scope"])
        return cls(**kwargs)


STRATEGIES = ("mea-dwi", "mea-fwi", "sea-dwa-fwi", "sea-dwa-dwi")


def apply_strategy(config: MacroConfig, name: str) -> MacroConfig:
    """Specialize a base config to one of the named strategy presets.

    Presets pin alignment mode, schedule shape and width kind; shared
    exponents, ADC and flags stay as configured.  Dynamic-width presets
    keep a configured m_d, otherwise they provision full shift cover.
    """
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}, expected one of {STRATEGIES}")
    m_d = config.width.m_d if config.width.kind is WidthKind.DWI else FULL_SHIFT_COVER
    modes = {
        "mea-dwi": (AlignmentMode.MEA, ScheduleKind.IN_ORDER, WidthPolicy.dwi(m_d)),
        "mea-fwi": (AlignmentMode.MEA, ScheduleKind.IN_ORDER, WidthPolicy.fwi()),
        "sea-dwa-fwi": (AlignmentMode.SEA, ScheduleKind.DWA, WidthPolicy.fwi()),
        "sea-dwa-dwi": (AlignmentMode.SEA, ScheduleKind.DWA, WidthPolicy.dwi(m_d)),
    }
    alignment, kind, width = modes[name]
    return replace(config, alignment=alignment, schedule=kind, width=width)


def exponent_add(e_g: int, e_w: int, w_s: int = SIGNIFICAND_BITS) -> int:
    """Power-of-two scale of the accumulator LSB for one (band, column).

    Combines the input shared exponent and the column weight exponent,
    both unbiased, and steps down to the LSB of the 11-bit input grid
    and the w_s-bit stored weight grid.
    """
    return (e_g - EXPONENT_BIAS) + (e_w - EXPONENT_BIAS) - FRACTION_BITS - (w_s - 1)


@dataclass(frozen=True)
class PartialSumRegister:
    """Per-band accumulator with its power-of-two scale.

    value = acc * dequant * 2**scale_exponent, where scale_exponent
    already folds in the dynamic-width placement offset when present.
    """

    acc: int
    group_exponent: int
    weight_exponent: int
    scale_exponent: int
    dequant: Fraction = Fraction(1)

    def value(self) -> Fraction:
        v = self.acc * self.dequant
        if self.scale_exponent >= 0:
            return v * (1 << self.scale_exponent)
        return v / (1 << -self.scale_exponent)


def normalize(partials: Sequence[PartialSumRegister]) -> Fp16Value:
    """Merge band partials exactly in a common frame, round once to
    binary16 (nearest even); overflow gives signed infinity, underflow
    a subnormal or signed zero.  No partials is an exact zero."""
    if len(partials) > len(PHASE_ORDER):
        raise ValueError(f"{len(partials)} partials, at most {len(PHASE_ORDER)} bands exist")
    if not partials:
        return decode(0)
    if all(p.dequant == 1 for p in partials):
        # identity converter: pure integers on the finest LSB present
        floor_scale = min(p.scale_exponent for p in partials)
        total = 0
        for p in partials:
            total += p.acc << (p.scale_exponent - floor_scale)
        if floor_scale >= 0:
            return decode(encode(total << floor_scale))
        return decode(encode(Fraction(total, 1 << -floor_scale)))
    total_frac = Fraction(0)
    for p in partials:
        total_frac += p.value()
    return decode(encode(total_frac))


@dataclass
class PreprocessResult:
    """Aligned rows plus the activation plan for one evaluation.

    The datapath reads the flat per-row lists; the aligned view builds
    its row objects on first access.
    """

    schedule: Schedule
    phase_exponents: dict[str, int]
    shifts: list[int]
    dropped_bits: int
    clamped_shifts: int
    comparison_depth: int
    signed_significands: list[int]  # aligned significand, sign applied
    signs: list[int]
    group_ids: list[int]
    dropped_per_row: list[int]
    _aligned: list[AlignedInput] | None = field(default=None, repr=False)

    @property
    def aligned(self) -> list[AlignedInput]:
        if self._aligned is None:
            self._aligned = [
                AlignedInput(
                    abs(sig), self.signs[i], self.shifts[i],
                    _GROUP_BY_FLAG[self.group_ids[i]], self.dropped_per_row[i],
                )
                for i, sig in enumerate(self.signed_significands)
            ]
        return self._aligned


def preprocess(
    inputs: Sequence[Fp16Value],
    config: MacroConfig,
    layer_spread: int | None = None,
) -> PreprocessResult:
    """Classify, shift and flag every input and build the activation plan.

    layer_spread feeds the dynamic-width cycle count when the width is
    provisioned per tensor rather than per call; it never changes the
    arithmetic, only the accounting.
    """
    if len(inputs) > config.rows:
        raise ValueError(f"{len(inputs)} inputs exceed {config.rows} rows")
    n = len(inputs)
    exps = [0] * n
    sigs = [0] * n
    signs = [0] * n
    zero_flags = [False] * n
    gids = [0] * n  # two-bit band flags: 0 near-zero, 1 center, 2 near-max
    nonzero: list[int] = []
    for i, v in enumerate(inputs):
        e = v.exponent
        if e == EXPONENT_FIELD_MAX:
            raise ValueError(f"non-finite input at row {i}: 0x{v.raw:04X}")
        f = v.fraction
        exps[i] = e
        signs[i] = v.sign
        if e == 0:
            # no hidden bit: on the field-exponent grid the fraction doubles
            sigs[i] = f << 1
            if f:
                nonzero.append(i)
            else:
                zero_flags[i] = True
        else:
            sigs[i] = HIDDEN_BIT | f
            gids[i] = 0 if e <= NEAR_ZERO_TOP else 2 if e >= NEAR_MAX_BOTTOM else 1
            nonzero.append(i)

    shifts = [0] * n
    clamped = 0
    depth = 0
    phase_exponents: dict[str, int] = {}
    spread_override = None
    if layer_spread is not None and config.dwi_spread_scope is SpreadScope.LAYER:
        spread_override = layer_spread

    if config.alignment is AlignmentMode.MEA:
        ref = 0
        if nonzero:
            ref, depth = mea_max_exponent([exps[i] for i in nonzero])
        for i in nonzero:
            shifts[i] = ref - exps[i]
        if config.schedule is ScheduleKind.IN_ORDER:
            sched = build_inorder_schedule(
                exps, zero_flags, config.width, config.zero_skip, spread_override
            )
            phase_exponents[ALL_ROWS_TAG] = ref
        else:
            sched = build_dwa_schedule(
                exps, zero_flags, gids, config.width,
                config.skip_nearzero, config.zero_skip,
            )
            for phase in sched.phases:
                phase_exponents[phase.tag] = ref
    else:
        members: list[list[int]] = [[], [], []]
        for i in nonzero:
            members[gids[i]].append(exps[i])
        shared = [0, 0, 0]
        for group in PHASE_ORDER:
            gid = group.flag
            if config.sea.policy is SharedExponentPolicy.STATIC:
                shared[gid] = config.sea.static_exponent(group)
            elif members[gid]:
                shared[gid] = max(members[gid])
        cap = config.sea.shift_cap
        for i in nonzero:
            raw = shared[gids[i]] - exps[i]
            if raw < 0:
                clamped += 1
                raw = 0
            shifts[i] = min(raw, cap)
        if config.schedule is ScheduleKind.DWA:
            sched = build_dwa_schedule(
                exps, zero_flags, gids, config.width,
                config.skip_nearzero, config.zero_skip,
            )
            for phase in sched.phases:
                phase_exponents[phase.tag] = shared[_TAG_TO_GID[phase.tag]]
        else:
            # one phase means one analog frame: lift every band onto the
            # highest shared exponent present and settle nothing digitally
            top = max((shared[gid] for gid in (0, 1, 2) if members[gid]), default=0)
            for i in nonzero:
                extra = top - shared[gids[i]]
                shifts[i] = min(shifts[i] + extra, cap)
            active = nonzero if config.zero_skip else list(range(n))
            if active:
                if config.width.kind is WidthKind.DWI and nonzero:
                    if spread_override is not None:
                        window = max(spread_override, 0)
                    else:
                        nz_shifts = [shifts[i] for i in nonzero]
                        window = max(nz_shifts) - min(nz_shifts)
                    cycles = SIGNIFICAND_BITS + window
                else:
                    cycles = SIGNIFICAND_BITS
                phases = (Phase(ALL_ROWS_TAG, tuple(active), cycles),)
            else:
                phases = ()
            zeros = tuple(i for i in range(n) if zero_flags[i])
            sched = Schedule(
                phases,
                zeros if config.zero_skip else (),
                zero_skip=config.zero_skip,
            )
            phase_exponents[ALL_ROWS_TAG] = top

    is_fwi = config.width.kind is WidthKind.FWI
    m_d = config.width.m_d
    signed_sigs = [0] * n
    dropped_rows = [0] * n
    dropped_total = 0
    for i in nonzero:
        s = shifts[i]
        sig = sigs[i]
        if is_fwi:
            if s:
                dropped = (sig & ((1 << s) - 1)).bit_count()
                sig_a = sig >> s
            else:
                dropped = 0
                sig_a = sig
        else:
            excess = s - m_d
            if excess > 0:
                dropped = (sig & ((1 << excess) - 1)).bit_count()
                sig_a = sig >> excess
            else:
                dropped = 0
                sig_a = sig << (m_d - s)
        if dropped:
            dropped_rows[i] = dropped
            dropped_total += dropped
        signed_sigs[i] = -sig_a if signs[i] else sig_a
    return PreprocessResult(
        schedule=sched,
        phase_exponents=phase_exponents,
        shifts=shifts,
        dropped_bits=dropped_total,
        clamped_shifts=clamped,
        comparison_depth=depth,
        signed_significands=signed_sigs,
        signs=signs,
        group_ids=gids,
        dropped_per_row=dropped_rows,
    )


@dataclass
class MacroRun:
    """Outputs plus the accounting of one evaluation."""

    outputs: list[Fp16Value]
    cycles: CycleReport
    schedule: Schedule
    clip_events: int
    dropped_bits: int
    clamped_shifts: int
    accumulator_peak_bits: int
    no_overflow: bool
    preprocessed: PreprocessResult = field(repr=False)

    @property
    def aligned(self) -> list[AlignedInput]:
        return self.preprocessed.aligned


def run_mac(
    inputs: Sequence[Fp16Value],
    tile: CrossbarTile,
    config: MacroConfig,
    layer_spread: int | None = None,
) -> MacroRun:
    """Evaluate one input vector against a tile.

    Serial bits go MSB first: cycle c carries bit S-1-c and lands in the
    accumulator with weight 2**(S-1-c); weight slice s carries weight
    2**(w_s-1-s).  Per-cycle hit counting runs as sign-split matrix
    products whose float32 entries are exact row counts; with an ideal
    converter at full scale the two streams collapse into one signed
    product.
    """
    if len(inputs) != tile.rows:
        raise ValueError(f"{len(inputs)} inputs for a {tile.rows}-row tile")
    pre = preprocess(inputs, config, layer_spread)
    width = config.width
    serial = width.total_width
    w_s = tile.w_s
    cols = tile.logical_cols
    adc = config.adc
    # identity conversion and no clipping possible: fold the sign streams
    fast = adc.mode is AdcMode.IDEAL and adc.full_scale >= tile.rows
    if fast:
        w_net = tile.net_matrix()
    else:
        wplus, wminus = tile.stream_matrices()
    slice_weights = _pow2_vector(w_s)
    # per-cycle column totals stay below rows * 2**w_s; chunking the
    # serial combine keeps every int64 partial under 2**62
    chunk = max(1, 55 - w_s)
    is_dwi = width.kind is WidthKind.DWI
    dequant = adc.dequant_step
    bitpos = _pos_vector(serial)
    all_signed = np.array(pre.signed_significands, dtype=np.int64)

    partials: list[list[PartialSumRegister]] = [[] for _ in range(cols)]
    clip_events = 0
    peak_bits = 0
    for phase in pre.schedule.phases:
        count = len(phase.rows)
        rows_arr = np.fromiter(phase.rows, dtype=np.int64, count=count)
        signed = all_signed[rows_arr]
        sig_arr = np.abs(signed)
        row_sign = np.sign(signed)  # zero rows contribute nothing either way
        bits_int = (sig_arr[:, None] >> bitpos[None, :]) & 1
        if fast:
            # float32 holds the counts exactly: every partial sum along a
            # product is an integer within +-rows, far inside 2**24
            signed_bits = (bits_int * row_sign[:, None]).astype(np.float32)
            net = (signed_bits.T @ w_net[rows_arr]).astype(np.int64)
        else:
            bits = bits_int.astype(np.float32)
            pos_mask = row_sign >= 0
            b_pos = bits[pos_mask].T
            b_neg = bits[~pos_mask].T
            rp = rows_arr[pos_mask]
            rn = rows_arr[~pos_mask]
            pos_sums = (b_pos @ wplus[rp] + b_neg @ wminus[rn]).astype(np.int64)
            neg_sums = (b_pos @ wminus[rp] + b_neg @ wplus[rn]).astype(np.int64)
            conv_pos, clips_p = adc_convert_array(pos_sums, adc)
            conv_neg, clips_n = adc_convert_array(neg_sums, adc)
            clip_events += clips_p + clips_n
            net = conv_pos - conv_neg
        per_cycle = net.reshape(serial, cols, w_s) @ slice_weights  # [serial, cols]
        e_phase = pre.phase_exponents[phase.tag]
        for col in range(cols):
            acc = 0
            column = per_cycle[:, col]
            for start in range(0, serial, chunk):
                stop = min(start + chunk, serial)
                part = int(column[start:stop] @ _pow2_vector(stop - start))
                if part:
                    acc += part << (serial - stop)
            scale = exponent_add(e_phase, tile.col_shared_exp[col], w_s)
            if is_dwi:
                scale -= width.m_d
            partials[col].append(
                PartialSumRegister(acc, e_phase, tile.col_shared_exp[col], scale, dequant)
            )
            bits_used = abs(acc).bit_length()
            if bits_used > peak_bits:
                peak_bits = bits_used

    outputs = [normalize(partials[col]) for col in range(cols)]
    no_overflow = peak_bits < config.accumulator_width
    adc_cycles = pre.schedule.input_cycles * min(ADC_MUX_RATIO, tile.physical_cols)
    report = CycleReport(
        input_cycles=pre.schedule.input_cycles,
        phase_count=len(pre.schedule.phases),
        skipped_rows=len(pre.schedule.skipped_rows),
        adc_cycles=adc_cycles,
        comparison_depth=pre.comparison_depth,
    )
    return MacroRun(
        outputs=outputs,
        cycles=report,
        schedule=pre.schedule,
        clip_events=clip_events,
        dropped_bits=pre.dropped_bits,
        clamped_shifts=pre.clamped_shifts,
        accumulator_peak_bits=peak_bits,
        no_overflow=no_overflow,
        preprocessed=pre,
    )


def run_report_json(
    run: MacroRun,
    strategy: str | None = None,
    oracles: Sequence[Fraction] | None = None,
) -> dict:
    """JSON record for one evaluation, with per-column error when the
    exact reference values are supplied."""
    columns = []
    for i, out in enumerate(run.outputs):
        entry: dict = {"index": i, "output_raw": f"0x{out.raw:04X}", "output": out.to_float()}
        if oracles is not None:
            exact = oracles[i]
            if out.is_finite:
                err = abs(out.exact_value() - exact)
                entry["abs_error"] = float(err)
                entry["rel_error"] = float(err / abs(exact)) if exact != 0 else None
            else:
                entry["abs_error"] = float("inf")
                entry["rel_error"] = float("inf") if exact != 0 else None
        columns.append(entry)
    return {
        "strategy": strategy,
        "cycles": run.cycles.to_json(),
        "clip_events": run.clip_events,
        "dropped_bits": run.dropped_bits,
        "clamped_shifts": run.clamped_shifts,
        "columns": columns,
    }

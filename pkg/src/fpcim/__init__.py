"""Bit-accurate FP16 analog compute-in-memory macro simulator.

The package models the serial floating-point MAC loop of a 128 x 128
single-bit crossbar: exponent banding and mantissa alignment, grouped
wordline scheduling, per-cycle bitline summation through a configurable
ADC, shift-and-add accumulation and a final normalize back to binary16.
Every strategy is measured in input cycles and checked against an exact
big-integer dot-product reference.
"""

from .align import AlignedInput, WidthKind, WidthPolicy, align, grid_significand, raw_significand
from .crossbar import (
    AdcMode,
    AdcModel,
    CrossbarTile,
    adc_convert,
    bitline_cycle,
    build_tile,
    load_tile,
    lossless_width,
    prealign_weights,
    save_tile,
)
from .exponents import (
    ExponentGroup,
    SeaConfig,
    SharedExponentPolicy,
    classify_exponent,
    mea_max_exponent,
    mea_shift,
    sea_shift,
    shared_exponent,
)
from .fp16 import (
    ExactAccumulator,
    Fp16Value,
    FpClass,
    decode,
    encode,
    exact_dot,
    from_float,
)
from .macro import (
    STRATEGIES,
    AlignmentMode,
    MacroConfig,
    MacroRun,
    PartialSumRegister,
    ScheduleKind,
    SpreadScope,
    apply_strategy,
    exponent_add,
    normalize,
    preprocess,
    run_mac,
    run_report_json,
)
from .schedule import (
    CycleReport,
    Phase,
    Schedule,
    compare_latency,
    schedule_dwa,
    schedule_inorder,
)
from .stats import BimodalSpec, ErrorReport, ExponentHistogram, error_stats, histogram, sample_bimodal
from .tensorio import TensorFormatError, TensorMeta, load_tensor, save_tensor

__version__ = "0.1.0"

__all__ = [
    "AdcMode", "AdcModel", "AlignedInput", "AlignmentMode", "BimodalSpec",
    "CrossbarTile", "CycleReport", "ErrorReport", "ExactAccumulator",
    "ExponentGroup", "ExponentHistogram", "Fp16Value", "FpClass",
    "MacroConfig", "MacroRun", "PartialSumRegister", "Phase", "STRATEGIES",
    "Schedule", "ScheduleKind", "SeaConfig", "SharedExponentPolicy",
    "SpreadScope", "TensorFormatError", "TensorMeta", "WidthKind",
    "WidthPolicy", "adc_convert", "align", "apply_strategy", "bitline_cycle",
    "build_tile", "classify_exponent", "compare_latency", "decode", "encode",
    "error_stats", "exact_dot", "exponent_add", "from_float",
    "grid_significand", "histogram", "load_tensor", "load_tile",
    "lossless_width", "mea_max_exponent", "mea_shift", "normalize",
    "prealign_weights", "preprocess", "raw_significand", "run_mac",
    "run_report_json", "sample_bimodal", "save_tensor", "save_tile",
    "schedule_dwa", "schedule_inorder", "sea_shift", "shared_exponent",
]

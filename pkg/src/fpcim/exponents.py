"""Exponent banding, shared-exponent selection and the global-max baseline.

A 5-bit biased exponent is routed by its top three bits: all zero puts it
in the near-zero band [0, 3], a leading 11 puts it in the near-maximum
band [24, 31], everything else lands in the center band [4, 23].  Each
band aligns mantissas against one shared exponent instead of the global
maximum, which keeps shift distances short.  The conventional baseline
(global maximum found by a balanced comparison tree) lives here as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

EXPONENT_FIELD_MAX = 31
NEAR_ZERO_TOP = 3  # top three bits 000
NEAR_MAX_BOTTOM = 24  # top three bits 11x
FLAG_RESERVED = 0b11


class ExponentGroup(Enum):
    NEAR_ZERO = "near_zero"
    CENTER = "center"
    NEAR_MAX = "near_max"

    @property
    def flag(self) -> int:
        """Two-bit wire code carried with every scheduled input."""
        return _GROUP_TO_FLAG[self]

    @classmethod
    def from_flag(cls, flag: int) -> "ExponentGroup":
        try:
            return _FLAG_TO_GROUP[flag]
        except KeyError:
            raise ValueError(f"flag {flag:#04b} is reserved or out of range") from None


_GROUP_TO_FLAG = {
    ExponentGroup.NEAR_ZERO: 0b00,
    ExponentGroup.CENTER: 0b01,
    ExponentGroup.NEAR_MAX: 0b10,
}
_FLAG_TO_GROUP = {flag: group for group, flag in _GROUP_TO_FLAG.items()}


class SharedExponentPolicy(Enum):
    STATIC = "static"
    DYNAMIC_GROUP_MAX = "dynamic-group-max"


@dataclass(frozen=True)
class SeaConfig:
    """Per-band shared exponents plus the selection policy.

    The static defaults are the band maxima, so every static shift is
    non-negative and bounded by the band width (3, 19 and 7 for the
    near-zero, center and near-maximum bands).
    """

    e_z: int = NEAR_ZERO_TOP
    e_c: int = 23
    e_m: int = EXPONENT_FIELD_MAX
    policy: SharedExponentPolicy = SharedExponentPolicy.STATIC
    shift_cap: int = 31

    def __post_init__(self) -> None:
        for name in ("e_z", "e_c", "e_m"):
            v = getattr(self, name)
            if not 0 <= v <= EXPONENT_FIELD_MAX:
                raise ValueError(f"{name}={v} outside [0, {EXPONENT_FIELD_MAX}]")
        if self.shift_cap < 0:
            raise ValueError(f"shift_cap={self.shift_cap} must be >= 0")

    def static_exponent(self, group: ExponentGroup) -> int:
        if group is ExponentGroup.NEAR_ZERO:
            return self.e_z
        if group is ExponentGroup.CENTER:
            return self.e_c
        return self.e_m

    def to_json(self) -> dict:
        return {
            "e_z": self.e_z,
            "e_c": self.e_c,
            "e_m": self.e_m,
            "policy": self.policy.value,
            "shift_cap": self.shift_cap,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SeaConfig":
        known = {"e_z", "e_c", "e_m", "policy", "shift_cap"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown shared-exponent config keys: {sorted(unknown)}")
        kwargs = {k: obj[k] for k in known & set(obj)}
        if "policy" in kwargs:
            kwargs["policy"] = SharedExponentPolicy(kwargs["policy"])
        return cls(**kwargs)


def classify_exponent(e_in: int) -> ExponentGroup:
    """Band for a biased exponent field.  Zero-valued inputs still land in
    the near-zero band; skipping them is the scheduler's business."""
    if not 0 <= e_in <= EXPONENT_FIELD_MAX:
        raise ValueError(f"exponent field {e_in} outside [0, {EXPONENT_FIELD_MAX}]")
    if e_in <= NEAR_ZERO_TOP:
        return ExponentGroup.NEAR_ZERO
    if e_in >= NEAR_MAX_BOTTOM:
        return ExponentGroup.NEAR_MAX
    return ExponentGroup.CENTER


def shared_exponent(group: ExponentGroup, members: Sequence[int], config: SeaConfig) -> int:
    """Shared exponent for one band: the configured constant under the
    static policy, the member maximum under the dynamic policy."""
    if config.policy is SharedExponentPolicy.STATIC:
        return config.static_exponent(group)
    if not members:
        raise ValueError(f"dynamic shared exponent for empty {group.value} band")
    for e in members:
        if classify_exponent(e) is not group:
            raise ValueError(f"exponent {e} is not in the {group.value} band")
    return max(members)


def sea_shift(e_in: int, shared: int, config: SeaConfig) -> int:
    """Alignment shift against a resolved shared exponent.

    shared - e_in, clamped to [0, shift_cap].  A negative raw shift only
    happens under a static config set below the band maximum; the clamp
    to zero is counted by the caller's report.
    """
    raw = shared - e_in
    if raw < 0:
        return 0
    return min(raw, config.shift_cap)


def mea_max_exponent(exponents: Sequence[int]) -> tuple[int, int]:
    """Global maximum via a balanced pairwise comparison tree.

    Returns (maximum, depth); depth is ceil(log2 n), the comparator
    stages the equivalent hardware tree needs.
    """
    if not exponents:
        raise ValueError("maximum of an empty exponent list")
    level = list(exponents)
    depth = 0
    while len(level) > 1:
        nxt = [max(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
        depth += 1
    return level[0], depth


def mea_shift(e_in: int, e_max: int) -> int:
    """Alignment shift against the global maximum exponent."""
    if e_in > e_max:
        raise ValueError(f"exponent {e_in} exceeds the resolved maximum {e_max}")
    return e_max - e_in

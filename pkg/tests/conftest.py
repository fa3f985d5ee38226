import random

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fpcim import decode

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=200,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def random_finite(rng: random.Random):
    """One finite fp16 value drawn uniformly over the finite patterns."""
    while True:
        v = decode(rng.getrandbits(16))
        if v.is_finite:
            return v


def random_finite_batch(rs: np.random.RandomState, n: int) -> list:
    """n finite fp16 values from a numpy stream (fast bulk draw)."""
    raws = rs.randint(0, 65536, size=n + n // 8 + 16, dtype=np.uint32)
    keep = raws[((raws >> 10) & 0x1F) != 31]
    while keep.size < n:
        extra = rs.randint(0, 65536, size=n, dtype=np.uint32)
        keep = np.concatenate([keep, extra[((extra >> 10) & 0x1F) != 31]])
    return [decode(int(r)) for r in keep[:n]]


@pytest.fixture
def rng():
    return random.Random(0xF9C1)

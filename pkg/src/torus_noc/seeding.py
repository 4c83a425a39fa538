"""Seed plumbing.

Every random stream is a numpy ``Generator`` over ``PCG64`` (PCG XSL RR 128/64).
Component streams are derived from one master seed by feeding
``(master_seed, crc32(tag), *extra)`` to ``SeedSequence``, so a stream depends
only on the master seed and the tag naming its consumer.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

SEED_ENV_VAR = "TORUS_NOC_SEED"
DEFAULT_SEED = 0

_MASK64 = (1 << 64) - 1


def tag_hash(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def derive_seed(seed: int, tag: str, *extra: int) -> int:
    """A 64-bit child seed for ``tag`` under ``seed``."""
    ss = np.random.SeedSequence([seed & _MASK64, tag_hash(tag), *(int(e) & _MASK64 for e in extra)])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int, tag: str | None = None, *extra: int) -> np.random.Generator:
    if tag is not None:
        seed = derive_seed(seed, tag, *extra)
    return np.random.Generator(np.random.PCG64(seed & _MASK64))


def resolve_seed(flag: int | None) -> int:
    """Flag wins, then ``TORUS_NOC_SEED``, then the default."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV_VAR)
    if env:
        return int(env)
    return DEFAULT_SEED

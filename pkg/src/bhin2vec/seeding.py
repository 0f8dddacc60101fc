"""Deterministic named randomness streams.

All randomness in a run flows from one integer seed. Each consumer asks for
a stream by name (``walks``, ``negatives``, ``shuffle``, ...) so that any
component can be reproduced in isolation and adding draws to one stream
never shifts another.
"""

from __future__ import annotations

import zlib

import numpy as np


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream ``name`` under ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def spawn(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``count`` independent child generators."""
    return [np.random.default_rng(seq) for seq in rng.bit_generator.seed_seq.spawn(count)]

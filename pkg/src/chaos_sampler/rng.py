"""Index-derived random streams.

Every random draw in the library comes from a stream keyed by
``(master_seed, label, *indices)``. The key is hashed by numpy's
``SeedSequence`` and drives a counter-based Philox generator, so the
stream for a given realization does not depend on how many other
realizations were drawn before it, or on which thread draws it.
"""

from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(master_seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return the generator for one ``(seed, label, indices)`` key."""
    key = (label_key(label),) + tuple(int(i) for i in indices)
    if any(i < 0 for i in key):
        raise ValueError("stream indices must be non-negative")
    seq = np.random.SeedSequence(check_seed(master_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))

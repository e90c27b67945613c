"""Keyed counter-based random streams.

Every random quantity in the package is drawn from a Philox generator whose
128-bit key is derived from ``(seed, purpose, index...)``. Streams are
therefore independent of the order in which replicates are executed.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("ascii"))


def stream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    entropy = [int(seed) & _MASK64, _tag(purpose), *(int(i) for i in index)]
    key = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

"""Named, order-independent random streams derived from one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    if isinstance(part, float):
        return zlib.crc32(repr(part).encode())
    return int(part)


def stream(seed: int, *names) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and a path of names/ints.

    The same path always yields the same stream, regardless of which other
    streams were drawn before it.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.Philox(ss))

"""Seeded random streams.

Every random draw comes from ``numpy.random.Generator`` (PCG64) built from a
``SeedSequence`` whose spawn key is ``(purpose, *keys)``. Streams for
different purposes never overlap, and a stream depends only on its key, not
on how many draws were made elsewhere.
"""
import hashlib

import numpy as np

PURPOSES = {
    "data": 1,
    "init": 2,
    "shuffle": 3,
    "attack": 4,
    "noise": 5,
    "split": 6,
    "power": 7,
    "mixing": 8,
}


def stream(seed, purpose, *keys):
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose {purpose!r}")
    key = (PURPOSES[purpose],) + tuple(int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def content_key(x):
    """64-bit key from the raw bytes of an array; equal inputs share a key."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    return int.from_bytes(hashlib.blake2b(arr.tobytes(), digest_size=8).digest(), "little")

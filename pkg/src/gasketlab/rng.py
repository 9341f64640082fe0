"""Deterministic counter-based random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Streams are derived from a master seed plus a path of labels, so replica
k of experiment "exit-time" always sees the same bits no matter how many
workers run or in which order replicas complete.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "substream", "spawn_key"]


def spawn_key(*path) -> tuple[int, ...]:
    """Map a path of labels (strings/ints) to a SeedSequence spawn key."""
    key = []
    for part in path:
        if isinstance(part, (int, np.integer)):
            key.append(int(part) & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(part).encode()).digest()
            key.append(int.from_bytes(digest[:4], "little"))
    return tuple(key)


def stream(master_seed: int, *path) -> np.random.Generator:
    """Counter-based generator for (master_seed, path).

    Uses Philox keyed via a SeedSequence so that distinct paths give
    statistically independent, reproducible streams.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=spawn_key(*path))
    return np.random.Generator(np.random.Philox(ss))


def substream(rng_path: tuple[int, tuple], *more) -> np.random.Generator:
    """Extend a (master_seed, path) identity with further labels."""
    master, path = rng_path
    return stream(master, *path, *more)

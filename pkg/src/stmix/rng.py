"""Reproducible random streams.

All randomness flows through Philox, a counter-based 64-bit generator.
Substreams are derived from (seed, path) where path is a tuple of small
integers naming the consumer, e.g. (year, role) or (replicate,). Derivation
uses SeedSequence spawn keys, so streams for different paths are statistically
independent and a parallel map over derived seeds draws exactly the same
numbers as a sequential loop.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream", "derive_seed"]


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for (seed, path).

    Identical arguments always give a generator that produces the exact same
    stream. Distinct paths give independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, path) into a single 64-bit integer seed.

    Lets APIs that take a plain integer seed participate in the substream
    scheme: derive_seed(s, k) for k = 0..n-1 yields n independent seeds.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])

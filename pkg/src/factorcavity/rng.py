"""Seeded, counter-split random streams.

Every sampler in the package takes a 64-bit integer seed.  Parallel or
repeated draws derive child generators through ``substream``; the child is a
pure function of (seed, key path), so results do not depend on thread count
or execution order.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for a fixed (seed, key...) address."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def spin_permutations(q: int) -> np.ndarray:
    """All q! permutations of the alphabet, as an (q!, q) index array."""
    import itertools

    return np.array(list(itertools.permutations(range(q))), dtype=np.int64)

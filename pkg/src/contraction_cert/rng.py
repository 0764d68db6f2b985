"""Reproducible random streams.

Every unit of parallel work (a start pair, a block of replicates) gets its own
Philox generator spawned from one SeedSequence, so the numbers a task sees
depend only on the seed and the task index, never on which worker ran it.
"""
import numpy as np


def substreams(seed, n):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(n)]


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(rng)))


def child_seed(rng):
    """A fresh SeedSequence drawn from a generator, for handing to substreams."""
    rng = as_generator(rng)
    return np.random.SeedSequence(int(rng.integers(0, 2 ** 63 - 1)))

"""Seeded, splittable random streams.

Every replication owns a generator derived from ``(seed, index)`` so results do
not depend on how replications are scheduled across workers.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def stream(seed, *key):
    """Return a PCG64 generator for the spawn key ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def replication_streams(seed, reps, offset=0):
    """Generators for replications ``offset .. offset + reps - 1``."""
    return [stream(seed, offset + i) for i in range(reps)]

"""
Deterministic seed derivation.

A child seed is the first 64-bit word of
``numpy.random.SeedSequence(base_seed, spawn_key=indices)``, so runs keyed by
the same indices get the same stream whether they execute serially or in
parallel. Streams are PCG64.
"""

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(base_seed: int, *indices: int) -> int:
    """64-bit seed for the stream identified by ``indices`` under ``base_seed``."""
    sequence = np.random.SeedSequence(
        int(base_seed) & SEED_MASK, spawn_key=tuple(int(i) for i in indices)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))

"""Deterministic RNG derivation for parallel-safe reproducibility."""

import numpy as np


def derive_rng(master_seed, *indices):
    """Generator seeded from ``(master_seed, *indices)``.

    Each (seed, index...) tuple yields an independent, reproducible stream,
    so per-example work can run in any order or in parallel without
    coupling RNG state.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, indices)]))


def as_rng(rng_or_seed):
    """Pass through anything generator-shaped, else build one from a seed.

    Duck-typing keeps test stand-ins (fixed-noise generators) usable wherever
    a Generator is accepted.
    """
    if hasattr(rng_or_seed, "standard_normal"):
        return rng_or_seed
    return np.random.default_rng(rng_or_seed)

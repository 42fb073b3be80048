"""Seeded random generators.

All sampling in the lab goes through :func:`make_rng`, which builds a counter-based
Philox generator. Sub-streams are addressed by integer keys so two computations that
share a seed never share draws unless they ask for the same stream.
"""

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Build a Philox generator for ``seed`` and an optional stream key."""
    if seed < 0 or any(s < 0 for s in stream):
        raise ValueError("seeds and stream keys must be nonnegative")
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(seq))


def replicate_seed(base_seed: int, replicate: int) -> int:
    """Seed of replicate ``replicate`` under base seed ``base_seed``."""
    return base_seed ^ replicate

"""Deterministic random-stream derivation.

Two kinds of streams are used. Vectorized numpy work (fold shuffles,
synthetic data, RSA baselines) derives ``numpy`` generators from a
master seed plus integer context keys via ``SeedSequence``. The hot
permutation kernel instead runs a counter-based splitmix64 stream per
(voxel, half), so each voxel's null draws are reproducible regardless
of chunking, scheduling or thread count. The pure-Python splitmix64
here mirrors the compiled kernel and is used to derive and cross-check
its stream keys.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 step: advance by the golden gamma and mix."""
    x = (x + GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, voxel_index: int, half_tag: int) -> int:
    """64-bit stream key for one (voxel, half) permutation stream."""
    key = splitmix64(seed & MASK64)
    key = splitmix64(key ^ (voxel_index & MASK64))
    return splitmix64(key ^ (half_tag & MASK64))


def rng_for(seed: int, *context: int) -> np.random.Generator:
    """Generator seeded from the master seed and integer context keys."""
    return np.random.default_rng(np.random.SeedSequence((seed, *context)))

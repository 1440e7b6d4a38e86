"""Compiled permutation-null kernel for the consistency test.

For each voxel the kernel shuffles the three per-paradigm concept
response vectors independently and counts how often the null
consistency reaches the observed one. Shuffles are chained in-place
Fisher-Yates passes (a full shuffle of any arrangement is a fresh
uniform permutation, so re-shuffling avoids a copy per draw).

Randomness is a counter-based splitmix64 stream keyed by
(master seed, voxel index, half tag); see :mod:`brainalign.rng` for the
Python mirror. Each 64-bit output feeds two bounded 32-bit draws via
the multiply-shift trick, whose bias (< 2**-24 relative for bounds
below 181) is far below the sampling noise of any realistic
permutation count.
"""

from __future__ import annotations

import numpy as np
import numba
from numba import njit, prange, uint32, uint64

# The portable threading layer; avoids probing TBB/OpenMP at import.
numba.config.THREADING_LAYER = "workqueue"

_GOLDEN = uint64(0x9E3779B97F4A7C15)


@njit(uint64(uint64), inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(uint64(uint64), inline="always", cache=True)
def _splitmix64(x):
    return _mix(x + _GOLDEN)


@njit(uint64(uint64, uint64, uint64), inline="always", cache=True)
def _stream_key(seed, voxel_index, half_tag):
    key = _splitmix64(seed)
    key = _splitmix64(key ^ voxel_index)
    return _splitmix64(key ^ half_tag)


@njit(inline="always", cache=True)
def _shuffle(arr, state):
    """In-place Fisher-Yates; two bounded draws per 64-bit mix output."""
    i = arr.shape[0] - 1
    while i >= 2:
        state = state + _GOLDEN
        r64 = _mix(state)
        j = np.int64((uint64(uint32(r64 >> uint64(32))) * uint64(i + 1)) >> uint64(32))
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp
        j = np.int64((uint64(uint32(r64)) * uint64(i)) >> uint64(32))
        tmp = arr[i - 1]
        arr[i - 1] = arr[j]
        arr[j] = tmp
        i -= 2
    if i == 1:
        state = state + _GOLDEN
        r64 = _mix(state)
        j = np.int64((uint64(uint32(r64 >> uint64(32))) * uint64(2)) >> uint64(32))
        tmp = arr[1]
        arr[1] = arr[j]
        arr[j] = tmp
    return state


@njit(cache=True)
def _voxel_count(zs, zp, zw, c_obs, n_perm, key):
    """Count permutations with null consistency >= observed, one voxel."""
    n = zs.shape[0]
    s = zs.copy()
    p = zp.copy()
    w = zw.copy()
    state = key
    count = 0
    thresh = c_obs * np.float32(3.0)
    for _ in range(n_perm):
        state = _shuffle(s, state)
        state = _shuffle(p, state)
        state = _shuffle(w, state)
        t = np.float32(0.0)
        for i in range(n):
            t += s[i] * p[i] + s[i] * w[i] + w[i] * p[i]
        if t >= thresh:
            count += 1
    return count


@njit(parallel=True, cache=True)
def null_exceed_counts(z, c_obs, valid, voxel_ids, n_perm, seed, half_tag):
    """Exceedance counts for a block of voxels.

    Args:
        z: (V, 3, n) float32, per-paradigm concept means centered and
            scaled to unit norm so a dot product is exactly a Pearson r.
        c_obs: (V,) float32 observed consistency per voxel.
        valid: (V,) bool, False for voxels excluded upstream.
        voxel_ids: (V,) int64 global voxel indices (stable under chunking).
        n_perm: number of null draws.
        seed, half_tag: stream key components.

    Returns (V,) int64 counts, -1 for excluded voxels.
    """
    n_vox = z.shape[0]
    out = np.empty(n_vox, dtype=np.int64)
    for v in prange(n_vox):
        if not valid[v]:
            out[v] = -1
            continue
        key = _stream_key(uint64(seed), uint64(voxel_ids[v]), uint64(half_tag))
        out[v] = _voxel_count(z[v, 0], z[v, 1], z[v, 2], c_obs[v], n_perm, key)
    return out

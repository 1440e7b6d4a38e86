"""Writer for the binary tensor container consumed by the analysis side.

Layout, all little-endian: magic ``BTSR``, u32 format version (1), u8
dtype code (1 = float32, 2 = float64), u8 rank (1..4), one u64 per
dimension, then the row-major payload.  Dimensions must be positive and
values finite; readers enforce the same rules, so violations should
fail here rather than at analysis time.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"BTSR"
VERSION = 1
_HEADER = struct.Struct("<4sIBB")
_DTYPE_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


def write_tensor(path: Path, array: np.ndarray) -> None:
    """Serialize ``array`` (float32 or float64, rank 1..4) to ``path``."""
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    if not 1 <= arr.ndim <= 4:
        raise ValueError(f"rank must be 1..4, got {arr.ndim}")
    if any(d == 0 for d in arr.shape):
        raise ValueError(f"empty dimension in shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("tensor contains non-finite values")
    header = _HEADER.pack(MAGIC, VERSION, _DTYPE_CODES[arr.dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(arr.tobytes())

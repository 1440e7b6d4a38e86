"""Reader and writer for the BTSR binary tensor container.

Layout (all integers little-endian):

    bytes 0..3    magic ``b"BTSR"``
    bytes 4..7    format version, u32 (currently 1)
    byte  8       dtype code, u8: 1 = float32, 2 = float64
    byte  9       number of dimensions, u8, in [1, 4]
    then          ndim x u64 dimension sizes
    then          payload, row-major, little-endian floats

The payload length must be exactly ``elemsize * prod(dims)``; trailing
bytes are treated as corruption. Activation and feature payloads are
required to be finite, so ``read_tensor`` rejects NaN/Inf by default.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"BTSR"
VERSION = 1
MAX_NDIM = 4

_DTYPE_BY_CODE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_BY_KIND = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}

_HEAD = struct.Struct("<4sIBB")


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write ``array`` to ``path`` in BTSR format.

    float32 input is stored as float32, everything else is stored as
    float64. Rejects empty dimensions, rank outside [1, 4] and
    non-finite values, mirroring what the reader accepts.
    """
    arr = np.asarray(array)
    if arr.ndim < 1 or arr.ndim > MAX_NDIM:
        raise TensorFormatError(f"rank {arr.ndim} outside [1, {MAX_NDIM}]")
    if arr.dtype == np.float32:
        arr = np.ascontiguousarray(arr, dtype="<f4")
    else:
        arr = np.ascontiguousarray(arr, dtype="<f8")
    if any(d < 1 for d in arr.shape):
        raise TensorFormatError(f"degenerate dims {arr.shape}")
    if not np.isfinite(arr).all():
        raise TensorFormatError("payload contains non-finite values")
    code = _CODE_BY_KIND[np.dtype(arr.dtype.newbyteorder("="))]
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path, mmap: bool = False, check_finite: bool = True) -> np.ndarray:
    """Read a BTSR file and return its payload as an ndarray.

    Args:
        path: file to read.
        mmap: map the payload read-only instead of loading it; useful for
            large activation matrices that are scanned once.
        check_finite: reject NaN/Inf payloads (the default; all tensors
            this package exchanges are required to be finite).
    """
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise TensorFormatError(f"{path}: truncated header")
        magic, version, code, ndim = _HEAD.unpack(head)
        if magic != MAGIC:
            raise TensorFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise TensorFormatError(f"{path}: unsupported version {version}")
        if code not in _DTYPE_BY_CODE:
            raise TensorFormatError(f"{path}: unknown dtype code {code}")
        if ndim < 1 or ndim > MAX_NDIM:
            raise TensorFormatError(f"{path}: rank {ndim} outside [1, {MAX_NDIM}]")
        raw = fh.read(8 * ndim)
        if len(raw) < 8 * ndim:
            raise TensorFormatError(f"{path}: truncated dimension block")
        dims = struct.unpack(f"<{ndim}Q", raw)
        if any(d < 1 for d in dims):
            raise TensorFormatError(f"{path}: degenerate dims {dims}")
        dtype = _DTYPE_BY_CODE[code]
        offset = fh.tell()
        expected = dtype.itemsize * int(np.prod([int(d) for d in dims], dtype=object))
        if size - offset != expected:
            raise TensorFormatError(
                f"{path}: payload is {size - offset} bytes, expected {expected}"
            )
        if mmap:
            data = np.memmap(path, dtype=dtype, mode="r", offset=offset, shape=dims)
        else:
            data = np.fromfile(fh, dtype=dtype, count=int(np.prod(dims))).reshape(dims)
    if check_finite and not np.isfinite(data).all():
        raise TensorFormatError(f"{path}: payload contains non-finite values")
    return data

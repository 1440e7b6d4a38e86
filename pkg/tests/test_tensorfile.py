import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from brainalign.errors import TensorFormatError
from brainalign.tensorfile import MAGIC, VERSION, read_tensor, write_tensor

# allow_subnormal=False: numba's LLVM runtime flushes subnormals to zero
# (FTZ), which hypothesis detects and refuses to generate through.
finite_f64 = st.floats(
    min_value=-1e300,
    max_value=1e300,
    allow_nan=False,
    allow_infinity=False,
    allow_subnormal=False,
)
finite_f32 = st.floats(
    min_value=np.float32(-1e30),
    max_value=np.float32(1e30),
    allow_nan=False,
    allow_infinity=False,
    allow_subnormal=False,
    width=32,
)


@given(arrays(np.float64, array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5), elements=finite_f64))
def test_roundtrip_float64(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("rt") / "t.btsr"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float64
    assert back.shape == arr.shape
    np.testing.assert_array_equal(back, arr)


@given(arrays(np.float32, array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5), elements=finite_f32))
def test_roundtrip_float32_preserves_dtype(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("rt32") / "t.btsr"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, arr)


def test_integer_input_stored_as_float64(tmp_path):
    path = tmp_path / "t.btsr"
    write_tensor(path, np.arange(6).reshape(2, 3))
    back = read_tensor(path)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, np.arange(6.0).reshape(2, 3))


def test_mmap_matches_eager_read(tmp_path):
    path = tmp_path / "t.btsr"
    arr = np.random.default_rng(0).standard_normal((7, 5)).astype(np.float32)
    write_tensor(path, arr)
    eager = read_tensor(path)
    lazy = read_tensor(path, mmap=True)
    assert isinstance(lazy, np.memmap)
    np.testing.assert_array_equal(np.asarray(lazy), eager)


@pytest.mark.parametrize("bad", [np.float64(3.0), np.zeros((2, 2, 2, 2, 2))])
def test_write_rejects_bad_rank(tmp_path, bad):
    with pytest.raises(TensorFormatError, match="rank"):
        write_tensor(tmp_path / "t.btsr", bad)


def test_write_rejects_empty_dim(tmp_path):
    with pytest.raises(TensorFormatError, match="degenerate"):
        write_tensor(tmp_path / "t.btsr", np.zeros((3, 0)))


@pytest.mark.parametrize("value", [np.nan, np.inf, -np.inf])
def test_write_rejects_nonfinite(tmp_path, value):
    with pytest.raises(TensorFormatError, match="non-finite"):
        write_tensor(tmp_path / "t.btsr", np.array([1.0, value]))


def _raw(magic=MAGIC, version=VERSION, code=2, dims=(3,), payload=None):
    if payload is None:
        payload = np.zeros(int(np.prod(dims)), dtype="<f8").tobytes()
    head = struct.pack("<4sIBB", magic, version, code, len(dims))
    head += struct.pack(f"<{len(dims)}Q", *dims)
    return head + payload


@pytest.mark.parametrize(
    "raw, match",
    [
        (_raw(magic=b"NOPE"), "magic"),
        (_raw(version=9), "version"),
        (_raw(code=7), "dtype code"),
        (_raw(dims=(0,)), "degenerate"),
        (_raw()[:10], "truncated"),
        (_raw() + b"xx", "payload"),
        (_raw()[:-4], "payload"),
        (
            _raw(payload=np.array([1.0, np.nan, 2.0], "<f8").tobytes()),
            "non-finite",
        ),
    ],
)
def test_read_rejects_corrupt_files(tmp_path, raw, match):
    path = tmp_path / "bad.btsr"
    path.write_bytes(raw)
    with pytest.raises(TensorFormatError, match=match):
        read_tensor(path)


def test_rank_out_of_range_header(tmp_path):
    head = struct.pack("<4sIBB", MAGIC, VERSION, 2, 5) + struct.pack("<5Q", *(1,) * 5)
    path = tmp_path / "bad.btsr"
    path.write_bytes(head + np.zeros(1, "<f8").tobytes())
    with pytest.raises(TensorFormatError, match="rank"):
        read_tensor(path)


def test_check_finite_can_be_disabled(tmp_path):
    path = tmp_path / "nan.btsr"
    path.write_bytes(_raw(payload=np.array([1.0, np.nan, 2.0], "<f8").tobytes()))
    back = read_tensor(path, check_finite=False)
    assert np.isnan(back[1])

"""Self-describing binary tensor files used to exchange arrays between stages.

Layout (all integers little-endian):

    bytes 0-3   magic ``VXT1``
    u32         version (currently 1)
    u8          dtype code: 1 = float32, 2 = float64
    u8          ndim (>= 1)
    ndim * u64  shape
    payload     row-major values, little-endian
"""

import math
import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"VXT1"
VERSION = 1

_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {"float32": 1, "float64": 2}

_FIXED_HEADER = struct.Struct("<IBB")


def write_tensor(array, path):
    """Write a float array to `path` in the VXT1 layout.

    Accepts float32 and float64 arrays of ndim >= 1. The on-disk dtype
    matches the array's dtype.
    """
    arr = np.asarray(array)
    if arr.ndim < 1:
        raise TensorFormatError("ndim must be >= 1")
    if arr.size == 0:
        raise TensorFormatError("array must be non-empty")
    code = _CODES.get(arr.dtype.name)
    if code is None:
        raise TensorFormatError(
            f"dtype {arr.dtype.name} unsupported (use float32 or float64)"
        )
    header = MAGIC + _FIXED_HEADER.pack(VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr.astype(_DTYPES[code], copy=False)).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _parse_header(raw, path):
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise TensorFormatError(f"bad magic in {path}")
    if len(raw) < 4 + _FIXED_HEADER.size:
        raise TensorFormatError(
            f"truncated header in {path}: {len(raw)} bytes is too short"
        )
    version, code, ndim = _FIXED_HEADER.unpack_from(raw, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version} in {path}")
    if code not in _DTYPES:
        raise TensorFormatError(f"unknown dtype code {code} in {path}")
    if ndim < 1:
        raise TensorFormatError(f"ndim must be >= 1, got {ndim} in {path}")
    header_len = 4 + _FIXED_HEADER.size + 8 * ndim
    if len(raw) < header_len:
        raise TensorFormatError(
            f"truncated shape block in {path}: expected {header_len} header "
            f"bytes, got {len(raw)}"
        )
    shape = struct.unpack_from(f"<{ndim}Q", raw, 4 + _FIXED_HEADER.size)
    return _DTYPES[code], shape, header_len


def read_tensor_header(path):
    """Return (dtype, shape) from a VXT1 file without loading the payload.

    Also verifies that the file size matches the declared shape.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(4 + _FIXED_HEADER.size + 8 * 255)
    dtype, shape, header_len = _parse_header(raw, path)
    expected = header_len + math.prod(shape) * dtype.itemsize
    _check_size(expected, path.stat().st_size, path)
    return dtype, shape


def _check_size(expected, actual, path):
    if actual == expected:
        return
    detail = (
        f"short by {expected - actual}"
        if actual < expected
        else f"{actual - expected} extra bytes"
    )
    raise TensorFormatError(
        f"payload size mismatch in {path}: expected {expected} bytes, "
        f"got {actual} ({detail})"
    )


def read_tensor(path):
    """Read a VXT1 file into a float64 array.

    float32 payloads are widened to float64 (the canonical compute dtype);
    widening is exact, so round trips preserve every stored value.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    dtype, shape, header_len = _parse_header(raw, path)
    n_values = math.prod(shape)
    _check_size(header_len + n_values * dtype.itemsize, len(raw), path)
    flat = np.frombuffer(raw, dtype=dtype, count=n_values, offset=header_len)
    return flat.reshape(shape).astype(np.float64)

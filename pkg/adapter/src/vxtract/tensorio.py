"""Reader/writer for the pipeline's binary tensor interchange files.

Implements the published VXT1 layout so emitted features can be consumed
by the encoding-model tools directly: magic ``VXT1``, u32 version, u8
dtype code (1=float32, 2=float64), u8 ndim, ndim u64 dims, then the
row-major little-endian payload. Writes are atomic (temp file + rename).
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"VXT1"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {"float32": 1, "float64": 2}


class TensorIOError(ValueError):
    pass


def write_tensor(array, path):
    arr = np.asarray(array)
    if arr.ndim < 1 or arr.size == 0:
        raise TensorIOError("need a non-empty array with ndim >= 1")
    code = _CODES.get(arr.dtype.name)
    if code is None:
        raise TensorIOError(f"unsupported dtype {arr.dtype.name}")
    path = Path(path)
    header = MAGIC + struct.pack("<IBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr.astype(_DTYPES[code], copy=False)).tobytes()
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_tensor(path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise TensorIOError(f"bad magic in {path}")
    version, code, ndim = struct.unpack_from("<IBB", raw, 4)
    if version != VERSION:
        raise TensorIOError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise TensorIOError(f"unknown dtype code {code}")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 10)
    dtype = _DTYPES[code]
    offset = 10 + 8 * ndim
    count = int(np.prod(shape))
    if len(raw) != offset + count * dtype.itemsize:
        raise TensorIOError(f"size mismatch in {path}")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()

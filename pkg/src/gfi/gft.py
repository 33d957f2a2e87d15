"""GFT1 binary tensor container.

Layout: 4-byte magic "GFT1", u8 dtype code (0 = float32, 1 = float64),
u8 ndim, 6 reserved zero bytes, ndim little-endian u32 dims, then the
row-major little-endian payload.
"""

import struct

import numpy as np

MAGIC = b"GFT1"
_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_RCODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_tensor(f, arr):
    """Write one array as a GFT1 record to a binary file object."""
    arr = np.asarray(arr)
    if arr.dtype not in _RCODES:
        raise TypeError(f"GFT1 stores float32/float64 only, got {arr.dtype}")
    if arr.ndim > 255:
        raise ValueError("too many dims")
    f.write(MAGIC)
    f.write(struct.pack("<BB6x", _RCODES[arr.dtype], arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def read_tensor(f):
    """Read one GFT1 record; raises ValueError on a malformed header."""
    magic = f.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad GFT1 magic {magic!r}")
    head = f.read(8)
    if len(head) != 8:
        raise ValueError("truncated GFT1 header")
    code, ndim = struct.unpack("<BB6x", head)
    if code not in _CODES:
        raise ValueError(f"unknown GFT1 dtype code {code}")
    dims_raw = f.read(4 * ndim)
    if len(dims_raw) != 4 * ndim:
        raise ValueError("truncated GFT1 dims")
    shape = struct.unpack(f"<{ndim}I", dims_raw)
    dtype = _CODES[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    payload = f.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise ValueError("truncated GFT1 payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="))


def save(path, arr):
    with open(path, "wb") as f:
        write_tensor(f, arr)


def load(path):
    with open(path, "rb") as f:
        arr = read_tensor(f)
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after tensor")
    return arr

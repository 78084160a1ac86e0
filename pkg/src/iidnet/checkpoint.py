"""Flat named-array container used for checkpoints.

Byte layout (all integers little-endian, array data C-order little-endian):

    offset  size        field
    0       4           magic b"IIDC"
    4       4           format version, uint32 (currently 1)
    8       4           entry count, uint32
    then per entry:
            2           name length, uint16
            n           name, UTF-8
            1           dtype code, uint8 (0=float32, 1=float64, 2=int64, 3=uint8)
            1           ndim, uint8
            4 * ndim    dims, uint32 each
            prod(dims) * itemsize   raw array data

Round trips are bit-exact: arrays are written with tobytes() and recovered
with frombuffer() at the same dtype. Loading parses the entire file from an
in-memory buffer, so a truncated or corrupt file raises before any state is
handed out.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"IIDC"
FORMAT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_CODE_FOR_DTYPE = {v: k for k, v in _DTYPE_CODES.items()}


def save_arrays(path: str, arrays: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        if np.dtype(dtype) not in _CODE_FOR_DTYPE:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for entry {name!r}")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise CheckpointError(f"entry name too long: {name!r}")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<BB", _CODE_FOR_DTYPE[np.dtype(dtype)], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(dtype, copy=False).tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp, path)


def load_arrays(path: str) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}")

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated while reading {what}")
        out = buf[pos : pos + n]
        pos += n
        return out

    pos = 0
    if take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2, "entry header"))
        if code not in _DTYPE_CODES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, "dims"))
        dtype = _DTYPE_CODES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        data = np.frombuffer(take(nbytes, f"data of {name!r}"), dtype=dtype).reshape(dims)
        arrays[name] = data.copy()
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return arrays

"""Binary grid container used for scenes, basis stacks, masks, and sparse sets.

Layout, all little-endian:

    bytes 0..3   magic "DBF1"
    bytes 4..15  height, width, channels as uint32
    byte  16     dtype code: 0 = float32, 1 = float64
    rest         payload, channel-planar (channel varies slowest),
                 rows in row-major order

The payload length must match the header exactly and values must be
finite; readers reject anything else.  Sparse depth sets ride in the same
container as an N x 1 x 3 grid with channels (pixel_id, depth, sigma).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import GridFormatError
from .fitter import SparseDepthSet

MAGIC = b"DBF1"
_HEADER = struct.Struct("<4sIIIB")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_grid(path, array: np.ndarray, dtype=np.float64) -> None:
    """Write an (H, W) or (H, W, C) array; dtype selects the on-disk precision."""
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise GridFormatError(f"expected (H, W) or (H, W, C), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridFormatError("refusing to write non-finite values")
    dt = np.dtype(dtype)
    if dt not in _CODES:
        raise GridFormatError(f"unsupported dtype {dt}; use float32 or float64")
    h, w, c = arr.shape
    planar = np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=dt.newbyteorder("<"))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, h, w, c, _CODES[dt]))
        fh.write(planar.tobytes())


def read_grid(path) -> np.ndarray:
    """Read a grid file back as an (H, W, C) array in its stored precision."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise GridFormatError(f"file too short for a header: {len(blob)} bytes")
    magic, h, w, c, code = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise GridFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if code not in _DTYPES:
        raise GridFormatError(f"unknown dtype code {code}")
    dt = _DTYPES[code]
    expected = h * w * c * dt.itemsize
    payload = blob[_HEADER.size :]
    if len(payload) != expected:
        raise GridFormatError(
            f"payload length {len(payload)} does not match header "
            f"({h}x{w}x{c} {dt.name} = {expected} bytes)"
        )
    arr = np.frombuffer(payload, dtype=dt).reshape(c, h, w).transpose(1, 2, 0).copy()
    if not np.all(np.isfinite(arr)):
        raise GridFormatError("grid payload contains non-finite values")
    return arr


def write_sparse_set(path, samples: SparseDepthSet) -> None:
    """Store a sparse depth set as an N x 1 x 3 float64 grid."""
    n = samples.count
    arr = np.empty((n, 1, 3))
    arr[:, 0, 0] = samples.pixel_ids
    arr[:, 0, 1] = samples.depths
    arr[:, 0, 2] = samples.sigmas
    write_grid(path, arr, dtype=np.float64)


def read_sparse_set(path) -> SparseDepthSet:
    arr = read_grid(path)
    if arr.shape[1] != 1 or arr.shape[2] != 3:
        raise GridFormatError(
            f"sparse set grids must be N x 1 x 3, got {arr.shape}"
        )
    ids = arr[:, 0, 0].astype(np.float64)
    if not np.all(ids == np.floor(ids)) or np.any(ids < 0):
        raise GridFormatError("pixel ids must be non-negative integers")
    return SparseDepthSet(
        depths=arr[:, 0, 1].astype(np.float64),
        sigmas=arr[:, 0, 2].astype(np.float64),
        pixel_ids=ids.astype(np.int64),
    )

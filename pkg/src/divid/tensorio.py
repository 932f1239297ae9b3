"""DVTN tensor container: magic "DVTN", version byte, element-type code,
dimension count, dimension sizes as 64-bit little-endian, then row-major
little-endian payload. Self-describing and endianness-fixed so files written
on one platform read identically on another.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError

MAGIC = b"DVTN"
VERSION = 1
MAX_DIMS = 4

# element-type code -> little-endian numpy dtype
_DTYPES = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i4"),
    4: np.dtype("<i8"),
    5: np.dtype("|u1"),
}
_CODES = {dt: code for code, dt in _DTYPES.items()}


def write_tensor(values: np.ndarray, locator) -> None:
    values = np.asarray(values)
    if values.ndim > MAX_DIMS:
        raise UsageError(f"DVTN supports up to {MAX_DIMS} dims, got {values.ndim}")
    le = values.dtype.newbyteorder("<") if values.dtype.byteorder == ">" else values.dtype
    key = np.dtype(le.str.replace(">", "<").replace("=", "<"))
    if key not in _CODES:
        raise UsageError(f"unsupported element type {values.dtype}")
    if np.issubdtype(values.dtype, np.floating) and not np.all(np.isfinite(values)):
        raise UsageError("refusing to write non-finite values")
    header = MAGIC + struct.pack("<BBB", VERSION, _CODES[key], values.ndim)
    header += struct.pack(f"<{values.ndim}q", *values.shape)
    payload = np.ascontiguousarray(values).astype(key, copy=False).tobytes()
    Path(locator).write_bytes(header + payload)


def read_tensor(locator) -> np.ndarray:
    path = Path(locator)
    if not path.exists():
        raise DataError(f"tensor file not found: {locator}")
    blob = path.read_bytes()
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise DataError(f"{locator}: not a DVTN file (bad magic)")
    version, code, ndim = struct.unpack("<BBB", blob[4:7])
    if version != VERSION:
        raise DataError(f"{locator}: unsupported DVTN version {version}")
    if code not in _DTYPES:
        raise DataError(f"{locator}: unknown element-type code {code}")
    if ndim > MAX_DIMS:
        raise DataError(f"{locator}: dimension count {ndim} exceeds {MAX_DIMS}")
    dims_end = 7 + 8 * ndim
    if len(blob) < dims_end:
        raise DataError(f"{locator}: truncated header")
    shape = struct.unpack(f"<{ndim}q", blob[7:dims_end])
    if any(d < 0 for d in shape):
        raise DataError(f"{locator}: negative dimension in {shape}")
    dtype = _DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise DataError(
            f"{locator}: payload size {len(payload)} != header-implied {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()

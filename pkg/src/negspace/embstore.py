"""Embedding matrices: binary file format, normalization, similarity kernels.

The on-disk layout (all little-endian) is:

    magic    8 bytes  b"NEGSPC01"
    version  uint16   currently 1
    dtype    uint8    0 = float32 (the only defined code)
    rows     uint64
    dim      uint32
    payload  rows*dim float32, row-major
    crc32    uint32   CRC32 of the payload bytes

Matrices are immutable after construction (the numpy buffer is marked
read-only) and therefore safe to share across threads.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from negspace import kernels
from negspace.errors import (
    CorruptError,
    DataError,
    DegenerateRowError,
    FormatError,
    ShapeError,
)

MAGIC = b"NEGSPC01"
VERSION = 1
DTYPE_FLOAT32 = 0

_HEADER = struct.Struct("<8sHBQI")
_CRC = struct.Struct("<I")

# tolerance of the stored-file unit-norm invariant
NORM_ATOL = 1e-3


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense rows x dim float32 matrix with a unit-norm flag."""

    data: np.ndarray
    normalized: bool = False
    _skip_checks: bool = field(default=False, repr=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ShapeError(f"embedding matrix must be 2-D, got {arr.ndim}-D")
        if not self._skip_checks:
            if not np.isfinite(arr).all():
                raise DataError("embedding matrix contains non-finite values")
            if self.normalized:
                norms = np.linalg.norm(arr.astype(np.float64), axis=1)
                bad = np.where(np.abs(norms - 1.0) > NORM_ATOL)[0]
                if bad.size:
                    raise DataError(
                        f"normalized flag set but row {bad[0]} has norm {norms[bad[0]]:.6f}"
                    )
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    def array64(self) -> np.ndarray:
        """Float64 copy, for accumulation-heavy callers."""
        return self.data.astype(np.float64)


def load(path: str | os.PathLike) -> EmbeddingMatrix:
    """Read an embedding file; returns a matrix with normalized=False."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size + _CRC.size:
        raise FormatError(f"{path}: file too short for header")
    magic, version, dtype, rows, dim = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"{path}: unknown dtype code {dtype}")
    payload_len = rows * dim * 4
    expected = _HEADER.size + payload_len + _CRC.size
    if len(raw) != expected:
        raise CorruptError(f"{path}: expected {expected} bytes, found {len(raw)}")
    payload = raw[_HEADER.size:_HEADER.size + payload_len]
    (crc,) = _CRC.unpack_from(raw, _HEADER.size + payload_len)
    if zlib.crc32(payload) != crc:
        raise CorruptError(f"{path}: payload checksum mismatch")
    arr = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    if not np.isfinite(arr).all():
        raise DataError(f"{path}: payload contains non-finite values")
    return EmbeddingMatrix(arr, normalized=False)


def _encode(m: EmbeddingMatrix) -> bytes:
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, m.rows, m.dim)
    return header + payload + _CRC.pack(zlib.crc32(payload))


def save(m: EmbeddingMatrix, path: str | os.PathLike) -> None:
    """Write an embedding file atomically (temp file + rename)."""
    write_bytes_atomic(path, _encode(m))


def write_bytes_atomic(path: str | os.PathLike, blob: bytes) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Unit-normalize every row (float64 math, float32 storage).

    Already-normalized matrices are returned unchanged, which is what makes
    normalization bitwise idempotent after the first pass.
    """
    if m.normalized:
        return m
    arr = m.array64()
    norms = np.linalg.norm(arr, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise DegenerateRowError(int(zero[0]))
    out = (arr / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(out, normalized=True, _skip_checks=True)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"vector dims differ: {a.shape[0]} vs {b.shape[0]}")
    return float(np.clip(a @ b, -1.0, 1.0))


def sim_matrix(a: EmbeddingMatrix, b: EmbeddingMatrix) -> np.ndarray:
    """rowsA x rowsB cosine similarities; requires both inputs normalized."""
    if a.dim != b.dim:
        raise ShapeError(f"embedding dims differ: {a.dim} vs {b.dim}")
    if not (a.normalized and b.normalized):
        raise DataError("sim_matrix requires normalized inputs")
    return kernels.sim_matrix(a.data, b.data)

"""Binary containers shared across modules.

Two little-endian formats:
  matrix container  -- magic 'PSMX', u32 version, u32 rows, u32 cols,
                       then rows*cols float64 row-major.
  tensor table      -- magic 'PSCT', u32 version, u32 count, then per entry
                       u32 name length, utf-8 name, u32 ndim, u32 dims...,
                       float64 data row-major. Used for checkpoints.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError

MATRIX_MAGIC = b"PSMX"
TABLE_MAGIC = b"PSCT"
FORMAT_VERSION = 1


def save_matrix(path, matrix):
    m = np.ascontiguousarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise ValueError(f"save_matrix: expected 2-D matrix, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MATRIX_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
        version, rows, cols = struct.unpack("<III", fh.read(12))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported container version {version}")
        data = fh.read(8 * rows * cols)
        if len(data) != 8 * rows * cols:
            raise DataError(f"{path}: truncated matrix payload")
        return np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()


def save_tensor_table(path, table):
    """Write a name -> array mapping; iteration order is sorted by name so
    files are byte-reproducible."""
    with open(path, "wb") as fh:
        fh.write(TABLE_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(table)))
        for name in sorted(table):
            arr = np.ascontiguousarray(table[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_tensor_table(path):
    out = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TABLE_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {TABLE_MAGIC!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported table version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            data = fh.read(8 * n)
            if len(data) != 8 * n:
                raise DataError(f"{path}: truncated entry {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    return out

"""Binary and CSV serialization of density matrices.

Binary layout (all little-endian)::

    offset  size  field
    0       4     magic b"ELDM"
    4       2     format version (1)
    6       2     qubit count
    8       8     rows (uint64)
    16      8     cols (uint64)
    24      ...   rows * cols pairs of float64 (re, im), row-major
"""
from __future__ import annotations

import csv
import io
import struct

import numpy as np

from .errors import ValidationError
from .quantum import DensityMatrix

MAGIC = b"ELDM"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")


def to_bytes(rho: DensityMatrix) -> bytes:
    rows, cols = rho.data.shape
    body = np.ascontiguousarray(rho.data, dtype="<c16").tobytes()
    return _HEADER.pack(MAGIC, VERSION, rho.n_qubits, rows, cols) + body


def from_bytes(buf: bytes) -> DensityMatrix:
    if len(buf) < _HEADER.size:
        raise ValidationError("truncated density-matrix header")
    magic, version, n, rows, cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValidationError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValidationError(f"unsupported format version {version}")
    if rows != cols or rows != 2 ** n:
        raise ValidationError(f"dims {rows}x{cols} do not match {n} qubits")
    expected = _HEADER.size + rows * cols * 16
    if len(buf) != expected:
        raise ValidationError(f"expected {expected} bytes, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<c16", offset=_HEADER.size)
    return DensityMatrix(data.reshape(rows, cols).astype(complex), n)


def write_density_matrix(path, rho: DensityMatrix):
    with open(path, "wb") as fh:
        fh.write(to_bytes(rho))


def read_density_matrix(path) -> DensityMatrix:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def to_csv(rho: DensityMatrix) -> str:
    """Columns ``row, col, re, im`` for every entry."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "re", "im"])
    for (i, j), z in np.ndenumerate(rho.data):
        w.writerow([i, j, repr(float(z.real)), repr(float(z.imag))])
    return buf.getvalue()

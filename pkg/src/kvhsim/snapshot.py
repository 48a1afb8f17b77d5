"""Binary field snapshots and small-grid CSV export.

Layout: a 32-byte little-endian header

    magic "KWPH" | version u16 | kind u8 | dim u8 | nq u32 | np u32 | 16 reserved bytes

followed by float64 (re, im) pairs. Kind 0 is a complex scalar field in
row-major (q outer, p inner) order; kind 1 is an n x n matrix field stored
node-major, each node's matrix row-major.
"""
from __future__ import annotations

import csv
import struct

import numpy as np

MAGIC = b"KWPH"
VERSION = 1
_HEADER = struct.Struct("<4sHBBII16x")
assert _HEADER.size == 32

KIND_SCALAR = 0
KIND_MATRIX = 1


def write_snapshot(path, field):
    """Write a scalar ``(nq, np)`` or matrix ``(n, n, nq, np)`` field."""
    field = np.asarray(field)
    if field.ndim == 2:
        kind, dim = KIND_SCALAR, 1
        nq, np_ = field.shape
        body = field
    elif field.ndim == 4 and field.shape[0] == field.shape[1]:
        kind, dim = KIND_MATRIX, field.shape[0]
        nq, np_ = field.shape[2:]
        body = np.moveaxis(field, (0, 1), (2, 3))  # node-major
    else:
        raise ValueError(f"cannot snapshot array of shape {field.shape}")
    data = np.ascontiguousarray(body, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, dim, nq, np_))
        fh.write(data.tobytes())


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns the array in package layout."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, kind, dim, nq, np_ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if kind == KIND_SCALAR:
        return body.reshape(nq, np_).copy()
    if kind == KIND_MATRIX:
        return np.moveaxis(body.reshape(nq, np_, dim, dim), (2, 3), (0, 1)).copy()
    raise ValueError(f"{path}: unknown kind {kind}")


def write_field_csv(path, grid, field):
    """Rows of ``q, p, re, im`` for a scalar field."""
    field = grid.check(field)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "p", "re", "im"])
        for i, q in enumerate(grid.q):
            for j, p in enumerate(grid.p):
                z = complex(field[i, j])
                w.writerow([repr(float(q)), repr(float(p)), repr(z.real), repr(z.imag)])

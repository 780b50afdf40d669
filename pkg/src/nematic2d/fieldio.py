"""Binary field snapshots and CSV exports.

Snapshot layout (all little-endian)::

    b"NEMF" | u32 version = 1 | u64 nx | u64 ny | u64 n_components
    then each component as nx*ny interleaved (re, im) float64, row-major
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"NEMF"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")


class SnapshotFormatError(ValueError):
    pass


def encode_snapshot(components) -> bytes:
    arr = np.asarray(components, dtype=complex)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise SnapshotFormatError("expected an (n_components, nx, ny) stack")
    nc, nx, ny = arr.shape
    body = np.ascontiguousarray(arr).astype("<c16").tobytes()
    return _HEADER.pack(MAGIC, VERSION, nx, ny, nc) + body


def decode_snapshot(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("truncated header")
    magic, version, nx, ny, nc = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported version {version}")
    expected = _HEADER.size + 16 * nx * ny * nc
    if len(data) != expected:
        raise SnapshotFormatError(f"expected {expected} bytes, got {len(data)}")
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    return body.reshape(nc, nx, ny).astype(complex)


def write_snapshot(path, components):
    with open(path, "wb") as fh:
        fh.write(encode_snapshot(components))


def read_snapshot(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())


def fmt(v) -> str:
    return "%.12e" % v


def field_csv_lines(field):
    """Lines of ``x,y,re,im,abs,arg`` for a ComplexField."""
    g = field.grid
    z = g.z
    v = field.values
    yield "x,y,re,im,abs,arg"
    for i in range(g.nx):
        for j in range(g.ny):
            c = v[i, j]
            yield ",".join(fmt(t) for t in (z[i, j].real, z[i, j].imag, c.real, c.imag, abs(c), np.angle(c)))


def write_field_csv(path, field):
    with open(path, "w") as fh:
        for line in field_csv_lines(field):
            fh.write(line + "\n")

"""Binary persistence of a :class:`~tricoil.actuation.FieldLibrary`.

Layout::

    8 bytes   magic  b"TRICOIL\\0"
    8 bytes   header length, unsigned little-endian
    N bytes   UTF-8 JSON header (sorted keys)
    payload   little-endian float64

For every theta (ascending) and every node (x fastest, then y, then z) the
payload holds 39 floats: ``x, y, z``, the 9 entries of ``A`` (row-major,
``A[m, k]``), then the 27 entries of the gradient basis (``G[k, m, n]``).
Invalid nodes carry NaN in the ``A`` and ``G`` slots.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from tricoil.actuation import FieldLibrary, LibrarySlice

MAGIC = b"TRICOIL\0"
FORMAT_VERSION = 1
FLOATS_PER_NODE = 39


class LibraryFileError(ValueError):
    pass


class VersionMismatchError(LibraryFileError):
    pass


class HashMismatchError(LibraryFileError):
    pass


class TruncatedFileError(LibraryFileError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary sibling file and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _payload(lib: FieldLibrary) -> bytes:
    parts = []
    for s in sorted(lib.slices, key=lambda s: s.theta):
        n = s.z.size * s.y.size * s.x.size
        block = np.empty((n, FLOATS_PER_NODE))
        block[:, :3] = s.nodes().reshape(n, 3)
        block[:, 3:12] = s.A.reshape(n, 9)
        block[:, 12:] = s.G.reshape(n, 27)
        parts.append(block.astype("<f8").tobytes())
    return b"".join(parts)


def encode_library(lib: FieldLibrary) -> bytes:
    payload = _payload(lib)
    header = {
        "format_version": FORMAT_VERSION,
        "magic": MAGIC.rstrip(b"\0").decode(),
        "node_order": "x fastest, then y, then z, then theta",
        "floats_per_node": FLOATS_PER_NODE,
        "node_layout": ["x", "y", "z", "A[m,k] row-major (9)", "G[k,m,n] (27)"],
        "endianness": "little",
        "metadata": lib.metadata,
        "thetas_rad": [s.theta for s in sorted(lib.slices, key=lambda s: s.theta)],
        "grids": [{"x": s.x.tolist(), "y": s.y.tolist(), "z": s.z.tolist()}
                  for s in sorted(lib.slices, key=lambda s: s.theta)],
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + payload


def content_hash(lib: FieldLibrary) -> str:
    return hashlib.sha256(encode_library(lib)).hexdigest()


def write_library(lib: FieldLibrary, path) -> str:
    """Write ``lib`` atomically; returns the payload SHA-256."""
    data = encode_library(lib)
    atomic_write_bytes(path, data)
    hlen = struct.unpack("<Q", data[8:16])[0]
    return json.loads(data[16:16 + hlen])["payload_sha256"]


def decode_library(data: bytes) -> FieldLibrary:
    if len(data) < 16:
        raise TruncatedFileError("file too short for a library header")
    if data[:8] != MAGIC:
        raise LibraryFileError("not a library file (bad magic)")
    hlen = struct.unpack("<Q", data[8:16])[0]
    if len(data) < 16 + hlen:
        raise TruncatedFileError("file truncated inside the header")
    try:
        header = json.loads(data[16:16 + hlen])
    except json.JSONDecodeError as exc:
        raise LibraryFileError(f"unreadable header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"library format version {version!r}; this reader supports {FORMAT_VERSION}")
    payload = data[16 + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise TruncatedFileError(
            f"payload has {len(payload)} bytes, header declares {header['payload_bytes']}")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise HashMismatchError("payload SHA-256 does not match header")
    values = np.frombuffer(payload, dtype="<f8")
    slices, offset = [], 0
    for theta, grid in zip(header["thetas_rad"], header["grids"]):
        x, y, z = (np.array(grid[k], dtype=float) for k in ("x", "y", "z"))
        n = x.size * y.size * z.size
        block = values[offset:offset + n * FLOATS_PER_NODE].reshape(n, FLOATS_PER_NODE)
        offset += n * FLOATS_PER_NODE
        shape = (z.size, y.size, x.size)
        slices.append(LibrarySlice(float(theta), x, y, z,
                                   block[:, 3:12].reshape(shape + (3, 3)).copy(),
                                   block[:, 12:].reshape(shape + (3, 3, 3)).copy()))
    if offset != values.size:
        raise LibraryFileError("payload size inconsistent with grids")
    return FieldLibrary(slices, header["metadata"])


def read_library(path) -> FieldLibrary:
    return decode_library(Path(path).read_bytes())

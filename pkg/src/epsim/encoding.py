"""Canonical byte encodings shared by the ledgers and file formats.

Key-value stores serialise as length-prefixed pairs sorted by key, so a
given logical state has exactly one byte form and one digest.
"""

from __future__ import annotations

import struct

from .errors import SnapshotFormatError


def u16be(n: int) -> bytes:
    return struct.pack(">H", n)


def u32be(n: int) -> bytes:
    return struct.pack(">I", n)


def u64be(n: int) -> bytes:
    return struct.pack(">Q", n)


def read_u16be(data: bytes, off: int) -> tuple[int, int]:
    if off + 2 > len(data):
        raise SnapshotFormatError("truncated u16")
    return struct.unpack_from(">H", data, off)[0], off + 2


def read_u64be(data: bytes, off: int) -> tuple[int, int]:
    if off + 8 > len(data):
        raise SnapshotFormatError("truncated u64")
    return struct.unpack_from(">Q", data, off)[0], off + 8


def blob(data: bytes) -> bytes:
    """Length-prefixed byte string."""
    return u32be(len(data)) + data


def read_blob(data: bytes, off: int) -> tuple[bytes, int]:
    if off + 4 > len(data):
        raise SnapshotFormatError("truncated length prefix")
    (n,) = struct.unpack_from(">I", data, off)
    off += 4
    if off + n > len(data):
        raise SnapshotFormatError("truncated blob")
    return data[off:off + n], off + n


def encode_kv(state: dict[bytes, bytes]) -> bytes:
    """Canonical form of a key-value store: sorted, length-prefixed pairs."""
    out = bytearray()
    for key in sorted(state):
        out += blob(key)
        out += blob(state[key])
    return bytes(out)


def decode_kv(data: bytes) -> dict[bytes, bytes]:
    state: dict[bytes, bytes] = {}
    off = 0
    while off < len(data):
        key, off = read_blob(data, off)
        value, off = read_blob(data, off)
        state[key] = value
    return state

"""Canonical byte encodings.

Every integer is fixed width and big-endian, every variable-length field is
prefixed with a u32 length. Digests and signatures are computed over these
bytes, so the layout is part of the wire interface and must stay stable.
"""
from __future__ import annotations

import hashlib
import struct


class DecodeError(ValueError):
    pass


def u8(x: int) -> bytes:
    return struct.pack(">B", x)


def u16(x: int) -> bytes:
    return struct.pack(">H", x)


def u32(x: int) -> bytes:
    return struct.pack(">I", x)


def u64(x: int) -> bytes:
    return struct.pack(">Q", x)


def i64(x: int) -> bytes:
    return struct.pack(">q", x)


def blob(b: bytes) -> bytes:
    return u32(len(b)) + b


def text(s: str) -> bytes:
    return blob(s.encode("utf-8"))


def seq(items) -> bytes:
    """Length-prefixed concatenation of already-encoded items."""
    items = list(items)
    return u32(len(items)) + b"".join(items)


class Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def _take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        out = self.data[self.pos:self.pos + k]
        self.pos += k
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self._take(8))[0]

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        return self.blob().decode("utf-8")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")


def hash_bytes(data: bytes) -> bytes:
    """H*: SHA-256 over canonical bytes."""
    return hashlib.sha256(data).digest()

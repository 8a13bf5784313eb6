"""Canonical byte encoding.

Every signed or hashed structure is a sequence of fields, each written as a
4-byte big-endian length followed by the raw bytes. Nested structures are
encoded first and then wrapped as a single field.
"""

from __future__ import annotations

from .errors import ChainFormatError

_LEN = 4


def field(data: bytes) -> bytes:
    return len(data).to_bytes(_LEN, "big") + data


def encode_fields(*parts: bytes) -> bytes:
    return b"".join(field(p) for p in parts)


def u32(n: int) -> bytes:
    return n.to_bytes(4, "big")


def u64(n: int) -> bytes:
    return n.to_bytes(8, "big")


class Reader:
    """Sequential field reader over a byte string."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def field(self) -> bytes:
        if self.pos + _LEN > len(self.data):
            raise ChainFormatError(f"truncated length prefix at offset {self.pos}")
        n = int.from_bytes(self.data[self.pos : self.pos + _LEN], "big")
        start = self.pos + _LEN
        end = start + n
        if end > len(self.data):
            raise ChainFormatError(f"field at offset {self.pos} overruns input")
        self.pos = end
        return self.data[start:end]

    def int(self, size: int) -> int:
        raw = self.field()
        if len(raw) != size:
            raise ChainFormatError(f"expected {size}-byte integer, got {len(raw)}")
        return int.from_bytes(raw, "big")

    def fixed(self, size: int) -> bytes:
        raw = self.field()
        if len(raw) != size:
            raise ChainFormatError(f"expected {size}-byte field, got {len(raw)}")
        return raw

    def at_end(self) -> bool:
        return self.pos == len(self.data)

    def done(self) -> None:
        if not self.at_end():
            raise ChainFormatError(f"{len(self.data) - self.pos} trailing bytes")


def decode_fields(data: bytes) -> list[bytes]:
    r = Reader(data)
    out = []
    while not r.at_end():
        out.append(r.field())
    return out

"""Canonical length-prefixed serialization shared by every on-chain object.

Each field is written as a 4-byte big-endian length followed by its bytes,
fields concatenated in declaration order. Integers are encoded as 8-byte
big-endian unsigned values before framing, strings as UTF-8.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Iterable, Sequence, Union

Field = Union[bytes, str, int]

_LEN = struct.Struct(">I")
DIGEST_SIZE = 32


class DecodeError(ValueError):
    """Raised when bytes are not a well-formed canonical encoding."""


def field_bytes(value: Field) -> bytes:
    if isinstance(value, bool):
        raise TypeError("booleans must be encoded explicitly as int")
    if isinstance(value, bytes):
        return value
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, int):
        if value < 0:
            raise ValueError("only unsigned integers are encodable")
        return value.to_bytes(8, "big")
    raise TypeError(f"cannot encode {type(value).__name__}")


def encode(fields: Iterable[Field]) -> bytes:
    out = bytearray()
    for value in fields:
        raw = field_bytes(value)
        out += _LEN.pack(len(raw))
        out += raw
    return bytes(out)


def decode(data: bytes, count: int | None = None) -> list[bytes]:
    """Split ``data`` back into its framed fields.

    ``count`` pins the expected number of fields; any mismatch, truncation
    or trailing garbage raises :class:`DecodeError`.
    """
    fields = []
    pos = 0
    end = len(data)
    while pos < end:
        if end - pos < 4:
            raise DecodeError("truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        if end - pos < n:
            raise DecodeError("truncated field")
        fields.append(bytes(data[pos : pos + n]))
        pos += n
    if count is not None and len(fields) != count:
        raise DecodeError(f"expected {count} fields, got {len(fields)}")
    return fields


def decode_int(raw: bytes) -> int:
    if len(raw) != 8:
        raise DecodeError("integer fields are 8 bytes")
    return int.from_bytes(raw, "big")


def encode_list(items: Sequence[bytes]) -> bytes:
    return encode([len(items), *items])


def decode_list(data: bytes) -> list[bytes]:
    parts = decode(data)
    if not parts:
        raise DecodeError("empty list encoding")
    n = decode_int(parts[0])
    if n != len(parts) - 1:
        raise DecodeError("list length mismatch")
    return parts[1:]


def digest(*fields: Field) -> bytes:
    """SHA-256 over the canonical encoding of ``fields``."""
    return hashlib.sha256(encode(fields)).digest()

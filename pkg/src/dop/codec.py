"""Canonical byte encoding of attribute values.

Reals are written as IEEE-754 binary64 bit patterns, so a value read back
compares equal bit for bit.  Each item starts with a one-byte tag:

===  ==========================================================
B    boolean, one byte
I    integer, u32 length + big-endian two's complement
R    real, 8 bytes big-endian binary64
S    string, u32 length + UTF-8
V    tuple of reals (a vector), u32 count + 8 bytes each
T    any other tuple, u32 count + items
L    list, u32 count + items
C    composite (str-keyed dict, insertion order), u32 count + (S key, item)
===  ==========================================================
"""

from __future__ import annotations

import struct

from .errors import TypeMismatch

_U32 = struct.Struct(">I")
_F64 = struct.Struct(">d")


def _is_real(v) -> bool:
    return isinstance(v, float)


def _encode(v, out: bytearray) -> None:
    if isinstance(v, bool):
        out += b"B" + (b"\x01" if v else b"\x00")
    elif isinstance(v, int):
        n = (v.bit_length() + 8) // 8
        out += b"I" + _U32.pack(n) + v.to_bytes(n, "big", signed=True)
    elif isinstance(v, float):
        out += b"R" + _F64.pack(v)
    elif isinstance(v, str):
        raw = v.encode("utf-8")
        out += b"S" + _U32.pack(len(raw)) + raw
    elif isinstance(v, tuple) and all(_is_real(x) for x in v):
        out += b"V" + _U32.pack(len(v))
        for x in v:
            out += _F64.pack(x)
    elif isinstance(v, (tuple, list)):
        out += (b"T" if isinstance(v, tuple) else b"L") + _U32.pack(len(v))
        for x in v:
            _encode(x, out)
    elif isinstance(v, dict):
        out += b"C" + _U32.pack(len(v))
        for k, x in v.items():
            if not isinstance(k, str):
                raise TypeMismatch(f"composite keys must be strings, got {k!r}")
            _encode(k, out)
            _encode(x, out)
    else:
        raise TypeMismatch(f"cannot store a value of type {type(v).__name__}")


def encode_value(value) -> bytes:
    out = bytearray()
    _encode(value, out)
    return bytes(out)


class DecodeError(ValueError):
    pass


def _take(data: bytes, pos: int, n: int) -> tuple[bytes, int]:
    if n < 0 or pos + n > len(data):
        raise DecodeError("truncated value")
    return data[pos:pos + n], pos + n


def _decode(data: bytes, pos: int):
    tag, pos = _take(data, pos, 1)
    if tag == b"B":
        b, pos = _take(data, pos, 1)
        if b not in (b"\x00", b"\x01"):
            raise DecodeError("bad boolean")
        return b == b"\x01", pos
    if tag == b"R":
        raw, pos = _take(data, pos, 8)
        return _F64.unpack(raw)[0], pos
    raw, pos = _take(data, pos, 4)
    (n,) = _U32.unpack(raw)
    if tag == b"I":
        raw, pos = _take(data, pos, n)
        return int.from_bytes(raw, "big", signed=True), pos
    if tag == b"S":
        raw, pos = _take(data, pos, n)
        try:
            return raw.decode("utf-8"), pos
        except UnicodeDecodeError as e:
            raise DecodeError(str(e)) from None
    if tag == b"V":
        raw, pos = _take(data, pos, 8 * n)
        return tuple(_F64.unpack_from(raw, 8 * i)[0] for i in range(n)), pos
    if tag in (b"T", b"L"):
        items = []
        for _ in range(n):
            x, pos = _decode(data, pos)
            items.append(x)
        return (tuple(items) if tag == b"T" else items), pos
    if tag == b"C":
        out = {}
        for _ in range(n):
            k, pos = _decode(data, pos)
            if not isinstance(k, str):
                raise DecodeError("composite key is not a string")
            out[k], pos = _decode(data, pos)
        return out, pos
    raise DecodeError(f"unknown tag {tag!r}")


def decode_value(data: bytes):
    value, pos = _decode(data, 0)
    if pos != len(data):
        raise DecodeError("trailing bytes after value")
    return value

"""Self-describing binary encoding of protocol messages.

Layout: version byte, kind (string), field count (u16), then per field its
name (string), a one-byte type code and the value. Strings are u32 length +
UTF-8. Integers and floats are little-endian 8-byte; arrays are u64 length +
little-endian int64 elements.
"""
from __future__ import annotations

import struct

import numpy as np

from .messages import MESSAGE_TYPES, message_fields

WIRE_VERSION = 1

_INT, _FLOAT, _STR, _BOOL, _ARRAY = b"i", b"f", b"s", b"b", b"a"


class WireError(ValueError):
    pass


def _put_str(out: list, s: str) -> None:
    raw = s.encode("utf-8")
    out.append(struct.pack("<I", len(raw)))
    out.append(raw)


def encode(msg) -> bytes:
    out: list[bytes] = [bytes([WIRE_VERSION])]
    _put_str(out, msg.kind)
    fields = message_fields(msg)
    out.append(struct.pack("<H", len(fields)))
    for name, v in fields.items():
        _put_str(out, name)
        if isinstance(v, (bool, np.bool_)):
            out += [_BOOL, struct.pack("<?", bool(v))]
        elif isinstance(v, (int, np.integer)):
            out += [_INT, struct.pack("<q", int(v))]
        elif isinstance(v, (float, np.floating)):
            out += [_FLOAT, struct.pack("<d", float(v))]
        elif isinstance(v, str):
            out.append(_STR)
            _put_str(out, v)
        elif isinstance(v, np.ndarray):
            arr = np.ascontiguousarray(v, dtype="<i8")
            out += [_ARRAY, struct.pack("<Q", arr.size), arr.tobytes()]
        else:
            raise WireError(f"field {name!r} has unsupported type {type(v).__name__}")
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise WireError("truncated message")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def string(self) -> str:
        return bytes(self.take(self.unpack("<I"))).decode("utf-8")


def decode(buf: bytes):
    r = _Reader(buf)
    version = r.unpack("<B")
    if version != WIRE_VERSION:
        raise WireError(f"unsupported wire version {version}")
    kind = r.string()
    cls = MESSAGE_TYPES.get(kind)
    if cls is None:
        raise WireError(f"unknown message kind {kind!r}")
    n = r.unpack("<H")
    values = {}
    for _ in range(n):
        name = r.string()
        code = bytes(r.take(1))
        if code == _BOOL:
            values[name] = r.unpack("<?")
        elif code == _INT:
            values[name] = r.unpack("<q")
        elif code == _FLOAT:
            values[name] = r.unpack("<d")
        elif code == _STR:
            values[name] = r.string()
        elif code == _ARRAY:
            count = r.unpack("<Q")
            values[name] = np.frombuffer(bytes(r.take(8 * count)), dtype="<i8").astype(np.int64)
        else:
            raise WireError(f"unknown type code {code!r} for field {name!r}")
    if r.pos != len(r.buf):
        raise WireError("trailing bytes after message")
    try:
        return cls(**values)
    except TypeError as e:
        raise WireError(f"{kind}: {e}") from None

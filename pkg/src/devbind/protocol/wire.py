"""Length-prefixed wire frames.

``length u32 BE | type u8 | payload``; ``length`` counts the type byte and
the payload. The payload is a sequence of fields, each ``u32 LE length``
followed by the raw bytes.
"""

from __future__ import annotations

import hashlib
import struct

from ..errors import FormatError

M_D1 = 0x01
M_P1 = 0x02
M_D2 = 0x03
M_P2 = 0x04
REG = 0x10
ERROR = 0x7F
FRAME_TYPES = {M_D1: "M_d1", M_P1: "M_p1", M_D2: "M_d2", M_P2: "M_p2", REG: "REG", ERROR: "ERROR"}

# registration sub-messages, carried as the first field of a REG frame
REG_ID = 1
REG_CHALLENGES = 2
REG_RESPONSES = 3
REG_HELPERS = 4

MAX_FRAME = 64 * 1024 * 1024
_HEAD = struct.Struct(">IB")


def encode_frame(ftype: int, fields=()) -> bytes:
    if ftype not in FRAME_TYPES:
        raise FormatError(f"unknown frame type {ftype:#x}", "type")
    payload = b"".join(struct.pack("<I", len(f)) + bytes(f) for f in fields)
    length = 1 + len(payload)
    if length > MAX_FRAME:
        raise FormatError(f"frame of {length} bytes exceeds {MAX_FRAME}", "length")
    return _HEAD.pack(length, ftype) + payload


def _parse_fields(payload: bytes, base: int):
    fields, pos = [], 0
    while pos < len(payload):
        if pos + 4 > len(payload):
            raise FormatError("truncated field length", "payload", base + pos)
        (n,) = struct.unpack_from("<I", payload, pos)
        pos += 4
        if pos + n > len(payload):
            raise FormatError(f"field of {n} bytes overruns frame", "payload", base + pos)
        fields.append(bytes(payload[pos:pos + n]))
        pos += n
    return fields


def decode_frame(data: bytes):
    """Parse exactly one frame; returns ``(type, fields)``."""
    dec = FrameDecoder()
    frames = dec.feed(data)
    if len(frames) != 1 or dec.pending:
        raise FormatError(f"expected exactly one frame, got {len(frames)} (+{dec.pending} bytes)", "frame")
    return frames[0]


class FrameDecoder:
    """Incremental decoder; tolerates arbitrary fragmentation of the byte stream."""

    def __init__(self):
        self._buf = bytearray()
        self._offset = 0  # stream offset of _buf[0], for error messages

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, chunk: bytes):
        self._buf.extend(chunk)
        frames = []
        while len(self._buf) >= 4:
            (length,) = struct.unpack_from(">I", self._buf, 0)
            if length < 1 or length > MAX_FRAME:
                raise FormatError(f"bad frame length {length}", "length", self._offset)
            if len(self._buf) < 4 + length:
                break
            ftype = self._buf[4]
            if ftype not in FRAME_TYPES:
                raise FormatError(f"unknown frame type {ftype:#x}", "type", self._offset + 4)
            fields = _parse_fields(bytes(self._buf[5:4 + length]), self._offset + 5)
            frames.append((ftype, fields))
            del self._buf[:4 + length]
            self._offset += 4 + length
        return frames


def error_frame(reason: str) -> bytes:
    return encode_frame(ERROR, [reason.encode("utf-8")])


def protocol_hash(first: bytes, second: bytes) -> bytes:
    """SHA-256 over ``u32 LE len(first) | first | second``."""
    return hashlib.sha256(struct.pack("<I", len(first)) + first + second).digest()

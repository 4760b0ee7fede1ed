"""Provider CRP database (``PFDB``) and device helper-data store (``PFDV``).

The CRP database is an append-only log::

    magic "PFDB" | version u8 | records...
    record: u32 LE length | kind u8 | body

Kinds: 1 = CRP (device id, challenge, response, helper data), 2 = USED
(device id, challenge), 3 = SUBSCRIPTION (device id, flag). Loading
replays the log in order.

The device store holds only challenge and helper-data pairs::

    magic "PFDV" | version u8 | device id [16] | count u32
    | count x (challenge: u16 LE length + bytes, helper: u32 LE length + PFHD record)
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass

import numpy as np

from ..bits import from_bytes, to_bytes
from ..ecc.fuzzy import HelperData
from ..errors import FormatError, ProtocolError

DB_MAGIC = b"PFDB"
DEVICE_MAGIC = b"PFDV"
VERSION = 1
REC_CRP, REC_USED, REC_SUB = 1, 2, 3


@dataclass
class CrpRecord:
    device_id: bytes
    challenge: bytes
    response: np.ndarray
    helper: HelperData
    used: bool = False


def _lp(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def _take_lp(body: bytes, pos: int, section: str, base: int):
    if pos + 4 > len(body):
        raise FormatError("truncated field", section, base + pos)
    (n,) = struct.unpack_from("<I", body, pos)
    pos += 4
    if pos + n > len(body):
        raise FormatError("field overruns record", section, base + pos)
    return body[pos:pos + n], pos + n


class CrpStore:
    """Thread-safe CRP database, optionally backed by an append-only file."""

    def __init__(self, path=None):
        self.path = path
        self._lock = threading.Lock()
        self._records: dict[bytes, list[CrpRecord]] = {}
        self._subscribed: dict[bytes, bool] = {}
        if path is not None:
            if os.path.exists(path) and os.path.getsize(path):
                self._replay(path)
            else:
                with open(path, "wb") as fh:
                    fh.write(DB_MAGIC + bytes([VERSION]))

    def _append(self, kind: int, body: bytes):
        if self.path is None:
            return
        with open(self.path, "ab") as fh:
            fh.write(struct.pack("<IB", len(body) + 1, kind) + body)
            fh.flush()

    def _replay(self, path):
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != DB_MAGIC:
            raise FormatError(f"bad magic {data[:4]!r}", "magic", 0)
        if len(data) < 5 or data[4] != VERSION:
            raise FormatError("unsupported or missing version", "version", 4)
        pos = 5
        while pos < len(data):
            if pos + 5 > len(data):
                raise FormatError("truncated record header", "record", pos)
            length, kind = struct.unpack_from("<IB", data, pos)
            if length < 1 or pos + 4 + length > len(data):
                raise FormatError("record overruns file", "record", pos)
            body = data[pos + 5:pos + 4 + length]
            self._apply(kind, body, pos + 5)
            pos += 4 + length

    def _apply(self, kind: int, body: bytes, base: int):
        if kind == REC_CRP:
            dev, p = _take_lp(body, 0, "crp.device", base)
            ch, p = _take_lp(body, p, "crp.challenge", base)
            resp, p = _take_lp(body, p, "crp.response", base)
            hd, p = _take_lp(body, p, "crp.helper", base)
            if p + 4 != len(body):
                raise FormatError("bad CRP record length", "crp", base)
            (nbits,) = struct.unpack_from("<I", body, p)
            self._records.setdefault(dev, []).append(
                CrpRecord(dev, ch, from_bytes(resp, nbits), HelperData.from_bytes(hd)))
        elif kind == REC_USED:
            dev, p = _take_lp(body, 0, "used.device", base)
            ch, p = _take_lp(body, p, "used.challenge", base)
            for rec in self._records.get(dev, []):
                if rec.challenge == ch:
                    rec.used = True
        elif kind == REC_SUB:
            dev, p = _take_lp(body, 0, "sub.device", base)
            if p + 1 != len(body):
                raise FormatError("bad subscription record", "sub", base)
            self._subscribed[dev] = bool(body[p])
        else:
            raise FormatError(f"unknown record kind {kind}", "record", base - 1)

    # -- public API --------------------------------------------------------

    def has_device(self, device_id: bytes) -> bool:
        return device_id in self._records

    def is_subscribed(self, device_id: bytes) -> bool:
        return self._subscribed.get(device_id, False)

    def set_subscription(self, device_id: bytes, flag: bool):
        with self._lock:
            self._subscribed[device_id] = bool(flag)
            self._append(REC_SUB, _lp(device_id) + bytes([int(flag)]))

    def add(self, rec: CrpRecord):
        with self._lock:
            self._records.setdefault(rec.device_id, []).append(rec)
            body = (_lp(rec.device_id) + _lp(rec.challenge) + _lp(to_bytes(rec.response))
                    + _lp(rec.helper.to_bytes()) + struct.pack("<I", rec.response.size))
            self._append(REC_CRP, body)

    def records(self, device_id: bytes):
        return list(self._records.get(device_id, []))

    def take_unused(self, device_id: bytes, rng: np.random.Generator) -> CrpRecord:
        """Pick a random unused record and mark it used, atomically."""
        with self._lock:
            free = [r for r in self._records.get(device_id, []) if not r.used]
            if not free:
                raise ProtocolError("no-crp", device_id.hex())
            rec = free[int(rng.integers(len(free)))]
            rec.used = True
            self._append(REC_USED, _lp(rec.device_id) + _lp(rec.challenge))
            return rec


class DeviceStore:
    """Challenge -> helper data map kept on the device."""

    def __init__(self, device_id: bytes, pairs=None):
        self.device_id = device_id
        self.pairs: dict[bytes, HelperData] = dict(pairs or {})

    def __len__(self):
        return len(self.pairs)

    def get(self, challenge: bytes) -> HelperData:
        try:
            return self.pairs[challenge]
        except KeyError:
            raise ProtocolError("no-helper-data", challenge.hex()) from None

    def to_bytes(self) -> bytes:
        out = [DEVICE_MAGIC, bytes([VERSION]), self.device_id, struct.pack("<I", len(self.pairs))]
        for ch, hd in self.pairs.items():
            out.append(struct.pack("<H", len(ch)) + ch)
            out.append(_lp(hd.to_bytes()))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DeviceStore":
        if data[:4] != DEVICE_MAGIC:
            raise FormatError(f"bad magic {data[:4]!r}", "magic", 0)
        if len(data) < 5 or data[4] != VERSION:
            raise FormatError("unsupported or missing version", "version", 4)
        if len(data) < 25:
            raise FormatError("truncated header", "header", len(data))
        device_id = data[5:21]
        (count,) = struct.unpack_from("<I", data, 21)
        pos, pairs = 25, {}
        for i in range(count):
            if pos + 2 > len(data):
                raise FormatError("truncated challenge", f"pair[{i}]", pos)
            (n,) = struct.unpack_from("<H", data, pos)
            ch = data[pos + 2:pos + 2 + n]
            if len(ch) != n:
                raise FormatError("truncated challenge", f"pair[{i}]", pos)
            pos += 2 + n
            hd, pos = _take_lp(data, pos, f"pair[{i}].helper", 0)
            pairs[bytes(ch)] = HelperData.from_bytes(hd)
        if pos != len(data):
            raise FormatError("trailing bytes", "trailer", pos)
        return cls(bytes(device_id), pairs)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DeviceStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

"""Registration and deployment state machines.

Registration runs over a trusted channel and leaves the provider with one
CRP record per issued challenge and the device with the matching
``(challenge, helper data)`` pairs. Deployment is the four-message handshake

    M_d1 = {I, N_d}
    M_p1 = {C, R ^ mask(N_p), H(N_d, R)}
    M_d2 = {H(N_p, R)}
    M_p2 = {ENC(w, R)}

after which both sides hold ``k = R`` and the device decrypts the model.
``mask(N_p)`` is ``N_p`` followed by a SHAKE-256 expansion of it, cut to
``|R|`` bits; the device reads ``N_p`` back from the first 128 bits.

Handlers that react to a peer message return the frame to send back. A
rejection by the peer, or of the peer, is reported as an ERROR frame and
moves the session to ``failed``; local precondition violations raise.
"""

from __future__ import annotations

import hashlib
import hmac

import numpy as np

from ..bits import as_bits, from_bytes, to_bytes
from ..chaos import SecretKey
from ..cipher import EXACT, CipherConfig
from ..ecc import DEFAULT_CODE, DEFAULT_INTERLEAVER, CODE_OFFSET, ConvCode, InterleaverSpec
from ..ecc.fuzzy import HelperData, enrolled_value, fe_generate, fe_reproduce
from ..errors import FormatError, ProtocolError
from ..modelfmt.fileformat import encrypted_from_bytes, encrypted_to_bytes
from ..modelfmt.nn import ModelWeights, decrypt_model, encrypt_model
from ..puf import PufDevice, evaluate, majority_read, random_challenge, reference_response
from .store import CrpRecord, CrpStore, DeviceStore
from .wire import (ERROR, M_D1, M_D2, M_P1, M_P2, REG, REG_CHALLENGES, REG_HELPERS, REG_ID,
                   REG_RESPONSES, decode_frame, encode_frame, error_frame, protocol_hash)

NONCE_BYTES = 16
NONCE_BITS = 8 * NONCE_BYTES

IDLE, CHALLENGED, AUTHENTICATED, DELIVERED, FAILED = (
    "idle", "challenged", "authenticated", "delivered", "failed")
PROTOCOL_CONFIG = CipherConfig(mode=EXACT)


class EnrollmentError(ProtocolError):
    pass


def _nonce(rng: np.random.Generator) -> bytes:
    return rng.bytes(NONCE_BYTES)


def nonce_mask(n_p: bytes, nbits: int) -> np.ndarray:
    """``N_p`` bits followed by a SHAKE-256 expansion, ``nbits`` long."""
    if nbits < NONCE_BITS:
        raise ProtocolError("response-too-short", f"{nbits} bits cannot carry a {NONCE_BITS}-bit nonce")
    tail = hashlib.shake_256(b"devbind/np-mask" + n_p).digest((nbits - NONCE_BITS + 7) // 8)
    return np.concatenate([from_bytes(n_p), from_bytes(tail, nbits - NONCE_BITS)])


def challenge_id(challenge: bytes) -> bytes:
    """16-byte id bound into the delivered container."""
    return challenge if len(challenge) == 16 else hashlib.sha256(challenge).digest()[:16]


def _expect(frame: bytes, ftype: int, nfields: int):
    """Parse ``frame``; ERROR frames raise with the peer's reason."""
    t, fields = decode_frame(frame)
    if t == ERROR:
        reason = fields[0].decode("utf-8", "replace") if fields else "error"
        raise ProtocolError(reason, "reported by peer")
    if t != ftype or len(fields) != nfields:
        raise FormatError(f"expected frame {ftype:#x} with {nfields} fields, got {t:#x}/{len(fields)}", "frame")
    return fields


class Provider:
    """Model provider: CRP database plus fuzzy-extractor parameters."""

    def __init__(self, store: CrpStore | None = None, code: ConvCode = DEFAULT_CODE,
                 il: InterleaverSpec = DEFAULT_INTERLEAVER, scheme: str = CODE_OFFSET,
                 rng: np.random.Generator | None = None, allow_insecure: bool = False):
        self.store = store if store is not None else CrpStore()
        self.code, self.il, self.scheme = code, il, scheme
        self.allow_insecure = allow_insecure
        self.rng = rng if rng is not None else np.random.default_rng()
        self._enrolling: dict[bytes, list[bytes]] = {}

    def session(self) -> "ProviderSession":
        return ProviderSession(self)

    # registration, trusted channel

    def enroll_challenges(self, frame: bytes, z: int, challenge_len: int = 128) -> bytes:
        t, fields = decode_frame(frame)
        if t != REG or len(fields) != 2 or fields[0] != bytes([REG_ID]) or len(fields[1]) != 16:
            raise FormatError("expected REG id frame", "frame")
        dev = fields[1]
        if z < 1:
            raise EnrollmentError("bad-z", f"z must be >= 1, got {z}")
        if self.store.has_device(dev) or dev in self._enrolling:
            raise EnrollmentError("already-registered", dev.hex())
        chs = []
        while len(chs) < z:
            ch = to_bytes(random_challenge(self.rng, challenge_len))
            if ch not in chs:
                chs.append(ch)
        self._enrolling[dev] = chs
        return encode_frame(REG, [bytes([REG_CHALLENGES]), dev, *chs])

    def enroll_store(self, frame: bytes, subscribe: bool = True) -> bytes:
        t, fields = decode_frame(frame)
        if t != REG or len(fields) < 2 or fields[0] != bytes([REG_RESPONSES]):
            raise FormatError("expected REG responses frame", "frame")
        dev, blobs = fields[1], fields[2:]
        chs = self._enrolling.pop(dev, None)
        if chs is None or len(blobs) != len(chs):
            raise EnrollmentError("unexpected-responses", dev.hex())
        out = [bytes([REG_HELPERS]), dev]
        for ch, blob in zip(chs, blobs):
            nbits = 8 * len(blob)
            resp = from_bytes(blob, nbits)
            hd = fe_generate(resp, self.code, self.il, self.scheme, self.rng, self.allow_insecure)
            self.store.add(CrpRecord(dev, ch, enrolled_value(resp, self.scheme, self.code), hd))
            out += [ch, hd.to_bytes()]
        self.store.set_subscription(dev, subscribe)
        return encode_frame(REG, out)


class DeviceNode:
    """Local device: PUF, helper-data store and nothing else persistent."""

    def __init__(self, puf: PufDevice, store: DeviceStore | None = None, code: ConvCode = DEFAULT_CODE,
                 il: InterleaverSpec = DEFAULT_INTERLEAVER, rng: np.random.Generator | None = None):
        self.puf = puf
        self.store = store if store is not None else DeviceStore(puf.device_id)
        self.code, self.il = code, il
        self.rng = rng if rng is not None else np.random.default_rng()

    @property
    def device_id(self) -> bytes:
        return self.puf.device_id

    def session(self) -> "DeviceSession":
        return DeviceSession(self)

    def enroll_request(self) -> bytes:
        return encode_frame(REG, [bytes([REG_ID]), self.device_id])

    def enroll_respond(self, frame: bytes, enrollment: str = "ideal", votes: int = 17) -> bytes:
        t, fields = decode_frame(frame)
        if t != REG or len(fields) < 3 or fields[0] != bytes([REG_CHALLENGES]) or fields[1] != self.device_id:
            raise FormatError("expected REG challenges frame", "frame")
        if self.puf.response_len % 8:
            raise EnrollmentError("bad-response-length", "response length must be a whole number of bytes")
        out = [bytes([REG_RESPONSES]), self.device_id]
        for ch in fields[2:]:
            bits = from_bytes(ch, self.puf.challenge_len)
            if enrollment == "ideal":
                r = reference_response(self.puf, bits)
            elif enrollment == "majority":
                r = majority_read(self.puf, bits, self.rng, votes)
            else:
                raise EnrollmentError("bad-enrollment", enrollment)
            out.append(to_bytes(r))
        return encode_frame(REG, out)

    def enroll_store(self, frame: bytes):
        t, fields = decode_frame(frame)
        if (t != REG or len(fields) < 2 or fields[0] != bytes([REG_HELPERS])
                or fields[1] != self.device_id or len(fields) % 2):
            raise FormatError("expected REG helper frame", "frame")
        for ch, hd in zip(fields[2::2], fields[3::2]):
            self.store.pairs[ch] = HelperData.from_bytes(hd)


def register(provider: Provider, device: DeviceNode, z: int, enrollment: str = "ideal",
             subscribe: bool = True) -> int:
    """Run the five registration steps in memory; returns the number of CRPs stored."""
    m = device.enroll_request()
    m = provider.enroll_challenges(m, z, device.puf.challenge_len)
    m = device.enroll_respond(m, enrollment)
    m = provider.enroll_store(m, subscribe)
    device.enroll_store(m)
    return z


class ProviderSession:
    def __init__(self, provider: Provider):
        self.provider = provider
        self.phase = IDLE
        self.reason = None
        self.record: CrpRecord | None = None
        self._n_d = self._n_p = None

    def _fail(self, reason: str) -> bytes:
        self.phase, self.reason = FAILED, reason
        self._n_p = None
        return error_frame(reason)

    def _require(self, phase: str):
        if self.phase != phase:
            raise ProtocolError("bad-phase", f"provider session is {self.phase}, expected {phase}")

    def handle_request(self, m1: bytes) -> bytes:
        """M_d1 -> M_p1 (or ERROR)."""
        self._require(IDLE)
        try:
            dev, n_d = _expect(m1, M_D1, 2)
        except (FormatError, ProtocolError):
            return self._fail("bad-frame")
        if len(n_d) != NONCE_BYTES:
            return self._fail("bad-frame")
        store = self.provider.store
        if not store.has_device(dev) or not store.is_subscribed(dev):
            return self._fail("unsubscribed")
        try:
            rec = store.take_unused(dev, self.provider.rng)
        except ProtocolError as exc:
            return self._fail(exc.reason)
        self.record, self._n_d = rec, n_d
        self._n_p = _nonce(self.provider.rng)
        r = rec.response
        blinded = to_bytes(r ^ nonce_mask(self._n_p, r.size))
        self.phase = CHALLENGED
        return encode_frame(M_P1, [rec.challenge, blinded, protocol_hash(n_d, to_bytes(r))])

    def handle_reply(self, m3: bytes, model: ModelWeights, cfg: CipherConfig = PROTOCOL_CONFIG):
        """M_d2 -> M_p2 (or ERROR). Returns ``None`` if the device reported an error."""
        self._require(CHALLENGED)
        if len(model) == 0:
            self._fail("empty-model")
            raise ProtocolError("empty-model", "refusing to deliver a model with no layers")
        try:
            (digest,) = _expect(m3, M_D2, 1)
        except ProtocolError as exc:
            self.phase, self.reason = FAILED, exc.reason
            return None
        except FormatError:
            return self._fail("bad-frame")
        r = self.record.response
        expected = protocol_hash(self._n_p, to_bytes(r))
        if not hmac.compare_digest(digest, expected):
            return self._fail("device-auth-failed")
        self.phase = AUTHENTICATED
        enc = encrypt_model(model, SecretKey(r), cfg, challenge_id=challenge_id(self.record.challenge))
        self.phase = DELIVERED
        self._n_p = None
        return encode_frame(M_P2, [encrypted_to_bytes(enc)])


class DeviceSession:
    def __init__(self, device: DeviceNode):
        self.device = device
        self.phase = IDLE
        self.reason = None
        self.challenge = None
        self.encrypted = None
        self._n_d = None
        self._response = None  # corrected R, memory only

    def _require(self, phase: str):
        if self.phase != phase:
            raise ProtocolError("bad-phase", f"device session is {self.phase}, expected {phase}")

    def _fail(self, reason: str) -> bytes:
        self.phase, self.reason = FAILED, reason
        self._response = None
        return error_frame(reason)

    def request(self) -> bytes:
        self._require(IDLE)
        self._n_d = _nonce(self.device.rng)
        self.phase = CHALLENGED
        return encode_frame(M_D1, [self.device.device_id, self._n_d])

    def verify_and_reply(self, m2: bytes) -> bytes:
        """M_p1 -> M_d2, or an ERROR frame when the provider fails authentication."""
        self._require(CHALLENGED)
        try:
            ch, blinded, digest = _expect(m2, M_P1, 3)
        except ProtocolError as exc:
            self.phase, self.reason = FAILED, exc.reason
            raise
        dev = self.device
        try:
            hd = dev.store.get(ch)
        except ProtocolError:
            self.phase, self.reason = FAILED, "no-helper-data"
            raise
        noisy = evaluate(dev.puf, from_bytes(ch, dev.puf.challenge_len), dev.rng)
        r = fe_reproduce(noisy, hd, dev.code, dev.il)
        rb = to_bytes(r)
        if len(blinded) != len(rb) or not hmac.compare_digest(digest, protocol_hash(self._n_d, rb)):
            return self._fail("auth-failed")
        mask = from_bytes(blinded, r.size) ^ r
        n_p = to_bytes(mask[:NONCE_BITS])
        if not np.array_equal(mask, nonce_mask(n_p, r.size)):
            return self._fail("auth-failed")
        self.challenge, self._response = ch, r
        self.phase = AUTHENTICATED
        return encode_frame(M_D2, [protocol_hash(n_p, rb)])

    def receive_model(self, m4: bytes) -> ModelWeights:
        self._require(AUTHENTICATED)
        try:
            (blob,) = _expect(m4, M_P2, 1)
            enc = encrypted_from_bytes(blob)
            if enc.challenge_id != challenge_id(self.challenge):
                raise ProtocolError("challenge-mismatch", "container is bound to another challenge")
            model = decrypt_model(enc, SecretKey(as_bits(self._response)))
        except ProtocolError as exc:
            self._fail(exc.reason)
            raise
        except FormatError:
            self._fail("bad-frame")
            raise
        finally:
            self._response = None
        self.encrypted = enc
        self.phase = DELIVERED
        return model


# functional surface mirroring the message flow

def device_request(session: DeviceSession) -> bytes:
    return session.request()


def provider_auth(session: ProviderSession, m1: bytes) -> bytes:
    return session.handle_request(m1)


def device_verify_and_reply(session: DeviceSession, m2: bytes) -> bytes:
    return session.verify_and_reply(m2)


def provider_deliver(session: ProviderSession, m3: bytes, model: ModelWeights,
                     cfg: CipherConfig = PROTOCOL_CONFIG):
    return session.handle_reply(m3, model, cfg)


def device_receive_model(session: DeviceSession, m4: bytes) -> ModelWeights:
    return session.receive_model(m4)


def run_session(provider: Provider, device: DeviceNode, model: ModelWeights,
                cfg: CipherConfig = PROTOCOL_CONFIG):
    """One in-memory deployment. Returns ``(model or None, outcome)``."""
    ps, ds = provider.session(), device.session()
    m2 = ps.handle_request(ds.request())
    if ps.phase == FAILED:
        return None, ps.reason
    m3 = ds.verify_and_reply(m2)
    if ds.phase == FAILED:
        ps.handle_reply(m3, model, cfg)
        return None, ds.reason
    m4 = ps.handle_reply(m3, model, cfg)
    if ps.phase == FAILED:
        return None, ps.reason
    return ds.receive_model(m4), DELIVERED

"""Statistical simulation of delay-based (Anderson-style) PUF devices.

Each response bit is the sign of a latent standard-normal value plus fresh
Gaussian evaluation noise. Latents are derived with SHAKE-256 from the
device secret, the challenge and the bit index, so a noiseless device is a
pure function of ``(device_secret, challenge)``.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy import integrate, optimize, special

from .bits import as_bits, frac_hamming, random_bits, to_bytes
from .errors import FormatError, ParameterError

CHALLENGE_BITS = 128
RESPONSE_BITS = 384
SECRET_BYTES = 32
ID_BYTES = 16

DEVICE_MAGIC = b"PUFD"
DEVICE_VERSION = 1
_DEVICE_LAYOUT = struct.Struct("<4sB16s32sdI")


@dataclass(frozen=True)
class PufDevice:
    device_id: bytes
    device_secret: bytes
    noise_sigma: float = 0.0
    response_len: int = RESPONSE_BITS
    challenge_len: int = CHALLENGE_BITS

    def __post_init__(self):
        if len(self.device_id) != ID_BYTES:
            raise ParameterError(f"device_id must be {ID_BYTES} bytes")
        if len(self.device_secret) != SECRET_BYTES:
            raise ParameterError(f"device_secret must be {SECRET_BYTES} bytes")
        if not (self.noise_sigma >= 0.0) or not math.isfinite(self.noise_sigma):
            raise ParameterError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if self.response_len < 1:
            raise ParameterError("response_len must be >= 1")
        if self.challenge_len < 1:
            raise ParameterError("challenge_len must be >= 1")

    def with_noise(self, noise_sigma: float) -> "PufDevice":
        """Same silicon under a different environment."""
        return PufDevice(self.device_id, self.device_secret, noise_sigma,
                         self.response_len, self.challenge_len)

    def __repr__(self):
        return (f"PufDevice(id={self.device_id.hex()}, sigma={self.noise_sigma:g}, "
                f"B={self.response_len})")


def _secret_bytes(device_secret) -> bytes:
    if isinstance(device_secret, (bytes, bytearray)):
        return bytes(device_secret)
    if isinstance(device_secret, int):
        if not 0 <= device_secret < 1 << (8 * SECRET_BYTES):
            raise ParameterError("device_secret does not fit in 256 bits")
        return device_secret.to_bytes(SECRET_BYTES, "big")
    raise ParameterError(f"unsupported device_secret type {type(device_secret).__name__}")


def new_device(device_secret, noise_sigma: float = 0.0, response_len: int = RESPONSE_BITS,
               device_id: bytes | None = None, challenge_len: int = CHALLENGE_BITS) -> PufDevice:
    """Build a simulated device from a 256-bit fabrication seed.

    ``device_secret`` may be an int below 2**256 or 32 raw bytes. When no
    ``device_id`` is given it is derived from the secret, so the same seed
    always yields the same device.
    """
    secret = _secret_bytes(device_secret)
    if device_id is None:
        device_id = hashlib.sha256(b"devbind/device-id" + secret).digest()[:ID_BYTES]
    return PufDevice(bytes(device_id), secret, float(noise_sigma), int(response_len), int(challenge_len))


def random_challenge(rng: np.random.Generator, width: int = CHALLENGE_BITS) -> np.ndarray:
    return random_bits(rng, width)


def _check_challenge(device: PufDevice, challenge) -> np.ndarray:
    bits = as_bits(challenge)
    if bits.size != device.challenge_len:
        raise ParameterError(f"challenge has {bits.size} bits, device expects {device.challenge_len}")
    return bits


@lru_cache(maxsize=4096)
def _latents(secret: bytes, challenge: bytes, n: int) -> np.ndarray:
    prefix = hashlib.shake_256(secret + challenge)
    words = np.empty(n, dtype=np.uint64)
    for j in range(n):
        h = prefix.copy()
        h.update(j.to_bytes(4, "little"))
        words[j] = int.from_bytes(h.digest(8), "little")
    # midpoint of the 2**-64 cell keeps u strictly inside (0, 1)
    u = (words.astype(np.float64) + 0.5) / 2.0**64
    u = np.clip(u, 2.0**-64, 1.0 - 2.0**-53)
    out = special.ndtri(u)
    out.setflags(write=False)
    return out


def latent_values(device: PufDevice, challenge) -> np.ndarray:
    """Deterministic standard-normal latent per response bit."""
    bits = _check_challenge(device, challenge)
    return _latents(device.device_secret, to_bytes(bits), device.response_len)


def reference_response(device: PufDevice, challenge) -> np.ndarray:
    return (latent_values(device, challenge) > 0).astype(np.uint8)


def evaluate(device: PufDevice, challenge, rng: np.random.Generator | None = None) -> np.ndarray:
    """One noisy read of the device."""
    latent = latent_values(device, challenge)
    if device.noise_sigma == 0.0:
        return (latent > 0).astype(np.uint8)
    if rng is None:
        rng = np.random.default_rng()
    noise = rng.normal(0.0, device.noise_sigma, size=latent.size)
    return (latent + noise > 0).astype(np.uint8)


def majority_read(device: PufDevice, challenge, rng: np.random.Generator, votes: int = 17) -> np.ndarray:
    if votes < 1 or votes % 2 == 0:
        raise ParameterError("votes must be a positive odd number")
    acc = np.zeros(device.response_len, dtype=np.int32)
    for _ in range(votes):
        acc += evaluate(device, challenge, rng)
    return (2 * acc > votes).astype(np.uint8)


def flip_probability(noise_sigma: float) -> float:
    """Expected per-bit flip rate for standard-normal latents.

    A bit with latent ``l`` flips with probability ``Phi(-|l| / sigma)``;
    the result integrates that over the latent density.
    """
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    if noise_sigma == 0:
        return 0.0

    def integrand(l):
        return 2.0 * math.exp(-0.5 * l * l) / math.sqrt(2 * math.pi) * special.ndtr(-l / noise_sigma)

    value, _ = integrate.quad(integrand, 0.0, math.inf, epsabs=1e-13, epsrel=1e-12)
    return value


def calibrate_sigma(target_ber: float) -> float:
    """Noise level whose expected bit-flip rate equals ``target_ber``."""
    if not 0.0 < target_ber < 0.5:
        raise ParameterError(f"target_ber must lie in (0, 0.5), got {target_ber}")
    hi = 1.0
    while flip_probability(hi) < target_ber:
        hi *= 2.0
        if hi > 1e12:
            raise ParameterError(f"target_ber {target_ber} too close to 0.5")
    return optimize.brentq(lambda s: flip_probability(s) - target_ber, 0.0, hi, xtol=1e-14, rtol=1e-12)


# -- population statistics ---------------------------------------------------

def uniqueness(devices, challenges) -> float:
    """Mean fractional inter-device Hamming distance over all pairs."""
    dists = []
    for c in challenges:
        refs = [reference_response(d, c) for d in devices]
        for a, b in combinations(refs, 2):
            dists.append(frac_hamming(a, b))
    return float(np.mean(dists))


def reliability_ber(device: PufDevice, challenge, rng: np.random.Generator, reads: int) -> float:
    """Measured intra-device BER against the noiseless reference."""
    ref = reference_response(device, challenge)
    flips = 0
    for _ in range(reads):
        flips += int(np.count_nonzero(evaluate(device, challenge, rng) != ref))
    return flips / (reads * device.response_len)


def bit_bias(devices, challenge) -> np.ndarray:
    """Fraction of devices answering 1, per response position."""
    return np.mean([reference_response(d, challenge) for d in devices], axis=0)


# -- persistence -------------------------------------------------------------

def device_to_bytes(device: PufDevice) -> bytes:
    return _DEVICE_LAYOUT.pack(DEVICE_MAGIC, DEVICE_VERSION, device.device_id,
                               device.device_secret, device.noise_sigma, device.response_len)


def device_from_bytes(data: bytes) -> PufDevice:
    if len(data) < 5:
        raise FormatError("truncated device record", "header", len(data))
    if data[:4] != DEVICE_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", "magic", 0)
    if data[4] != DEVICE_VERSION:
        raise FormatError(f"unsupported version {data[4]}", "version", 4)
    if len(data) != _DEVICE_LAYOUT.size:
        raise FormatError(f"device record must be {_DEVICE_LAYOUT.size} bytes, got {len(data)}",
                          "body", min(len(data), _DEVICE_LAYOUT.size))
    _, _, device_id, secret, sigma, blen = _DEVICE_LAYOUT.unpack(data)
    try:
        return PufDevice(device_id, secret, sigma, blen)
    except ParameterError as exc:
        raise FormatError(str(exc), "body", 5) from exc


def save_device(device: PufDevice, path) -> None:
    with open(path, "wb") as fh:
        fh.write(device_to_bytes(device))


def load_device(path) -> PufDevice:
    with open(path, "rb") as fh:
        return device_from_bytes(fh.read())

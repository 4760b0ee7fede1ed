"""Bit-vector helpers.

Bit vectors are 1-D ``numpy.uint8`` arrays holding 0/1. Packing to bytes is
MSB-first, matching :func:`numpy.packbits`.
"""

from __future__ import annotations

import numpy as np


def as_bits(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit vector must contain only 0 and 1")
    return arr


def to_bytes(bits) -> bytes:
    return np.packbits(as_bits(bits)).tobytes()


def from_bytes(data: bytes, nbits: int | None = None) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if nbits is not None:
        if nbits > bits.size:
            raise ValueError(f"need {nbits} bits, have {bits.size}")
        bits = bits[:nbits]
    return bits.astype(np.uint8)


def to_int(bits) -> int:
    """Unsigned integer value, first bit most significant."""
    value = 0
    for b in as_bits(bits):
        value = (value << 1) | int(b)
    return value


def from_int(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def hamming(a, b) -> int:
    return int(np.count_nonzero(as_bits(a) != as_bits(b)))


def frac_hamming(a, b) -> float:
    a = as_bits(a)
    return hamming(a, b) / a.size


def random_bits(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)

"""Fuzzy extractor built from the convolutional code and the interleaver.

The default ``code-offset`` scheme publishes ``hd = interleave(encode(s)) ^ R``
for a random seed ``s``; reproduction decodes ``hd ^ R'`` back to the nearest
codeword and strips it off again. The ``direct-encode`` scheme publishes the
interleaved codeword of the response prefix itself and therefore reveals it;
it is only available when explicitly requested with ``allow_insecure``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..bits import as_bits, from_bytes, to_bytes
from ..errors import CatastrophicCodeError, FormatError, ParameterError
from .convcode import DEFAULT_CODE, ConvCode, conv_encode, viterbi_decode
from .interleave import DEFAULT_INTERLEAVER, InterleaverSpec, deinterleave, interleave

CODE_OFFSET = "code-offset"
DIRECT_ENCODE = "direct-encode"
SCHEME_TAGS = {CODE_OFFSET: 0, DIRECT_ENCODE: 1}

HELPER_MAGIC = b"PFHD"
HELPER_VERSION = 1
_HELPER_HEADER = struct.Struct("<4sBBI")


@dataclass(frozen=True)
class HelperData:
    bits: np.ndarray
    scheme: str = CODE_OFFSET

    def __post_init__(self):
        if self.scheme not in SCHEME_TAGS:
            raise ParameterError(f"unknown helper-data scheme {self.scheme!r}")
        bits = as_bits(self.bits).copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return self.bits.size

    def __eq__(self, other):
        return (isinstance(other, HelperData) and self.scheme == other.scheme
                and np.array_equal(self.bits, other.bits))

    __hash__ = None

    def to_bytes(self) -> bytes:
        head = _HELPER_HEADER.pack(HELPER_MAGIC, HELPER_VERSION, SCHEME_TAGS[self.scheme], self.bits.size)
        return head + to_bytes(self.bits)

    @classmethod
    def from_bytes(cls, data: bytes) -> "HelperData":
        if len(data) < _HELPER_HEADER.size:
            raise FormatError("truncated helper-data header", "header", len(data))
        magic, version, tag, nbits = _HELPER_HEADER.unpack_from(data)
        if magic != HELPER_MAGIC:
            raise FormatError(f"bad magic {magic!r}", "magic", 0)
        if version != HELPER_VERSION:
            raise FormatError(f"unsupported version {version}", "version", 4)
        schemes = {v: k for k, v in SCHEME_TAGS.items()}
        if tag not in schemes:
            raise FormatError(f"unknown scheme tag {tag}", "scheme", 5)
        need = _HELPER_HEADER.size + (nbits + 7) // 8
        if len(data) != need:
            raise FormatError(f"payload is {len(data) - _HELPER_HEADER.size} bytes, expected "
                              f"{need - _HELPER_HEADER.size}", "payload", min(len(data), need))
        return cls(from_bytes(data[_HELPER_HEADER.size:], nbits), schemes[tag])


def _check(code: ConvCode, frame_len: int) -> int:
    if code.is_catastrophic():
        raise CatastrophicCodeError(f"{code!r} is catastrophic; unusable for key regeneration")
    return code.info_length(frame_len)


def fe_generate(response, code: ConvCode = DEFAULT_CODE, il: InterleaverSpec = DEFAULT_INTERLEAVER,
                scheme: str = CODE_OFFSET, rng: np.random.Generator | None = None,
                allow_insecure: bool = False) -> HelperData:
    """Helper data for an enrolled response.

    ``len(response)`` must equal the coded frame length ``L * (k + M)``.
    """
    r = as_bits(response)
    k = _check(code, r.size)
    if scheme == CODE_OFFSET:
        if rng is None:
            rng = np.random.default_rng()
        seed = rng.integers(0, 2, size=k, dtype=np.uint8)
        return HelperData(interleave(conv_encode(seed, code), il) ^ r, CODE_OFFSET)
    if scheme == DIRECT_ENCODE:
        if not allow_insecure:
            raise ParameterError("direct-encode helper data reveals the key; pass allow_insecure=True")
        return HelperData(interleave(conv_encode(r[:k], code), il), DIRECT_ENCODE)
    raise ParameterError(f"unknown helper-data scheme {scheme!r}")


def fe_reproduce(noisy_response, hd: HelperData, code: ConvCode = DEFAULT_CODE,
                 il: InterleaverSpec = DEFAULT_INTERLEAVER) -> np.ndarray:
    """Regenerate the enrolled value from a noisy read.

    Works on a single response or a 2-D batch. An uncorrectable error
    pattern silently produces a wrong value.
    """
    noisy = np.asarray(noisy_response, dtype=np.uint8)
    if noisy.shape[-1] != len(hd):
        raise ParameterError(f"response has {noisy.shape[-1]} bits, helper data {len(hd)}")
    k = _check(code, len(hd))
    if hd.scheme == CODE_OFFSET:
        offset = hd.bits ^ noisy
        seed = viterbi_decode(deinterleave(offset, il), code)
        return hd.bits ^ interleave(conv_encode(seed, code), il)
    prefix = viterbi_decode(deinterleave(hd.bits, il), code)
    out = np.zeros(noisy.shape, dtype=np.uint8)
    out[..., :k] = prefix
    return out


def enrolled_value(response, scheme: str = CODE_OFFSET, code: ConvCode = DEFAULT_CODE) -> np.ndarray:
    """What :func:`fe_reproduce` returns on success for this enrolled response."""
    r = as_bits(response)
    if scheme == CODE_OFFSET:
        return r.copy()
    k = code.info_length(r.size)
    out = np.zeros_like(r)
    out[:k] = r[:k]
    return out

"""Permute-diffusion encryption of weight tensors.

A layer is flattened row-major and put through ``n_d`` outer rounds. Each
outer round applies ``n_p`` permutations and one diffusion pass. Every
permutation takes a fresh segment of the layer's logistic stream, and every
diffusion pass takes a fresh segment of its NCA stream.

``float`` mode adds or subtracts the keystream in binary64. ``exact`` mode
operates on the raw 32-bit pattern of each float32 weight and adds
``floor(s * 2**32)`` modulo 2**32, which makes decryption bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np

from .chaos import (DEFAULT_BITS, DEFAULT_T_PRE, SecretKey, _derive_logistic, _derive_nca,
                    _iterate_logistic, _iterate_nca)
from .errors import ChaosRangeError, FormatError, ParameterError

FLOAT = "float"
EXACT = "exact"
MODES = (FLOAT, EXACT)
PARTS = ("weight", "bias")


@dataclass(frozen=True)
class CipherConfig:
    n_p: int = 3
    n_d: int = 2
    mode: str = FLOAT
    t_pre: int = DEFAULT_T_PRE
    encrypt_biases: bool = False
    b_p: int = DEFAULT_BITS
    b_d: int = DEFAULT_BITS

    def __post_init__(self):
        if self.n_p < 1 or self.n_d < 1:
            raise ParameterError(f"n_p and n_d must be >= 1, got {self.n_p}, {self.n_d}")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.t_pre < 0:
            raise ParameterError("t_pre must be >= 0")


@dataclass(frozen=True)
class LayerCiphertext:
    values: np.ndarray
    shape: tuple
    mode: str
    index: int
    part: str = "weight"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if self.values.ndim != 1 or self.values.size != int(np.prod(self.shape, dtype=np.int64)):
            raise ParameterError(f"{self.values.size} values do not fill shape {self.shape}")
        want = np.uint32 if self.mode == EXACT else np.float64
        if self.values.dtype != want:
            raise ParameterError(f"{self.mode} ciphertext must be {np.dtype(want).name}")


def flatten(w) -> np.ndarray:
    return np.ascontiguousarray(w).reshape(-1)


def reshape(v, shape) -> np.ndarray:
    v = np.asarray(v)
    shape = tuple(int(d) for d in shape)
    if v.size != int(np.prod(shape, dtype=np.int64)):
        raise ParameterError(f"cannot reshape {v.size} elements to {shape}")
    return v.reshape(shape)


def permute_round(v, perm) -> np.ndarray:
    v, perm = np.asarray(v), np.asarray(perm)
    if v.shape != perm.shape:
        raise ParameterError(f"permutation of length {perm.size} for vector of length {v.size}")
    return v[perm]


def inverse_permute_round(v, perm) -> np.ndarray:
    v, perm = np.asarray(v), np.asarray(perm)
    if v.shape != perm.shape:
        raise ParameterError(f"permutation of length {perm.size} for vector of length {v.size}")
    out = np.empty_like(v)
    out[perm] = v
    return out


def _fixed_point(s: np.ndarray) -> np.ndarray:
    return np.floor(s * 2.0**32).astype(np.uint64).astype(np.uint32)


def diffuse(v, s) -> np.ndarray:
    """Add ``s`` where ``s < 0.5``, subtract it elsewhere.

    ``uint32`` input selects modular fixed-point arithmetic.
    """
    v, s = np.asarray(v), np.asarray(s, dtype=np.float64)
    if v.shape != s.shape:
        raise ParameterError(f"keystream length {s.size} != vector length {v.size}")
    low = s < 0.5
    if v.dtype == np.uint32:
        k = _fixed_point(s)
        return np.where(low, v + k, v - k)
    return np.where(low, v + s, v - s)


def undiffuse(v, s) -> np.ndarray:
    v, s = np.asarray(v), np.asarray(s, dtype=np.float64)
    if v.shape != s.shape:
        raise ParameterError(f"keystream length {s.size} != vector length {v.size}")
    low = s < 0.5
    if v.dtype == np.uint32:
        k = _fixed_point(s)
        return np.where(low, v - k, v + k)
    return np.where(low, v - s, v + s)


def stream_index(j: int, part: str = "weight") -> int:
    if part not in PARTS:
        raise ParameterError(f"part must be one of {PARTS}")
    return 2 * j + PARTS.index(part)


def keystream_schedule(n: int, cfg: CipherConfig):
    """Segment bookkeeping for one layer of ``n`` elements.

    Returns ``(kind, outer_round, inner_round, offset)`` tuples in
    encryption order. Offsets index the logistic stream for ``"permute"``
    and the NCA stream for ``"diffuse"``. Each segment has length ``n``.
    """
    sched = []
    for d in range(cfg.n_d):
        for p in range(cfg.n_p):
            sched.append(("permute", d, p, (d * cfg.n_p + p) * n))
        sched.append(("diffuse", d, 0, d * n))
    return sched


def layer_keystreams(key: SecretKey, cfg: CipherConfig, n: int, stream: int):
    """Permutations and diffusion sequences for one tensor, in schedule order."""
    perms, _, diff, _, _ = _plan_arrays(key, cfg, n, stream)
    return [(kind, perms[d * cfg.n_p + p] if kind == "permute" else diff[d])
            for kind, d, p, _ in keystream_schedule(n, cfg)]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@numba.njit(cache=True)
def _plan_kernel(ls0, lam, ns0, alpha, beta, gamma, t_pre, n_p, n_d, n):
    rounds = n_d * n_p
    seq = np.empty(rounds * n, dtype=np.float64)
    _iterate_logistic(ls0, lam, t_pre, rounds * n, seq)
    perms = np.empty((rounds, n), dtype=np.int64)
    invs = np.empty((rounds, n), dtype=np.int64)
    for r in range(rounds):
        perms[r] = np.argsort(seq[r * n:(r + 1) * n], kind="mergesort")
        for i in range(n):
            invs[r, perms[r, i]] = i
    diff = np.empty(n_d * n, dtype=np.float64)
    bad = _iterate_nca(ns0, alpha, beta, gamma, t_pre, n_d * n, diff)
    lows = diff < 0.5
    words = np.empty(n_d * n, dtype=np.uint32)
    for i in range(n_d * n):
        words[i] = np.uint32(np.uint64(math.floor(diff[i] * 4294967296.0)) & np.uint64(0xFFFFFFFF))
    return perms, invs, diff.reshape(n_d, n), lows.reshape(n_d, n), words.reshape(n_d, n), bad


# Encrypt and decrypt of the same tensor share one derivation. Returns the
# arrays the round kernels consume: permutations, their inverses, diffusion
# rows, s < 0.5 masks and fixed-point words.
@lru_cache(maxsize=32)
def _plan(key_bits: bytes, b_p: int, b_d: int, t_pre: int, n_p: int, n_d: int, n: int, stream: int):
    # key_bits holds one byte per bit, already validated by SecretKey
    half = len(key_bits) // 2
    lp = _derive_logistic(key_bits[:2 * b_p], b_p).for_stream(stream)
    dp = _derive_nca(key_bits[half:half + 3 * b_d], b_d).for_stream(stream)
    *arrays, bad = _plan_kernel(lp.s0, lp.lam, dp.s0, dp.alpha, dp.beta, dp.gamma, t_pre, n_p, n_d, n)
    if bad >= 0:
        raise ChaosRangeError(f"NCA iterate {bad} left [0, 1] for alpha={dp.alpha}, beta={dp.beta}")
    return tuple(_frozen(a) for a in arrays)


def _plain_vector(w, mode: str) -> np.ndarray:
    w = np.asarray(w)
    if mode == EXACT:
        return flatten(w.astype(np.float32, copy=False)).view(np.uint32).copy()
    return flatten(w).astype(np.float64)


# Whole round chain in one compiled call. Matches permute_round and diffuse
# step for step; uint32 sums are truncated on store, which is arithmetic
# modulo 2**32.
@numba.njit(cache=True)
def _encrypt_rounds(v, perms, lows, ks, n_p, n_d, diffusion):
    tmp = np.empty_like(v)
    for d in range(n_d):
        for p in range(n_p):
            perm = perms[d * n_p + p]
            for i in range(v.size):
                tmp[i] = v[perm[i]]
            v, tmp = tmp, v
        if diffusion:
            for i in range(v.size):
                v[i] = v[i] + ks[d, i] if lows[d, i] else v[i] - ks[d, i]
    return v


@numba.njit(cache=True)
def _decrypt_rounds(v, invs, lows, ks, n_p, n_d, diffusion):
    tmp = np.empty_like(v)
    for d in range(n_d - 1, -1, -1):
        if diffusion:
            for i in range(v.size):
                v[i] = v[i] - ks[d, i] if lows[d, i] else v[i] + ks[d, i]
        for p in range(n_p - 1, -1, -1):
            inv = invs[d * n_p + p]
            for i in range(v.size):
                tmp[i] = v[inv[i]]
            v, tmp = tmp, v
    return v


def _plan_arrays(key: SecretKey, cfg: CipherConfig, n: int, stream: int):
    key.check(cfg.b_p, cfg.b_d)
    return _plan(key.bits.tobytes(), cfg.b_p, cfg.b_d, cfg.t_pre, cfg.n_p, cfg.n_d, n, stream)


def encrypt_layer(w, key: SecretKey, cfg: CipherConfig, j: int = 0, part: str = "weight",
                  zero_diffusion: bool = False) -> LayerCiphertext:
    """Encrypt one tensor. ``zero_diffusion`` replaces the NCA stream with zeros (test hook)."""
    w = np.asarray(w)
    v = _plain_vector(w, cfg.mode)
    if v.size == 0:
        raise ParameterError("cannot encrypt an empty tensor")
    perms, _, diff, lows, words = _plan_arrays(key, cfg, v.size, stream_index(j, part))
    ks = words if cfg.mode == EXACT else diff
    v = _encrypt_rounds(v, perms, lows, ks, cfg.n_p, cfg.n_d, not zero_diffusion)
    return LayerCiphertext(v, w.shape, cfg.mode, j, part)


def decrypt_layer(c: LayerCiphertext, key: SecretKey, cfg: CipherConfig,
                  zero_diffusion: bool = False) -> np.ndarray:
    """Inverse of :func:`encrypt_layer`.

    Returns float32 in exact mode and float64 in float mode.
    """
    if c.mode != cfg.mode:
        raise FormatError(f"ciphertext mode {c.mode!r} does not match config mode {cfg.mode!r}",
                          "mode")
    _, invs, diff, lows, words = _plan_arrays(key, cfg, c.values.size, stream_index(c.index, c.part))
    ks = words if cfg.mode == EXACT else diff
    v = _decrypt_rounds(c.values.copy(), invs, lows, ks, cfg.n_p, cfg.n_d, not zero_diffusion)
    if cfg.mode == EXACT:
        v = v.view(np.float32)
    return reshape(v, c.shape)


def ciphertext_as_weights(c: LayerCiphertext) -> np.ndarray:
    """What a keyless holder of the ciphertext would load as weights.

    Exact-mode words are read as float32 bit patterns; non-finite patterns
    become 0 so the tensor stays usable for inference and fine-tuning.
    """
    if c.mode == EXACT:
        w = c.values.view(np.float32)
        w = np.where(np.isfinite(w), w, np.float32(0.0))
    else:
        w = c.values
    return reshape(w.astype(np.float32), c.shape)

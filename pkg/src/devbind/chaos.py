"""Key-derived chaotic keystreams: logistic map for permutations, NCA map for diffusion.

Each b-bit key group is read as an unsigned integer and normalised by 2**b.
All iteration happens in IEEE binary64 with round-to-nearest; numba compiles
the inner loops but performs the same scalar operations as plain Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numba
import numpy as np

from .bits import as_bits
from .errors import ChaosRangeError, ParameterError

DEFAULT_BITS = 16
DEFAULT_T_PRE = 1000
LOGISTIC_LAMBDA_RANGE = (3.59, 3.99)
NCA_ALPHA_RANGE = (1.0, 1.4)
NCA_BETA_RANGE = (5.0, 43.0)

# per-stream start offset; irrational so stream starts never coincide
_STREAM_STEP = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SecretKey:
    bits: np.ndarray

    def __post_init__(self):
        bits = as_bits(self.bits).copy()
        if bits.size == 0 or bits.size % 2:
            raise ParameterError(f"secret key needs an even, non-zero bit length, got {bits.size}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return self.bits.size // 2

    @property
    def kp(self) -> np.ndarray:
        return self.bits[:self.n]

    @property
    def kd(self) -> np.ndarray:
        return self.bits[self.n:]

    def check(self, b_p: int = DEFAULT_BITS, b_d: int = DEFAULT_BITS) -> None:
        if self.n < max(2 * b_p, 3 * b_d):
            raise ParameterError(f"key half of {self.n} bits too short for b_p={b_p}, b_d={b_d}")

    def flipped(self, index: int) -> "SecretKey":
        bits = self.bits.copy()
        bits[index] ^= 1
        return SecretKey(bits)

    def __eq__(self, other):
        return isinstance(other, SecretKey) and np.array_equal(self.bits, other.bits)

    __hash__ = None

    def __repr__(self):
        # never print key material
        return f"SecretKey(<{self.bits.size} bits>)"


def _groups(bits: np.ndarray, size: int, count: int) -> list[float]:
    # exact for size <= 53: the integer fits a binary64 mantissa
    pad = -size % 8
    return [(int.from_bytes(np.packbits(bits[i * size:(i + 1) * size]).tobytes(), "big") >> pad) / 2.0**size
            for i in range(count)]


@dataclass(frozen=True)
class LogisticParams:
    s0: float
    lam: float
    b_p: int = DEFAULT_BITS

    def __post_init__(self):
        lo, hi = LOGISTIC_LAMBDA_RANGE
        if not lo < self.lam < hi:
            raise ParameterError(f"lambda {self.lam} outside ({lo}, {hi})")
        if not 0.0 <= self.s0 <= 1.0:
            raise ParameterError(f"s0 {self.s0} outside [0, 1]")

    def for_stream(self, index: int) -> "LogisticParams":
        """Start point for an independent stream (one per layer tensor)."""
        if index == 0:
            return self
        s0 = math.fmod(self.s0 + index * _STREAM_STEP, 1.0)
        return replace(self, s0=_nudge_logistic(s0, self.lam, self.b_p))


@dataclass(frozen=True)
class NcaParams:
    s0: float
    alpha: float
    beta: float
    b_d: int = DEFAULT_BITS

    def __post_init__(self):
        if not NCA_ALPHA_RANGE[0] < self.alpha <= NCA_ALPHA_RANGE[1]:
            raise ParameterError(f"alpha {self.alpha} outside (1, 1.4]")
        if not NCA_BETA_RANGE[0] <= self.beta <= NCA_BETA_RANGE[1]:
            raise ParameterError(f"beta {self.beta} outside [5, 43]")
        if not 0.0 <= self.s0 <= 1.0:
            raise ParameterError(f"s0 {self.s0} outside [0, 1]")

    @property
    def gamma(self) -> float:
        return nca_gamma(self.alpha, self.beta)

    def for_stream(self, index: int) -> "NcaParams":
        if index == 0:
            return self
        s0 = math.fmod(self.s0 + index * _STREAM_STEP, 1.0)
        return replace(self, s0=_nudge_nca(s0, self.b_d))


def nca_gamma(alpha: float, beta: float) -> float:
    return (1.0 - beta**-4) / math.tan(alpha / (1.0 + beta)) * (1.0 + 1.0 / beta) ** beta


def _nudge_logistic(s0: float, lam: float, b: int) -> float:
    # 0 and 1-1/lam are fixed points; 1 and 1/lam land on them in one step
    if s0 in (0.0, 1.0, 1.0 - 1.0 / lam, 1.0 / lam):
        s0 = math.fmod(s0 + 2.0 ** (-b - 1), 1.0)
    return s0


def _nudge_nca(s0: float, b: int) -> float:
    if s0 in (0.0, 1.0):
        s0 = math.fmod(s0 + 2.0 ** (-b - 1), 1.0)
    return s0


def _check_group_bits(b: int, count: int, have: int, name: str):
    if not 1 <= b <= 53 or count * b > have:
        raise ParameterError(f"b={b} needs {count * b} bits (at most 53 per group), {name} has {have}")


def derive_logistic(kp, b_p: int = DEFAULT_BITS) -> LogisticParams:
    kp = as_bits(kp)
    _check_group_bits(b_p, 2, kp.size, "k_p")
    return _derive_logistic(kp[:2 * b_p].tobytes(), b_p)


@lru_cache(maxsize=1024)
def _derive_logistic(raw: bytes, b_p: int) -> LogisticParams:
    u1, u2 = _groups(np.frombuffer(raw, dtype=np.uint8), b_p, 2)
    lam = 3.6 + 0.2 * u2
    return LogisticParams(_nudge_logistic(u1, lam, b_p), lam, b_p)


def derive_nca(kd, b_d: int = DEFAULT_BITS) -> NcaParams:
    kd = as_bits(kd)
    _check_group_bits(b_d, 3, kd.size, "k_d")
    return _derive_nca(kd[:3 * b_d].tobytes(), b_d)


@lru_cache(maxsize=1024)
def _derive_nca(raw: bytes, b_d: int) -> NcaParams:
    u1, u2, u3 = _groups(np.frombuffer(raw, dtype=np.uint8), b_d, 3)
    alpha = min(1.1 + 0.35 * u2, NCA_ALPHA_RANGE[1])
    beta = min(max(6.0 + 35.0 * u3, NCA_BETA_RANGE[0]), NCA_BETA_RANGE[1])
    return NcaParams(_nudge_nca(u1, b_d), alpha, beta, b_d)


@numba.njit(cache=True)
def _iterate_logistic(s, lam, t_pre, n, out):
    for _ in range(t_pre):
        s = lam * s * (1.0 - s)
    for i in range(n):
        s = lam * s * (1.0 - s)
        out[i] = s


@numba.njit(cache=True)
def _iterate_nca(s, alpha, beta, gamma, t_pre, n, out):
    # returns the index of the first out-of-range value, or -1
    for i in range(t_pre + n):
        s = gamma * math.tan(alpha * s) * (1.0 - s) ** beta
        if not (0.0 <= s <= 1.0):
            return i
        if i >= t_pre:
            out[i - t_pre] = s
    return -1


# The state after the discarded transient is cached so that encrypting and
# decrypting the same tensor, or many tensors under one key, pay for the
# transient once. The cached value is the exact binary64 state, so results
# are identical to iterating from s0.

@lru_cache(maxsize=4096)
def _logistic_warm(s0: float, lam: float, t_pre: int) -> float:
    if t_pre == 0:
        return s0
    out = np.empty(t_pre, dtype=np.float64)
    _iterate_logistic(s0, lam, 0, t_pre, out)
    return float(out[-1])


@lru_cache(maxsize=4096)
def _nca_warm(s0: float, alpha: float, beta: float, gamma: float, t_pre: int) -> float:
    if t_pre == 0:
        return s0
    out = np.empty(t_pre, dtype=np.float64)
    bad = _iterate_nca(s0, alpha, beta, gamma, 0, t_pre, out)
    if bad >= 0:
        raise ChaosRangeError(f"NCA iterate {bad} left [0, 1] for alpha={alpha}, beta={beta}")
    return float(out[-1])


def logistic_sequence(p: LogisticParams, t_pre: int = DEFAULT_T_PRE, length: int = 1) -> np.ndarray:
    """``length`` values of the logistic map after ``t_pre`` discarded steps."""
    if length < 1 or t_pre < 0:
        raise ParameterError("need length >= 1 and t_pre >= 0")
    s = _logistic_warm(float(p.s0), float(p.lam), int(t_pre))
    out = np.empty(length, dtype=np.float64)
    _iterate_logistic(s, float(p.lam), 0, int(length), out)
    return out


def nca_sequence(p: NcaParams, t_pre: int = DEFAULT_T_PRE, length: int = 1) -> np.ndarray:
    if length < 1 or t_pre < 0:
        raise ParameterError("need length >= 1 and t_pre >= 0")
    args = (float(p.alpha), float(p.beta), float(p.gamma))
    s = _nca_warm(float(p.s0), *args, int(t_pre))
    out = np.empty(length, dtype=np.float64)
    bad = _iterate_nca(s, *args, 0, int(length), out)
    if bad >= 0:
        raise ChaosRangeError(f"NCA iterate {t_pre + bad} left [0, 1] for alpha={p.alpha}, beta={p.beta}")
    return out


def logistic_step(s: float, lam: float) -> float:
    return lam * s * (1.0 - s)


def nca_step(s: float, p: NcaParams) -> float:
    return p.gamma * math.tan(p.alpha * s) * (1.0 - s) ** p.beta


def permutation_from_sequence(seq) -> np.ndarray:
    """Stable ascending argsort; equal values keep their original order."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.size == 0:
        raise ParameterError("cannot build a permutation from an empty sequence")
    return np.argsort(seq, kind="stable")

"""Block-mode convolutional interleaver.

Symbol ``i`` enters branch ``b = i mod S`` at commutator cycle ``i // S``.
Branch ``b`` holds ``b*Q`` cells, so a symbol leaves ``b*Q`` cycles later
on the same branch. Any ``S`` consecutive output symbols then come from
inputs at least ``Q*S - 1`` apart, the best any assignment of the delays
``0, Q, ..., (S-1)Q`` to commutator slots can do.

Within a block the branch registers are preloaded with the tail of that
branch (tail-biting), which turns the structure into an exact permutation
of the frame: no padding, no flush symbols, and any frame length is
accepted.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ParameterError


@dataclass(frozen=True)
class InterleaverSpec:
    branches: int = 8
    step: int = 4

    def __post_init__(self):
        if self.branches < 2:
            raise ParameterError("interleaver needs S >= 2 branches")
        if self.step < 1:
            raise ParameterError("interleaver step Q must be >= 1")


DEFAULT_INTERLEAVER = InterleaverSpec()


@lru_cache(maxsize=256)
def _destinations(n: int, S: int, Q: int) -> np.ndarray:
    i = np.arange(n)
    b = i % S
    cycle = i // S
    per_branch = (n - b + S - 1) // S
    dest = ((cycle + b * Q) % per_branch) * S + b
    dest.setflags(write=False)
    return dest


def interleave_permutation(n: int, spec: InterleaverSpec = DEFAULT_INTERLEAVER) -> np.ndarray:
    """``dest[i]`` is the output position of input symbol ``i``."""
    return _destinations(int(n), spec.branches, spec.step)


def interleave(symbols, spec: InterleaverSpec = DEFAULT_INTERLEAVER) -> np.ndarray:
    x = np.asarray(symbols)
    dest = interleave_permutation(x.shape[-1], spec)
    out = np.empty_like(x)
    out[..., dest] = x
    return out


def deinterleave(symbols, spec: InterleaverSpec = DEFAULT_INTERLEAVER) -> np.ndarray:
    y = np.asarray(symbols)
    dest = interleave_permutation(y.shape[-1], spec)
    return y[..., dest]

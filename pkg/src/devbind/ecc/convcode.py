"""Rate 1/L feed-forward convolutional codes with hard-decision Viterbi decoding."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import CatastrophicCodeError, ParameterError


@dataclass(frozen=True)
class ConvCode:
    """Generators are stored as coefficient tuples ``(g_0, ..., g_M)``.

    ``g_0`` taps the current input bit, ``g_m`` the input from ``m`` steps
    earlier. Only one input bit per step is supported.
    """

    generators: tuple

    def __post_init__(self):
        gens = tuple(tuple(int(b) for b in g) for g in self.generators)
        object.__setattr__(self, "generators", gens)
        if len(gens) < 2:
            raise ParameterError("need at least two generators (L >= 2)")
        width = len(gens[0])
        if width < 2:
            raise ParameterError("memory M must be >= 1")
        if any(len(g) != width for g in gens):
            raise ParameterError("all generators must have M+1 coefficients")
        if any(b not in (0, 1) for g in gens for b in g):
            raise ParameterError("generator coefficients must be 0 or 1")
        if not any(g[0] for g in gens):
            raise ParameterError("g_0 is zero for every generator")
        if not any(g[-1] for g in gens):
            raise ParameterError("g_M is zero for every generator; memory is overstated")

    @classmethod
    def from_octal(cls, octals, memory: int) -> "ConvCode":
        """``from_octal((0o13, 0o15, 0o17), 3)``; the leading bit is ``g_0``."""
        gens = []
        for o in octals:
            if o >> (memory + 1):
                raise ParameterError(f"generator {o:o} wider than M+1={memory + 1} bits")
            gens.append(tuple((o >> (memory - m)) & 1 for m in range(memory + 1)))
        return cls(tuple(gens))

    @property
    def n_in(self) -> int:
        return 1

    @property
    def n_out(self) -> int:
        return len(self.generators)

    @property
    def memory(self) -> int:
        return len(self.generators[0]) - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    def __repr__(self):
        octs = ",".join(f"{int(''.join(map(str, g)), 2):o}" for g in self.generators)
        return f"ConvCode(1,{self.n_out},{self.memory}; octal {octs})"

    def coded_length(self, info_len: int) -> int:
        return self.n_out * (info_len + self.memory)

    def info_length(self, coded_len: int) -> int:
        """Information bits carried by a terminated frame of ``coded_len`` bits."""
        if coded_len % self.n_out:
            raise ParameterError(f"frame of {coded_len} bits not divisible by L={self.n_out}")
        k = coded_len // self.n_out - self.memory
        if k < 1:
            raise ParameterError(f"frame of {coded_len} bits too short for memory {self.memory}")
        return k

    @cached_property
    def _trellis(self):
        # state = last M inputs, most recent in the high bit
        M = self.memory
        g = np.array(self.generators, dtype=np.uint8)  # (L, M+1)
        nxt = np.zeros((self.n_states, 2), dtype=np.int64)
        out = np.zeros((self.n_states, 2, self.n_out), dtype=np.uint8)
        for s in range(self.n_states):
            past = np.array([(s >> (M - m)) & 1 for m in range(1, M + 1)], dtype=np.uint8)
            for u in (0, 1):
                reg = np.concatenate(([u], past))
                out[s, u] = (g @ reg) & 1
                nxt[s, u] = (s >> 1) | (u << (M - 1))
        return nxt, out

    def is_catastrophic(self) -> bool:
        return gf2_poly_gcd_many([_poly(g) for g in self.generators]) != 1


DEFAULT_CODE = ConvCode.from_octal((0o13, 0o15, 0o17), 3)


def _poly(g) -> int:
    # bit m of the int is the coefficient of D**m
    return sum(int(b) << m for m, b in enumerate(g))


def gf2_poly_mod(a: int, b: int) -> int:
    db = b.bit_length()
    while a and a.bit_length() >= db:
        a ^= b << (a.bit_length() - db)
    return a


def gf2_poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, gf2_poly_mod(a, b)
    return a


def gf2_poly_gcd_many(polys) -> int:
    out = 0
    for p in polys:
        out = gf2_poly_gcd(out, p) if out else p
    return out


def conv_encode(info_bits, code: ConvCode = DEFAULT_CODE) -> np.ndarray:
    """Zero-terminated encoding.

    Output has ``L * (len(info) + M)`` bits, ordered step by step with the L
    stream bits of each step adjacent. A 2-D input encodes each row.
    """
    k = np.asarray(info_bits, dtype=np.uint8)
    if k.shape[-1] == 0:
        raise ParameterError("cannot encode an empty information word")
    squeeze = k.ndim == 1
    k = np.atleast_2d(k)
    batch, n = k.shape
    M = code.memory
    T = n + M
    padded = np.zeros((batch, T + M), dtype=np.uint8)
    padded[:, M:M + n] = k
    out = np.zeros((batch, T, code.n_out), dtype=np.uint8)
    for l, g in enumerate(code.generators):
        acc = np.zeros((batch, T), dtype=np.uint8)
        for m, gm in enumerate(g):
            if gm:
                acc ^= padded[:, M - m:M - m + T]
        out[:, :, l] = acc
    out = out.reshape(batch, T * code.n_out)
    return out[0] if squeeze else out


def viterbi_decode(received, code: ConvCode = DEFAULT_CODE) -> np.ndarray:
    """Hard-decision ML decoding over the zero-terminated trellis.

    Among equally likely paths the lexicographically smallest information
    sequence wins. Accepts a single frame or a 2-D batch of frames.
    """
    r = np.asarray(received, dtype=np.uint8)
    L, M = code.n_out, code.memory
    if r.shape[-1] % L:
        raise ParameterError(f"received length {r.shape[-1]} not divisible by L={L}")
    squeeze = r.ndim == 1
    r = np.atleast_2d(r)
    batch = r.shape[0]
    T = r.shape[1] // L
    if T <= M:
        raise ParameterError("received frame shorter than the code memory")
    r = r.reshape(batch, T, L)
    nxt, out = code._trellis
    S = code.n_states

    # predecessors of each next-state: two states differing in their oldest bit
    ns = np.arange(S)
    u_of = ns >> (M - 1)
    pred = np.stack([((ns << 1) & (S - 1)), ((ns << 1) & (S - 1)) | 1], axis=1)  # (S, 2)
    pred_out = out[pred, u_of[:, None]]  # (S, 2, L)

    big = np.iinfo(np.int64).max // 4
    metric = np.full((batch, S), big, dtype=np.int64)
    metric[:, 0] = 0
    rank = np.zeros((batch, S), dtype=np.int64)
    choice = np.zeros((T, batch, S), dtype=np.uint8)
    rows = np.arange(batch)[:, None]

    for t in range(T):
        bm = np.count_nonzero(r[:, t, None, None, :] != pred_out[None], axis=-1)  # (batch, S, 2)
        cand = metric[:, pred] + bm
        m0, m1 = cand[..., 0], cand[..., 1]
        r0, r1 = rank[:, pred[:, 0]], rank[:, pred[:, 1]]
        take1 = (m1 < m0) | ((m1 == m0) & (r1 < r0))
        choice[t] = take1
        metric = np.where(take1, m1, m0)
        metric = np.minimum(metric, big)
        prev_rank = np.where(take1, r1, r0)
        # lexicographic order of survivors: parent's order, then the new bit
        key = prev_rank * 2 + u_of[None, :]
        rank = np.argsort(np.argsort(key, axis=1, kind="stable"), axis=1, kind="stable")

    state = np.zeros(batch, dtype=np.int64)
    bits = np.zeros((batch, T), dtype=np.uint8)
    for t in range(T - 1, -1, -1):
        bits[:, t] = state >> (M - 1)
        c = choice[t, rows[:, 0], state]
        state = pred[state, c]
    info = bits[:, :T - M]
    return info[0] if squeeze else info


def free_distance(code: ConvCode = DEFAULT_CODE, allow_catastrophic: bool = False):
    """Return ``(d_free, r)`` with ``r = (d_free - 1) // 2``.

    Best-first search over the trellis: leave the zero state on input 1,
    then find the lightest route back to it. Paths heavier than the best
    completed excursion are pruned.
    """
    if code.is_catastrophic() and not allow_catastrophic:
        raise CatastrophicCodeError(f"{code!r} is catastrophic")
    nxt, out = code._trellis
    start = int(nxt[0, 1])
    w0 = int(out[0, 1].sum())
    best = None
    dist = {start: w0}
    heap = [(w0, start)]
    while heap:
        w, s = heapq.heappop(heap)
        if best is not None and w >= best:
            break
        if w > dist[s]:
            continue
        for u in (0, 1):
            ns, nw = int(nxt[s, u]), w + int(out[s, u].sum())
            if ns == 0:
                if best is None or nw < best:
                    best = nw
                continue
            if nw < dist.get(ns, nw + 1):
                dist[ns] = nw
                heapq.heappush(heap, (nw, ns))
    return best, (best - 1) // 2

"""Counter-based random streams.

Every random decision in the simulator is a pure function of
``(seed, tag, counter...)`` so that results never depend on how work is
split across lanes or workers.  The mixing function is the splitmix64
finalizer.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# Geometric skip sampling is done in fixed chunks of the op-counter space.
CHUNK = 4096
# Above this rate it is cheaper to hash every op directly.
DIRECT_RATE = 0.05

# Stream tags.  New tags go at the end; changing a value changes every result.
TAG_OVERDRIVE = 0x10
TAG_OVERDRIVE_THIN = 0x11
TAG_OVERDRIVE_BIT = 0x12
TAG_COUPLE = 0x20
TAG_COUPLE_BIT = 0x21
TAG_TRANSIENT = 0x30
TAG_SCRATCH_TRANSIENT = 0x31
TAG_ALU = 0x40
TAG_ALU_BIT = 0x41
TAG_MIR = 0x50
TAG_RB = 0x51
TAG_M20 = 0x52
TAG_CAMPAIGN = 0x60
TAG_CARD = 0x61
TAG_SWEEP = 0x62


def mix64(x):
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _mix_int(x: int) -> int:
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def hash_int(seed: int, tag: int, *counters: int) -> int:
    """Scalar version of :func:`hash_array`; identical output."""
    h = _mix_int((seed & MASK64) ^ ((GOLDEN * (tag + 1)) & MASK64))
    for c in counters:
        h = _mix_int(h ^ (c & MASK64))
    return h


def hash_array(seed: int, tag: int, *counters) -> np.ndarray:
    """Hash broadcastable counter arrays into uint64 words."""
    h = np.uint64(_mix_int((seed & MASK64) ^ ((GOLDEN * (tag + 1)) & MASK64)))
    out = None
    for c in counters:
        c = np.asarray(c)
        if c.dtype != np.uint64:
            c = c.astype(np.int64).view(np.uint64) if c.dtype.kind == "i" else c.astype(np.uint64)
        out = mix64((h if out is None else out) ^ c)
    if out is None:
        return np.asarray(h)
    return out


def to_unit(h) -> np.ndarray:
    """Map uint64 hashes to floats in [0, 1) using the top 53 bits."""
    return (np.asarray(h, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def uniform(seed: int, tag: int, *counters) -> np.ndarray:
    return to_unit(hash_array(seed, tag, *counters))


def generator(seed: int, tag: int, *counters: int) -> np.random.Generator:
    """A numpy Philox generator keyed by the hashed counters.

    Used where a distribution sampler (Poisson, lognormal) is needed; Philox
    is itself counter-based so the keying keeps replay exact.
    """
    key = hash_int(seed, tag, *counters)
    return np.random.Generator(np.random.Philox(key=key))


def bernoulli_ops(seed: int, tag: int, q: float, lo: int, hi: int) -> np.ndarray:
    """Op counters in ``[lo, hi)`` that fire under an i.i.d. Bernoulli(q) process.

    Membership of any op depends only on ``(seed, tag, q, op)``, never on the
    ``[lo, hi)`` window used to ask, so splitting a range gives the same union.
    """
    if hi <= lo or q <= 0.0:
        return np.empty(0, dtype=np.int64)
    if q >= 1.0:
        return np.arange(lo, hi, dtype=np.int64)
    if q >= DIRECT_RATE:
        ops = np.arange(lo, hi, dtype=np.int64)
        return ops[uniform(seed, tag, ops) < q]
    j0, j1 = lo // CHUNK, (hi - 1) // CHUNK
    pos = _chunk_candidates(seed, tag, q, np.arange(j0, j1 + 1, dtype=np.int64))
    return pos[(pos >= lo) & (pos < hi)]


def bernoulli_subset(seed: int, tag: int, q: float, ops: np.ndarray) -> np.ndarray:
    """Boolean mask: which of the given op counters fire (same process as above)."""
    ops = np.asarray(ops, dtype=np.int64)
    if ops.size == 0 or q <= 0.0:
        return np.zeros(ops.size, dtype=bool)
    if q >= 1.0:
        return np.ones(ops.size, dtype=bool)
    if q >= DIRECT_RATE:
        return uniform(seed, tag, ops) < q
    chunks = np.unique(ops // CHUNK)
    pos = _chunk_candidates(seed, tag, q, chunks)
    return np.isin(ops, pos)


def _chunk_candidates(seed: int, tag: int, q: float, chunks: np.ndarray) -> np.ndarray:
    mean = q * CHUNK
    width = int(mean + 6.0 * math.sqrt(mean) + 10)
    log_q = math.log1p(-q)
    found = []
    todo = chunks
    start_t = 0
    # cursor = last emitted position per pending chunk
    cursor = todo * CHUNK - 1
    while todo.size:
        t = np.arange(start_t, start_t + width, dtype=np.int64)
        u = uniform(seed, tag, todo[:, None], t[None, :])
        gaps = np.floor(np.log1p(-u) / log_q) + 1.0
        pos = cursor[:, None].astype(np.float64) + np.cumsum(gaps, axis=1)
        end = ((todo + 1) * CHUNK)[:, None]
        inside = pos < end
        found.append(pos[inside].astype(np.int64))
        done = ~inside[:, -1]
        cursor = pos[~done, -1].astype(np.int64)
        todo = todo[~done]
        start_t += width
    if not found:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(found))


def nth_set_bit(x: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Index of the ``n``-th (0-based) set bit of each uint32 in ``x``; -1 if there is none."""
    x = np.asarray(x, dtype=np.uint32)
    n = np.asarray(n, dtype=np.int64)
    shape = np.broadcast_shapes(x.shape, n.shape)
    x = np.broadcast_to(x, shape).reshape(-1)
    n = np.broadcast_to(n, shape).reshape(-1)
    bits = ((x[:, None] >> _BIT_IDX) & np.uint32(1)).astype(bool)
    rank = np.cumsum(bits, axis=1)
    hit = bits & (rank == (n + 1)[:, None])
    out = np.where(hit.any(axis=1), hit.argmax(axis=1), -1)
    return out.astype(np.int64).reshape(shape)


_BIT_IDX = np.arange(32, dtype=np.uint32)


def popcount32(x) -> np.ndarray:
    return np.bitwise_count(np.asarray(x, dtype=np.uint32)).astype(np.int64)

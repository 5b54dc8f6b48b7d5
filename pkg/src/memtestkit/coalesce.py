"""Half-warp memory transaction model for G80 and GT200 coalescing rules.

Rule tables (4-byte accesses, one half-warp = 16 lanes):

G80 (compute capability 1.0/1.1)
    If every active lane ``i`` reads or writes ``base + 4*i`` with ``base``
    64-byte aligned (inactive lanes may leave gaps), the half-warp issues one
    64-byte transaction.  Otherwise each active lane issues its own 32-byte
    transaction.

GT200 (compute capability 1.2/1.3)
    One transaction per distinct 128-byte segment touched by active lanes.
    A segment whose accessed bytes all fall in one 64-byte half shrinks to
    64 bytes, and again to 32 bytes if they fall in one 32-byte quarter.

Traces are columnar (numpy arrays) so a full modulo-20 sweep over tens of
thousands of words is a handful of vectorised passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HALF_WARP = 16
WORD = 4
MAPPINGS = ("class-major", "linear")
SCOPES = ("full", "writes")


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class TransactionStats:
    transactions: int
    bytes: int

    def __add__(self, other: "TransactionStats") -> "TransactionStats":
        return TransactionStats(self.transactions + other.transactions, self.bytes + other.bytes)


@dataclass(frozen=True)
class Transactions:
    """Individual transactions: owning group, start byte, size in bytes."""

    group: np.ndarray
    start: np.ndarray
    size: np.ndarray

    @property
    def stats(self) -> TransactionStats:
        return TransactionStats(int(self.size.size), int(self.size.sum()))


class AccessTrace:
    """Ordered half-warp groups of 4-byte accesses.

    ``group`` must be nondecreasing; lanes are distinct within a group.
    """

    def __init__(self, group, lane, byte_address, is_write=None, active=None, validate: bool = True):
        self.group = np.asarray(group, dtype=np.int64)
        self.lane = np.asarray(lane, dtype=np.int64)
        self.byte_address = np.asarray(byte_address, dtype=np.int64)
        n = self.group.size
        self.is_write = np.ones(n, dtype=bool) if is_write is None else np.asarray(is_write, dtype=bool)
        self.active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
        if validate:
            self._validate()

    def _validate(self) -> None:
        n = self.group.size
        for name in ("lane", "byte_address", "is_write", "active"):
            if getattr(self, name).size != n:
                raise TraceError(f"column {name} has the wrong length")
        if n == 0:
            return
        bad = np.flatnonzero(self.byte_address % WORD)
        if bad.size:
            raise TraceError(f"misaligned access at byte {int(self.byte_address[bad[0]])}")
        if np.any(self.byte_address < 0):
            raise TraceError("negative byte address")
        if np.any((self.lane < 0) | (self.lane >= HALF_WARP)):
            raise TraceError("lane outside 0..15")
        if np.any(np.diff(self.group) < 0):
            raise TraceError("groups must be contiguous and ordered")
        key = self.group * HALF_WARP + self.lane
        if np.unique(key).size != n:
            raise TraceError("duplicate lane within a half-warp group")

    def __len__(self) -> int:
        return int(self.group.size)

    @classmethod
    def from_groups(cls, groups) -> "AccessTrace":
        """Build from ``[[(lane, byte_address), ...], ...]``; optional 3rd/4th items are is_write, active."""
        g, lane, addr, w, act = [], [], [], [], []
        for gi, accesses in enumerate(groups):
            if len(accesses) > HALF_WARP:
                raise TraceError("more than 16 accesses in a half-warp group")
            for acc in accesses:
                g.append(gi)
                lane.append(acc[0])
                addr.append(acc[1])
                w.append(acc[2] if len(acc) > 2 else True)
                act.append(acc[3] if len(acc) > 3 else True)
        return cls(g, lane, addr, w, act)

    @classmethod
    def concat(cls, traces) -> "AccessTrace":
        traces = [t for t in traces if len(t)]
        if not traces:
            return cls([], [], [])
        offs, off = [], 0
        for t in traces:
            offs.append(off)
            off += int(t.group.max()) + 1
        return cls(np.concatenate([t.group + o for t, o in zip(traces, offs)]),
                   np.concatenate([t.lane for t in traces]),
                   np.concatenate([t.byte_address for t in traces]),
                   np.concatenate([t.is_write for t in traces]),
                   np.concatenate([t.active for t in traces]), validate=False)

    def active_only(self):
        m = self.active
        return self.group[m], self.lane[m], self.byte_address[m]


def _group_reduce(keys: np.ndarray, values: np.ndarray, fn):
    """Reduce ``values`` over runs of equal, sorted ``keys``."""
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    return keys[starts], fn.reduceat(values, starts)


def g80_transactions(trace: AccessTrace) -> Transactions:
    g, lane, addr = trace.active_only()
    if g.size == 0:
        e = np.empty(0, dtype=np.int64)
        return Transactions(e, e, e)
    base = addr - WORD * lane
    ug, bmin = _group_reduce(g, base, np.minimum)
    _, bmax = _group_reduce(g, base, np.maximum)
    coalesced = (bmin == bmax) & (bmin % 64 == 0) & (bmin >= 0)
    per_access = np.repeat(coalesced, np.diff(np.r_[np.flatnonzero(np.r_[True, g[1:] != g[:-1]]), g.size]))
    loose = ~per_access
    grp = np.concatenate([ug[coalesced], g[loose]])
    start = np.concatenate([bmin[coalesced], addr[loose] - addr[loose] % 32])
    size = np.concatenate([np.full(int(coalesced.sum()), 64), np.full(int(loose.sum()), 32)])
    order = np.lexsort((start, grp))
    return Transactions(grp[order], start[order], size[order].astype(np.int64))


def gt200_transactions(trace: AccessTrace) -> Transactions:
    g, _, addr = trace.active_only()
    if g.size == 0:
        e = np.empty(0, dtype=np.int64)
        return Transactions(e, e, e)
    seg = addr // 128
    order = np.lexsort((seg, g))
    g, seg, off = g[order], seg[order], (addr % 128)[order]
    key_change = np.r_[True, (g[1:] != g[:-1]) | (seg[1:] != seg[:-1])]
    starts = np.flatnonzero(key_change)
    lo = np.minimum.reduceat(off, starts)
    hi = np.maximum.reduceat(off, starts) + WORD
    grp, sg = g[starts], seg[starts]
    size = np.full(starts.size, 128, dtype=np.int64)
    base = np.zeros(starts.size, dtype=np.int64)
    for half in (64, 32):
        span_lo = lo - base
        span_hi = hi - base
        lower = span_hi <= half
        upper = span_lo >= half
        can = (size == 2 * half) & (lower | upper)
        base = np.where(can & upper, base + half, base)
        size = np.where(can, half, size)
    return Transactions(grp, sg * 128 + base, size)


def coalesce_g80(trace: AccessTrace) -> TransactionStats:
    return g80_transactions(trace).stats


def coalesce_gt200(trace: AccessTrace) -> TransactionStats:
    return gt200_transactions(trace).stats


# -- modulo-20 traces ---------------------------------------------------------------

def _chunked(words: np.ndarray, is_write: bool) -> AccessTrace:
    """Consecutive words handed to consecutive lanes, 16 per half-warp."""
    idx = np.arange(words.size)
    return AccessTrace(idx // HALF_WARP, idx % HALF_WARP, words * WORD,
                       np.full(words.size, is_write), None, validate=False)


def _predicated(region_words: int, mask: np.ndarray, is_write: bool) -> AccessTrace:
    """Thread i owns word i; only threads where ``mask`` holds issue an access."""
    words = np.flatnonzero(mask)
    return AccessTrace(words // HALF_WARP, words % HALF_WARP, words * WORD,
                       np.full(words.size, is_write), None, validate=False)


def trace_m20(region_words: int, round_: int, mapping: str = "class-major", scope: str = "full") -> AccessTrace:
    """Accesses of one modulo-20 round in kernel order.

    ``class-major`` hands consecutive members of one address class to
    consecutive lanes, classes in ascending order.  ``linear`` gives thread i
    word i and predicates off the threads outside the kernel's class.
    ``scope="writes"`` leaves out the verification reads.
    """
    if mapping not in MAPPINGS:
        raise ValueError(f"unknown mapping {mapping!r}; choose from {MAPPINGS}")
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
    if not 0 <= round_ < 20:
        raise ValueError("round must be in [0, 20)")
    n = region_words
    cls = np.arange(round_, n, 20)
    if mapping == "class-major":
        others = np.concatenate([np.arange(r, n, 20) for r in range(20) if r != round_])
        write_p = _chunked(cls, True)
        write_c = _chunked(others, True)
        verify = _chunked(cls, False)
    else:
        in_cls = (np.arange(n) % 20) == round_
        write_p = _predicated(n, in_cls, True)
        write_c = _predicated(n, ~in_cls, True)
        verify = _predicated(n, in_cls, False)
    parts = [write_p, write_c, write_c]
    if scope == "full":
        parts.append(verify)
    return AccessTrace.concat(parts)


@dataclass(frozen=True)
class TrafficReport:
    region_words: int
    mapping: str
    scope: str
    g80: TransactionStats
    gt200: TransactionStats

    @property
    def byte_ratio(self) -> float:
        return self.g80.bytes / self.gt200.bytes

    @property
    def transaction_ratio(self) -> float:
        return self.g80.transactions / self.gt200.transactions

    def as_dict(self) -> dict:
        return {
            "region_words": self.region_words,
            "mapping": self.mapping,
            "scope": self.scope,
            "g80_transactions": self.g80.transactions,
            "g80_bytes": self.g80.bytes,
            "gt200_transactions": self.gt200.transactions,
            "gt200_bytes": self.gt200.bytes,
            "byte_ratio": round(self.byte_ratio, 6),
            "transaction_ratio": round(self.transaction_ratio, 6),
        }


def traffic_report(region_words: int, mapping: str = "class-major", scope: str = "full") -> TrafficReport:
    """Sum both coalescers over all twenty modulo-20 rounds."""
    if region_words < 320:
        raise ValueError("region must hold at least 320 words")
    g80 = TransactionStats(0, 0)
    gt = TransactionStats(0, 0)
    for r in range(20):
        t = trace_m20(region_words, r, mapping, scope)
        g80 = g80 + coalesce_g80(t)
        gt = gt + coalesce_gt200(t)
    return TrafficReport(region_words, mapping, scope, g80, gt)

"""Simulated memory device with deterministic fault injection.

Fault mechanisms
----------------
stuck-at
    Listed bits of listed words always read back their stuck value.
transient
    Poisson bit flips at ``transient_rate_lambda`` errors per bit-hour of
    virtual time, applied lazily before every read.
coupling
    A write that changes a word (the aggressor) flips, with probability
    ``p_couple`` per victim offset, one of the changed bits in the victim word
    at ``address + d``.  Victims outside the region or in another row of
    ``row_length_words`` are skipped.
overdrive
    Timing faults above ``f0_mhz``.  A write whose stored value changes in
    ``h`` bits disturbs, with probability
    ``min(1, alpha * (f - f0)**gamma * h / 32)``, one neighbour (drawn from the
    coupling victim offsets): one bit in which the neighbour differs from the
    freshly written value is pulled to the written value.
ALU
    Each multiply-add of the logic and random-block kernels flips one result
    bit with probability ``alu_fault_p``.

Every random choice is a hash of ``(seed, stream, op counter)``, so a run is a
pure function of the profile and the kernel sequence.  Bulk writes are atomic:
all stores land, then disturbances are applied in (op, mechanism, offset)
order.

The image is kept as a short periodic background plus a sparse overlay while
the region holds constant or class-periodic data, and switches to a dense
array after arbitrary bulk writes.  That keeps pattern tests over large
simulated regions cheap without changing what any read returns.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import kernels, rng
from .memdev import (
    MASK32,
    DeviceCapabilities,
    MemoryDevice,
    RegionSpec,
    VirtualClock,
    class_size,
)

LAZY_PERIOD_MAX = 1 << 16
SECONDS_PER_HOUR = 3600.0


# -- profile -----------------------------------------------------------------------

@dataclass(frozen=True)
class StuckAt:
    address: int
    mask: int
    stuck_value: int


@dataclass(frozen=True)
class CouplingModel:
    row_length_words: int = 1024
    victim_offsets: tuple[int, ...] = (-1, 1)
    p_couple: float = 0.0
    mode: str = "flip-victim-bit-on-differing-aggressor-write"

    def __post_init__(self):
        if self.row_length_words < 1:
            raise ValueError("row_length_words must be >= 1")
        if not 0.0 <= self.p_couple <= 1.0:
            raise ValueError("p_couple must be in [0, 1]")
        object.__setattr__(self, "victim_offsets", tuple(int(d) for d in self.victim_offsets))


@dataclass(frozen=True)
class OverdriveModel:
    f0_mhz: int = 410
    alpha: float = 1e-9
    gamma: float = 3.0

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("overdrive gamma must be >= 1")
        if self.alpha < 0:
            raise ValueError("overdrive alpha must be >= 0")

    def base_rate(self, f_mhz: float) -> float:
        """Disturb probability of a full 32-bit transition at ``f_mhz`` (uncapped)."""
        excess = max(0.0, f_mhz - self.f0_mhz)
        if excess == 0.0 or self.alpha == 0.0:
            return 0.0
        return self.alpha * excess ** self.gamma

    def probability(self, f_mhz: float, h) -> np.ndarray:
        return np.minimum(1.0, self.base_rate(f_mhz) * np.asarray(h, dtype=np.float64) / 32.0)


@dataclass(frozen=True)
class FaultProfile:
    stuck_at: tuple[StuckAt, ...] = ()
    transient_rate_lambda: float = 0.0
    coupling: CouplingModel = field(default_factory=CouplingModel)
    overdrive: OverdriveModel = field(default_factory=OverdriveModel)
    alu_fault_p: float = 0.0
    scratchpad_profile: "FaultProfile | None" = None
    seed: int = 0

    def __post_init__(self):
        if self.transient_rate_lambda < 0:
            raise ValueError("transient_rate_lambda must be >= 0")
        if not 0.0 <= self.alu_fault_p <= 1.0:
            raise ValueError("alu_fault_p must be in [0, 1]")
        object.__setattr__(self, "stuck_at", tuple(self.stuck_at))

    @classmethod
    def null(cls, seed: int = 0) -> "FaultProfile":
        """Every mechanism disabled."""
        return cls(overdrive=OverdriveModel(alpha=0.0), seed=seed)

    def replace(self, **kw) -> "FaultProfile":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return FaultProfile(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coupling"]["victim_offsets"] = list(self.coupling.victim_offsets)
        d["stuck_at"] = [asdict(s) for s in self.stuck_at]
        d["scratchpad_profile"] = self.scratchpad_profile.to_dict() if self.scratchpad_profile else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FaultProfile":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown FaultProfile fields: {sorted(unknown)}")
        kw = dict(d)
        if "stuck_at" in kw:
            kw["stuck_at"] = tuple(StuckAt(**s) for s in kw["stuck_at"])
        if "coupling" in kw and kw["coupling"] is not None:
            kw["coupling"] = CouplingModel(**kw["coupling"])
        if "overdrive" in kw and kw["overdrive"] is not None:
            kw["overdrive"] = OverdriveModel(**kw["overdrive"])
        if kw.get("scratchpad_profile") is not None:
            kw["scratchpad_profile"] = cls.from_dict(kw["scratchpad_profile"])
        return cls(**kw)


# -- events --------------------------------------------------------------------------

class FaultKind(str, Enum):
    STUCK_AT = "STUCK_AT"
    TRANSIENT = "TRANSIENT"
    COUPLING = "COUPLING"
    OVERDRIVE = "OVERDRIVE"
    ALU = "ALU"


@dataclass(frozen=True)
class FaultEvent:
    kind: FaultKind
    address: int
    bit: int
    virtual_time: float
    op_counter: int


# -- address sets --------------------------------------------------------------------

@dataclass(frozen=True)
class _AddrSet:
    """Addresses touched by one bulk op, in canonical ascending order."""

    n: int
    modulus: int = 1
    residue: int = 0
    exclude: bool = False
    base: int = 0
    count: int | None = None  # contiguous range when set

    @property
    def size(self) -> int:
        if self.count is not None:
            return self.count
        return class_size(self.n, self.modulus, self.residue, self.exclude)

    @property
    def is_full(self) -> bool:
        if self.count is not None:
            return self.base == 0 and self.count == self.n
        return self.modulus == 1 and not self.exclude

    def addr_of(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.count is not None:
            return self.base + idx
        m, r = self.modulus, self.residue
        if not self.exclude:
            return r + idx * m
        q, rem = np.divmod(idx, m - 1)
        return q * m + rem + (rem >= r)

    def index_of(self, addr: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`addr_of`; caller guarantees membership."""
        addr = np.asarray(addr, dtype=np.int64)
        if self.count is not None:
            return addr - self.base
        m, r = self.modulus, self.residue
        if not self.exclude:
            return (addr - r) // m
        q, rem = np.divmod(addr, m)
        return q * (m - 1) + rem - (rem > r)

    def contains(self, addr: np.ndarray) -> np.ndarray:
        addr = np.asarray(addr, dtype=np.int64)
        inside = (addr >= 0) & (addr < self.n)
        if self.count is not None:
            return inside & (addr >= self.base) & (addr < self.base + self.count)
        hit = (addr % self.modulus) == self.residue
        return inside & (~hit if self.exclude else hit)


# -- memory image ----------------------------------------------------------------------

class _Image:
    """Region contents as periodic background + overlay, or as a dense array."""

    def __init__(self, n: int):
        self.n = n
        self.dense: np.ndarray | None = None
        self.bg = np.zeros(1, dtype=np.uint32)
        self.ov_addr = np.empty(0, dtype=np.int64)
        self.ov_val = np.empty(0, dtype=np.uint32)

    @property
    def period(self) -> int:
        return self.bg.size

    # reading
    def get(self, addr: np.ndarray) -> np.ndarray:
        addr = np.asarray(addr, dtype=np.int64)
        if self.dense is not None:
            return self.dense[addr]
        out = self.bg[addr % self.period]
        if self.ov_addr.size and addr.size:
            pos = np.searchsorted(self.ov_addr, addr)
            pos_c = np.minimum(pos, self.ov_addr.size - 1)
            hit = self.ov_addr[pos_c] == addr
            out[hit] = self.ov_val[pos_c[hit]]
        return out

    def materialize(self, lo: int = 0, hi: int | None = None) -> np.ndarray:
        hi = self.n if hi is None else hi
        if self.dense is not None:
            return self.dense[lo:hi].copy()
        p = self.period
        start = lo % p
        reps = math.ceil((hi - lo + start) / p)
        out = np.tile(self.bg, reps)[start:start + hi - lo].copy()
        if self.ov_addr.size:
            i0, i1 = np.searchsorted(self.ov_addr, [lo, hi])
            out[self.ov_addr[i0:i1] - lo] = self.ov_val[i0:i1]
        return out

    def densify(self) -> None:
        if self.dense is None:
            self.dense = self.materialize()
            self.ov_addr = np.empty(0, dtype=np.int64)
            self.ov_val = np.empty(0, dtype=np.uint32)

    # writing
    def set(self, addr: np.ndarray, val: np.ndarray) -> None:
        """Scatter store; later duplicates win."""
        addr = np.asarray(addr, dtype=np.int64)
        val = np.asarray(val, dtype=np.uint32)
        if addr.size == 0:
            return
        if self.dense is not None:
            self.dense[addr] = val
            return
        a = np.concatenate([self.ov_addr, addr])
        v = np.concatenate([self.ov_val, val])
        # keep the last occurrence of each address
        order = np.argsort(a, kind="stable")
        a, v = a[order], v[order]
        last = np.ones(a.size, dtype=bool)
        last[:-1] = a[1:] != a[:-1]
        a, v = a[last], v[last]
        keep = v != self.bg[a % self.period]
        self.ov_addr, self.ov_val = a[keep], v[keep]
        if self.ov_addr.size > self.n // 8:
            self.densify()

    def _drop_overlay(self, aset: _AddrSet) -> None:
        if self.ov_addr.size:
            keep = ~aset.contains(self.ov_addr)
            self.ov_addr, self.ov_val = self.ov_addr[keep], self.ov_val[keep]

    def fill(self, v: int, aset: _AddrSet) -> None:
        m, r, ex = aset.modulus, aset.residue, aset.exclude
        if self.dense is not None:
            if m == 1:
                self.dense = None
                self.bg = np.array([v], dtype=np.uint32)
                return
            kernels.fill_class(self.dense, v, m, r, ex)
            if ex:
                self._try_compact(v, m, r)
            return
        if m == 1:
            self.bg = np.array([v], dtype=np.uint32)
            self.ov_addr = np.empty(0, dtype=np.int64)
            self.ov_val = np.empty(0, dtype=np.uint32)
            return
        period = math.lcm(self.period, m)
        if period > LAZY_PERIOD_MAX:
            self.densify()
            self.fill(v, aset)
            return
        bg = np.tile(self.bg, period // self.period)
        sel = (np.arange(period) % m) == r
        bg[~sel if ex else sel] = v
        self._drop_overlay(aset)
        self._set_background(bg)

    def _set_background(self, bg: np.ndarray) -> None:
        old = self.bg
        self.bg = _reduce_period(bg)
        if self.ov_addr.size and (old.size != self.bg.size or not np.array_equal(old, self.bg)):
            keep = self.ov_val != self.bg[self.ov_addr % self.bg.size]
            self.ov_addr, self.ov_val = self.ov_addr[keep], self.ov_val[keep]

    def _try_compact(self, v: int, m: int, r: int) -> None:
        """After a fill outside class r, return to lazy form if nearly periodic."""
        if m > LAZY_PERIOD_MAX:
            return
        d = self.dense
        cls = d[r::m]
        if cls.size == 0:
            return
        cand = cls[cls.size // 2]
        bg = np.full(m, v, dtype=np.uint32)
        bg[r] = cand
        off = np.flatnonzero(d != v)
        off = off[(off % m) != r]
        off_cls = np.flatnonzero(cls != cand) * m + r
        ov = np.union1d(off, off_cls)
        if ov.size > self.n // 64:
            return
        self.ov_addr = ov.astype(np.int64)
        self.ov_val = d[ov]
        self.dense = None
        self.bg = bg
        red = _reduce_period(bg)
        if red.size != bg.size:
            self.bg = red

    def write_range(self, base: int, values: np.ndarray) -> None:
        if base == 0 and values.size == self.n:
            self.dense = values.copy()
            self.ov_addr = np.empty(0, dtype=np.int64)
            self.ov_val = np.empty(0, dtype=np.uint32)
            return
        if self.dense is None and values.size > self.n // 8:
            self.densify()
        if self.dense is not None:
            self.dense[base:base + values.size] = values
        else:
            self.set(np.arange(base, base + values.size, dtype=np.int64), values)

    def write_class(self, m: int, r: int, values: np.ndarray) -> None:
        if self.dense is not None:
            self.dense[r::m] = values
            return
        uniq, counts = np.unique(values, return_counts=True)
        v0 = int(uniq[np.argmax(counts)])
        aset = _AddrSet(self.n, m, r)
        self.fill(v0, aset)
        odd = np.flatnonzero(values != v0)
        if odd.size:
            self.set(aset.addr_of(odd), values[odd])

    def count_ne(self, v: int, aset: _AddrSet) -> int:
        m, r, ex = aset.modulus, aset.residue, aset.exclude
        if self.dense is not None:
            if m == 1:
                return int(kernels.count_ne_range(self.dense, 0, self.n, v))
            return int(kernels.count_ne_class(self.dense, v, m, r, ex))
        period = math.lcm(self.period, m)
        if period > LAZY_PERIOD_MAX:
            arr = self.materialize()
            return int(kernels.count_ne_class(arr, v, m, r, ex))
        rho = np.arange(period)
        counts = (self.n - 1 - rho) // period + 1
        counts[rho >= self.n] = 0
        member = (rho % m) == r
        if ex:
            member = ~member
        bad = self.bg[rho % self.period] != np.uint32(v)
        total = int(counts[member & bad].sum())
        if self.ov_addr.size:
            inside = aset.contains(self.ov_addr)
            a = self.ov_addr[inside]
            was = self.bg[a % self.period] != np.uint32(v)
            now = self.ov_val[inside] != np.uint32(v)
            total += int(now.sum()) - int(was.sum())
        return total

    def count_ne_words(self, base: int, expected: np.ndarray) -> int:
        if self.dense is not None:
            return int(kernels.count_ne_words(self.dense, base, expected))
        return int(np.count_nonzero(self.materialize(base, base + expected.size) != expected))


def _reduce_period(bg: np.ndarray) -> np.ndarray:
    p = bg.size
    for d in range(1, p):
        if p % d == 0 and np.array_equal(bg, np.tile(bg[:d], p // d)):
            return bg[:d].copy()
    return bg


# -- device -------------------------------------------------------------------------------

class SimulatedDevice(MemoryDevice):
    """A :class:`MemoryDevice` whose stores and reads pass through fault models."""

    simulates_alu = True

    def __init__(self, caps: DeviceCapabilities, profile: FaultProfile | None = None,
                 clock: VirtualClock | None = None, record_events: bool = True):
        super().__init__(caps, clock)
        self.profile = profile if profile is not None else FaultProfile()
        self.record_events = record_events
        self.events: list[FaultEvent] = []
        self.event_counts: Counter = Counter()
        self._img = _Image(self.word_count)
        self._t_transient = self.clock.now_seconds
        self._forced_alu: list[tuple[int, int, int]] = []
        self._transient_draws = 0
        self._build_stuck()

    # -- setup ------------------------------------------------------------
    def _build_stuck(self) -> None:
        masks: dict[int, list[int]] = {}
        for s in self.profile.stuck_at:
            if not 0 <= s.address < self.word_count:
                raise ValueError(f"stuck-at address {s.address} outside region")
            m, v = masks.get(s.address, [0, 0])
            mask = s.mask & MASK32
            masks[s.address] = [m | mask, (v & ~mask) | (s.stuck_value & mask)]
        addrs = sorted(masks)
        self._st_addr = np.array(addrs, dtype=np.int64)
        self._st_mask = np.array([masks[a][0] for a in addrs], dtype=np.uint32)
        self._st_val = np.array([masks[a][1] for a in addrs], dtype=np.uint32)
        # background starts at zero; honour stuck bits from the first read on
        if addrs:
            self._img.set(self._st_addr, self._st_val & self._st_mask)

    @property
    def memory_clock_mhz(self) -> int:
        return self.clock.clock_mhz

    def set_memory_clock(self, mhz: int) -> None:
        self.clock.clock_mhz = mhz
        self.caps.memory_clock_mhz = mhz

    # -- helpers --------------------------------------------------------------
    def _log(self, kind: FaultKind, addr, bits, ops) -> None:
        addr = np.atleast_1d(addr)
        self.event_counts[kind] += int(addr.size)
        if self.record_events and addr.size:
            t = self.clock.now_seconds
            bits = np.broadcast_to(bits, addr.shape)
            ops = np.broadcast_to(ops, addr.shape)
            self.events.extend(FaultEvent(kind, int(a), int(b), t, int(o))
                               for a, b, o in zip(addr, bits, ops))

    def _stuck_lookup(self, addr: np.ndarray):
        """(hit mask, mask, value) of stuck cells for each address."""
        if self._st_addr.size == 0:
            z = np.zeros(addr.size, dtype=np.uint32)
            return np.zeros(addr.size, dtype=bool), z, z
        pos = np.minimum(np.searchsorted(self._st_addr, addr), self._st_addr.size - 1)
        hit = self._st_addr[pos] == addr
        mask = np.where(hit, self._st_mask[pos], np.uint32(0)).astype(np.uint32)
        val = np.where(hit, self._st_val[pos], np.uint32(0)).astype(np.uint32)
        return hit, mask, val

    def _apply_stuck(self, addr: np.ndarray, values: np.ndarray) -> np.ndarray:
        _, mask, val = self._stuck_lookup(addr)
        return (values & ~mask) | (val & mask)

    def _stuck_in(self, aset: _AddrSet) -> np.ndarray:
        if self._st_addr.size == 0:
            return self._st_addr
        return self._st_addr[aset.contains(self._st_addr)]

    # -- write pipeline ---------------------------------------------------------
    def _disturb_candidates(self, aset: _AddrSet, op_base: int, constant: bool):
        """Local indices of ops that may disturb a neighbour, per mechanism."""
        prof = self.profile
        offsets = prof.coupling.victim_offsets
        od_idx = np.empty(0, dtype=np.int64)
        cp_cid = np.empty(0, dtype=np.int64)
        q_od = min(1.0, prof.overdrive.base_rate(self.clock.clock_mhz))
        size = aset.size
        if q_od > 0 and offsets:
            if constant and aset.is_full:
                # every neighbour ends up equal to the written value unless a
                # stuck cell is involved.  Words that differ afterwards are stuck
                # cells and victims of stuck aggressors, so only ops within two
                # offsets of a stuck cell can have any effect.
                reach = 2 * max(abs(d) for d in offsets)
                if self._st_addr.size:
                    near = (self._st_addr[:, None] + np.arange(-reach, reach + 1)[None, :]).ravel()
                    near = np.unique(near[(near >= 0) & (near < self.word_count)])
                    ops = op_base + near
                    od_idx = near[rng.bernoulli_subset(prof.seed, rng.TAG_OVERDRIVE, q_od, ops)]
            else:
                od_idx = rng.bernoulli_ops(prof.seed, rng.TAG_OVERDRIVE, q_od, op_base, op_base + size) - op_base
        p_c = prof.coupling.p_couple
        if p_c > 0 and offsets:
            k = len(offsets)
            cp_cid = rng.bernoulli_ops(prof.seed, rng.TAG_COUPLE, p_c, op_base * k, (op_base + size) * k)
        return od_idx, cp_cid, q_od

    def _store(self, aset: _AddrSet, constant: int | None, values: np.ndarray | None) -> None:
        op_base = self.op_counter
        od_idx, cp_cid, q_od = self._disturb_candidates(aset, op_base, constant is not None)
        k = len(self.profile.coupling.victim_offsets)
        cp_idx = cp_cid // k - op_base if cp_cid.size else cp_cid
        agg_idx = np.union1d(od_idx, cp_idx)
        agg_addr = aset.addr_of(agg_idx)
        old = self._img.get(agg_addr) if agg_idx.size else np.empty(0, dtype=np.uint32)

        # land every store
        stuck_here = self._stuck_in(aset)
        if constant is not None:
            self._img.fill(constant, aset)
            if stuck_here.size:
                stored = self._apply_stuck(stuck_here, np.full(stuck_here.size, constant, dtype=np.uint32))
                self._img.set(stuck_here, stored)
                self._log_stuck(stuck_here, np.uint32(constant), stored, op_base + aset.index_of(stuck_here))
        else:
            if stuck_here.size:
                loc = aset.index_of(stuck_here)
                wanted = values[loc]
                values = values.copy()
                values[loc] = self._apply_stuck(stuck_here, wanted)
                self._log_stuck(stuck_here, wanted, values[loc], op_base + loc)
            if aset.count is not None:
                self._img.write_range(aset.base, values)
            else:
                self._img.write_class(aset.modulus, aset.residue, values)

        if agg_idx.size:
            new = self._img.get(agg_addr)
            self._disturb(aset, op_base, agg_idx, agg_addr, old, new, od_idx, cp_cid, q_od)

    def _log_stuck(self, addr, wanted, stored, ops) -> None:
        diff = np.asarray(wanted, dtype=np.uint32) ^ np.asarray(stored, dtype=np.uint32)
        diff = np.broadcast_to(diff, np.shape(addr))
        hit = diff != 0
        if hit.any():
            first_bit = rng.nth_set_bit(diff[hit], np.zeros(int(hit.sum()), dtype=np.int64))
            self._log(FaultKind.STUCK_AT, addr[hit], first_bit, np.asarray(ops)[hit])

    def _disturb(self, aset, op_base, agg_idx, agg_addr, old, new, od_idx, cp_cid, q_od) -> None:
        prof = self.profile
        offsets = np.array(prof.coupling.victim_offsets, dtype=np.int64)
        k = offsets.size
        row = prof.coupling.row_length_words
        n = self.word_count
        seed = prof.seed

        ev_op, ev_mech, ev_j, ev_victim, ev_src, ev_rank = [], [], [], [], [], []

        if od_idx.size:
            pos = np.searchsorted(agg_idx, od_idx)
            o, nv = old[pos], new[pos]
            h = rng.popcount32(o ^ nv)
            ops = op_base + od_idx
            p = prof.overdrive.probability(self.clock.clock_mhz, h)
            keep = rng.uniform(seed, rng.TAG_OVERDRIVE_THIN, ops) * q_od < p
            hv = rng.hash_array(seed, rng.TAG_OVERDRIVE_BIT, ops)
            j = (hv % np.uint64(k)).astype(np.int64)
            a = agg_addr[pos]
            vic = a + offsets[j]
            ok = keep & (vic >= 0) & (vic < n) & (vic // row == a // row)
            ev_op.append(ops[ok]); ev_mech.append(np.zeros(int(ok.sum()), dtype=np.int64))
            ev_j.append(j[ok]); ev_victim.append(vic[ok]); ev_src.append(pos[ok])
            ev_rank.append((hv[ok] >> np.uint64(32)).astype(np.int64))

        if cp_cid.size:
            ops = cp_cid // k
            j = cp_cid % k
            pos = np.searchsorted(agg_idx, ops - op_base)
            o, nv = old[pos], new[pos]
            diff = o ^ nv
            a = agg_addr[pos]
            vic = a + offsets[j]
            ok = (diff != 0) & (vic >= 0) & (vic < n) & (vic // row == a // row)
            h = rng.popcount32(diff[ok])
            rank = (rng.hash_array(seed, rng.TAG_COUPLE_BIT, cp_cid[ok]) % np.maximum(h, 1).astype(np.uint64)).astype(np.int64)
            ev_op.append(ops[ok]); ev_mech.append(np.ones(int(ok.sum()), dtype=np.int64))
            ev_j.append(j[ok]); ev_victim.append(vic[ok]); ev_src.append(pos[ok])
            ev_rank.append(rank)

        if not ev_op:
            return
        e_op = np.concatenate(ev_op)
        if e_op.size == 0:
            return
        e_mech = np.concatenate(ev_mech)
        e_j = np.concatenate(ev_j)
        e_vic = np.concatenate(ev_victim)
        e_src = np.concatenate(ev_src)
        e_rank = np.concatenate(ev_rank)
        order = np.lexsort((e_j, e_mech, e_op))
        e_op, e_mech, e_vic, e_src, e_rank = e_op[order], e_mech[order], e_vic[order], e_src[order], e_rank[order]
        e_new = new[e_src]
        e_diff_cp = old[e_src] ^ new[e_src]

        cur = np.empty(e_vic.size, dtype=np.uint32)
        res = np.empty(e_vic.size, dtype=np.uint32)
        bit = np.empty(e_vic.size, dtype=np.int64)
        for wave in _waves(e_vic):
            c = self._img.get(e_vic[wave])
            r, b = _effect(c, e_mech[wave], e_new[wave], e_diff_cp[wave], e_rank[wave])
            r = self._apply_stuck(e_vic[wave], r)
            self._img.set(e_vic[wave], r)
            cur[wave], res[wave], bit[wave] = c, r, b
        changed = res != cur
        for mech, kind in ((0, FaultKind.OVERDRIVE), (1, FaultKind.COUPLING)):
            sel = changed & (e_mech == mech)
            if sel.any():
                self._log(kind, e_vic[sel], bit[sel], e_op[sel])

    # -- transients ------------------------------------------------------------------
    def apply_transients(self, elapsed_hours: float) -> list[FaultEvent]:
        """Draw and apply the flips accumulated over ``elapsed_hours``."""
        if elapsed_hours < 0:
            raise ValueError("elapsed time must be >= 0")
        lam = self.profile.transient_rate_lambda
        if lam == 0 or elapsed_hours == 0:
            return []
        mean = lam * self.caps.region.bits * elapsed_hours
        g = rng.generator(self.profile.seed, rng.TAG_TRANSIENT, self.op_counter, self._transient_draws)
        self._transient_draws += 1
        count = int(g.poisson(mean))
        if count == 0:
            return []
        addr = g.integers(0, self.word_count, count)
        bits = g.integers(0, 32, count)
        before = len(self.events)
        self._flip(addr.astype(np.int64), bits.astype(np.int64), FaultKind.TRANSIENT)
        return self.events[before:]

    def _flip(self, addr: np.ndarray, bits: np.ndarray, kind: FaultKind) -> None:
        flips = (np.uint32(1) << bits.astype(np.uint32))
        cur = np.empty(addr.size, dtype=np.uint32)
        res = np.empty(addr.size, dtype=np.uint32)
        for wave in _waves(addr):
            c = self._img.get(addr[wave])
            r = self._apply_stuck(addr[wave], c ^ flips[wave])
            self._img.set(addr[wave], r)
            cur[wave], res[wave] = c, r
        changed = res != cur
        self._log(kind, addr[changed], bits[changed], self.op_counter)

    def advance_time(self, seconds: float) -> None:
        """Let the device sit idle (virtual time only)."""
        self.clock.now_seconds += seconds

    def _before_read(self) -> None:
        now = self.clock.now_seconds
        dt = now - self._t_transient
        self._t_transient = now
        if dt > 0 and self.profile.transient_rate_lambda > 0:
            self.apply_transients(dt / SECONDS_PER_HOUR)

    # -- primitives ----------------------------------------------------------------------
    def _write_words(self, base, values):
        self._store(_AddrSet(self.word_count, base=base, count=values.size), None, values)

    def _read_words(self, base, count):
        return self._img.materialize(base, base + count)

    def _fill(self, pattern, modulus, residue, exclude):
        self._store(_AddrSet(self.word_count, modulus, residue, exclude), pattern, None)

    def _write_class(self, modulus, residue, values):
        self._store(_AddrSet(self.word_count, modulus, residue), None, values)

    def _count_mismatches(self, pattern, modulus, residue, exclude):
        return self._img.count_ne(pattern, _AddrSet(self.word_count, modulus, residue, exclude))

    def _count_mismatches_words(self, base, expected):
        return self._img.count_ne_words(base, expected)

    def snapshot(self) -> np.ndarray:
        return self._img.materialize()

    # -- ALU ------------------------------------------------------------------------------
    def force_alu_fault(self, lane: int, step: int, bit: int) -> None:
        """Schedule one ALU flip for the next kernel that reserves ALU ops."""
        if not 0 <= bit < 32:
            raise ValueError("bit must be in [0, 32)")
        self._forced_alu.append((lane, step, bit))

    def alu_faults(self, n_lanes: int, ops_per_lane: int):
        start = self.alu_counter
        total = n_lanes * ops_per_lane
        self.alu_counter += total
        p = self.profile.alu_fault_p
        ops = rng.bernoulli_ops(self.profile.seed, rng.TAG_ALU, p, start, start + total)
        bits = (rng.hash_array(self.profile.seed, rng.TAG_ALU_BIT, ops) % np.uint64(32)).astype(np.int64)
        local = ops - start
        if self._forced_alu:
            forced = [(lane * ops_per_lane + step, bit) for lane, step, bit in self._forced_alu
                      if 0 <= lane < n_lanes and 0 <= step < ops_per_lane]
            self._forced_alu.clear()
            if forced:
                f_ops, f_bits = np.array(forced, dtype=np.int64).T
                local = np.concatenate([local, f_ops])
                bits = np.concatenate([bits, f_bits])
                order = np.argsort(local, kind="stable")
                local, bits = local[order], bits[order]
        if local.size:
            self._log(FaultKind.ALU, local // ops_per_lane, bits, start + local)
        return local, bits

    def alu_op(self, a: int, x: int, c: int) -> int:
        op = self.alu_counter
        self.alu_counter += 1
        out = (a * x + c) & MASK32
        p = self.profile.alu_fault_p
        if p > 0 and rng.bernoulli_subset(self.profile.seed, rng.TAG_ALU, p, np.array([op]))[0]:
            bit = rng.hash_int(self.profile.seed, rng.TAG_ALU_BIT, op) % 32
            out ^= 1 << bit
            self._log(FaultKind.ALU, 0, bit, op)
        return out

    # -- scratchpad -------------------------------------------------------------------------
    def scratchpad_faults(self, n_gen: int, steps: int):
        """Stuck bits and transient flips seen by generators kept in scratchpad.

        Generator ``g`` lives in slot ``g % scratchpad_words``.  Only the
        stuck-at list and transient rate of ``scratchpad_profile`` apply.
        """
        sp = self.profile.scratchpad_profile
        mask = np.zeros(n_gen, dtype=np.uint32)
        val = np.zeros(n_gen, dtype=np.uint32)
        empty = np.empty(0, dtype=np.int64)
        if sp is None or self.caps.scratchpad_words == 0:
            return mask, val, empty, empty
        words = self.caps.scratchpad_words
        slot = np.arange(n_gen) % words
        for s in sp.stuck_at:
            hit = slot == s.address
            m = np.uint32(s.mask & MASK32)
            mask[hit] |= m
            val[hit] = (val[hit] & ~m) | (np.uint32(s.stuck_value) & m)
        ops = bits = empty
        if sp.transient_rate_lambda > 0:
            # one load and one store per step; the state sits in the cell that long
            dwell_h = (self.clock.tau_read_ns + self.clock.tau_write_ns) * 1e-9 * self.clock.scale / SECONDS_PER_HOUR
            mean = sp.transient_rate_lambda * 32 * n_gen * steps * dwell_h
            g = rng.generator(sp.seed, rng.TAG_SCRATCH_TRANSIENT, self.alu_counter)
            cnt = int(g.poisson(mean))
            if cnt:
                ops = np.sort(g.integers(0, n_gen * steps, cnt)).astype(np.int64)
                bits = g.integers(0, 32, cnt).astype(np.int64)
        return mask, val, ops, bits


def _waves(keys: np.ndarray):
    """Split positions into ordered waves; wave w holds the w-th hit on each key."""
    if keys.size == 0:
        return []
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    start = np.ones(sk.size, dtype=bool)
    start[1:] = sk[1:] != sk[:-1]
    first = np.maximum.accumulate(np.where(start, np.arange(sk.size), 0))
    occ = np.empty(keys.size, dtype=np.int64)
    occ[order] = np.arange(sk.size) - first
    if occ.max() == 0:
        return [np.arange(keys.size)]
    return [np.flatnonzero(occ == w) for w in range(int(occ.max()) + 1)]


def _effect(cur, mech, new_a, diff_cp, rank):
    """Victim value after one disturbance, and the bit it touched."""
    cur = np.asarray(cur, dtype=np.uint32)
    od = mech == 0
    target = np.where(od, cur ^ new_a, diff_cp).astype(np.uint32)
    h = rng.popcount32(target)
    safe_h = np.maximum(h, 1)
    bit = rng.nth_set_bit(target, np.asarray(rank, dtype=np.int64) % safe_h)
    flip = np.where(h > 0, np.uint32(1) << np.maximum(bit, 0).astype(np.uint32), np.uint32(0)).astype(np.uint32)
    return cur ^ flip, bit


def simulated_device(size_mib: float | None = None, profile: FaultProfile | None = None, *,
                     words: int | None = None, memory_clock_mhz: int = 400, lane_count: int = 1,
                     scratchpad_words: int = 4096, record_events: bool = True, **caps_kw) -> SimulatedDevice:
    if words is None:
        region = RegionSpec.from_mib(32 if size_mib is None else size_mib)
    else:
        region = RegionSpec(words)
    caps = DeviceCapabilities(region=region, lane_count=lane_count, memory_clock_mhz=memory_clock_mhz,
                              scratchpad_words=scratchpad_words, **caps_kw)
    return SimulatedDevice(caps, profile, record_events=record_events)

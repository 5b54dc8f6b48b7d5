"""Word-addressable memory devices.

All test kernels talk to a :class:`MemoryDevice`.  The interface is bulk-only:
contiguous ranges, constant fills over an address class ``a % modulus``,
and mismatch counting.  A single-word access is a count-1 bulk call.

:class:`HostBufferDevice` is a faultless implementation over real host RAM.
It splits bulk operations into per-lane stripes and runs them on a thread
pool; the compiled kernels release the GIL so stripes really run in parallel.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels

MASK32 = 0xFFFFFFFF
WORD_BYTES = 4
MIB = 1 << 20
BASE_CLOCK_MHZ = 400

DEPLOYED_REGIONS = {32: 256, 64: 512, 128: 1024}


class DeviceError(RuntimeError):
    """A device could not complete an operation."""


class AddressRangeError(DeviceError, IndexError):
    def __init__(self, address: int, word_count: int):
        super().__init__(f"word address {address} outside region of {word_count} words")
        self.address = address
        self.word_count = word_count


class Architecture(str, Enum):
    G80 = "G80"
    GT200 = "GT200"
    OTHER = "OTHER"


@dataclass(frozen=True)
class RegionSpec:
    """A tested region.  ``size_mib`` may be fractional for desk-scale runs."""

    word_count: int

    def __post_init__(self):
        if self.word_count <= 0:
            raise ValueError("region must contain at least one word")

    @classmethod
    def from_mib(cls, size_mib: float) -> "RegionSpec":
        words = size_mib * MIB / WORD_BYTES
        if words != int(words) or words <= 0:
            raise ValueError(f"{size_mib} MiB is not a whole number of 32-bit words")
        return cls(int(words))

    @property
    def size_mib(self) -> float:
        return self.word_count * WORD_BYTES / MIB

    @property
    def size_mib_int(self) -> int:
        """Size for records; regions below 1 MiB report 0."""
        return int(self.size_mib)

    @property
    def bits(self) -> int:
        return self.word_count * 32


@dataclass
class DeviceCapabilities:
    region: RegionSpec
    scratchpad_words: int = 4096
    lane_count: int = 1
    device_name: str = "host"
    shader_clock_mhz: int = 1350
    memory_clock_mhz: int = BASE_CLOCK_MHZ
    architecture: Architecture = Architecture.OTHER

    def __post_init__(self):
        if self.lane_count < 1:
            raise ValueError("lane_count must be >= 1")
        if self.scratchpad_words < 0:
            raise ValueError("scratchpad_words must be >= 0")
        self.architecture = Architecture(self.architecture)


@dataclass
class VirtualClock:
    """Simulated time.  Each word access costs tau scaled by 400 MHz / clock."""

    clock_mhz: int = BASE_CLOCK_MHZ
    tau_read_ns: float = 2.0
    tau_write_ns: float = 2.0
    now_seconds: float = 0.0

    @property
    def scale(self) -> float:
        return BASE_CLOCK_MHZ / self.clock_mhz

    def advance_reads(self, words: int) -> None:
        self.now_seconds += words * self.tau_read_ns * 1e-9 * self.scale

    def advance_writes(self, words: int) -> None:
        self.now_seconds += words * self.tau_write_ns * 1e-9 * self.scale


def class_size(n: int, modulus: int, residue: int, exclude: bool = False) -> int:
    """Number of addresses ``a < n`` with ``a % modulus == residue`` (or not)."""
    inside = 0 if residue >= n else (n - 1 - residue) // modulus + 1
    return n - inside if exclude else inside


@dataclass
class _Empty:
    ops: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    bits: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


class MemoryDevice:
    """Base class.  Subclasses implement the underscored primitives."""

    def __init__(self, caps: DeviceCapabilities, clock: VirtualClock | None = None):
        self.caps = caps
        self.clock = clock or VirtualClock(clock_mhz=caps.memory_clock_mhz)
        self.op_counter = 0
        self.alu_counter = 0

    @property
    def word_count(self) -> int:
        return self.caps.region.word_count

    # -- checks -----------------------------------------------------------
    def _check_range(self, base: int, count: int) -> None:
        n = self.word_count
        if base < 0:
            raise AddressRangeError(base, n)
        if count < 0:
            raise ValueError("negative word count")
        if base + count > n:
            raise AddressRangeError(max(base, n), n)

    @staticmethod
    def _check_class(modulus: int, residue: int) -> None:
        if modulus < 1 or not 0 <= residue < modulus:
            raise ValueError(f"bad address class {residue} mod {modulus}")

    # -- public bulk interface -----------------------------------------------
    def write_words(self, base: int, values) -> None:
        values = np.ascontiguousarray(values, dtype=np.uint32)
        self._check_range(base, values.size)
        if values.size == 0:
            return
        self._write_words(base, values)
        self.op_counter += values.size
        self.clock.advance_writes(values.size)

    def read_words(self, base: int, count: int) -> np.ndarray:
        self._check_range(base, count)
        if count == 0:
            return np.empty(0, dtype=np.uint32)
        self._before_read()
        out = self._read_words(base, count)
        self.op_counter += count
        self.clock.advance_reads(count)
        return out

    def fill(self, pattern: int, modulus: int = 1, residue: int = 0, exclude: bool = False) -> None:
        """Write ``pattern`` to every address in the class (or outside it)."""
        self._check_class(modulus, residue)
        if exclude and modulus == 1:
            return
        n = class_size(self.word_count, modulus, residue, exclude)
        self._fill(int(pattern) & MASK32, modulus, residue, exclude)
        self.op_counter += n
        self.clock.advance_writes(n)

    def write_class(self, modulus: int, residue: int, values) -> None:
        """Write ``values[j]`` to address ``residue + j*modulus``."""
        self._check_class(modulus, residue)
        values = np.ascontiguousarray(values, dtype=np.uint32)
        n = class_size(self.word_count, modulus, residue)
        if values.size != n:
            raise ValueError(f"expected {n} values for class {residue} mod {modulus}, got {values.size}")
        self._write_class(modulus, residue, values)
        self.op_counter += n
        self.clock.advance_writes(n)

    def count_mismatches(self, pattern: int, modulus: int = 1, residue: int = 0,
                         exclude: bool = False) -> int:
        """Read the class back and count words different from ``pattern``."""
        self._check_class(modulus, residue)
        n = class_size(self.word_count, modulus, residue, exclude)
        if n == 0:
            return 0
        self._before_read()
        c = self._count_mismatches(int(pattern) & MASK32, modulus, residue, exclude)
        self.op_counter += n
        self.clock.advance_reads(n)
        return c

    def count_mismatches_words(self, base: int, expected) -> int:
        expected = np.ascontiguousarray(expected, dtype=np.uint32)
        self._check_range(base, expected.size)
        if expected.size == 0:
            return 0
        self._before_read()
        c = self._count_mismatches_words(base, expected)
        self.op_counter += expected.size
        self.clock.advance_reads(expected.size)
        return c

    # -- logic hooks ----------------------------------------------------------
    def alu_faults(self, n_lanes: int, ops_per_lane: int) -> tuple[np.ndarray, np.ndarray]:
        """Reserve ``n_lanes*ops_per_lane`` ALU ops.

        Returns sorted local op ids (``lane*ops_per_lane + step``) that fault and
        the bit each one flips.  Faultless devices return empty arrays.
        """
        self.alu_counter += n_lanes * ops_per_lane
        e = _Empty()
        return e.ops, e.bits

    def scratchpad_faults(self, n_gen: int, steps: int):
        """Per-generator stuck masks/values and transient (op, bit) lists.

        Returns ``(stuck_mask, stuck_val, ops, bits)``; masks are uint32 arrays
        of length ``n_gen`` (all zero on a faultless device).
        """
        e = _Empty()
        z = np.zeros(n_gen, dtype=np.uint32)
        return z, z.copy(), e.ops, e.bits

    def alu_op(self, a: int, x: int, c: int) -> int:
        """Scalar multiply-add through the device ALU."""
        self.alu_counter += 1
        return (a * x + c) & MASK32

    # -- primitives -----------------------------------------------------------
    def _before_read(self) -> None:
        pass

    def _write_words(self, base, values):
        raise NotImplementedError

    def _read_words(self, base, count):
        raise NotImplementedError

    def _fill(self, pattern, modulus, residue, exclude):
        raise NotImplementedError

    def _write_class(self, modulus, residue, values):
        raise NotImplementedError

    def _count_mismatches(self, pattern, modulus, residue, exclude):
        raise NotImplementedError

    def _count_mismatches_words(self, base, expected):
        raise NotImplementedError

    def snapshot(self) -> np.ndarray:
        """Full memory image without advancing counters or applying faults."""
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class HostBufferDevice(MemoryDevice):
    """Faultless device backed by a numpy buffer in host RAM."""

    # stripes below this many words are not worth a thread hop
    MIN_STRIPE = 1 << 16

    def __init__(self, caps: DeviceCapabilities, clock: VirtualClock | None = None):
        super().__init__(caps, clock)
        try:
            self._mem = np.zeros(caps.region.word_count, dtype=np.uint32)
        except MemoryError as exc:
            raise DeviceError(f"cannot allocate {caps.region.size_mib:g} MiB test region") from exc
        self._pool = ThreadPoolExecutor(caps.lane_count) if caps.lane_count > 1 else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _stripes(self, modulus: int = 1):
        """Lane stripes aligned to ``modulus`` so address classes stay intact."""
        n = self.word_count
        lanes = self.caps.lane_count
        if self._pool is None or n < 2 * self.MIN_STRIPE:
            return [(0, n)]
        step = max(self.MIN_STRIPE, math.ceil(n / lanes))
        step = math.ceil(step / modulus) * modulus
        return [(lo, min(n, lo + step)) for lo in range(0, n, step)]

    def _map(self, fn, stripes):
        if len(stripes) == 1:
            return [fn(*stripes[0])]
        return list(self._pool.map(lambda s: fn(*s), stripes))

    def _write_words(self, base, values):
        self._mem[base:base + values.size] = values

    def _read_words(self, base, count):
        return self._mem[base:base + count].copy()

    def _fill(self, pattern, modulus, residue, exclude):
        mem = self._mem
        if modulus == 1:
            self._map(lambda lo, hi: kernels.fill_range(mem, lo, hi, pattern), self._stripes())
        else:
            self._map(lambda lo, hi: kernels.fill_class(mem[lo:hi], pattern, modulus, residue, exclude),
                      self._stripes(modulus))

    def _write_class(self, modulus, residue, values):
        self._mem[residue::modulus] = values

    def _count_mismatches(self, pattern, modulus, residue, exclude):
        mem = self._mem
        if modulus == 1:
            parts = self._map(lambda lo, hi: kernels.count_ne_range(mem, lo, hi, pattern), self._stripes())
        else:
            parts = self._map(
                lambda lo, hi: kernels.count_ne_class(mem[lo:hi], pattern, modulus, residue, exclude),
                self._stripes(modulus))
        return int(sum(parts))

    def _count_mismatches_words(self, base, expected):
        return int(kernels.count_ne_words(self._mem, base, expected))

    def snapshot(self) -> np.ndarray:
        return self._mem.copy()


def host_device(size_mib: float = 32, lane_count: int = 1, **kw) -> HostBufferDevice:
    caps = DeviceCapabilities(region=RegionSpec.from_mib(size_mib), lane_count=lane_count, **kw)
    return HostBufferDevice(caps)

"""Test kernels and the iteration protocol.

One iteration runs all thirteen tests once, in the order of :data:`TEST_CODES`.
The modulo-20 test runs two of its twenty rounds per iteration; the
:class:`M20Cursor` carries the next round across iterations.  An iteration
fails when any test reports at least one bad word.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .memdev import DEPLOYED_REGIONS, MASK32, DeviceError, MemoryDevice
from .patterns import PM_MODULUS, CyclicLcgSpec, make_cyclic_lcg, walking_patterns

TEST_CODES = ("MI10", "MIR", "1WM", "1W0", "1W1", "4W0", "4W1", "RB", "M20", "L", "L4", "LS", "LS4")
CONSTANT_CODES = ("MI10", "MIR")
WALKING_CODES = ("1WM", "1W0", "1W1", "4W0", "4W1")
LOGIC_CODES = {"L": (1, "private"), "L4": (4, "private"), "LS": (1, "scratchpad"), "LS4": (4, "scratchpad")}
MEMORY_CODES = CONSTANT_CODES + WALKING_CODES + ("RB", "M20")

RB_BLOCK = 256
LOGIC_STRIDE = 256
M20_MODULUS = 20
M20_ROUNDS_PER_ITERATION = 2


class IterationAborted(RuntimeError):
    """The device failed mid-iteration; no record is produced."""


@dataclass
class TestOutcome:
    __test__ = False  # not a pytest class

    code: str
    word_errors: int = 0
    phases_run: int = 0
    words_checked: int = 0

    @property
    def word_error_rate(self) -> float:
        return self.word_errors / self.words_checked if self.words_checked else 0.0


# -- individual kernels ----------------------------------------------------------------

def _fill_and_verify(device: MemoryDevice, pattern: int, out: TestOutcome) -> None:
    device.fill(pattern)
    out.word_errors += device.count_mismatches(pattern)
    out.words_checked += device.word_count
    out.phases_run += 1


def run_constant_test(device: MemoryDevice, code: str, random_constant: int | None = None) -> TestOutcome:
    """MI10 writes 0 then all ones; MIR writes a host-chosen constant then its complement."""
    if code == "MI10":
        pats = (0x00000000, 0xFFFFFFFF)
    elif code == "MIR":
        if random_constant is None:
            raise ValueError("MIR needs a caller-supplied constant")
        c = random_constant & MASK32
        pats = (c, ~c & MASK32)
    else:
        raise ValueError(f"not a constant test: {code!r}")
    out = TestOutcome(code)
    for p in pats:
        _fill_and_verify(device, p, out)
    return out


def run_walking_test(device: MemoryDevice, code: str) -> TestOutcome:
    out = TestOutcome(code)
    for phase in walking_patterns(code):
        device.fill(phase.write)
        out.word_errors += device.count_mismatches(phase.verify)
        out.words_checked += device.word_count
        out.phases_run += 1
    return out


def random_block_values(device: MemoryDevice, seed: int) -> np.ndarray:
    """Generate the random-blocks image on the device's ALU."""
    n = device.word_count
    n_blocks = math.ceil(n / RB_BLOCK)
    seeds = (np.int64(seed) + np.arange(n_blocks, dtype=np.int64)) % (PM_MODULUS - 1) + 1
    ops, bits = device.alu_faults(n_blocks, RB_BLOCK)
    return kernels.park_miller_blocks(seeds, RB_BLOCK, n, ops, bits)


def run_random_blocks(device: MemoryDevice, seed: int) -> TestOutcome:
    """Write a Park-Miller stream per 256-word block, regenerate it and compare."""
    if seed < 0:
        raise ValueError("random-blocks seed must be non-negative")
    device.write_words(0, random_block_values(device, seed))
    expected = random_block_values(device, seed)
    errors = device.count_mismatches_words(0, expected)
    return TestOutcome("RB", errors, 1, device.word_count)


def run_modulo20(device: MemoryDevice, pattern: int, rounds) -> TestOutcome:
    pattern &= MASK32
    comp = ~pattern & MASK32
    out = TestOutcome("M20")
    for i in rounds:
        if not 0 <= i < M20_MODULUS:
            raise ValueError(f"modulo-20 round {i} out of range")
        device.fill(pattern, M20_MODULUS, i)
        device.fill(comp, M20_MODULUS, i, exclude=True)
        device.fill(comp, M20_MODULUS, i, exclude=True)
        out.word_errors += device.count_mismatches(pattern, M20_MODULUS, i)
        n = device.word_count
        out.words_checked += 0 if i >= n else (n - 1 - i) // M20_MODULUS + 1
        out.phases_run += 1
    return out


def run_logic(device: MemoryDevice, spec: CyclicLcgSpec, multiplier: int = 1,
              storage: str = "private", code: str | None = None) -> TestOutcome:
    """Cyclic-LCG logic test.

    One generator per 256-word block starts from 0 and runs ``multiplier*k``
    steps.  After every full k-cycle it stores its state to word ``256*g``;
    a final pass counts nonzero words in that class.
    """
    if multiplier not in (1, 4):
        raise ValueError("multiplier must be 1 or 4")
    if storage not in ("private", "scratchpad"):
        raise ValueError(f"unknown storage {storage!r}")
    caps = device.caps
    if storage == "scratchpad" and caps.scratchpad_words < caps.lane_count:
        raise ValueError("scratchpad storage needs scratchpad_words >= lane_count")
    n_gen = math.ceil(device.word_count / LOGIC_STRIDE)
    steps = multiplier * spec.k
    ops, bits = device.alu_faults(n_gen, steps)
    if storage == "scratchpad":
        smask, sval, sops, sbits = device.scratchpad_faults(n_gen, steps)
    else:
        smask = sval = None
        sops = sbits = np.empty(0, dtype=np.int64)
    # simulated ALUs draw their faults explicitly, so fault-free cycles may be
    # jumped; a real device must execute every operation
    states = kernels.lcg_generators(n_gen, spec.k, spec.a, spec.c, multiplier,
                                    ops, bits, smask, sval, sops, sbits,
                                    getattr(device, "simulates_alu", False))
    for j in range(multiplier):
        device.write_class(LOGIC_STRIDE, 0, states[j])
    errors = device.count_mismatches(0, LOGIC_STRIDE, 0)
    if code is None:
        code = {(1, "private"): "L", (4, "private"): "L4", (1, "scratchpad"): "LS", (4, "scratchpad"): "LS4"}[
            (multiplier, storage)]
    return TestOutcome(code, errors, multiplier, n_gen)


# -- iteration protocol ------------------------------------------------------------------------

@dataclass
class M20Cursor:
    next_round: int = 0

    def __post_init__(self):
        if not 0 <= self.next_round < M20_MODULUS:
            raise ValueError("cursor must be in [0, 20)")

    def rounds(self) -> tuple[int, ...]:
        return tuple((self.next_round + i) % M20_MODULUS for i in range(M20_ROUNDS_PER_ITERATION))

    def advanced(self) -> "M20Cursor":
        return M20Cursor((self.next_round + M20_ROUNDS_PER_ITERATION) % M20_MODULUS)


@dataclass
class IterationConfig:
    card_id: str = "card-0"
    lcg_period: int | None = None
    epoch_utc: float = 1_243_814_400.0  # 2009-06-01T00:00:00Z
    utc_offset_min: int = 0
    deployed_profile: bool = False

    def period_for(self, region_mib: float) -> int:
        if self.lcg_period is not None:
            return self.lcg_period
        return DEPLOYED_REGIONS.get(int(region_mib), 256)


@dataclass
class IterationRecord:
    card_id: str
    device_name: str
    architecture: str
    region_mib: int
    lcg_period: int
    shader_clock_mhz: int
    memory_clock_mhz: int
    start_utc: float
    end_utc: float
    utc_offset_min: int
    errors: dict[str, int] = field(default_factory=dict)
    failed: bool = False

    def __post_init__(self):
        for c in TEST_CODES:
            self.errors.setdefault(c, 0)


def iteration_constants(seed: int, iteration: int) -> tuple[int, int, int]:
    """(MIR constant, RB seed, M20 pattern) for one iteration."""
    mir = rng.hash_int(seed, rng.TAG_MIR, iteration) & MASK32
    rb = rng.hash_int(seed, rng.TAG_RB, iteration) % (PM_MODULUS - 1)
    m20 = rng.hash_int(seed, rng.TAG_M20, iteration) & MASK32
    return mir, rb, m20


def run_all_tests(device: MemoryDevice, lcg: CyclicLcgSpec, cursor: M20Cursor,
                  seed: int, iteration: int) -> dict[str, TestOutcome]:
    mir, rb_seed, m20 = iteration_constants(seed, iteration)
    out: dict[str, TestOutcome] = {}
    out["MI10"] = run_constant_test(device, "MI10")
    out["MIR"] = run_constant_test(device, "MIR", mir)
    for code in WALKING_CODES:
        out[code] = run_walking_test(device, code)
    out["RB"] = run_random_blocks(device, rb_seed)
    out["M20"] = run_modulo20(device, m20, cursor.rounds())
    for code, (mult, storage) in LOGIC_CODES.items():
        out[code] = run_logic(device, lcg, mult, storage, code)
    return out


def run_iteration(device: MemoryDevice, config: IterationConfig, cursor: M20Cursor,
                  seed: int, iteration: int = 0) -> tuple[IterationRecord, M20Cursor, dict[str, TestOutcome]]:
    """Run all thirteen tests once and build the record.

    Raises :class:`IterationAborted` if the device fails; nothing partial is
    returned in that case.
    """
    caps = device.caps
    region_mib = caps.region.size_mib
    period = config.period_for(region_mib)
    if config.deployed_profile and DEPLOYED_REGIONS.get(int(region_mib)) != period:
        raise ValueError(f"({region_mib:g} MiB, k={period}) is not a deployed configuration")
    lcg = make_cyclic_lcg(period)
    start = config.epoch_utc + device.clock.now_seconds
    try:
        outcomes = run_all_tests(device, lcg, cursor, seed, iteration)
    except (DeviceError, MemoryError) as exc:
        raise IterationAborted(f"iteration {iteration} on {config.card_id} aborted: {exc}") from exc
    end = config.epoch_utc + device.clock.now_seconds
    errors = {c: int(outcomes[c].word_errors) for c in TEST_CODES}
    rec = IterationRecord(
        card_id=config.card_id,
        device_name=caps.device_name,
        architecture=caps.architecture.value,
        region_mib=caps.region.size_mib_int,
        lcg_period=period,
        shader_clock_mhz=int(caps.shader_clock_mhz),
        memory_clock_mhz=int(device.clock.clock_mhz),
        start_utc=start,
        end_utc=end,
        utc_offset_min=config.utc_offset_min,
        errors=errors,
        failed=any(v > 0 for v in errors.values()),
    )
    return rec, cursor.advanced(), outcomes


def run_iterations(device: MemoryDevice, config: IterationConfig, count: int, seed: int,
                   start_iteration: int = 0, cursor: M20Cursor | None = None):
    """Yield ``(record, outcomes)`` for ``count`` consecutive iterations."""
    cursor = cursor or M20Cursor((start_iteration * M20_ROUNDS_PER_ITERATION) % M20_MODULUS)
    for i in range(start_iteration, start_iteration + count):
        rec, cursor, outcomes = run_iteration(device, config, cursor, seed, i)
        yield rec, outcomes

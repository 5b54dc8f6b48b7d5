"""Deterministic value generators used by the test kernels."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

MASK32 = 0xFFFFFFFF
PM_MODULUS = 2147483647  # 2**31 - 1
PM_MULTIPLIER = 16807
DEFAULT_LCG_MULTIPLIER = 1664525

WALKING_CODES = ("1WM", "1W0", "1W1", "4W0", "4W1")


# -- Park-Miller minimal standard --------------------------------------------

def park_miller_next(x: int) -> int:
    if not 0 < x < PM_MODULUS:
        raise ValueError(f"Park-Miller state must be in [1, {PM_MODULUS - 1}], got {x}")
    return PM_MULTIPLIER * x % PM_MODULUS


class ParkMiller:
    """Stateful wrapper; ``next()`` returns the new state."""

    def __init__(self, seed: int):
        if seed % PM_MODULUS == 0:
            raise ValueError("Park-Miller seed must not be 0 or a multiple of 2**31 - 1")
        self.x = seed % PM_MODULUS

    def next(self) -> int:
        self.x = PM_MULTIPLIER * self.x % PM_MODULUS
        return self.x

    def __iter__(self):
        return self

    __next__ = next


def block_seed(seed: int, block: int) -> int:
    """Initial Park-Miller state for a random-blocks lane."""
    return (seed + block) % (PM_MODULUS - 1) + 1


# -- cyclic LCG ----------------------------------------------------------------

@dataclass(frozen=True)
class CyclicLcgSpec:
    """x <- (a*x + c) mod 2**32 whose orbit from 0 has exact period ``k``."""

    k: int
    a: int
    c: int

    @property
    def shift(self) -> int:
        """Orbit states are multiples of ``2**shift``."""
        return 32 - (self.k.bit_length() - 1)

    def step(self, x: int) -> int:
        return (self.a * x + self.c) & MASK32

    def orbit(self) -> list[int]:
        """States s_0 = 0, s_1, ..., s_{k-1}."""
        out = [0]
        x = 0
        for _ in range(self.k - 1):
            x = self.step(x)
            out.append(x)
        return out


def _is_pow2(k: int) -> bool:
    return k > 0 and k & (k - 1) == 0


@lru_cache(maxsize=None)
def make_cyclic_lcg(k: int, a: int = DEFAULT_LCG_MULTIPLIER, c_odd: int = 1) -> CyclicLcgSpec:
    """Build and verify a cyclic LCG of period ``k``.

    With ``a = 1 (mod 4)`` and ``c = 2**(32 - log2 k) * c_odd`` the orbit of 0
    stays on multiples of ``2**(32 - log2 k)`` where the map reduces to a
    full-period LCG modulo ``k``.  The period is checked by enumeration.
    """
    if not _is_pow2(k) or not 4 <= k <= 1 << 16:
        raise ValueError(f"LCG period must be a power of two in [4, 65536], got {k}")
    if a % 4 != 1:
        raise ValueError("multiplier must be 1 mod 4")
    if c_odd % 2 == 0:
        raise ValueError("increment multiplier must be odd")
    shift = 32 - (k.bit_length() - 1)
    spec = CyclicLcgSpec(k=k, a=a & MASK32, c=(c_odd << shift) & MASK32)
    seen = set()
    x = 0
    for i in range(k):
        if x in seen or x % (1 << shift):
            raise AssertionError(f"orbit check failed at step {i}")
        seen.add(x)
        x = spec.step(x)
    if x != 0:
        raise AssertionError("orbit of 0 does not close after k steps")
    return spec


def cyclic_lcg_step(spec: CyclicLcgSpec, state: int, device=None) -> int:
    """One generator step, routed through ``device.alu_op`` when given."""
    if device is not None:
        return device.alu_op(spec.a, state, spec.c)
    return spec.step(state)


# -- walking-bit tables ---------------------------------------------------------

@dataclass(frozen=True)
class Phase:
    write: int
    verify: int


@dataclass(frozen=True)
class PatternTable:
    code: str
    phases: tuple[Phase, ...]

    def __len__(self):
        return len(self.phases)

    def __iter__(self):
        return iter(self.phases)

    def writes(self) -> list[int]:
        return [p.write for p in self.phases]


def _byte_rep(b: int) -> int:
    return b * 0x01010101


@lru_cache(maxsize=None)
def walking_patterns(code: str) -> PatternTable:
    if code == "1W1":
        seq = [_byte_rep(1 << s) for s in range(8)]
    elif code == "1W0":
        seq = [~_byte_rep(1 << s) & MASK32 for s in range(8)]
    elif code == "4W1":
        seq = [1 << s for s in range(32)]
    elif code == "4W0":
        seq = [~(1 << s) & MASK32 for s in range(32)]
    elif code == "1WM":
        seq = []
        for s in range(8):
            p = _byte_rep(1 << s)
            seq += [p, ~p & MASK32]
    else:
        raise ValueError(f"unknown walking test code {code!r}")
    return PatternTable(code, tuple(Phase(v, v) for v in seq))

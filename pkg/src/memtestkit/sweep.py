"""Memory-clock sweeps on simulated devices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import rng
from .faultsim import FaultProfile, simulated_device
from .testkit import TEST_CODES, IterationConfig, run_iterations

DEFAULT_FREQUENCIES = (400, 420, 430, 440, 450, 475, 500, 530)
DEFAULT_ITERATIONS = 20
DEFAULT_FINAL_ITERATIONS = 10


@dataclass
class SweepCell:
    word_errors: int = 0
    words_checked: int = 0

    @property
    def rate(self) -> float:
        return self.word_errors / self.words_checked if self.words_checked else 0.0

    @property
    def zero(self) -> bool:
        return self.word_errors == 0


@dataclass
class SweepResult:
    frequencies: tuple
    cells: dict = field(default_factory=dict)  # (freq, code) -> SweepCell
    iterations: dict = field(default_factory=dict)  # freq -> iterations per seed

    def rate(self, freq: int, code: str) -> float:
        return self.cells[(freq, code)].rate

    def onset(self, code: str) -> float:
        """Lowest frequency with any error; ``inf`` if the test never fired."""
        for f in self.frequencies:
            if self.cells[(f, code)].word_errors > 0:
                return f
        return math.inf

    def nondecreasing(self, code: str) -> bool:
        rates = [self.rate(f, code) for f in self.frequencies]
        return all(b >= a for a, b in zip(rates, rates[1:]))

    def rows(self):
        for f in self.frequencies:
            for c in TEST_CODES:
                cell = self.cells[(f, c)]
                yield {"frequency_mhz": f, "test": c, "iterations": self.iterations[f],
                       "word_errors": cell.word_errors, "words_checked": cell.words_checked,
                       "word_error_rate": cell.rate, "zero": cell.zero}


def clock_sweep(profile: FaultProfile | None = None, frequencies=DEFAULT_FREQUENCIES,
                iterations: int = DEFAULT_ITERATIONS, final_iterations: int | None = DEFAULT_FINAL_ITERATIONS,
                seeds=(0,), size_mib: float | None = 32, words: int | None = None,
                lcg_period: int | None = None) -> SweepResult:
    """Run the full test suite at each memory clock and pool word error rates over seeds.

    Every (frequency, seed) pair gets a fresh device whose fault stream is
    re-keyed, so no state carries from one clock setting to the next.
    ``final_iterations`` replaces ``iterations`` at the highest frequency.
    """
    profile = profile or FaultProfile()
    freqs = tuple(sorted(int(f) for f in frequencies))
    if not freqs:
        raise ValueError("at least one frequency is required")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    res = SweepResult(freqs)
    for f in freqs:
        n_it = final_iterations if (final_iterations and f == freqs[-1]) else iterations
        res.iterations[f] = n_it
        for c in TEST_CODES:
            res.cells[(f, c)] = SweepCell()
        for s in seeds:
            dev_seed = rng.hash_int(profile.seed, rng.TAG_SWEEP, int(s), f)
            dev = simulated_device(size_mib if words is None else None, profile.replace(seed=dev_seed),
                                   words=words, memory_clock_mhz=f, record_events=False)
            cfg = IterationConfig(card_id=f"sweep-{f}-{s}", lcg_period=lcg_period)
            for _, outcomes in run_iterations(dev, cfg, n_it, seed=rng.hash_int(int(s), rng.TAG_SWEEP, f)):
                for c, o in outcomes.items():
                    cell = res.cells[(f, c)]
                    cell.word_errors += o.word_errors
                    cell.words_checked += o.words_checked
    return res

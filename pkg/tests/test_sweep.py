import math

import pytest

from memtestkit.faultsim import FaultProfile
from memtestkit.sweep import clock_sweep
from memtestkit.testkit import TEST_CODES


@pytest.fixture(scope="module")
def small_sweep():
    return clock_sweep(FaultProfile(seed=3), (400, 450, 530), iterations=2, final_iterations=1, words=16384)


def test_below_threshold_is_clean(small_sweep):
    assert all(small_sweep.cells[(400, c)].zero for c in TEST_CODES)


def test_constant_tests_never_fire(small_sweep):
    for f in small_sweep.frequencies:
        assert small_sweep.cells[(f, "MI10")].zero and small_sweep.cells[(f, "MIR")].zero


def test_m20_fires_when_overclocked(small_sweep):
    assert small_sweep.onset("M20") <= 530
    assert math.isinf(small_sweep.onset("MI10"))
    assert small_sweep.iterations == {400: 2, 450: 2, 530: 1}


def test_rows_cover_grid(small_sweep):
    rows = list(small_sweep.rows())
    assert len(rows) == 3 * len(TEST_CODES)
    assert {r["frequency_mhz"] for r in rows} == {400, 450, 530}


def test_sweep_replays():
    a = clock_sweep(FaultProfile(seed=1), (480,), 1, None, words=4096)
    b = clock_sweep(FaultProfile(seed=1), (480,), 1, None, words=4096)
    assert list(a.rows()) == list(b.rows())


def test_bad_arguments():
    with pytest.raises(ValueError):
        clock_sweep(frequencies=())
    with pytest.raises(ValueError):
        clock_sweep(iterations=0)

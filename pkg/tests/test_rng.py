import numpy as np
from hypothesis import given, settings, strategies as st

from memtestkit import rng


@given(st.integers(0, 2**64 - 1), st.integers(0, 200), st.lists(st.integers(0, 2**62), max_size=3))
def test_scalar_and_array_hash_agree(seed, tag, counters):
    expect = rng.hash_int(seed, tag, *counters)
    got = rng.hash_array(seed, tag, *[np.array([c]) for c in counters])
    assert int(np.asarray(got).ravel()[0]) == expect


def test_tags_separate_streams():
    assert rng.hash_int(1, rng.TAG_ALU, 5) != rng.hash_int(1, rng.TAG_COUPLE, 5)
    assert rng.hash_int(1, rng.TAG_ALU, 5) != rng.hash_int(2, rng.TAG_ALU, 5)


def test_to_unit_range():
    u = rng.uniform(3, 7, np.arange(100_000))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


@settings(max_examples=40)
@given(st.floats(1e-5, 0.3), st.integers(0, 50_000), st.integers(1, 20_000), st.integers(1, 19_999))
def test_bernoulli_window_split_invariant(q, lo, width, cut):
    hi = lo + width
    mid = lo + cut % width
    whole = rng.bernoulli_ops(9, 1, q, lo, hi)
    parts = np.concatenate([rng.bernoulli_ops(9, 1, q, lo, mid), rng.bernoulli_ops(9, 1, q, mid, hi)])
    assert np.array_equal(whole, parts)
    mask = rng.bernoulli_subset(9, 1, q, np.arange(lo, hi))
    assert np.array_equal(np.flatnonzero(mask) + lo, whole)


def test_bernoulli_rate():
    q = 1e-3
    n = 2_000_000
    k = rng.bernoulli_ops(4, 2, q, 0, n).size
    assert abs(k - q * n) < 5 * np.sqrt(q * n)


def test_bernoulli_edges():
    assert rng.bernoulli_ops(0, 0, 0.0, 0, 10).size == 0
    assert np.array_equal(rng.bernoulli_ops(0, 0, 1.0, 3, 6), [3, 4, 5])
    assert rng.bernoulli_ops(0, 0, 0.5, 5, 5).size == 0


def test_generator_is_replayable():
    a = rng.generator(5, rng.TAG_CARD, 1).random(4)
    b = rng.generator(5, rng.TAG_CARD, 1).random(4)
    assert np.array_equal(a, b)


def test_nth_set_bit():
    vals = np.array([0b1011, 0, 0x80000000], dtype=np.uint32)
    ranks = np.array([2, 0, 0])
    assert list(rng.nth_set_bit(vals, ranks)) == [3, -1, 31]

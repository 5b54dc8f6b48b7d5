import pytest
from hypothesis import given, strategies as st

from memtestkit.patterns import (
    PM_MODULUS,
    ParkMiller,
    block_seed,
    cyclic_lcg_step,
    make_cyclic_lcg,
    park_miller_next,
    walking_patterns,
)


def test_park_miller_known_values():
    assert park_miller_next(1) == 16807
    assert park_miller_next(16807) == 282475249
    pm = ParkMiller(1)
    for _ in range(10_000):
        x = pm.next()
    assert x == 1043618065


def test_park_miller_rejects_zero_state():
    with pytest.raises(ValueError):
        park_miller_next(0)
    with pytest.raises(ValueError):
        ParkMiller(PM_MODULUS)


@given(st.integers(min_value=0, max_value=2**40), st.integers(min_value=0, max_value=2**20))
def test_block_seed_in_range(seed, block):
    s = block_seed(seed, block)
    assert 1 <= s < PM_MODULUS


def test_lcg_256_constants_and_orbit():
    spec = make_cyclic_lcg(256)
    assert spec.a == 1664525
    assert spec.c == 1 << 24
    orbit = spec.orbit()
    assert len(set(orbit)) == 256
    assert spec.step(orbit[-1]) == 0


@pytest.mark.parametrize("k", [4, 512, 1024, 4096])
def test_lcg_orbit_lives_on_multiples(k):
    spec = make_cyclic_lcg(k)
    orbit = spec.orbit()
    assert len(set(orbit)) == k
    assert all(x % (1 << spec.shift) == 0 for x in orbit)


def test_lcg_512_states_are_multiples_of_2_23():
    assert all(x % (1 << 23) == 0 for x in make_cyclic_lcg(512).orbit())


@pytest.mark.parametrize("k,kw", [(3, {}), (100, {}), (1 << 17, {}), (256, {"a": 3}), (256, {"c_odd": 2})])
def test_lcg_rejects_bad_parameters(k, kw):
    with pytest.raises(ValueError):
        make_cyclic_lcg(k, **kw)


def test_low_bit_corruption_never_returns_to_zero():
    spec = make_cyclic_lcg(256)
    x = 1  # state 0 with bit 0 flipped
    for _ in range(4096):
        x = spec.step(x)
        assert x != 0


def test_step_through_device_alu(null_device):
    spec = make_cyclic_lcg(256)
    assert cyclic_lcg_step(spec, 0, null_device) == spec.step(0)


@pytest.mark.parametrize("code,length", [("1W1", 8), ("1W0", 8), ("4W1", 32), ("4W0", 32), ("1WM", 16)])
def test_walking_table_lengths(code, length):
    assert len(walking_patterns(code)) == length


def test_walking_table_contents():
    assert walking_patterns("1W1").writes()[0] == 0x01010101
    assert walking_patterns("1W0").writes()[7] == 0x7F7F7F7F
    assert walking_patterns("4W1").writes()[31] == 0x80000000
    assert walking_patterns("1WM").writes()[:2] == [0x01010101, 0xFEFEFEFE]
    for code in ("1W1", "1W0", "4W0", "4W1", "1WM"):
        assert all(p.write == p.verify for p in walking_patterns(code))


def test_walking_unknown_code():
    with pytest.raises(ValueError):
        walking_patterns("2W1")


def test_park_miller_no_early_repeat():
    # the map is a bijection on [1, m-1], so the first repeat is a return to the seed
    x = 1
    for _ in range(1_000_000):
        x = 16807 * x % PM_MODULUS
        assert x != 1

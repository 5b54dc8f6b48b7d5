import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memtestkit.faultsim import FaultProfile, simulated_device
from memtestkit.memdev import (
    AddressRangeError,
    DeviceCapabilities,
    RegionSpec,
    VirtualClock,
    class_size,
    host_device,
)


def test_region_from_mib():
    assert RegionSpec.from_mib(32).word_count == 8 * 1024 * 1024
    assert RegionSpec.from_mib(0.25).size_mib == 0.25
    assert RegionSpec(1024).size_mib_int == 0
    with pytest.raises(ValueError):
        RegionSpec.from_mib(1e-7)
    with pytest.raises(ValueError):
        RegionSpec(0)


def test_caps_validation():
    with pytest.raises(ValueError):
        DeviceCapabilities(RegionSpec(16), lane_count=0)
    with pytest.raises(ValueError):
        DeviceCapabilities(RegionSpec(16), architecture="R600")


@given(st.integers(1, 500), st.integers(1, 30), st.integers(0, 29), st.booleans())
def test_class_size_matches_enumeration(n, m, r, excl):
    r %= m
    inside = sum(1 for a in range(n) if a % m == r)
    assert class_size(n, m, r, excl) == (n - inside if excl else inside)


def test_clock_scaling():
    c = VirtualClock(clock_mhz=800)
    c.advance_writes(1000)
    assert c.now_seconds == pytest.approx(1000 * 2e-9 / 2)


@pytest.mark.parametrize("make", [lambda: host_device(0.0625), lambda: simulated_device(0.0625, FaultProfile.null())],
                         ids=["host", "simulated"])
def test_bulk_interface(make):
    dev = make()
    n = dev.word_count
    dev.fill(0xDEADBEEF)
    assert dev.count_mismatches(0xDEADBEEF) == 0
    dev.write_words(10, [1, 2, 3])
    assert dev.read_words(9, 5).tolist() == [0xDEADBEEF, 1, 2, 3, 0xDEADBEEF]
    assert dev.count_mismatches(0xDEADBEEF) == 3
    dev.fill(7, 20, 3)
    assert dev.count_mismatches(7, 20, 3) == 0
    dev.write_class(256, 0, np.zeros(class_size(n, 256, 0), dtype=np.uint32))
    assert dev.count_mismatches(0, 256, 0) == 0
    # 10..12 lie outside both later classes
    assert dev.count_mismatches_words(10, [1, 2, 3]) == 0
    assert dev.count_mismatches_words(9, [0, 1, 2, 4]) == 2
    with pytest.raises(AddressRangeError):
        dev.read_words(n - 1, 2)
    with pytest.raises(AddressRangeError):
        dev.write_words(-1, [0])
    with pytest.raises(ValueError):
        dev.fill(0, 20, 20)
    with pytest.raises(ValueError):
        dev.write_class(256, 0, [1, 2])


def test_counters_advance():
    dev = host_device(0.0625)
    dev.fill(1)
    dev.count_mismatches(1)
    assert dev.op_counter == 2 * dev.word_count
    assert dev.clock.now_seconds > 0


@pytest.mark.parametrize("lanes", [1, 4, 16])
def test_host_lanes_give_same_image(lanes):
    dev = host_device(2, lane_count=lanes)
    ref = np.zeros(dev.word_count, dtype=np.uint32)
    dev.fill(0x5A5A5A5A, 20, 7)
    ref[7::20] = 0x5A5A5A5A
    dev.fill(0xA5A5A5A5, 20, 7, exclude=True)
    mask = np.ones(ref.size, bool)
    mask[7::20] = False
    ref[mask] = 0xA5A5A5A5
    assert np.array_equal(dev.snapshot(), ref)
    assert dev.count_mismatches(0xA5A5A5A5, 20, 7, exclude=True) == 0
    assert dev.count_mismatches(0, 20, 7) == ref[7::20].size
    dev.close()


ops = st.one_of(
    st.tuples(st.just("fill"), st.integers(0, 2**32 - 1), st.integers(1, 25), st.integers(0, 24), st.booleans()),
    st.tuples(st.just("write"), st.integers(0, 600), st.lists(st.integers(0, 2**32 - 1), max_size=40)),
    st.tuples(st.just("class"), st.integers(0, 2**32 - 1), st.sampled_from([16, 20, 256]), st.integers(0, 15)),
)


@settings(max_examples=80, deadline=None)
@given(st.lists(ops, max_size=25))
def test_null_simulated_device_matches_reference_model(seq):
    """The lazily represented image must read exactly like a plain array."""
    n = 640
    dev = simulated_device(words=n, profile=FaultProfile.null())
    host = host_device(n * 4 / 2**20)
    ref = np.zeros(n, dtype=np.uint32)
    for op in seq:
        if op[0] == "fill":
            _, v, m, r, excl = op
            r %= m
            for d in (dev, host):
                d.fill(v, m, r, excl)
            sel = (np.arange(n) % m == r) ^ excl
            if not (excl and m == 1):
                ref[sel] = v
        elif op[0] == "write":
            _, base, vals = op
            vals = vals[: n - base]
            for d in (dev, host):
                d.write_words(base, vals)
            ref[base:base + len(vals)] = vals
        else:
            _, v, m, r = op
            vals = (np.arange(class_size(n, m, r), dtype=np.uint64) * 2654435761 + v).astype(np.uint32)
            for d in (dev, host):
                d.write_class(m, r, vals)
            ref[r::m] = vals
        assert np.array_equal(dev.snapshot(), ref)
        assert np.array_equal(host.snapshot(), ref)
        probe = int(ref[0])
        assert dev.count_mismatches(probe) == host.count_mismatches(probe) == int((ref != probe).sum())

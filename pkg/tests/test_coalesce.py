import pytest
from hypothesis import given, settings, strategies as st

from memtestkit.coalesce import (
    AccessTrace,
    TraceError,
    coalesce_g80,
    coalesce_gt200,
    trace_m20,
    traffic_report,
)


def g80_oracle(groups):
    """Scalar reading of the G80 rule, one half-warp at a time."""
    tx = nbytes = 0
    for accesses in groups:
        act = [(lane, a) for lane, a, *rest in accesses if not rest[1:] or rest[1]]
        if not act:
            continue
        bases = {a - 4 * lane for lane, a in act}
        if len(bases) == 1 and next(iter(bases)) % 64 == 0:
            tx, nbytes = tx + 1, nbytes + 64
        else:
            tx, nbytes = tx + len(act), nbytes + 32 * len(act)
    return tx, nbytes


def gt200_oracle(groups):
    tx = nbytes = 0
    for accesses in groups:
        segs = {}
        for lane, a, *rest in accesses:
            if rest[1:] and not rest[1]:
                continue
            segs.setdefault(a // 128, []).append(a % 128)
        for offs in segs.values():
            lo, hi, base, size = min(offs), max(offs) + 4, 0, 128
            for half in (64, 32):
                if hi - base <= half:
                    size = half
                elif lo - base >= half:
                    base, size = base + half, half
                else:
                    break
            tx, nbytes = tx + 1, nbytes + size
    return tx, nbytes


def stats(t):
    return (t.transactions, t.bytes)


def test_fully_coalesced_half_warp():
    groups = [[(i, 256 + 4 * i) for i in range(16)]]
    t = AccessTrace.from_groups(groups)
    assert stats(coalesce_g80(t)) == (1, 64)
    assert stats(coalesce_gt200(t)) == (1, 64)


def test_permuted_lanes_break_g80_only():
    groups = [[(i, 4 * (15 - i)) for i in range(16)]]
    t = AccessTrace.from_groups(groups)
    assert stats(coalesce_g80(t)) == (16, 512)
    assert stats(coalesce_gt200(t)) == (1, 64)


def test_single_word_reduces_to_32_bytes():
    t = AccessTrace.from_groups([[(3, 1000)]])
    assert stats(coalesce_gt200(t)) == (1, 32)
    assert stats(coalesce_g80(t)) == (1, 32)


def test_byte_dominance_counterexample():
    """Two accesses 64 B apart: one G80 sector each, one whole GT200 segment."""
    t = AccessTrace.from_groups([[(0, 0), (1, 64)]])
    assert stats(coalesce_g80(t)) == (2, 64)
    assert stats(coalesce_gt200(t)) == (1, 128)


def test_inactive_lanes_ignored():
    # the lone active lane sits in its natural slot, so G80 still coalesces
    t = AccessTrace.from_groups([[(0, 8, True, False), (1, 4)]])
    assert stats(coalesce_g80(t)) == (1, 64)
    t = AccessTrace.from_groups([[(0, 0, True, False), (1, 8)]])
    assert stats(coalesce_g80(t)) == (1, 32)


@pytest.mark.parametrize("groups", [[[(0, 2)]], [[(16, 0)]], [[(0, 0), (0, 4)]], [[(0, -4)]], [[(i, 4 * i) for i in range(17)]]])
def test_invalid_traces(groups):
    with pytest.raises(TraceError):
        AccessTrace.from_groups(groups)


half_warp = st.lists(st.tuples(st.integers(0, 15), st.integers(0, 96).map(lambda w: 4 * w), st.booleans(), st.booleans()),
                     max_size=16, unique_by=lambda x: x[0])


@settings(max_examples=300)
@given(st.lists(half_warp, max_size=6))
def test_coalescers_match_oracles_and_dominance(groups):
    t = AccessTrace.from_groups(groups)
    g80, gt = coalesce_g80(t), coalesce_gt200(t)
    assert stats(g80) == g80_oracle(groups)
    assert stats(gt) == gt200_oracle(groups)
    assert gt.transactions <= g80.transactions


def test_m20_trace_shape():
    t = trace_m20(640, 3)
    # pattern write 32 words, two complement writes of 608, verify 32
    assert len(t) == 32 + 2 * 608 + 32
    assert int(t.is_write.sum()) == 32 + 2 * 608
    lin = trace_m20(640, 3, "linear", "writes")
    assert len(lin) == 32 + 2 * 608 and lin.is_write.all()
    with pytest.raises(ValueError):
        trace_m20(640, 20)
    with pytest.raises(ValueError):
        trace_m20(640, 0, "diagonal")


def test_traffic_report_values():
    rep = traffic_report(65536, "linear", "writes")
    assert rep.byte_ratio == pytest.approx(7 / 6)
    assert rep.gt200.bytes <= rep.g80.bytes
    d = rep.as_dict()
    assert d["mapping"] == "linear" and d["byte_ratio"] == round(7 / 6, 6)
    ref = traffic_report(65536)
    assert ref.mapping == "class-major" and ref.byte_ratio < 1
    with pytest.raises(ValueError):
        traffic_report(100)


def test_rule_table_fixtures():
    shifted = AccessTrace.from_groups([[(i, 4 + 4 * i) for i in range(16)]])
    assert stats(coalesce_g80(shifted)) == (16, 512)
    assert stats(coalesce_gt200(shifted)) == (1, 128)
    lone = AccessTrace.from_groups([[(0, 80)]])
    assert stats(coalesce_gt200(lone)) == (1, 32)
    aligned = AccessTrace.from_groups([[(i, 4 * i) for i in range(16)]])
    assert stats(coalesce_g80(aligned)) == stats(coalesce_gt200(aligned)) == (1, 64)


def test_m20_round_zero_pattern_groups():
    t = trace_m20(320, 0)
    first = t.group == 0
    assert (t.byte_address[first] // 4).tolist() == list(range(0, 320, 20))[:16]
    assert t.lane[first].tolist() == list(range(16))
    # complement words are written twice
    writes = t.byte_address[t.is_write] // 4
    counts = {int(w): int(c) for w, c in zip(*__import__("numpy").unique(writes, return_counts=True))}
    assert all(counts[w] == (1 if w % 20 == 0 else 2) for w in range(320))


def test_conservation_of_bytes():
    t = trace_m20(640, 5, "linear")
    for fn in (coalesce_g80, coalesce_gt200):
        assert fn(t).bytes >= 4 * len(t)

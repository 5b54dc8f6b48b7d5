import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memtestkit import analytics as an
from memtestkit.fleet import ERROR_KEYS, FleetParams, Dataset, record_line, run_campaign, sample_fleet


def good_record(**kw):
    rec = {"schema_version": 1, "card_id": "c", "device_name": "GeForce GTX 280", "architecture": "GT200",
           "region_mib": 32, "lcg_period": 256, "shader_clock_mhz": 1296, "memory_clock_mhz": 1107,
           "start_utc": 0.0, "end_utc": 3.0, "utc_offset_min": 0}
    rec.update({k: 0 for k in ERROR_KEYS})
    rec["failed"] = False
    rec.update(kw)
    return rec


# -- ingestion ---------------------------------------------------------------

@pytest.mark.parametrize("change,needle", [
    ({"schema_version": 2}, "schema_version"),
    ({"extra": 1}, "unknown field 'extra'"),
    ({"region_mib": 1.5}, "region_mib"),
    ({"err_M20": -1}, "err_M20"),
    ({"architecture": "R600"}, "architecture"),
    ({"end_utc": -1.0}, "end_utc"),
    ({"err_RB": 2}, "failed"),
    ({"failed": "no"}, "failed"),
    ({"start_utc": float("nan")}, "start_utc"),
])
def test_validation_names_the_field(change, needle):
    with pytest.raises(an.RecordError, match=needle):
        an.validate_record(good_record(**change), "f:3")


def test_missing_field():
    rec = good_record()
    del rec["lcg_period"]
    with pytest.raises(an.RecordError, match="missing field 'lcg_period'"):
        an.validate_record(rec)


def test_load_reports_path_and_line(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text(record_line(good_record()) + "\n" + "{not json\n")
    with pytest.raises(an.RecordError, match=r"r\.jsonl:2"):
        an.load_records(p)


def test_load_merges_files(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    a.write_text(record_line(good_record(card_id="x")) + "\n")
    b.write_text(record_line(good_record(card_id="y", err_M20=3, failed=True)) + "\n\n")
    ds = an.load_records(a, b)
    assert ds.card_ids == ["x", "y"] and ds.test_errors("M20").tolist() == [0, 3]


# -- estimates and histograms ----------------------------------------------------

def dataset_from(per_card):
    """per_card: {card_id: (iterations, failures)}"""
    recs = []
    for cid, (n, f) in per_card.items():
        for i in range(n):
            fail = i < f
            recs.append(good_record(card_id=cid, err_MI10=int(fail), failed=fail))
    return Dataset.from_records(recs)


def test_card_pfail_and_cutoff():
    ds = dataset_from({"b": (10, 5), "a": (4, 0), "c": (20, 1)})
    est = an.card_pfail(ds)
    assert [(e.card_id, e.p_fail) for e in est] == [("a", 0.0), ("b", 0.5), ("c", 0.05)]
    assert [e.card_id for e in an.card_pfail(ds, 10)] == ["b", "c"]
    assert an.failing_median(est) == pytest.approx(0.275)
    with pytest.raises(ValueError):
        an.card_pfail(ds, 0)


def test_cdf_and_pmf():
    est = [0.0, 0.0, 0.1, 0.5]
    assert an.empirical_cdf(est, [0.0, 0.2, 1.0]).tolist() == [0.5, 0.75, 1.0]
    h = an.empirical_pmf(est, [0.0, 0.05, 1.0])
    assert h.counts.tolist() == [2, 2]
    with pytest.raises(ValueError, match="no cards pass the cutoff"):
        an.empirical_cdf([], [0.5])
    with pytest.raises(ValueError):
        an.empirical_pmf(est, [0.5, 0.1])


def test_pfail_bins():
    idx = an.pfail_bin_index(np.array([0.0, 1e-9, 0.001, 0.0015, 1.0]), 1000)
    assert idx.tolist() == [0, 1, 2, 2, 1000]
    assert an.pfail_histogram([0.0, 1.0]).counts.sum() == 2


# -- information measures ---------------------------------------------------------

@pytest.mark.parametrize("n", [2, 8, 1024])
def test_uniform_entropy_exact(n):
    assert an.entropy(np.full(n, 1.0 / n)) == math.log2(n)


def test_entropy_rejects_bad_mass():
    with pytest.raises(ValueError):
        an.entropy([0.5, 0.6])
    with pytest.raises(ValueError):
        an.entropy([1.5, -0.5])


@settings(max_examples=200)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_mi_symmetric_and_bounded(r, c, seed):
    g = np.random.default_rng(seed)
    j = g.random((r, c)) * (g.random((r, c)) < 0.7)
    if j.sum() == 0:
        j[0, 0] = 1.0
    j = j / j.sum()
    i_xy = an.mutual_information(j)
    assert i_xy == an.mutual_information(j.T)
    hx, hy = an.entropy(j.sum(axis=1) / j.sum()), an.entropy(j.sum(axis=0) / j.sum())
    assert -1e-12 <= i_xy <= min(hx, hy) + 1e-12


def test_independent_joint_has_zero_mi():
    px, py = np.array([0.2, 0.8]), np.array([0.1, 0.3, 0.6])
    assert an.mutual_information(np.outer(px, py)) == pytest.approx(0.0, abs=1e-15)


def test_information_gain_worked_example():
    # two labels, each holding a single p_fail value: gain equals H(D)
    res = an.information_gain({"a": [0.0, 0.0], "b": [0.5, 0.5]})
    assert res.H_D == 1.0 and res.I_DV == 1.0
    assert res.probabilities == {"a": 0.5, "b": 0.5}
    same = an.information_gain({"a": [0.0, 0.5], "b": [0.0, 0.5]})
    assert same.I_DV == 0.0


def test_information_gain_drops_empty_subset():
    with pytest.warns(RuntimeWarning, match="empty"):
        res = an.information_gain({"a": [0.1, 0.2], "b": []})
    assert res.subset_sizes == {"a": 2} and res.I_DV == 0.0


@settings(max_examples=100)
@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 1.0)), min_size=2, max_size=300))
def test_perfect_indicator_identity(p):
    p = np.array(p)
    zero = (p == 0).mean()
    labels = np.array([zero, 1 - zero])
    h_label = an.entropy(labels[labels > 0])
    assert abs(an.perfect_indicator_gain(p) - h_label) <= 1e-12


def test_count_bins():
    assert an.count_bins(np.array([0, 1, 5, 9, 10])).tolist() == [0, 1, 5, 9, 9]
    assert an.count_bins(np.zeros(3, dtype=int)).tolist() == [0, 0, 0]


def test_mi_matrix_on_correlated_tests():
    recs = []
    g = np.random.default_rng(0)
    for i in range(400):
        a = int(g.integers(0, 2))
        errs = {"err_L": a * 3, "err_L4": a * 7, "err_M20": int(g.integers(0, 2))}
        recs.append(good_record(card_id=f"c{i % 7}", failed=bool(a or errs["err_M20"]), **errs))
    m = an.test_mi_matrix(Dataset.from_records(recs))
    iL, iL4, iM = (m.codes.index(c) for c in ("L", "L4", "M20"))
    assert m.ratio[iL4, iL] == pytest.approx(1.0)
    assert m.ratio[iM, iL] < 0.05
    assert math.isnan(m.ratio[0, m.codes.index("MI10")])
    assert m.mean_ratio(["L"], ["L4"]) == pytest.approx(1.0)
    assert m.off_diagonal_mean("M20", ["L", "L4"]) < 0.05


# -- indicators ----------------------------------------------------------------------

def test_classify_overclock():
    table = {"X": (1200, 1625), "Y": (1350,)}
    assert an.classify_overclock("Y", 1350, table) == an.OverclockStatus.STOCK
    assert an.classify_overclock("Y", 1400, table) == an.OverclockStatus.OVERCLOCKED
    assert an.classify_overclock("X", 1400, table) == an.OverclockStatus.INDETERMINATE
    assert an.classify_overclock("X", 1200, table) == an.OverclockStatus.STOCK
    assert an.classify_overclock("Z", 1, table) == an.OverclockStatus.INDETERMINATE


def test_stock_table_file(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text(json.dumps({"device_name": "X", "stock_clocks_mhz": [1, 2]}) + "\n")
    assert an.load_stock_table(p) == {"X": (1, 2)}
    p.write_text('{"device_name": "X"}\n')
    with pytest.raises(an.RecordError):
        an.load_stock_table(p)


def test_day_night_labels():
    h = 3600.0
    starts = np.array([7 * h, 23 * h, 17.5 * h, 2 * h, 5 * h])
    ends = starts + np.array([h, 2 * h, h, h, 1.5 * h])
    labels = an.day_night_labels(starts, ends, np.zeros(5))
    assert labels.tolist() == ["DAY", "NIGHT", "EXCLUDED", "NIGHT", "EXCLUDED"]
    # a +120 minute offset moves 5:00 UTC to 7:00 local
    assert an.day_night_labels([5 * h], [5.5 * h], [120]).tolist() == ["DAY"]


def test_hypothesis_report_fields():
    params = FleetParams(n_cards=200, mode_pfail=0.02, arch_pfail_scale={"GT200": 0.1}, seed=1)
    ds = run_campaign(sample_fleet(params), 300, params=params, seed=1)
    for name in an.HYPOTHESES:
        rep = an.hypothesis_report(ds, name)
        assert 0 <= rep.I_DV <= rep.H_D
        assert rep.perfect_indicator_gain <= rep.H_D + 1e-12
        d = rep.as_dict()
        assert d["indicator"] == name and set(d) >= {"H_D", "I_DV", "perfect_indicator_gain", "subset_sizes"}
    arch = an.hypothesis_report(ds, "architecture")
    assert arch.I_DV > an.hypothesis_report(ds, "overclock").I_DV
    with pytest.raises(ValueError):
        an.hypothesis_report(ds, "moonphase")

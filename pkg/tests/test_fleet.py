import json
import math

import numpy as np
import pytest

from memtestkit.analytics import load_records
from memtestkit.fleet import (
    ERROR_KEYS,
    RECORD_KEYS,
    STOCK_CATALOG,
    Dataset,
    FleetError,
    FleetParams,
    load_fleet,
    record_dict,
    run_campaign,
    sample_fleet,
    save_fleet,
    transient_rate_for,
    truncate_partial,
    write_records,
)
from memtestkit.memdev import host_device
from memtestkit.testkit import IterationConfig, run_iterations


def small(**kw):
    base = dict(n_cards=30, mode_pfail=0.05, seed=4)
    base.update(kw)
    return FleetParams(**base)


def test_params_validation():
    with pytest.raises(FleetError):
        FleetParams(zero_error_fraction=1.5)
    with pytest.raises(FleetError):
        FleetParams(arch_mix={"G80": 0.3})
    with pytest.raises(FleetError):
        FleetParams(arch_pfail_scale={"R600": 2.0})
    with pytest.raises(FleetError):
        FleetParams.from_dict({"n_cards": 3, "bogus": 1})
    p = small(tail_fraction=0.1)
    assert FleetParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_sample_fleet_deterministic_and_consistent():
    a, b = sample_fleet(small()), sample_fleet(small())
    assert a == b
    assert sample_fleet(small(seed=5)) != a
    for c in a:
        arch, clocks, mem = STOCK_CATALOG[c.device_name]
        assert c.architecture == arch and c.stock_clocks_mhz == clocks and c.memory_clock_mhz == mem
        if c.overclocked:
            assert c.reported_clock_mhz > max(clocks)
        else:
            assert c.reported_clock_mhz in clocks
    assert [c.card_id for c in a][:2] == ["card-00000", "card-00001"]


def test_zero_fraction_is_planted():
    cards = sample_fleet(FleetParams(n_cards=6000, seed=1))
    z = np.mean([c.p_fail == 0 for c in cards])
    assert abs(z - 1 / 3) < 0.03


def test_transient_rate_calibration():
    lam = transient_rate_for(0.1, 1000, 2.0)
    assert 1 - math.exp(-lam * 1000 * 2.0) == pytest.approx(0.1)
    assert transient_rate_for(0.0, 10, 1) == 0.0
    with pytest.raises(FleetError):
        transient_rate_for(1.0, 10, 1)


def test_bernoulli_campaign_shape():
    cards = sample_fleet(small())
    ds = run_campaign(cards, 200, params=small(), seed=3)
    assert len(ds) == 30 * 200
    assert ds.card_ids == [c.card_id for c in cards]
    assert np.array_equal(ds.failed, ds.errors.any(axis=1))
    zero_cards = {c.card_id for c in cards if c.p_fail == 0}
    labels = ds.card_labels()
    assert not ds.failed[np.isin(labels, list(zero_cards))].any()


def test_records_have_exact_keys(tmp_path):
    cards = sample_fleet(small(n_cards=3))
    ds = run_campaign(cards, 5, params=small(n_cards=3), seed=1)
    path = tmp_path / "r.jsonl"
    assert write_records(ds, path) == 15
    for line in path.read_text().splitlines():
        assert tuple(json.loads(line)) == RECORD_KEYS


def test_iteration_record_serialisation():
    (rec, _), = list(run_iterations(host_device(0.25), IterationConfig(card_id="x"), 1, seed=0))
    d = record_dict(rec)
    assert tuple(d) == RECORD_KEYS
    assert all(d[k] == 0 for k in ERROR_KEYS) and d["failed"] is False


def test_round_trip_through_file(tmp_path):
    cards = sample_fleet(small())
    ds = run_campaign(cards, 50, params=small(), seed=2, out=tmp_path / "a.jsonl")
    back = load_records(tmp_path / "a.jsonl")
    assert back.identical(ds)
    write_records(back, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


@pytest.mark.parametrize("workers", [4, 16])
def test_workers_do_not_change_output(tmp_path, workers):
    cards = sample_fleet(small())
    run_campaign(cards, 40, params=small(), seed=2, out=tmp_path / "one.jsonl")
    run_campaign(cards, 40, params=small(), seed=2, workers=workers, out=tmp_path / "many.jsonl")
    assert (tmp_path / "one.jsonl").read_bytes() == (tmp_path / "many.jsonl").read_bytes()


def test_resume_after_interruption(tmp_path):
    cards = sample_fleet(small())
    full = tmp_path / "full.jsonl"
    run_campaign(cards, 40, params=small(), seed=2, out=full)
    data = full.read_bytes()
    part = tmp_path / "part.jsonl"
    part.write_bytes(data[: len(data) // 2 + 17])  # cut mid-line
    run_campaign(cards, 40, params=small(), seed=2, out=part, resume=True)
    assert part.read_bytes() == data


def test_truncate_partial(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"a\nb\nhalf")
    assert truncate_partial(p) == 2
    assert p.read_bytes() == b"a\nb\n"


def test_device_campaign_small(tmp_path):
    params = small(n_cards=3, mode_pfail=0.3, region_words=1024, alu_fault_p=1e-3)
    cards = sample_fleet(params, "device")
    ds1 = run_campaign(cards, 4, "device", params=params, seed=1)
    ds4 = run_campaign(cards, 4, "device", params=params, seed=1, workers=4)
    assert ds1.identical(ds4)
    assert np.all(ds1.end_utc - ds1.start_utc >= params.iteration_seconds - 1e-9)
    save_fleet(cards, tmp_path / "fleet.jsonl")
    assert load_fleet(tmp_path / "fleet.jsonl") == cards


def test_dataset_select_and_concat():
    cards = sample_fleet(small(n_cards=4))
    ds = run_campaign(cards, 30, params=small(n_cards=4), seed=9)
    mask = np.arange(len(ds)) % 3 == 0
    sub = ds.select(mask)
    assert np.array_equal(sub.errors, ds.errors[mask])
    again = Dataset.concat([ds.select(~mask & (np.arange(len(ds)) < 60)), ds.select(np.arange(len(ds)) >= 60)])
    assert len(again) == len(ds) - int(mask[:60].sum())
    assert Dataset.concat([]).identical(Dataset.empty())


def test_bad_campaign_arguments():
    cards = sample_fleet(small(n_cards=2))
    with pytest.raises(FleetError):
        run_campaign(cards, 0)
    with pytest.raises(FleetError):
        run_campaign(cards, 1, mode="quantum")
    with pytest.raises(FleetError):
        run_campaign(cards, 1, workers=0)

import csv
import json
import subprocess
import sys

import pytest

from memtestkit.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def profile_file(tmp_path, obj):
    p = tmp_path / "profile.jsonl"
    p.write_text(json.dumps(obj) + "\n")
    return p


@pytest.mark.slow
def test_host_test_clean_32mib(capsys):
    assert run("test", "--device", "host", "--iterations", 100, "--region-mib", 32) == 0
    assert "failures=0" in capsys.readouterr().out


def test_stuck_fault_fails_every_iteration(tmp_path, capsys):
    prof = profile_file(tmp_path, {"stuck_at": [{"address": 17, "mask": 1, "stuck_value": 1}]})
    out = tmp_path / "r.jsonl"
    code = run("test", "--device", "simulated", "--profile", prof, "--region-mib", 0.25,
               "--iterations", 5, "--out", out)
    assert code == 1
    assert "failures=5" in capsys.readouterr().out
    lines = [json.loads(x) for x in out.read_text().splitlines()]
    assert len(lines) == 5 and all(r["failed"] for r in lines)


@pytest.mark.parametrize("argv", [
    ["test", "--iterations", "0"],
    ["test", "--device", "host", "--profile", "x.json", "--region-mib", "0.25", "--iterations", "1"],
    ["test", "--deployed-profile", "--region-mib", "32", "--lcg-period", "512", "--iterations", "1"],
    ["sweep", "--device", "host"],
    ["fleet", "--out", "x.jsonl", "--iterations", "0"],
    ["nosuchcommand"],
    ["analyze", "--in", "does-not-exist.jsonl"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_missing_input_is_named(capsys):
    assert run("report", "--in", "nowhere.jsonl", "--out-dir", "x") == 2
    assert "nowhere.jsonl" in capsys.readouterr().err


def test_bad_profile_is_usage_error(tmp_path):
    prof = profile_file(tmp_path, {"alu_fault_p": 5})
    assert run("test", "--device", "simulated", "--profile", prof, "--region-mib", 0.25, "--iterations", 1) == 2


def test_malformed_record_is_runtime_error(tmp_path, capsys):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"schema_version": 1}\n')
    assert run("analyze", "--in", p) == 3
    assert "bad.jsonl:1" in capsys.readouterr().err


def test_sweep_table_and_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run("sweep", "--frequencies", "400,500", "--iterations", 1, "--final-iterations", 1,
               "--region-mib", 0.0625, "--out", out) == 0
    text = capsys.readouterr().out
    assert "onset:" in text and " - " in text
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 * 13
    assert all(r["zero"] == "true" for r in rows if r["frequency_mhz"] == "400")


def test_fleet_analyze_report_pipeline(tmp_path, capsys):
    recs = tmp_path / "f.jsonl"
    assert run("fleet", "--cards", 60, "--iterations", 200, "--out", recs, "--seed", 3) == 0
    assert run("analyze", "--in", recs, "--cutoff", 100, "--hypothesis", "all", "--mi-matrix",
               "--cdf-out", tmp_path / "cdf.csv", "--pmf-out", tmp_path / "pmf.csv") == 0
    out = capsys.readouterr().out
    for h in ("overclock", "daynight", "architecture"):
        assert f"hypothesis {h}" in out
    rep = tmp_path / "rep"
    assert run("report", "--in", recs, "--out-dir", rep, "--cutoff", 50, "--cutoff", 100, "--cutoff", 150) == 0
    cdf = list(csv.reader((rep / "cdf.csv").open()))
    cols = list(zip(*cdf[1:]))[1:]
    assert len(cols) == 3
    for col in cols:
        vals = [float(v) for v in col]
        assert vals == sorted(vals) and vals[-1] == 1.0
    mi = list(csv.reader((rep / "mi_matrix.csv").open()))
    assert len(mi) == 14 and all(len(r) == 14 for r in mi)
    for i in range(1, 14):
        assert mi[i][i] in ("1.000000", "undefined")
    assert (rep / "hypotheses.csv").exists() and (rep / "pmf.csv").exists()


def test_report_empty_cutoff(tmp_path, capsys):
    recs = tmp_path / "f.jsonl"
    run("fleet", "--cards", 3, "--iterations", 5, "--out", recs)
    assert run("report", "--in", recs, "--out-dir", tmp_path / "r", "--cutoff", 1000) == 3
    assert "no cards pass cutoff" in capsys.readouterr().err


def test_seeded_fleet_is_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run("fleet", "--cards", 20, "--iterations", 50, "--out", a, "--seed", 7)
    run("fleet", "--cards", 20, "--iterations", 50, "--out", b, "--seed", 7, "--workers", 4)
    assert a.read_bytes() == b.read_bytes()


def test_config_file_sets_defaults(tmp_path):
    cfg = tmp_path / "cfg.jsonl"
    cfg.write_text(json.dumps({"cards": 4}) + "\n" + json.dumps({"iterations": 3}) + "\n")
    out = tmp_path / "f.jsonl"
    assert run("fleet", "--config", cfg, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 12
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"warp_speed": 9}) + "\n")
    assert run("fleet", "--config", bad, "--out", out) == 2


def test_coalesce_output(tmp_path, capsys):
    out = tmp_path / "c.jsonl"
    assert run("coalesce", "--words", 6400, "--out", out) == 0
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert {(r["mapping"], r["scope"]) for r in rows} == {(m, s) for m in ("class-major", "linear")
                                                          for s in ("full", "writes")}
    assert "byte ratio" in capsys.readouterr().out


def test_quiet_and_module_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "memtestkit", "coalesce", "--words", "640", "--quiet"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == ""

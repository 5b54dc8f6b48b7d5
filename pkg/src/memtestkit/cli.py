"""Command-line entry point: ``memtestkit <subcommand> ...``.

Exit codes: 0 clean, 1 errors detected, 2 usage or configuration problem,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import analytics, coalesce, fleet, rng
from .faultsim import FaultProfile, simulated_device
from .memdev import DEPLOYED_REGIONS, host_device
from .sweep import DEFAULT_FINAL_ITERATIONS, DEFAULT_FREQUENCIES, DEFAULT_ITERATIONS, clock_sweep
from .testkit import TEST_CODES, IterationAborted, IterationConfig, run_iterations

EXIT_OK, EXIT_ERRORS, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_CUTOFFS = (1, 50_000, 300_000, 1_000_000)


class UsageError(Exception):
    pass


def _say(args, *parts) -> None:
    if not args.quiet:
        print(*parts)


def _read_objects(path) -> list[dict]:
    """Objects from a line-delimited JSON file (a single object per line)."""
    if not os.path.exists(path):
        raise UsageError(f"file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise UsageError(f"{path}:{lineno}: expected an object")
            out.append(obj)
    return out


def _merged(path) -> dict:
    merged: dict = {}
    for obj in _read_objects(path):
        merged.update(obj)
    return merged


def _load_profile(path) -> FaultProfile:
    try:
        return FaultProfile.from_dict(_merged(path))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad fault profile in {path}: {exc}") from None


# -- test ------------------------------------------------------------------------------

def cmd_test(args) -> int:
    if args.iterations < 1:
        raise UsageError("--iterations must be >= 1")
    if args.deployed_profile:
        k = args.lcg_period or DEPLOYED_REGIONS.get(int(args.region_mib))
        if DEPLOYED_REGIONS.get(int(args.region_mib)) != k or args.region_mib != int(args.region_mib):
            raise UsageError(f"({args.region_mib:g} MiB, k={k}) is not a deployed configuration; "
                             f"choose from {sorted(DEPLOYED_REGIONS.items())}")
    try:
        if args.device == "host":
            if args.profile:
                raise UsageError("--profile only applies to the simulated device")
            dev = host_device(args.region_mib, lane_count=args.lanes)
        else:
            profile = _load_profile(args.profile) if args.profile else FaultProfile.null(args.seed)
            dev = simulated_device(args.region_mib, profile, lane_count=args.lanes,
                                   memory_clock_mhz=args.memory_clock, record_events=False)
    except MemoryError:
        print(f"error: could not allocate a {args.region_mib:g} MiB region", file=sys.stderr)
        return EXIT_RUNTIME
    cfg = IterationConfig(card_id=args.card_id, lcg_period=args.lcg_period,
                          deployed_profile=args.deployed_profile)
    totals = dict.fromkeys(TEST_CODES, 0)
    failures = 0
    out = open(args.out, "w", encoding="utf-8") if args.out else None
    try:
        for rec, _ in run_iterations(dev, cfg, args.iterations, seed=args.seed):
            d = fleet.record_dict(rec)
            if out:
                out.write(fleet.record_line(d) + "\n")
            failures += rec.failed
            for c in TEST_CODES:
                totals[c] += rec.errors[c]
    except IterationAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if out:
            out.close()
        dev.close()
    _say(args, f"device={args.device} region={args.region_mib:g}MiB iterations={args.iterations} "
               f"failures={failures}")
    _say(args, "per-test word errors: " + " ".join(f"{c}={totals[c]}" for c in TEST_CODES))
    return EXIT_ERRORS if failures else EXIT_OK


# -- sweep ----------------------------------------------------------------------------------

def _write_sweep_csv(result, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frequency_mhz", "test", "iterations", "word_errors", "words_checked",
                    "word_error_rate", "zero"])
        for r in result.rows():
            w.writerow([r["frequency_mhz"], r["test"], r["iterations"], r["word_errors"],
                        r["words_checked"], f"{r['word_error_rate']:.6e}", "true" if r["zero"] else "false"])


def cmd_sweep(args) -> int:
    if args.device == "host":
        raise UsageError("sweep needs the simulated device; host memory clocks cannot be changed")
    freqs = [int(f) for f in args.frequencies.split(",")] if args.frequencies else list(DEFAULT_FREQUENCIES)
    if args.iterations < 1 or args.seeds < 1:
        raise UsageError("--iterations and --seeds must be >= 1")
    profile = _load_profile(args.profile) if args.profile else FaultProfile()
    profile = profile.replace(seed=args.seed)
    res = clock_sweep(profile, freqs, args.iterations, args.final_iterations or None,
                      seeds=range(args.seeds), size_mib=args.region_mib)
    if args.out:
        _write_sweep_csv(res, args.out)
    if not args.quiet:
        print("word error rate per test ('-' marks zero errors)")
        print("MHz   " + " ".join(f"{c:>9}" for c in TEST_CODES))
        for f in res.frequencies:
            cells = [res.cells[(f, c)] for c in TEST_CODES]
            print(f"{f:<5} " + " ".join(f"{'-':>9}" if x.zero else f"{x.rate:9.2e}" for x in cells))
        onsets = {c: res.onset(c) for c in TEST_CODES}
        print("onset: " + " ".join(f"{c}={'none' if math.isinf(v) else int(v)}" for c, v in onsets.items()))
    return EXIT_OK


# -- fleet ------------------------------------------------------------------------------------

def cmd_fleet(args) -> int:
    base = fleet.FleetParams.from_dict(_merged(args.params)) if args.params else fleet.FleetParams()
    over = {"seed": args.seed}
    if args.cards is not None:
        over["n_cards"] = args.cards
    params = fleet.FleetParams.from_dict({**base.to_dict(), **over})
    if args.iterations < 1:
        raise UsageError("--iterations must be >= 1")
    cards = fleet.sample_fleet(params, args.mode)
    if args.save_fleet:
        fleet.save_fleet(cards, args.save_fleet)
    ds = fleet.run_campaign(cards, args.iterations, args.mode, params=params,
                            seed=rng.hash_int(args.seed, rng.TAG_CAMPAIGN), workers=args.workers,
                            out=args.out, resume=args.resume)
    _say(args, f"cards={len(cards)} iterations={len(ds)} failed={int(ds.failed.sum())} -> {args.out}")
    return EXIT_OK


# -- analyze / report -----------------------------------------------------------------------------

CDF_POINTS = np.concatenate([[0.0], np.logspace(-7, 0, 71)])
PMF_EDGES = np.concatenate([[0.0, 1e-12], np.logspace(-7, 0, 29)[1:]])


def _load(paths) -> fleet.Dataset:
    for p in paths:
        if not os.path.exists(p):
            raise UsageError(f"input not found: {p}")
    return analytics.load_records(*paths)


def _cutoff_estimates(ds, cutoffs):
    out = {}
    for c in cutoffs:
        est = analytics.card_pfail(ds, c)
        if est:
            out[c] = est
    return out


def _write_cdf(estimates: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p_fail"] + [f"cdf_cutoff_{c}" for c in estimates])
        cols = [analytics.empirical_cdf(e, CDF_POINTS) for e in estimates.values()]
        for i, x in enumerate(CDF_POINTS):
            w.writerow([f"{x:.6e}"] + [f"{col[i]:.6f}" for col in cols])


def _write_pmf(estimates: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi"] + [f"pmf_cutoff_{c}" for c in estimates])
        cols = [analytics.empirical_pmf(e, PMF_EDGES).mass for e in estimates.values()]
        for i in range(PMF_EDGES.size - 1):
            w.writerow([f"{PMF_EDGES[i]:.6e}", f"{PMF_EDGES[i + 1]:.6e}"] + [f"{col[i]:.6f}" for col in cols])


def _write_mi(m, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_Y\\col_X"] + list(m.codes))
        for i, y in enumerate(m.codes):
            w.writerow([y] + ["undefined" if math.isnan(v) else f"{v:.6f}" for v in m.ratio[i]])


def _hypotheses(args):
    if not args.hypothesis:
        return []
    names = []
    for h in args.hypothesis:
        names.extend(analytics.HYPOTHESES if h == "all" else [h])
    return list(dict.fromkeys(names))


def cmd_analyze(args) -> int:
    ds = _load(args.inputs)
    cutoffs = tuple(args.cutoff) if args.cutoff else DEFAULT_CUTOFFS
    table = analytics.load_stock_table(args.stock_table) if args.stock_table else None
    est = _cutoff_estimates(ds, cutoffs)
    _say(args, f"records={len(ds)} cards={len(ds.card_ids)}")
    for c in cutoffs:
        if c not in est:
            _say(args, f"cutoff {c}: no cards pass cutoff")
            continue
        e = est[c]
        _say(args, f"cutoff {c}: cards={len(e)} CDF(0)={analytics.empirical_cdf(e, [0.0])[0]:.4f} "
                   f"failing_median={analytics.failing_median(e):.4e} "
                   f"H(D)={analytics.entropy(analytics.pfail_histogram(e, args.bins)):.4f}")
    if args.cdf_out:
        if not est:
            raise RuntimeError("no cards pass cutoff")
        _write_cdf(est, args.cdf_out)
    if args.pmf_out:
        if not est:
            raise RuntimeError("no cards pass cutoff")
        _write_pmf(est, args.pmf_out)
    for h in _hypotheses(args):
        cut = min(cutoffs)
        r = analytics.hypothesis_report(ds, h, cut, args.bins, table)
        _say(args, f"hypothesis {h} (cutoff {cut}): H(D)={r.H_D:.4f} I(D;V)={r.I_DV:.4f} "
                   f"perfect={r.perfect_indicator_gain:.4f} subsets={r.subset_sizes} excluded={r.excluded}")
    if args.mi_matrix:
        m = analytics.test_mi_matrix(ds)
        if not args.quiet:
            print("I(X;Y)/H(X), rows Y, columns X")
            print("      " + " ".join(f"{c:>6}" for c in m.codes))
            for i, y in enumerate(m.codes):
                print(f"{y:<5} " + " ".join("   n/a" if math.isnan(v) else f"{v:6.3f}" for v in m.ratio[i]))
    return EXIT_OK


def cmd_report(args) -> int:
    ds = _load(args.inputs)
    os.makedirs(args.out_dir, exist_ok=True)
    cutoffs = tuple(args.cutoff) if args.cutoff else DEFAULT_CUTOFFS
    est = _cutoff_estimates(ds, cutoffs)
    if not est:
        raise RuntimeError("no cards pass cutoff")
    _write_cdf(est, os.path.join(args.out_dir, "cdf.csv"))
    _write_pmf(est, os.path.join(args.out_dir, "pmf.csv"))
    _write_mi(analytics.test_mi_matrix(ds), os.path.join(args.out_dir, "mi_matrix.csv"))
    table = analytics.load_stock_table(args.stock_table) if args.stock_table else None
    with open(os.path.join(args.out_dir, "hypotheses.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["indicator", "cutoff", "H_D", "I_DV", "perfect_indicator_gain", "excluded"])
        cut = min(est)
        for h in analytics.HYPOTHESES:
            try:
                r = analytics.hypothesis_report(ds, h, cut, args.bins, table)
            except ValueError:
                continue
            w.writerow([h, cut, f"{r.H_D:.4f}", f"{r.I_DV:.4f}", f"{r.perfect_indicator_gain:.4f}", r.excluded])
    if args.sweep_iterations:
        res = clock_sweep(FaultProfile().replace(seed=args.seed), DEFAULT_FREQUENCIES, args.sweep_iterations,
                          None, seeds=(args.seed,), size_mib=args.sweep_region_mib)
        _write_sweep_csv(res, os.path.join(args.out_dir, "sweep.csv"))
    _say(args, f"wrote tables to {args.out_dir}")
    return EXIT_OK


# -- coalesce ----------------------------------------------------------------------------------------

def cmd_coalesce(args) -> int:
    mappings = coalesce.MAPPINGS if args.mapping == "all" else (args.mapping,)
    scopes = coalesce.SCOPES if args.scope == "all" else (args.scope,)
    reports = [coalesce.traffic_report(args.words, m, s) for m in mappings for s in scopes]
    if not args.quiet:
        print(f"{'mapping':<12} {'scope':<7} {'G80 txn':>10} {'G80 bytes':>12} {'GT200 txn':>10} "
              f"{'GT200 bytes':>12} {'byte ratio':>10}")
        for r in reports:
            print(f"{r.mapping:<12} {r.scope:<7} {r.g80.transactions:>10} {r.g80.bytes:>12} "
                  f"{r.gt200.transactions:>10} {r.gt200.bytes:>12} {r.byte_ratio:>10.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write(json.dumps({"schema_version": fleet.SCHEMA_VERSION, **r.as_dict()}) + "\n")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="line-delimited JSON file whose keys set option defaults")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="memtestkit", parents=[common],
                                description="Memory test suite, fault simulator and fleet analytics.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", parents=[common], help="run test iterations on a device")
    t.add_argument("--device", choices=("host", "simulated"), default="host")
    t.add_argument("--profile", help="fault profile JSON (simulated device)")
    t.add_argument("--region-mib", type=float, default=32.0)
    t.add_argument("--lcg-period", type=int)
    t.add_argument("--iterations", type=int, default=100)
    t.add_argument("--lanes", type=int, default=1)
    t.add_argument("--memory-clock", type=int, default=400)
    t.add_argument("--card-id", default="local")
    t.add_argument("--deployed-profile", action="store_true")
    t.add_argument("--out", help="record file to write")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("sweep", parents=[common], help="memory-clock sweep on a simulated device")
    s.add_argument("--device", choices=("host", "simulated"), default="simulated")
    s.add_argument("--profile")
    s.add_argument("--frequencies", help="comma-separated MHz list")
    s.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    s.add_argument("--final-iterations", type=int, default=DEFAULT_FINAL_ITERATIONS,
                   help="iterations at the highest frequency (0 = same as --iterations)")
    s.add_argument("--seeds", type=int, default=1, help="number of seeds to pool")
    s.add_argument("--region-mib", type=float, default=32.0)
    s.add_argument("--out", help="CSV output")
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fleet", parents=[common], help="sample a fleet and run a campaign")
    f.add_argument("--cards", type=int)
    f.add_argument("--iterations", type=int, default=1000)
    f.add_argument("--mode", choices=("bernoulli", "device"), default="bernoulli")
    f.add_argument("--params", help="FleetParams JSON")
    f.add_argument("--out", required=True)
    f.add_argument("--workers", type=int, default=1)
    f.add_argument("--resume", action="store_true")
    f.add_argument("--save-fleet")
    f.set_defaults(func=cmd_fleet)

    a = sub.add_parser("analyze", parents=[common], help="statistics over record files")
    a.add_argument("--in", dest="inputs", nargs="+", required=True)
    a.add_argument("--cutoff", type=int, action="append")
    a.add_argument("--hypothesis", action="append", choices=(*analytics.HYPOTHESES, "all"))
    a.add_argument("--mi-matrix", action="store_true")
    a.add_argument("--cdf-out")
    a.add_argument("--pmf-out")
    a.add_argument("--stock-table")
    a.add_argument("--bins", type=int, default=analytics.P_FAIL_BINS)
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("coalesce", parents=[common], help="G80 vs GT200 traffic of the modulo-20 test")
    c.add_argument("--words", type=int, default=65536)
    c.add_argument("--mapping", choices=(*coalesce.MAPPINGS, "all"), default="all")
    c.add_argument("--scope", choices=(*coalesce.SCOPES, "all"), default="all")
    c.add_argument("--out", help="JSON-lines output")
    c.set_defaults(func=cmd_coalesce)

    r = sub.add_parser("report", parents=[common], help="write plot-ready CSV tables")
    r.add_argument("--in", dest="inputs", nargs="+", required=True)
    r.add_argument("--out-dir", required=True)
    r.add_argument("--cutoff", type=int, action="append")
    r.add_argument("--stock-table")
    r.add_argument("--bins", type=int, default=analytics.P_FAIL_BINS)
    r.add_argument("--sweep-iterations", type=int, default=0, help="also run a sweep and write sweep.csv")
    r.add_argument("--sweep-region-mib", type=float, default=1.0)
    r.set_defaults(func=cmd_report)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        cfg = _merged(cfg_path)
        sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
        known = {a.dest for a in sub._actions}  # noqa: SLF001
        unknown = sorted(set(k.replace("-", "_") for k in cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys for '{args.command}': {unknown}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    for name, default in (("seed", 0), ("quiet", False), ("config", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (fleet.FleetError, analytics.RecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, fleet.FleetError) else EXIT_RUNTIME
    except (OSError, RuntimeError, ValueError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

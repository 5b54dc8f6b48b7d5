"""Synthetic card fleets, testing campaigns and the record file format.

A fleet is a list of :class:`CardSpec` drawn from :class:`FleetParams`.  Each
card carries a planted per-iteration failure probability.  Campaigns run in
one of two modes:

``bernoulli``
    Each iteration's ``failed`` flag is a direct coin flip; per-test error
    counts are synthesised from test weights (M20 heaviest).
``device``
    Each card gets a simulated device whose transient rate is calibrated so
    that one iteration fails with the planted probability, and the real
    iteration protocol runs against it.

Records are stored one JSON object per line.  In memory they live in a
columnar :class:`Dataset` so that millions of iterations stay cheap.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng
from .faultsim import CouplingModel, FaultProfile, OverdriveModel, simulated_device
from .memdev import Architecture
from .testkit import TEST_CODES, IterationConfig, M20Cursor, run_iteration

SCHEMA_VERSION = 1
ERROR_KEYS = tuple(f"err_{c}" for c in TEST_CODES)
RECORD_KEYS = ("schema_version", "card_id", "device_name", "architecture", "region_mib", "lcg_period",
               "shader_clock_mhz", "memory_clock_mhz", "start_utc", "end_utc", "utc_offset_min",
               *ERROR_KEYS, "failed")
ARCH_CODES = tuple(a.value for a in Architecture)

DEFAULT_EPOCH_UTC = 1_243_814_400.0  # 2009-06-01T00:00:00Z
SECONDS_PER_DAY = 86_400.0

# device name -> (architecture, stock shader clocks in MHz, memory clock in MHz).
# Several boards shipped at more than one stock clock; a reported clock between
# the extremes cannot be classified.
STOCK_CATALOG: dict[str, tuple[str, tuple[int, ...], int]] = {
    "GeForce 8800 GTX": ("G80", (1350,), 900),
    "GeForce 8800 Ultra": ("G80", (1512,), 1080),
    "GeForce 8800 GTS": ("G80", (1200, 1625), 800),
    "GeForce 8800 GT": ("G80", (1500,), 900),
    "GeForce 9800 GTX": ("G80", (1688,), 1100),
    "Tesla C870": ("G80", (1350,), 800),
    "GeForce GTX 260": ("GT200", (1242, 1296), 999),
    "GeForce GTX 280": ("GT200", (1296,), 1107),
    "GeForce GTX 285": ("GT200", (1476,), 1242),
    "Tesla C1060": ("GT200", (1296,), 800),
    "GeForce 9600 GT": ("OTHER", (1625,), 900),
    "Quadro FX 3700": ("OTHER", (1250,), 800),
}

# Offsets in use around the world, minutes east of UTC.
UTC_OFFSETS_MIN = (-720, -660, -600, -570, -540, -480, -420, -360, -300, -270, -240, -210, -180, -120,
                   -60, 0, 60, 120, 180, 210, 240, 270, 300, 330, 345, 360, 390, 420, 480, 525, 540,
                   570, 600, 630, 660, 720, 765, 780, 840)

# Relative chance that a test is the one that catches a failing iteration.
DEFAULT_TEST_WEIGHTS = {
    "MI10": 0.02, "MIR": 0.04, "1WM": 0.05, "1W0": 0.05, "1W1": 0.05, "4W0": 0.05, "4W1": 0.05,
    "RB": 0.12, "M20": 0.30, "L": 0.06, "L4": 0.08, "LS": 0.06, "LS4": 0.07,
}


class FleetError(ValueError):
    pass


def stock_table() -> dict[str, tuple[int, ...]]:
    return {name: clocks for name, (_, clocks, _) in STOCK_CATALOG.items()}


# -- parameters and cards -----------------------------------------------------------

@dataclass(frozen=True)
class FleetParams:
    n_cards: int = 1000
    zero_error_fraction: float = 1 / 3
    mode_pfail: float = 2e-5
    log_sigma: float = 1.0
    tail_fraction: float = 0.0
    tail_range: tuple[float, float] = (1e-4, 1e-2)
    arch_mix: dict = field(default_factory=lambda: {"G80": 0.5, "GT200": 0.5})
    arch_pfail_scale: dict = field(default_factory=dict)
    overclock_fraction: float = 0.1
    overclock_pfail_scale: float = 1.0
    seed: int = 0
    # device-mode settings
    region_words: int = 16384
    iteration_seconds: float = 3.0
    alu_fault_p: float = 0.0
    alu_log_sigma: float = 0.0
    p_couple: float = 0.0
    couple_log_sigma: float = 0.0
    test_weights: dict = field(default_factory=lambda: dict(DEFAULT_TEST_WEIGHTS))
    co_fail_p: float = 0.05

    def __post_init__(self):
        if self.n_cards < 0:
            raise FleetError("n_cards must be >= 0")
        for name in ("zero_error_fraction", "tail_fraction", "overclock_fraction", "co_fail_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise FleetError(f"{name} must be in [0, 1], got {v}")
        if self.zero_error_fraction + self.tail_fraction > 1.0 + 1e-12:
            raise FleetError("zero_error_fraction + tail_fraction exceeds 1")
        if self.mode_pfail < 0 or self.mode_pfail > 1:
            raise FleetError("mode_pfail must be in [0, 1]")
        if self.log_sigma < 0 or self.alu_log_sigma < 0 or self.couple_log_sigma < 0:
            raise FleetError("log spreads must be >= 0")
        lo, hi = self.tail_range
        if not 0 < lo <= hi <= 1:
            raise FleetError("tail_range must satisfy 0 < lo <= hi <= 1")
        mix = dict(self.arch_mix)
        if not mix or any(k not in ARCH_CODES for k in mix):
            raise FleetError(f"arch_mix keys must be among {ARCH_CODES}")
        if any(v < 0 for v in mix.values()) or not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-9):
            raise FleetError("arch_mix fractions must be >= 0 and sum to 1")
        if any(k not in ARCH_CODES for k in self.arch_pfail_scale):
            raise FleetError("arch_pfail_scale has an unknown architecture")
        if set(self.test_weights) != set(TEST_CODES) or any(v < 0 for v in self.test_weights.values()):
            raise FleetError("test_weights must give a non-negative weight for every test")
        if self.region_words < 320:
            raise FleetError("region_words must be >= 320")
        if self.iteration_seconds <= 0:
            raise FleetError("iteration_seconds must be > 0")
        object.__setattr__(self, "tail_range", (float(lo), float(hi)))

    @property
    def failing_fraction(self) -> float:
        """Share of cards drawn from the lognormal failing population."""
        return 1.0 - self.zero_error_fraction - self.tail_fraction

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tail_range"] = list(self.tail_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FleetParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise FleetError(f"unknown fleet parameters: {sorted(unknown)}")
        kw = dict(d)
        if "tail_range" in kw:
            kw["tail_range"] = tuple(kw["tail_range"])
        return cls(**kw)


@dataclass(frozen=True)
class CardSpec:
    card_id: str
    device_name: str
    architecture: str
    stock_clocks_mhz: tuple[int, ...]
    reported_clock_mhz: int
    utc_offset_min: int
    p_fail: float
    memory_clock_mhz: int = 800
    overclocked: bool = False
    start_offset_s: float = 0.0
    profile: FaultProfile | None = None

    def __post_init__(self):
        if not self.stock_clocks_mhz:
            raise FleetError("stock_clocks_mhz must be nonempty")
        if self.reported_clock_mhz <= 0:
            raise FleetError("reported_clock_mhz must be > 0")
        if not 0.0 <= self.p_fail <= 1.0:
            raise FleetError("p_fail must be in [0, 1]")


def transient_rate_for(p_fail: float, bits: int, iteration_hours: float) -> float:
    """Errors per bit-hour that make one iteration fail with probability ``p_fail``."""
    if p_fail <= 0:
        return 0.0
    if p_fail >= 1:
        raise FleetError("p_fail = 1 has no finite transient rate")
    return -math.log1p(-p_fail) / (bits * iteration_hours)


def sample_fleet(params: FleetParams, mode: str = "bernoulli") -> list[CardSpec]:
    """Draw ``params.n_cards`` cards; the same params always give the same fleet."""
    if mode not in ("bernoulli", "device"):
        raise FleetError(f"unknown mode {mode!r}")
    n = params.n_cards
    g = rng.generator(params.seed, rng.TAG_CARD)
    archs = sorted(params.arch_mix)
    arch_idx = g.choice(len(archs), size=n, p=[params.arch_mix[a] for a in archs])
    model_u = g.random(n)
    oc = g.random(n) < params.overclock_fraction
    oc_boost = g.uniform(0.03, 0.15, n)
    stock_pick = g.random(n)
    offsets = g.integers(0, len(UTC_OFFSETS_MIN), n)
    start_off = g.uniform(0.0, SECONDS_PER_DAY, n)
    cls_u = g.random(n)
    z_lognorm = g.standard_normal(n)
    tail_u = g.random(n)
    alu_z = g.standard_normal(n)
    cpl_z = g.standard_normal(n)

    models_by_arch = {a: sorted(m for m, v in STOCK_CATALOG.items() if v[0] == a) for a in ARCH_CODES}
    lo, hi = params.tail_range
    cards = []
    width = max(5, len(str(max(n - 1, 0))))
    for i in range(n):
        arch = archs[arch_idx[i]]
        models = models_by_arch[arch]
        name = models[int(model_u[i] * len(models))]
        _, clocks, mem_clock = STOCK_CATALOG[name]
        if oc[i]:
            reported = int(round(max(clocks) * (1.0 + oc_boost[i])))
        else:
            reported = clocks[int(stock_pick[i] * len(clocks))]
        if cls_u[i] < params.zero_error_fraction:
            p = 0.0
        elif cls_u[i] < params.zero_error_fraction + params.failing_fraction:
            median = params.mode_pfail * params.arch_pfail_scale.get(arch, 1.0)
            if oc[i]:
                median *= params.overclock_pfail_scale
            p = median * math.exp(params.log_sigma * z_lognorm[i])
        else:
            p = math.exp(math.log(lo) + tail_u[i] * (math.log(hi) - math.log(lo)))
        p = min(max(p, 0.0), 1.0 - 1e-12)
        card_seed = rng.hash_int(params.seed, rng.TAG_CARD, i)
        profile = None
        if mode == "device":
            bits = params.region_words * 32
            alu = min(1.0, params.alu_fault_p * math.exp(params.alu_log_sigma * alu_z[i]))
            cpl = min(1.0, params.p_couple * math.exp(params.couple_log_sigma * cpl_z[i]))
            profile = FaultProfile(
                transient_rate_lambda=transient_rate_for(p, bits, params.iteration_seconds / 3600.0),
                coupling=CouplingModel(p_couple=cpl),
                overdrive=OverdriveModel(alpha=0.0),
                alu_fault_p=alu,
                seed=card_seed,
            )
        cards.append(CardSpec(
            card_id=f"card-{i:0{width}d}",
            device_name=name,
            architecture=arch,
            stock_clocks_mhz=tuple(clocks),
            reported_clock_mhz=int(reported),
            utc_offset_min=int(UTC_OFFSETS_MIN[offsets[i]]),
            p_fail=float(p),
            memory_clock_mhz=int(mem_clock),
            overclocked=bool(oc[i]),
            start_offset_s=float(start_off[i]),
            profile=profile,
        ))
    return cards


# -- columnar records -------------------------------------------------------------------

_INT_COLUMNS = ("region_mib", "lcg_period", "shader_clock_mhz", "memory_clock_mhz", "utc_offset_min")


@dataclass
class Dataset:
    """Iteration records stored column-wise.

    ``card`` and ``device`` index into ``card_ids`` and ``device_names``.
    Error counts are sparse: ``err_rows`` lists the records with any nonzero
    count and ``err_vals`` holds their thirteen counts.
    """

    card_ids: list
    device_names: list
    card: np.ndarray
    device: np.ndarray
    architecture: np.ndarray
    region_mib: np.ndarray
    lcg_period: np.ndarray
    shader_clock_mhz: np.ndarray
    memory_clock_mhz: np.ndarray
    utc_offset_min: np.ndarray
    start_utc: np.ndarray
    end_utc: np.ndarray
    failed: np.ndarray
    err_rows: np.ndarray
    err_vals: np.ndarray

    def __len__(self) -> int:
        return int(self.card.size)

    @classmethod
    def empty(cls) -> "Dataset":
        i32 = np.empty(0, dtype=np.int32)
        return cls([], [], i32, i32, np.empty(0, dtype=np.int8), i32, i32, i32, i32, i32,
                   np.empty(0), np.empty(0), np.empty(0, dtype=bool), np.empty(0, dtype=np.int64),
                   np.empty((0, len(TEST_CODES)), dtype=np.int32))

    @property
    def errors(self) -> np.ndarray:
        """Dense (records, 13) error matrix."""
        out = np.zeros((len(self), len(TEST_CODES)), dtype=np.int32)
        out[self.err_rows] = self.err_vals
        return out

    def test_errors(self, code: str) -> np.ndarray:
        j = TEST_CODES.index(code)
        out = np.zeros(len(self), dtype=np.int32)
        out[self.err_rows] = self.err_vals[:, j]
        return out

    def card_labels(self) -> np.ndarray:
        return np.asarray(self.card_ids, dtype=object)[self.card]

    def select(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask, dtype=bool)
        keep = np.flatnonzero(mask)
        new_index = np.full(len(self), -1, dtype=np.int64)
        new_index[keep] = np.arange(keep.size)
        er = new_index[self.err_rows]
        ok = er >= 0
        cols = {name: getattr(self, name)[mask] for name in _ROW_COLUMNS}
        return Dataset(self.card_ids, self.device_names, err_rows=er[ok], err_vals=self.err_vals[ok], **cols)

    @classmethod
    def concat(cls, parts) -> "Dataset":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        card_ids: dict[str, int] = {}
        names: dict[str, int] = {}
        cols: dict[str, list] = {k: [] for k in _ROW_COLUMNS}
        rows, vals = [], []
        offset = 0
        for p in parts:
            cmap = np.array([card_ids.setdefault(c, len(card_ids)) for c in p.card_ids], dtype=np.int32)
            dmap = np.array([names.setdefault(d, len(names)) for d in p.device_names], dtype=np.int32)
            for k in _ROW_COLUMNS:
                v = getattr(p, k)
                if k == "card":
                    v = cmap[v]
                elif k == "device":
                    v = dmap[v]
                cols[k].append(v)
            rows.append(p.err_rows + offset)
            vals.append(p.err_vals)
            offset += len(p)
        merged = {k: np.concatenate(v) for k, v in cols.items()}
        return cls(list(card_ids), list(names), err_rows=np.concatenate(rows),
                   err_vals=np.concatenate(vals).astype(np.int32), **merged)

    def records(self):
        """Yield records as ordered dicts with the on-disk keys."""
        dense_row = {int(r): i for i, r in enumerate(self.err_rows)}
        zero = [0] * len(TEST_CODES)
        for i in range(len(self)):
            j = dense_row.get(i)
            errs = zero if j is None else self.err_vals[j].tolist()
            rec = {
                "schema_version": SCHEMA_VERSION,
                "card_id": self.card_ids[self.card[i]],
                "device_name": self.device_names[self.device[i]],
                "architecture": ARCH_CODES[self.architecture[i]],
                "region_mib": int(self.region_mib[i]),
                "lcg_period": int(self.lcg_period[i]),
                "shader_clock_mhz": int(self.shader_clock_mhz[i]),
                "memory_clock_mhz": int(self.memory_clock_mhz[i]),
                "start_utc": float(self.start_utc[i]),
                "end_utc": float(self.end_utc[i]),
                "utc_offset_min": int(self.utc_offset_min[i]),
            }
            for k, v in zip(ERROR_KEYS, errs):
                rec[k] = int(v)
            rec["failed"] = bool(self.failed[i])
            yield rec

    @classmethod
    def from_records(cls, recs) -> "Dataset":
        recs = list(recs)
        if not recs:
            return cls.empty()
        card_ids: dict[str, int] = {}
        names: dict[str, int] = {}
        card = np.array([card_ids.setdefault(r["card_id"], len(card_ids)) for r in recs], dtype=np.int32)
        device = np.array([names.setdefault(r["device_name"], len(names)) for r in recs], dtype=np.int32)
        arch = np.array([ARCH_CODES.index(r["architecture"]) for r in recs], dtype=np.int8)
        ints = {k: np.array([r[k] for r in recs], dtype=np.int32) for k in _INT_COLUMNS}
        errs = np.array([[r[k] for k in ERROR_KEYS] for r in recs], dtype=np.int32).reshape(len(recs), -1)
        rows = np.flatnonzero(errs.any(axis=1))
        return cls(list(card_ids), list(names), card, device, arch,
                   start_utc=np.array([r["start_utc"] for r in recs], dtype=np.float64),
                   end_utc=np.array([r["end_utc"] for r in recs], dtype=np.float64),
                   failed=np.array([r["failed"] for r in recs], dtype=bool),
                   err_rows=rows.astype(np.int64), err_vals=errs[rows], **ints)

    def identical(self, other: "Dataset") -> bool:
        """Field-for-field equality of the record sequences."""
        if len(self) != len(other):
            return False
        if not np.array_equal(self.card_labels(), other.card_labels()):
            return False
        if not np.array_equal(np.asarray(self.device_names, dtype=object)[self.device],
                              np.asarray(other.device_names, dtype=object)[other.device]):
            return False
        for k in _ROW_COLUMNS:
            if k in ("card", "device"):
                continue
            if not np.array_equal(getattr(self, k), getattr(other, k)):
                return False
        return bool(np.array_equal(self.errors, other.errors))


_ROW_COLUMNS = ("card", "device", "architecture", *_INT_COLUMNS, "start_utc", "end_utc", "failed")


def _record_line(rec: dict) -> str:
    return json.dumps(rec, separators=(", ", ": "))


def record_dict(rec) -> dict:
    """On-disk form of a :class:`~memtestkit.testkit.IterationRecord`."""
    d = {
        "schema_version": SCHEMA_VERSION,
        "card_id": rec.card_id,
        "device_name": rec.device_name,
        "architecture": rec.architecture,
        "region_mib": int(rec.region_mib),
        "lcg_period": int(rec.lcg_period),
        "shader_clock_mhz": int(rec.shader_clock_mhz),
        "memory_clock_mhz": int(rec.memory_clock_mhz),
        "start_utc": float(rec.start_utc),
        "end_utc": float(rec.end_utc),
        "utc_offset_min": int(rec.utc_offset_min),
    }
    for c, k in zip(TEST_CODES, ERROR_KEYS):
        d[k] = int(rec.errors[c])
    d["failed"] = bool(rec.failed)
    return d


def record_line(rec: dict) -> str:
    return _record_line(rec)


def write_records(dataset: Dataset, path, append: bool = False) -> int:
    """Write line-delimited records; returns the number of lines written."""
    n = 0
    with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as fh:
        for rec in dataset.records():
            fh.write(_record_line(rec))
            fh.write("\n")
            n += 1
    return n


# -- campaigns ------------------------------------------------------------------------------

def _card_frame(card: CardSpec, n: int, start: np.ndarray, end: np.ndarray, errs: np.ndarray,
                region_mib: int, lcg_period: int) -> Dataset:
    rows = np.flatnonzero(errs.any(axis=1)).astype(np.int64)
    full = lambda v, dt=np.int32: np.full(n, v, dtype=dt)  # noqa: E731
    return Dataset(
        [card.card_id], [card.device_name],
        card=full(0), device=full(0), architecture=full(ARCH_CODES.index(card.architecture), np.int8),
        region_mib=full(region_mib), lcg_period=full(lcg_period),
        shader_clock_mhz=full(card.reported_clock_mhz), memory_clock_mhz=full(card.memory_clock_mhz),
        utc_offset_min=full(card.utc_offset_min), start_utc=start, end_utc=end,
        failed=errs.any(axis=1), err_rows=rows, err_vals=errs[rows].astype(np.int32),
    )


def bernoulli_card(card: CardSpec, iterations: int, params: FleetParams, campaign_seed: int,
                   card_index: int, epoch_utc: float = DEFAULT_EPOCH_UTC) -> Dataset:
    g = rng.generator(campaign_seed, rng.TAG_CAMPAIGN, card_index)
    failed = g.random(iterations) < card.p_fail
    k = int(failed.sum())
    errs = np.zeros((iterations, len(TEST_CODES)), dtype=np.int32)
    if k:
        w = np.array([params.test_weights[c] for c in TEST_CODES], dtype=np.float64)
        primary = g.choice(len(TEST_CODES), size=k, p=w / w.sum())
        co = g.random((k, len(TEST_CODES))) < params.co_fail_p
        counts = g.geometric(0.5, size=(k, len(TEST_CODES))).astype(np.int32)
        sub = np.where(co, counts, 0)
        sub[np.arange(k), primary] = counts[np.arange(k), primary]
        errs[failed] = sub
    t0 = epoch_utc + card.start_offset_s
    start = t0 + np.arange(iterations, dtype=np.float64) * params.iteration_seconds
    region_mib = params.region_words * 4 >> 20
    return _card_frame(card, iterations, start, start + params.iteration_seconds, errs, region_mib, 256)


def device_card(card: CardSpec, iterations: int, params: FleetParams, campaign_seed: int,
                card_index: int, epoch_utc: float = DEFAULT_EPOCH_UTC, lane_count: int = 1) -> Dataset:
    """Run the iteration protocol on the card's simulated device.

    The device idles after each iteration until ``iteration_seconds`` of
    virtual time have passed.  Bit flips accumulated while idle surface at the
    next read, so every iteration after the first sees one full period of
    exposure.
    """
    profile = card.profile if card.profile is not None else FaultProfile.null()
    dev = simulated_device(words=params.region_words, profile=profile, lane_count=lane_count,
                           record_events=False, device_name=card.device_name,
                           shader_clock_mhz=card.reported_clock_mhz,
                           architecture=card.architecture, memory_clock_mhz=card.memory_clock_mhz)
    cfg = IterationConfig(card_id=card.card_id, epoch_utc=epoch_utc + card.start_offset_s,
                          utc_offset_min=card.utc_offset_min)
    seed = rng.hash_int(campaign_seed, rng.TAG_CAMPAIGN, card_index)
    cursor = M20Cursor()
    start = np.empty(iterations)
    end = np.empty(iterations)
    errs = np.zeros((iterations, len(TEST_CODES)), dtype=np.int32)
    period = region_mib = 0
    for i in range(iterations):
        t0 = dev.clock.now_seconds
        rec, cursor, _ = run_iteration(dev, cfg, cursor, seed, i)
        elapsed = dev.clock.now_seconds - t0
        dev.advance_time(max(0.0, params.iteration_seconds - elapsed))
        start[i] = rec.start_utc
        end[i] = cfg.epoch_utc + dev.clock.now_seconds
        errs[i] = [rec.errors[c] for c in TEST_CODES]
        period, region_mib = rec.lcg_period, rec.region_mib
    return _card_frame(card, iterations, start, end, errs, region_mib, period)


def run_campaign(fleet: list[CardSpec], iterations_per_card: int, mode: str = "bernoulli", *,
                 params: FleetParams | None = None, seed: int = 0, workers: int = 1,
                 out=None, resume: bool = False, epoch_utc: float = DEFAULT_EPOCH_UTC) -> Dataset:
    """Run every card and return the records in card order.

    With ``out`` the records are also streamed to a line-delimited file.
    ``resume`` keeps the complete lines already in ``out`` and writes only
    what is missing, so an interrupted run ends byte-identical to an
    uninterrupted one.
    """
    if iterations_per_card < 1:
        raise FleetError("iterations_per_card must be >= 1")
    if mode not in ("bernoulli", "device"):
        raise FleetError(f"unknown mode {mode!r}")
    if workers < 1:
        raise FleetError("workers must be >= 1")
    params = params or FleetParams()
    if mode == "device" and any(c.profile is None for c in fleet):
        fleet = [c if c.profile is not None else replace(c, profile=_profile_for(c, params, i))
                 for i, c in enumerate(fleet)]
    runner = bernoulli_card if mode == "bernoulli" else device_card

    done_lines = 0
    if out is not None and resume and os.path.exists(out):
        done_lines = truncate_partial(out)
    elif out is not None:
        open(out, "w").close()

    def one(i: int) -> Dataset:
        return runner(fleet[i], iterations_per_card, params, seed, i, epoch_utc)

    frames: list[Dataset] = []
    written = 0
    if workers == 1:
        results = map(one, range(len(fleet)))
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(one, range(len(fleet)))
    try:
        for frame in results:
            frames.append(frame)
            if out is not None:
                skip = min(len(frame), max(0, done_lines - written))
                if skip < len(frame):
                    write_records(frame.select(np.arange(len(frame)) >= skip), out, append=True)
                written += len(frame)
    finally:
        if workers > 1:
            pool.shutdown()
    return Dataset.concat(frames)


def _profile_for(card: CardSpec, params: FleetParams, i: int) -> FaultProfile:
    return FaultProfile(
        transient_rate_lambda=transient_rate_for(card.p_fail, params.region_words * 32,
                                                 params.iteration_seconds / 3600.0),
        overdrive=OverdriveModel(alpha=0.0),
        seed=rng.hash_int(params.seed, rng.TAG_CARD, i),
    )


def truncate_partial(path) -> int:
    """Cut a record file back to its last newline; returns the complete line count."""
    with open(path, "rb+") as fh:
        data = fh.read()
        cut = data.rfind(b"\n") + 1
        if cut != len(data):
            fh.seek(cut)
            fh.truncate()
    return data[:cut].count(b"\n")


def save_fleet(cards: list[CardSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cards:
            d = asdict(c)
            d["stock_clocks_mhz"] = list(c.stock_clocks_mhz)
            d["profile"] = c.profile.to_dict() if c.profile else None
            fh.write(json.dumps(d) + "\n")


def load_fleet(path) -> list[CardSpec]:
    cards = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            d["stock_clocks_mhz"] = tuple(d["stock_clocks_mhz"])
            if d.get("profile") is not None:
                d["profile"] = FaultProfile.from_dict(d["profile"])
            cards.append(CardSpec(**d))
    return cards

"""Statistics over record files.

Per-card failure probabilities, cutoff-filtered CDF/PMF curves, entropy and
information gain of indicator partitions, day/night labelling, overclock
classification and the test-by-test mutual-information matrix.

All logarithms are base 2.  Sums go through :func:`math.fsum`, which makes
results independent of summation order (so a transposed joint histogram
gives bit-identical mutual information).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .fleet import ARCH_CODES, ERROR_KEYS, RECORD_KEYS, SCHEMA_VERSION, Dataset, stock_table
from .testkit import TEST_CODES

P_FAIL_BINS = 1000
COUNT_BINS = 10
DAY_START_S = 6 * 3600
DAY_END_S = 18 * 3600


class RecordError(ValueError):
    pass


# -- ingestion ---------------------------------------------------------------------------

_INT_FIELDS = ("schema_version", "region_mib", "lcg_period", "shader_clock_mhz", "memory_clock_mhz",
               "utc_offset_min", *ERROR_KEYS)
_STR_FIELDS = ("card_id", "device_name", "architecture")


def validate_record(rec, where: str = "record") -> dict:
    if not isinstance(rec, dict):
        raise RecordError(f"{where}: not a JSON object")
    if "schema_version" not in rec:
        raise RecordError(f"{where}: missing field 'schema_version'")
    sv = rec["schema_version"]
    if sv != SCHEMA_VERSION or isinstance(sv, bool):
        raise RecordError(f"{where}: field 'schema_version': unsupported version {sv!r}")
    for k in RECORD_KEYS:
        if k not in rec:
            raise RecordError(f"{where}: missing field {k!r}")
    extra = sorted(set(rec) - set(RECORD_KEYS))
    if extra:
        raise RecordError(f"{where}: unknown field {extra[0]!r}")
    for k in _INT_FIELDS:
        v = rec[k]
        if isinstance(v, bool) or not isinstance(v, int):
            raise RecordError(f"{where}: field {k!r}: expected an integer, got {v!r}")
    for k in ERROR_KEYS:
        if rec[k] < 0:
            raise RecordError(f"{where}: field {k!r}: negative error count")
    for k in _STR_FIELDS:
        if not isinstance(rec[k], str):
            raise RecordError(f"{where}: field {k!r}: expected a string")
    if rec["architecture"] not in ARCH_CODES:
        raise RecordError(f"{where}: field 'architecture': unknown value {rec['architecture']!r}")
    for k in ("start_utc", "end_utc"):
        v = rec[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise RecordError(f"{where}: field {k!r}: expected a finite number")
    if rec["end_utc"] < rec["start_utc"]:
        raise RecordError(f"{where}: field 'end_utc': earlier than start_utc")
    if not isinstance(rec["failed"], bool):
        raise RecordError(f"{where}: field 'failed': expected true or false")
    any_err = any(rec[k] > 0 for k in ERROR_KEYS)
    if rec["failed"] != any_err:
        raise RecordError(f"{where}: field 'failed': is {str(rec['failed']).lower()} but error counts say "
                          f"{'some' if any_err else 'none'} of the tests failed")
    return rec


def load_records(*paths) -> Dataset:
    """Parse one or more line-delimited record files into a single dataset."""
    recs = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                where = f"{path}:{lineno}"
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordError(f"{where}: malformed line ({exc.msg})") from None
                recs.append(validate_record(rec, where))
    return Dataset.from_records(recs)


# -- per-card estimates -------------------------------------------------------------------

@dataclass(frozen=True)
class CardEstimate:
    card_id: str
    iterations: int
    failures: int

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be > 0")
        if not 0 <= self.failures <= self.iterations:
            raise ValueError("failures must be in [0, iterations]")

    @property
    def p_fail(self) -> float:
        return self.failures / self.iterations


def card_pfail(dataset: Dataset, min_iterations: int = 1) -> list[CardEstimate]:
    """One estimate per card with at least ``min_iterations`` records, sorted by card id."""
    if min_iterations < 1:
        raise ValueError("min_iterations must be >= 1")
    n = len(dataset.card_ids)
    iters = np.bincount(dataset.card, minlength=n)
    fails = np.bincount(dataset.card, weights=dataset.failed, minlength=n).astype(np.int64)
    out = [CardEstimate(cid, int(iters[i]), int(fails[i]))
           for i, cid in enumerate(dataset.card_ids) if iters[i] >= min_iterations]
    out.sort(key=lambda e: e.card_id)
    return out


def pfail_values(estimates) -> np.ndarray:
    return np.array([e.p_fail if isinstance(e, CardEstimate) else float(e) for e in estimates], dtype=np.float64)


def failing_median(estimates) -> float:
    """Median p_fail among cards that failed at least once (nan if none did)."""
    p = pfail_values(estimates)
    p = p[p > 0]
    return float(np.median(p)) if p.size else float("nan")


# -- histograms --------------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def mass(self) -> np.ndarray:
        t = self.total
        return self.counts / t if t else np.zeros(self.counts.size)


def empirical_cdf(estimates, eval_points) -> np.ndarray:
    """Fraction of cards with p_fail <= x at each x."""
    p = np.sort(pfail_values(estimates))
    if p.size == 0:
        raise ValueError("no cards pass the cutoff")
    x = np.asarray(eval_points, dtype=np.float64)
    return np.searchsorted(p, x, side="right") / p.size


def empirical_pmf(estimates, bin_edges) -> Histogram:
    p = pfail_values(estimates)
    if p.size == 0:
        raise ValueError("no cards pass the cutoff")
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing with at least two entries")
    counts, _ = np.histogram(p, bins=edges)
    return Histogram(edges, counts)


def pfail_bin_index(p: np.ndarray, bins: int = P_FAIL_BINS) -> np.ndarray:
    """Cell of each p_fail: 0 for exactly zero, else 1 + its equal-width bin over (0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    idx = 1 + np.minimum(np.floor(p * bins).astype(np.int64), bins - 1)
    return np.where(p == 0.0, 0, idx)


def pfail_histogram(estimates, bins: int = P_FAIL_BINS) -> Histogram:
    idx = pfail_bin_index(pfail_values(estimates), bins)
    edges = np.concatenate([[0.0], np.linspace(0.0, 1.0, bins + 1)])
    return Histogram(edges, np.bincount(idx, minlength=bins + 1))


# -- information measures -----------------------------------------------------------------------

def _as_mass(mass) -> np.ndarray:
    m = mass.mass if isinstance(mass, Histogram) else np.asarray(mass, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("probability mass must be non-negative")
    return m


def entropy(mass) -> float:
    """Shannon entropy in bits; zero-mass bins contribute nothing."""
    m = _as_mass(mass).ravel()
    if m.size and abs(math.fsum(m) - 1.0) > 1e-9:
        raise ValueError("probability mass must sum to 1")
    nz = m[m > 0]
    return max(0.0, -math.fsum((nz * np.log2(nz)).tolist()))


def mutual_information(joint) -> float:
    """I(X;Y) in bits for a 2-D joint mass (rows X, columns Y)."""
    j = _as_mass(joint)
    if j.ndim != 2:
        raise ValueError("joint mass must be two-dimensional")
    if abs(math.fsum(j.ravel().tolist()) - 1.0) > 1e-9:
        raise ValueError("joint mass must sum to 1")
    px = np.array([math.fsum(r) for r in j.tolist()])
    py = np.array([math.fsum(c) for c in j.T.tolist()])
    rows, cols = np.nonzero(j > 0)
    pxy = j[rows, cols]
    terms = pxy * (np.log2(pxy) - np.log2(px[rows] * py[cols]))
    val = math.fsum(terms.tolist())
    return max(0.0, val)


@dataclass
class GainResult:
    H_D: float
    I_DV: float
    subset_sizes: dict
    probabilities: dict


def information_gain(subsets: dict, bins: int = P_FAIL_BINS) -> GainResult:
    """Gain of a partition given as ``{label: [CardEstimate or p_fail, ...]}``.

    D is the union of all subsets; empty subsets are dropped with a warning.
    """
    live = {}
    for label, ests in subsets.items():
        p = pfail_values(ests)
        if p.size == 0:
            warnings.warn(f"subset {label!r} is empty and was left out", RuntimeWarning, stacklevel=2)
            continue
        live[label] = p
    if len(live) < 1:
        raise ValueError("partition has no nonempty subsets")
    if len(subsets) < 2:
        raise ValueError("partition needs at least two labels")
    total = sum(p.size for p in live.values())
    all_p = np.concatenate(list(live.values()))
    h_d = entropy(pfail_histogram(all_p, bins))
    cond_terms = []
    probs = {}
    for label, p in live.items():
        pv = p.size / total
        probs[label] = pv
        cond_terms.append(entropy(pfail_histogram(p, bins)) * pv)
    gain = h_d - math.fsum(cond_terms)
    gain = min(max(gain, 0.0), h_d)
    return GainResult(h_d, gain, {k: int(v.size) for k, v in live.items()}, probs)


def perfect_indicator_gain(estimates, bins: int = P_FAIL_BINS) -> float:
    """Gain of splitting cards into never-failed and failed-at-least-once."""
    p = pfail_values(estimates)
    if p.size == 0:
        return 0.0
    with warnings.catch_warnings():
        # all cards on one side is a legitimate (zero-gain) outcome here
        warnings.simplefilter("ignore", RuntimeWarning)
        return information_gain({"zero": p[p == 0], "nonzero": p[p > 0]}, bins).I_DV


# -- test-by-test matrix --------------------------------------------------------------------

def count_bins(counts: np.ndarray, bins: int = COUNT_BINS) -> np.ndarray:
    """Bin 0 holds exact zeros; bins 1.. split (0, max] into equal widths."""
    c = np.asarray(counts, dtype=np.int64)
    m = int(c.max()) if c.size else 0
    if m == 0:
        return np.zeros(c.size, dtype=np.int64)
    idx = 1 + np.minimum(np.floor(c * (bins - 1) / m).astype(np.int64), bins - 2)
    return np.where(c == 0, 0, idx)


@dataclass
class MIMatrix:
    codes: tuple
    ratio: np.ndarray  # [row Y, column X] = I(X;Y) / H(X); nan where H(X) = 0
    entropies: np.ndarray

    def mean_ratio(self, rows, cols) -> float:
        """Mean over defined off-diagonal entries with row in ``rows`` and column in ``cols``."""
        vals = []
        for y in rows:
            for x in cols:
                if x == y:
                    continue
                v = self.ratio[self.codes.index(y), self.codes.index(x)]
                if not math.isnan(v):
                    vals.append(v)
        return float(np.mean(vals)) if vals else float("nan")

    def off_diagonal_mean(self, code, others) -> float:
        """Mean of the row and column entries linking ``code`` with ``others``."""
        vals = []
        i = self.codes.index(code)
        for o in others:
            if o == code:
                continue
            j = self.codes.index(o)
            for v in (self.ratio[i, j], self.ratio[j, i]):
                if not math.isnan(v):
                    vals.append(v)
        return float(np.mean(vals)) if vals else float("nan")


def test_mi_matrix(dataset: Dataset, bins: int = COUNT_BINS) -> MIMatrix:
    errs = dataset.errors
    k = len(TEST_CODES)
    binned = [count_bins(errs[:, i], bins) for i in range(k)]
    n = errs.shape[0]
    ent = np.zeros(k)
    for i in range(k):
        ent[i] = entropy(np.bincount(binned[i], minlength=bins) / n) if n else 0.0
    ratio = np.full((k, k), np.nan)
    for x in range(k):
        if ent[x] <= 0:
            continue
        for y in range(k):
            joint = np.zeros((bins, bins))
            np.add.at(joint, (binned[x], binned[y]), 1.0)
            mi = mutual_information(joint / n)
            ratio[y, x] = min(mi, ent[x]) / ent[x]
    return MIMatrix(TEST_CODES, ratio, ent)


test_mi_matrix.__test__ = False  # name starts with "test"; keep pytest from collecting it


# -- indicators ----------------------------------------------------------------------------------

class OverclockStatus(str, Enum):
    STOCK = "STOCK"
    OVERCLOCKED = "OVERCLOCKED"
    INDETERMINATE = "INDETERMINATE"


def classify_overclock(device_name: str, reported_clock_mhz: int, table: dict | None = None) -> OverclockStatus:
    table = stock_table() if table is None else table
    clocks = table.get(device_name)
    if not clocks:
        return OverclockStatus.INDETERMINATE
    if reported_clock_mhz > max(clocks):
        return OverclockStatus.OVERCLOCKED
    if reported_clock_mhz <= min(clocks):
        return OverclockStatus.STOCK
    return OverclockStatus.INDETERMINATE


def load_stock_table(path) -> dict[str, tuple[int, ...]]:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            d = json.loads(line)
            try:
                table[str(d["device_name"])] = tuple(int(c) for c in d["stock_clocks_mhz"])
            except (KeyError, TypeError, ValueError) as exc:
                raise RecordError(f"{path}:{lineno}: bad stock-table line ({exc})") from None
    return table


DAY, NIGHT, EXCLUDED = "DAY", "NIGHT", "EXCLUDED"


def day_night_labels(start_utc, end_utc, utc_offset_min) -> np.ndarray:
    """DAY/NIGHT when both local endpoints sit in one unbroken window, else EXCLUDED."""
    start = np.asarray(start_utc, dtype=np.float64)
    dur = np.asarray(end_utc, dtype=np.float64) - start
    local = np.mod(start + np.asarray(utc_offset_min, dtype=np.float64) * 60.0, 86400.0)
    is_day = (local >= DAY_START_S) & (local < DAY_END_S)
    boundary = np.where(local < DAY_START_S, DAY_START_S, np.where(local < DAY_END_S, DAY_END_S, 86400.0 + DAY_START_S))
    inside = local + dur < boundary
    return np.where(inside, np.where(is_day, DAY, NIGHT), EXCLUDED)


@dataclass
class IndicatorPartition:
    name: str
    subsets: dict = field(default_factory=dict)  # label -> list[CardEstimate]
    excluded: int = 0


def _card_first(dataset: Dataset, column: np.ndarray) -> np.ndarray:
    """Value of ``column`` at each card's first record, indexed like ``card_ids``."""
    first = np.zeros(len(dataset.card_ids), dtype=np.int64)
    cards, pos = np.unique(dataset.card, return_index=True)
    first[cards] = pos
    return column[first]


def day_night_partition(dataset: Dataset, min_iterations: int = 1) -> IndicatorPartition:
    labels = day_night_labels(dataset.start_utc, dataset.end_utc, dataset.utc_offset_min)
    part = IndicatorPartition("daynight", excluded=int((labels == EXCLUDED).sum()))
    for lab in (DAY, NIGHT):
        part.subsets[lab] = card_pfail(dataset.select(labels == lab), min_iterations)
    return part


def overclock_partition(dataset: Dataset, min_iterations: int = 1, table: dict | None = None) -> IndicatorPartition:
    names = _card_first(dataset, np.asarray(dataset.device_names, dtype=object)[dataset.device])
    clocks = _card_first(dataset, dataset.shader_clock_mhz)
    status = {cid: classify_overclock(names[i], int(clocks[i]), table) for i, cid in enumerate(dataset.card_ids)}
    part = IndicatorPartition("overclock")
    groups = {OverclockStatus.STOCK.value: [], OverclockStatus.OVERCLOCKED.value: []}
    for e in card_pfail(dataset, min_iterations):
        s = status[e.card_id]
        if s == OverclockStatus.INDETERMINATE:
            part.excluded += 1
        else:
            groups[s.value].append(e)
    part.subsets = groups
    return part


def architecture_partition(dataset: Dataset, min_iterations: int = 1) -> IndicatorPartition:
    arch = _card_first(dataset, dataset.architecture)
    label = {cid: ARCH_CODES[arch[i]] for i, cid in enumerate(dataset.card_ids)}
    groups: dict[str, list] = {}
    for e in card_pfail(dataset, min_iterations):
        groups.setdefault(label[e.card_id], []).append(e)
    return IndicatorPartition("architecture", dict(sorted(groups.items())))


HYPOTHESES = ("overclock", "daynight", "architecture")


@dataclass
class HypothesisReport:
    indicator: str
    H_D: float
    I_DV: float
    perfect_indicator_gain: float
    subset_sizes: dict
    excluded: int

    @property
    def fraction_of_perfect(self) -> float:
        return self.I_DV / self.perfect_indicator_gain if self.perfect_indicator_gain > 0 else float("nan")

    def as_dict(self) -> dict:
        return {
            "indicator": self.indicator,
            "H_D": round(self.H_D, 4),
            "I_DV": round(self.I_DV, 4),
            "perfect_indicator_gain": round(self.perfect_indicator_gain, 4),
            "subset_sizes": self.subset_sizes,
            "excluded": self.excluded,
        }


def hypothesis_report(dataset: Dataset, indicator: str, min_iterations: int = 1,
                      bins: int = P_FAIL_BINS, table: dict | None = None) -> HypothesisReport:
    if indicator == "overclock":
        part = overclock_partition(dataset, min_iterations, table)
    elif indicator == "daynight":
        part = day_night_partition(dataset, min_iterations)
    elif indicator == "architecture":
        part = architecture_partition(dataset, min_iterations)
    else:
        raise ValueError(f"unknown indicator {indicator!r}; choose from {HYPOTHESES}")
    union = [e for ests in part.subsets.values() for e in ests]
    if not union:
        raise ValueError("no cards remain after exclusions")
    if len(part.subsets) < 2:
        gain = GainResult(entropy(pfail_histogram(union, bins)), 0.0, {k: len(v) for k, v in part.subsets.items()}, {})
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            gain = information_gain(part.subsets, bins)
    return HypothesisReport(indicator, gain.H_D, gain.I_DV, perfect_indicator_gain(union, bins),
                            {k: len(v) for k, v in part.subsets.items()}, part.excluded)

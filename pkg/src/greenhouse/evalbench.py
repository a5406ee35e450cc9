"""Point-wise accuracy scoring and a small synthetic benchmark.

Predicted anomalies are matched to ground-truth timestamps greedily in time
order: each prediction takes the nearest still-unmatched label within
``tolerance`` steps. This is a point-matching protocol of our own; it is not
NAB's scoring function, so numbers are not directly comparable with
published NAB results.
"""

import csv
import datetime as _dt
import json
from dataclasses import dataclass

import numpy as np

from .detector import detect
from .errors import BadParams, CannotPlace, LabelOutOfRange, MalformedLabels
from .pipeline import DEFAULT_PERCENTILE, train_pipeline
from .predictor import PredictorConfig
from .series import Series

REPORT_HEADER = ("dataset", "percentile", "tp", "fp", "fn", "precision", "recall", "f1", "seed")


@dataclass(frozen=True)
class LabelSet:
    timestamps: tuple
    tolerance: int = 0

    def __post_init__(self):
        ts = tuple(sorted(int(t) for t in self.timestamps))
        if len(set(ts)) != len(ts):
            raise BadParams("label timestamps must be unique")
        if int(self.tolerance) != self.tolerance or self.tolerance < 0:
            raise BadParams(f"tolerance must be a nonnegative integer, got {self.tolerance!r}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "tolerance", int(self.tolerance))

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp, fp, fn):
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return cls(tp, fp, fn, precision, recall, f1_score(precision, recall))


def f1_score(precision, recall):
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def match(predicted, labels, window):
    """Greedy one-to-one matching; returns ``[(pred, label), ...]``."""
    remaining = sorted(labels)
    pairs = []
    for p in sorted(predicted):
        best = None
        for lab in remaining:
            gap = abs(lab - p)
            if gap <= window and (best is None or gap < abs(best - p)):
                best = lab
        if best is not None:
            remaining.remove(best)
            pairs.append((p, best))
    return pairs


def _step_of(timestamps):
    return int(timestamps[1] - timestamps[0]) if len(timestamps) > 1 else 1


def score(result, labels):
    ts = result.timestamps
    if len(ts) == 0:
        raise LabelOutOfRange("cannot score an empty result")
    lo, hi = int(ts[0]), int(ts[-1])
    for t in labels.timestamps:
        if not lo <= t <= hi:
            raise LabelOutOfRange(f"label timestamp {t} outside series range [{lo}, {hi}]")
    predicted = [int(t) for t in result.anomalous_timestamps]
    pairs = match(predicted, labels.timestamps, labels.tolerance * _step_of(ts))
    tp = len(pairs)
    return Metrics.from_counts(tp, len(predicted) - tp, len(labels) - tp)


# -- synthetic corpus ----------------------------------------------------------

SYNTHETIC_KINDS = ("sine", "sine+noise", "random-walk-with-drift")
_DEFAULTS = {
    "sine": {"amplitude": 1.0, "period": 50.0, "phase": 0.0, "offset": 0.0, "noise_std": 0.0},
    "sine+noise": {"amplitude": 1.0, "period": 50.0, "phase": 0.0, "offset": 0.0, "noise_std": 0.1},
    "random-walk-with-drift": {"offset": 0.0, "drift": 0.01, "step_std": 0.1},
}


def sine_closed_form(n, amplitude=1.0, period=50.0, phase=0.0, offset=0.0):
    t = np.arange(n, dtype=np.float64)
    return offset + amplitude * np.sin(2.0 * np.pi * t / period + phase)


def generate_synthetic(kind, n, seed, params=None, start_time=0, step=1):
    """Deterministic synthetic series indexed by ``t = 0 .. n-1``.

    * sine, sine+noise: ``offset + amplitude * sin(2 pi t / period + phase)
      + noise_std * z_t``; the two differ only in the default ``noise_std``
      (0 and 0.1).
    * random-walk-with-drift: ``v_0 = offset``,
      ``v_t = v_{t-1} + drift + step_std * z_t``.

    ``z_t`` are standard normal draws from ``PCG64(seed)``.
    """
    if kind not in SYNTHETIC_KINDS:
        raise BadParams(f"unknown generator {kind!r}; expected one of {SYNTHETIC_KINDS}")
    if int(n) != n or n < 1:
        raise BadParams(f"n must be a positive integer, got {n!r}")
    n = int(n)
    p = dict(_DEFAULTS[kind])
    for key, value in (params or {}).items():
        if key not in p:
            raise BadParams(f"unknown parameter {key!r} for generator {kind!r}")
        p[key] = float(value)
    if not all(np.isfinite(v) for v in p.values()):
        raise BadParams("generator parameters must be finite")
    rng = np.random.Generator(np.random.PCG64(seed))

    if kind == "random-walk-with-drift":
        if p["step_std"] < 0:
            raise BadParams("step_std must be nonnegative")
        steps = p["drift"] + p["step_std"] * rng.standard_normal(n - 1)
        values = p["offset"] + np.concatenate([[0.0], np.cumsum(steps)])
    else:
        if p["period"] <= 0:
            raise BadParams("period must be positive")
        if p["noise_std"] < 0:
            raise BadParams("noise_std must be nonnegative")
        noise_std = p.pop("noise_std")
        values = sine_closed_form(n, **p)
        if noise_std > 0:
            values = values + noise_std * rng.standard_normal(n)
    return Series(start_time, step, values)


def inject_anomalies(series, seed, count, magnitude=10.0, min_gap=1, lookback=64, horizon=8,
                     tolerance=None, scale=None):
    """Add ``count`` point spikes of ``magnitude * scale`` with random signs.

    ``scale`` defaults to the series' sample standard deviation. Spikes land
    only where a point can be scored (0-based index >= lookback + horizon - 1)
    and are at least ``min_gap`` steps apart. Placement is uniform over all
    valid configurations.
    """
    if int(count) != count or count < 1:
        raise BadParams(f"count must be a positive integer, got {count!r}")
    if int(min_gap) != min_gap or min_gap < 1:
        raise BadParams(f"min_gap must be a positive integer, got {min_gap!r}")
    count, min_gap = int(count), int(min_gap)
    first = lookback + horizon - 1
    room = len(series) - first
    needed = (count - 1) * min_gap + 1
    if room < needed:
        raise CannotPlace(
            f"{count} spikes with gap {min_gap} need {needed} scoreable points; only {room} available"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    slots = room - (count - 1) * (min_gap - 1)
    picks = np.sort(rng.choice(slots, size=count, replace=False))
    positions = first + picks + np.arange(count) * (min_gap - 1)
    signs = rng.choice(np.array([-1.0, 1.0]), size=count)
    if scale is None:
        scale = float(np.std(series.values, ddof=1)) if len(series) > 1 else 0.0
        if scale < 1e-12:
            scale = 1.0
    values = series.values.copy()
    values[positions] += magnitude * scale * signs
    labels = LabelSet(
        tuple(series.timestamp(i) for i in positions),
        horizon if tolerance is None else tolerance,
    )
    return series.with_values(values), labels


# -- label files ---------------------------------------------------------------

def write_labels_csv(labels, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("timestamp",))
        for t in labels.timestamps:
            writer.writerow((t,))


def load_labels_csv(path, tolerance=0):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp"]:
            raise MalformedLabels(f"{path}: expected header 'timestamp'")
        out = []
        for row_no, row in enumerate(reader, start=1):
            if not row or not row[0].strip():
                continue
            try:
                out.append(int(row[0]))
            except ValueError:
                raise MalformedLabels(f"{path}: bad timestamp at row {row_no}: {row[0]!r}") from None
    try:
        return LabelSet(tuple(out), tolerance)
    except BadParams as exc:
        raise MalformedLabels(f"{path}: {exc}") from None


# -- NAB adapter ---------------------------------------------------------------

_NAB_TIME = "%Y-%m-%d %H:%M:%S"


def _nab_epoch(text):
    stamp = _dt.datetime.strptime(text.strip(), _NAB_TIME).replace(tzinfo=_dt.timezone.utc)
    return int(stamp.timestamp())


def load_nab_csv(path):
    """Read a NAB data file (``timestamp,value`` with ``YYYY-MM-DD HH:MM:SS``).

    Timestamps become integer seconds since the epoch, read as UTC. Gaps are
    errors, as for :func:`greenhouse.series.load_csv`.
    """
    from .errors import IrregularSpacing, MissingHeader, NonMonotonicTimestamps, NonNumericValue

    times, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "value"]:
            raise MissingHeader(f"{path}: expected header 'timestamp,value'")
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                t = _nab_epoch(row[0])
                v = float(row[1])
            except (ValueError, IndexError):
                raise NonNumericValue(row_no, ",".join(row)) from None
            if not np.isfinite(v):
                raise NonNumericValue(row_no, row[1])
            if times and t <= times[-1]:
                raise NonMonotonicTimestamps(row_no)
            if len(times) >= 2 and t - times[-1] != times[1] - times[0]:
                raise IrregularSpacing(row_no, times[1] - times[0], t - times[-1])
            times.append(t)
            values.append(v)
    step = times[1] - times[0] if len(times) > 1 else 1
    return Series(times[0], step, values)


def load_nab_labels(path, key, tolerance=0):
    """Anomaly timestamps for data file ``key`` from NAB's combined_labels.json."""
    with open(path, encoding="utf-8") as fh:
        table = json.load(fh)
    if key not in table:
        raise MalformedLabels(f"{path}: no entry for {key!r}")
    return LabelSet(tuple(_nab_epoch(t) for t in table[key]), tolerance)


# -- benchmark -----------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkDataset:
    """A clean series to train on and a labeled series to detect on."""

    name: str
    train: Series
    test: Series
    labels: LabelSet


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    percentile: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    seed: int


def synthetic_dataset(name="sine", kind="sine+noise", n_train=2000, n_test=2000, seed=0,
                      count=5, magnitude=10.0, min_gap=None, config=None, params=None):
    config = config or PredictorConfig()
    train = generate_synthetic(kind, n_train, seed, params)
    clean = generate_synthetic(kind, n_test, seed + 1, params)
    if min_gap is None:
        min_gap = config.span
    test, labels = inject_anomalies(
        clean, seed + 2, count, magnitude, min_gap, config.lookback, config.horizon,
        scale=float(np.std(train.values, ddof=1)),
    )
    return BenchmarkDataset(name, train, test, labels)


def clean_prefix_dataset(name, series, labels, lookback, horizon):
    """Train on everything in front of the first label and detect on the rest.

    The test part starts early enough that the first label is scoreable.
    """
    if not labels.timestamps:
        raise MalformedLabels("need at least one label to build a benchmark split")
    first = (labels.timestamps[0] - series.start_time) // series.step
    cut = first - (lookback + horizon - 1) - labels.tolerance
    if cut < 1:
        raise CannotPlace("first label leaves no clean prefix to train on")
    return BenchmarkDataset(name, series.slice(0, cut), series.slice(cut, len(series)), labels)


def run_benchmark(datasets, config=None, percentiles=(DEFAULT_PERCENTILE,), kind="lstm", split=None):
    """Train once per dataset, then detect and score at every percentile."""
    config = config or PredictorConfig()
    rows = []
    for ds in datasets:
        bundle = train_pipeline(ds.train, config, split, percentiles[0], kind)
        for rho in percentiles:
            m = score(detect(bundle.with_percentile(rho), ds.test), ds.labels)
            rows.append(ReportRow(ds.name, float(rho), m.tp, m.fp, m.fn,
                                  m.precision, m.recall, m.f1, config.seed))
    return rows


def write_report(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in rows:
            writer.writerow((r.dataset, repr(r.percentile), r.tp, r.fp, r.fn,
                             repr(r.precision), repr(r.recall), repr(r.f1), r.seed))


def read_report(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_HEADER:
            raise MalformedLabels(f"{path}: expected header {','.join(REPORT_HEADER)}")
        return [
            ReportRow(r["dataset"], float(r["percentile"]), int(r["tp"]), int(r["fp"]), int(r["fn"]),
                      float(r["precision"]), float(r["recall"]), float(r["f1"]), int(r["seed"]))
            for r in reader
        ]

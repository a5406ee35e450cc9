"""Isochronous univariate time series: ingestion, normalization, splitting."""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstantSeriesWarning,
    EmptySeries,
    IrregularSpacing,
    MissingHeader,
    NonMonotonicTimestamps,
    NonNumericValue,
    SegmentTooShort,
    SeriesTooShort,
)

HEADER = ("timestamp", "value")


@dataclass(frozen=True, eq=False)
class Series:
    """Evenly spaced sequence of values.

    Timestamps are not stored; the i-th (0-based) value sits at
    ``start_time + i * step``.
    """

    start_time: int
    step: int
    values: np.ndarray

    def __post_init__(self):
        if int(self.step) != self.step or self.step <= 0:
            raise ValueError(f"step must be a positive integer, got {self.step!r}")
        if int(self.start_time) != self.start_time:
            raise ValueError(f"start_time must be an integer, got {self.start_time!r}")
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise EmptySeries("series must contain at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("series values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "start_time", int(self.start_time))
        object.__setattr__(self, "step", int(self.step))
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return (
            self.start_time == other.start_time
            and self.step == other.step
            and np.array_equal(self.values, other.values)
        )

    @property
    def timestamps(self):
        return self.start_time + self.step * np.arange(len(self), dtype=np.int64)

    def timestamp(self, i):
        """Timestamp of 0-based index ``i``."""
        return self.start_time + self.step * int(i)

    @property
    def end_time(self):
        return self.timestamp(len(self) - 1)

    def slice(self, start, stop):
        """Contiguous 0-based ``[start, stop)`` sub-series with correct timing."""
        return Series(self.timestamp(start), self.step, self.values[start:stop])

    def with_values(self, values):
        return Series(self.start_time, self.step, values)


def load_csv(path):
    """Read a ``timestamp,value`` CSV into a :class:`Series`.

    The step is taken from the first two rows and every later row must keep
    it exactly. Row numbers in errors count data rows from 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise MissingHeader(f"{path}: expected header 'timestamp,value', got {header!r}")

        times, values = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise NonNumericValue(row_no, ",".join(row))
            t_text, v_text = row[0].strip(), row[1].strip()
            try:
                t = int(t_text)
            except ValueError:
                raise NonNumericValue(row_no, t_text) from None
            try:
                v = float(v_text)
            except ValueError:
                raise NonNumericValue(row_no, v_text) from None
            if not math.isfinite(v):
                raise NonNumericValue(row_no, v_text)

            if times:
                if t <= times[-1]:
                    raise NonMonotonicTimestamps(row_no)
                gap = t - times[-1]
                if len(times) >= 2 and gap != times[1] - times[0]:
                    raise IrregularSpacing(row_no, times[1] - times[0], gap)
            times.append(t)
            values.append(v)

    if not values:
        raise EmptySeries(f"{path}: no data rows")
    step = times[1] - times[0] if len(times) > 1 else 1
    return Series(times[0], step, np.asarray(values))


def write_csv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for t, v in zip(series.timestamps.tolist(), series.values.tolist()):
            writer.writerow((t, repr(v)))


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for the three contiguous training segments."""

    fractions: tuple = (0.5, 0.25, 0.25)

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3:
            raise ValueError(f"need exactly three split fractions, got {len(fr)}")
        if any(not (f > 0) for f in fr):
            raise ValueError(f"split fractions must be positive, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-12:
            raise ValueError(f"split fractions must sum to 1, got sum {sum(fr)!r}")
        object.__setattr__(self, "fractions", fr)

    def lengths(self, n):
        """Segment lengths: floor of each share, remainder to the first."""
        lens = [math.floor(f * n) for f in self.fractions]
        lens[0] += n - sum(lens)
        return tuple(lens)


def split_contiguous(series, spec=None, min_length=1):
    """Partition ``series`` into three ordered, non-overlapping segments.

    ``min_length`` is the shortest usable segment (``B + F`` for a predictor
    with look-back ``B`` and horizon ``F``).
    """
    spec = spec or SplitSpec()
    lens = spec.lengths(len(series))
    for i, length in enumerate(lens, start=1):
        if length < min_length:
            raise SegmentTooShort(i, length, min_length)
    a = lens[0]
    b = a + lens[1]
    return (
        series.slice(0, a),
        series.slice(a, b),
        series.slice(b, len(series)),
    )


@dataclass(frozen=True)
class Normalizer:
    """z-score scaling ``(v - mean) / std``."""

    mean: float
    std: float

    def __post_init__(self):
        if not (self.std > 0):
            raise ValueError(f"std must be positive, got {self.std!r}")

    def apply(self, series):
        return series.with_values((series.values - self.mean) / self.std)

    def invert(self, series):
        return series.with_values(series.values * self.std + self.mean)

    def apply_values(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std


def fit_normalizer(series):
    if len(series) < 2:
        raise SeriesTooShort(f"need at least 2 values to fit a normalizer, got {len(series)}")
    mean = float(np.mean(series.values))
    std = float(np.std(series.values, ddof=1))
    if std < 1e-12:
        warnings.warn(
            "series is constant; using unit scale for normalization",
            ConstantSeriesWarning,
            stacklevel=2,
        )
        std = 1.0
    return Normalizer(mean, std)


def apply_normalizer(normalizer, series):
    return normalizer.apply(series)


def invert_normalizer(normalizer, series):
    return normalizer.invert(series)

"""Inference: score an unseen series against a trained bundle."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BundleDimensionMismatch, MalformedResult, SeriesTooShort
from .pipeline import distances

UNSCORED = "unscored"
NORMAL = "normal"
ANOMALOUS = "anomalous"
STATUSES = (UNSCORED, NORMAL, ANOMALOUS)
RESULT_HEADER = ("timestamp", "value", "m_distance", "status")


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Per-point outcome; ``m_distance`` is NaN where the point is unscored."""

    timestamps: np.ndarray
    values: np.ndarray
    status: np.ndarray
    m_distance: np.ndarray
    threshold: float
    percentile: float

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        if not isinstance(other, DetectionResult):
            return NotImplemented
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.status, other.status)
            and np.array_equal(self.m_distance, other.m_distance, equal_nan=True)
            and self.threshold == other.threshold
            and self.percentile == other.percentile
        )

    @property
    def scored(self):
        return self.status != UNSCORED

    @property
    def anomalous(self):
        return self.status == ANOMALOUS

    @property
    def anomalous_timestamps(self):
        return self.timestamps[self.anomalous]

    @property
    def anomaly_fraction(self):
        n = int(self.scored.sum())
        return float(self.anomalous.sum()) / n if n else 0.0


def label(m_distance, threshold):
    """Status per point: anomalous iff scored and strictly above threshold."""
    d = np.asarray(m_distance, dtype=np.float64)
    status = np.full(d.shape, UNSCORED, dtype="<U9")
    scored = ~np.isnan(d)
    status[scored] = np.where(d[scored] > threshold, ANOMALOUS, NORMAL)
    return status


def detect(bundle, series):
    B, F = bundle.lookback, bundle.horizon
    if len(series) < B + F:
        raise SeriesTooShort(
            f"series of length {len(series)} is shorter than lookback + horizon = {B + F}"
        )
    if bundle.error_model.dim != F:
        raise BundleDimensionMismatch(
            f"error model dimension {bundle.error_model.dim} != predictor horizon {F}"
        )
    d, offset = distances(bundle, series)
    m_distance = np.full(len(series), np.nan)
    m_distance[offset:] = d
    return DetectionResult(
        timestamps=series.timestamps,
        values=series.values.copy(),
        status=label(m_distance, bundle.threshold),
        m_distance=m_distance,
        threshold=float(bundle.threshold),
        percentile=float(bundle.percentile),
    )


def write_result_csv(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_HEADER)
        for t, v, d, s in zip(
            result.timestamps.tolist(), result.values.tolist(), result.m_distance.tolist(), result.status
        ):
            writer.writerow((t, repr(v), "" if s == UNSCORED else repr(d), s))


def read_result_csv(path, threshold=float("nan"), percentile=float("nan")):
    """Parse a file written by :func:`write_result_csv`.

    The threshold and percentile are not stored in the file; pass them if
    they matter to the caller.
    """
    ts, vs, ds, ss = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != RESULT_HEADER:
            raise MalformedResult(f"{path}: expected header {','.join(RESULT_HEADER)}")
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                t, v, d, s = row
                ts.append(int(t))
                vs.append(float(v))
                ds.append(float(d) if d.strip() else float("nan"))
            except ValueError:
                raise MalformedResult(f"{path}: bad row {row_no}: {row!r}") from None
            s = s.strip()
            if s not in STATUSES or ((s == UNSCORED) != (not d.strip())):
                raise MalformedResult(f"{path}: bad status at row {row_no}: {s!r}")
            ss.append(s)
    return DetectionResult(
        timestamps=np.asarray(ts, dtype=np.int64),
        values=np.asarray(vs, dtype=np.float64),
        status=np.asarray(ss, dtype="<U9"),
        m_distance=np.asarray(ds, dtype=np.float64),
        threshold=threshold,
        percentile=percentile,
    )

"""Training phase and the shared prediction / error-vector engine.

Times are 1-based in the docs. ``p(t, k)`` is the k-th prediction of
``v_t``, counting the windows that predict ``v_t`` from the oldest: with
``B = 3, F = 2`` the window ``[v1, v2, v3]`` yields ``p(4, 1)`` and
``p(5, 1)``, and ``[v2, v3, v4]`` yields ``p(5, 2)`` and ``p(6, 1)``. For a
fully predicted point, ``p(t, k)`` is therefore the ``(F - k + 1)``-step
forecast made from the window ending at ``t - F - 1 + k``.

Arrays are 0-based: row ``i`` holds time ``t = i + 1`` and column ``k - 1``
holds ``p(t, k)``.
"""

import json
from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    BundleDimensionMismatch,
    GreenhouseError,
    MalformedBundle,
    SchemaVersionMismatch,
    SeriesTooShort,
)
from .predictor import ArParams, LstmParams, PredictorConfig, PredictorModel, train
from .series import Normalizer, SplitSpec, fit_normalizer, split_contiguous
from .stats import (
    MultivariateNormal,
    TruncatedNormal,
    fit_mvn,
    fit_truncated_normal,
    mahalanobis_many,
    truncated_quantile,
)

SCHEMA_VERSION = "greenhouse-bundle/1"
DEFAULT_PERCENTILE = 0.99


@dataclass(frozen=True, eq=False)
class PredictionMatrix:
    values: np.ndarray  # (n, F); NaN where no prediction exists
    mask: np.ndarray    # (n, F) bool
    lookback: int
    horizon: int

    def get(self, t, k):
        """``p(t, k)`` with 1-based ``t`` and ``k``; None if absent."""
        if not self.mask[t - 1, k - 1]:
            return None
        return float(self.values[t - 1, k - 1])

    @property
    def fully_predicted(self):
        return np.flatnonzero(self.mask.all(axis=1))


@dataclass(frozen=True, eq=False)
class ErrorVectors:
    """Rows are ``[p(t,1) - v_t, ..., p(t,F) - v_t]`` for ``t = offset+1 ..``."""

    vectors: np.ndarray  # (m, F)
    offset: int          # 0-based index of the first scored point (= B + F - 1)

    def __len__(self):
        return self.vectors.shape[0]


def predict_all(model, series):
    """Slide ``model`` over every complete look-back window of ``series``."""
    B, F = model.lookback, model.horizon
    v = series.values
    n = v.size
    if n < B + F:
        raise SeriesTooShort(f"series of length {n} is shorter than lookback + horizon = {B + F}")
    # windows ending at 0-based index B-1 .. n-2; the one ending at n-1
    # would only predict past the end
    windows = sliding_window_view(v, B)[: n - B]
    preds = model.predict_many(windows)
    values = np.full((n, F), np.nan)
    mask = np.zeros((n, F), dtype=bool)
    for step in range(1, F + 1):
        ends = np.arange(B, n - step + 1)        # 1-based window end
        times = ends + step                      # 1-based target time
        # windows predicting v_t end at max(B, t - F) .. t - 1, oldest is k = 1
        ks = np.minimum(ends - B, F - step) + 1
        values[times - 1, ks - 1] = preds[ends - B, step - 1]
        mask[times - 1, ks - 1] = True
    return PredictionMatrix(values, mask, B, F)


def error_vectors(pm, series):
    offset = pm.lookback + pm.horizon - 1
    v = series.values
    if v.size <= offset:
        return ErrorVectors(np.zeros((0, pm.horizon)), offset)
    return ErrorVectors(pm.values[offset:] - v[offset:, None], offset)


@contextmanager
def _step(name):
    try:
        yield
    except GreenhouseError as exc:
        if exc.step is None:
            exc.step = name
        raise


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """Everything inference needs: M, the normalizer, N, T and the threshold."""

    predictor: PredictorModel
    normalizer: Normalizer
    error_model: MultivariateNormal
    threshold_model: TruncatedNormal
    threshold: float
    percentile: float
    split: SplitSpec
    segment_lengths: tuple
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        F = self.predictor.horizon
        if self.error_model.dim != F:
            raise BundleDimensionMismatch(
                f"error model has dimension {self.error_model.dim}, predictor horizon is {F}"
            )

    @property
    def config(self):
        return self.predictor.config

    @property
    def lookback(self):
        return self.predictor.lookback

    @property
    def horizon(self):
        return self.predictor.horizon

    def with_percentile(self, percentile):
        """Same M, N and T, threshold recomputed at ``percentile``."""
        tau = truncated_quantile(self.threshold_model, percentile)
        return replace(self, threshold=tau, percentile=float(percentile))

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return bundle_to_dict(self) == bundle_to_dict(other)


def distances(bundle_or_parts, series, normalized=False):
    """Mahalanobis distance of every fully-predicted point of ``series``."""
    b = bundle_or_parts
    s = series if normalized else b.normalizer.apply(series)
    ev = error_vectors(predict_all(b.predictor, s), s)
    return mahalanobis_many(b.error_model, ev.vectors), ev.offset


def train_pipeline(series, config=None, split=None, percentile=DEFAULT_PERCENTILE, kind="lstm"):
    """Run the four training steps on an anomaly-free ``series``.

    1. split into three contiguous segments; fit the normalizer on the first
    2. train the predictor on segment 1
    3. fit the error-vector normal on segment 2
    4. fit the truncated normal to segment-3 distances; threshold at ``percentile``

    No labels are accepted: the training data is taken to be clean.
    """
    config = config or PredictorConfig()
    split = split or SplitSpec()
    with _step("step 1 (split)"):
        truncated_quantile(TruncatedNormal(0.0, 1.0), percentile)  # validate early
        seg1, seg2, seg3 = split_contiguous(series, split, config.span)
        normalizer = fit_normalizer(seg1)
        seg1, seg2, seg3 = (normalizer.apply(s) for s in (seg1, seg2, seg3))
    with _step("step 2 (train predictor)"):
        model = train(kind, seg1, config)
    with _step("step 3 (fit error distribution)"):
        ev2 = error_vectors(predict_all(model, seg2), seg2)
        mvn = fit_mvn(ev2.vectors)
    with _step("step 4 (calibrate threshold)"):
        ev3 = error_vectors(predict_all(model, seg3), seg3)
        tn = fit_truncated_normal(mahalanobis_many(mvn, ev3.vectors))
        tau = truncated_quantile(tn, percentile)
    return ModelBundle(
        predictor=model,
        normalizer=normalizer,
        error_model=mvn,
        threshold_model=tn,
        threshold=tau,
        percentile=float(percentile),
        split=split,
        segment_lengths=(len(seg1), len(seg2), len(seg3)),
    )


# -- persistence ---------------------------------------------------------------

def _floats(a):
    return np.asarray(a, dtype=np.float64).tolist()


def bundle_to_dict(b):
    m = b.predictor
    cfg = m.config
    return {
        "schema_version": b.schema_version,
        "config": {
            "lookback": cfg.lookback,
            "horizon": cfg.horizon,
            "hidden_size": cfg.hidden_size,
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "grad_clip": cfg.grad_clip,
            "seed": cfg.seed,
            "split": list(b.split.fractions),
            "segment_lengths": list(b.segment_lengths),
        },
        "predictor": {
            "kind": m.kind,
            "params": {k: _floats(v) for k, v in m.params.arrays().items()},
            "loss_history": [float(x) for x in m.loss_history],
        },
        "normalizer": {"mean": b.normalizer.mean, "std": b.normalizer.std},
        "error_model": {
            "mean": _floats(b.error_model.mean),
            "covariance": _floats(b.error_model.covariance),
            "cholesky_factor": _floats(b.error_model.cholesky_factor),
        },
        "threshold_model": {
            "loc": b.threshold_model.loc,
            "scale": b.threshold_model.scale,
            "lower": b.threshold_model.lower,
        },
        "threshold": b.threshold,
        "percentile": b.percentile,
    }


def bundle_from_dict(d):
    if not isinstance(d, dict) or "schema_version" not in d:
        raise MalformedBundle("bundle has no schema_version")
    if d["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"bundle schema {d['schema_version']!r} is not supported (expected {SCHEMA_VERSION!r})"
        )
    try:
        c = d["config"]
        cfg = PredictorConfig(
            lookback=c["lookback"],
            horizon=c["horizon"],
            hidden_size=c["hidden_size"],
            epochs=c["epochs"],
            learning_rate=c["learning_rate"],
            batch_size=c["batch_size"],
            grad_clip=c["grad_clip"],
            seed=c["seed"],
        )
        p = d["predictor"]
        arrays = {k: np.array(v, dtype=np.float64) for k, v in p["params"].items()}
        if p["kind"] == "lstm":
            params = LstmParams(**arrays)
        elif p["kind"] == "linear-ar":
            params = ArParams(**arrays)
        else:
            raise MalformedBundle(f"unknown predictor kind {p['kind']!r}")
        model = PredictorModel(p["kind"], cfg, params, tuple(float(x) for x in p["loss_history"]))
        e = d["error_model"]
        mvn = MultivariateNormal(
            np.array(e["mean"], dtype=np.float64),
            np.array(e["covariance"], dtype=np.float64),
            np.array(e["cholesky_factor"], dtype=np.float64),
        )
        t = d["threshold_model"]
        tn = TruncatedNormal(float(t["loc"]), float(t["scale"]), float(t["lower"]))
        n = d["normalizer"]
        bundle = ModelBundle(
            predictor=model,
            normalizer=Normalizer(float(n["mean"]), float(n["std"])),
            error_model=mvn,
            threshold_model=tn,
            threshold=float(d["threshold"]),
            percentile=float(d["percentile"]),
            split=SplitSpec(tuple(c["split"])),
            segment_lengths=tuple(int(x) for x in c["segment_lengths"]),
        )
    except GreenhouseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedBundle(f"bundle is missing or has invalid fields: {exc!r}") from None
    _check_shapes(bundle)
    if truncated_quantile(bundle.threshold_model, bundle.percentile) != bundle.threshold:
        raise MalformedBundle("stored threshold does not match the threshold model at its percentile")
    return bundle


def _check_shapes(b):
    B, F = b.lookback, b.horizon
    H = b.config.hidden_size
    p = b.predictor.params
    if b.predictor.kind == "lstm":
        expected = {"W_out": (F, H), "b_out": (F,)}
        for g in "ifog":
            expected[f"W_{g}"] = (H, 1 + H)
            expected[f"b_{g}"] = (H,)
    else:
        expected = {"coef": (F, B), "intercept": (F,)}
    got = {k: v.shape for k, v in p.arrays().items()}
    if got != expected:
        raise BundleDimensionMismatch(f"predictor parameter shapes {got} do not match config {expected}")
    mvn = b.error_model
    if mvn.mean.shape != (F,) or mvn.covariance.shape != (F, F) or mvn.cholesky_factor.shape != (F, F):
        raise BundleDimensionMismatch("error model shapes do not match the predictor horizon")


def dumps_bundle(b):
    return json.dumps(bundle_to_dict(b), indent=1, sort_keys=True, allow_nan=False) + "\n"


def loads_bundle(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedBundle(f"bundle is not valid JSON: {exc}") from None
    return bundle_from_dict(d)


def save_bundle(b, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_bundle(b))


def load_bundle(path):
    with open(path, encoding="utf-8") as fh:
        return loads_bundle(fh.read())

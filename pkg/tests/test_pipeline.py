import inspect
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenhouse.errors import (
    BundleDimensionMismatch,
    MalformedBundle,
    SchemaVersionMismatch,
    SegmentTooShort,
    SeriesTooShort,
)
from greenhouse.pipeline import (
    SCHEMA_VERSION,
    PredictionMatrix,
    dumps_bundle,
    error_vectors,
    load_bundle,
    loads_bundle,
    predict_all,
    save_bundle,
    train_pipeline,
)
from greenhouse.predictor import ArParams, PredictorConfig, PredictorModel
from greenhouse.series import Series, SplitSpec

from oracles import naive_fully_predicted, naive_mask


def _ar_model(B, F, seed=0):
    rng = np.random.default_rng(seed)
    params = ArParams(rng.normal(size=(F, B)), rng.normal(size=F))
    return PredictorModel("linear-ar", PredictorConfig(lookback=B, horizon=F), params)


class TestTableLayout:
    """B = 3, F = 2 on a five/eight point series."""

    def test_predictions_for_first_points(self):
        v = np.array([1.0, 4.0, 9.0, 16.0, 25.0])
        m = _ar_model(3, 2)
        pm = predict_all(m, Series(1, 1, v))
        first = m.predict(v[0:3])   # [p(4,1), p(5,1)]
        second = m.predict(v[1:4])  # [p(5,2), p(6,1)]
        assert pm.get(4, 1) == first[0]
        assert pm.get(5, 1) == first[1]
        assert pm.get(5, 2) == second[0]
        assert pm.get(4, 2) is None
        assert all(pm.get(t, k) is None for t in (1, 2, 3) for k in (1, 2))

    def test_error_vector_at_five(self):
        v = np.array([1.0, 4.0, 9.0, 16.0, 25.0])
        m = _ar_model(3, 2)
        s = Series(1, 1, v)
        ev = error_vectors(predict_all(m, s), s)
        assert ev.offset == 4 and len(ev) == 1
        p51 = m.predict(v[0:3])[1]
        p52 = m.predict(v[1:4])[0]
        assert ev.vectors[0].tolist() == [p51 - v[4], p52 - v[4]]

    def test_all_table_rows_n8(self):
        v = np.array([3.0, -1.0, 4.0, 1.0, -5.0, 9.0, 2.0, -6.0])
        m = _ar_model(3, 2, seed=4)
        s = Series(1, 1, v)
        pm = predict_all(m, s)
        # look-back rows and the cells they fill: (t, k) for each forecast step
        rows = {
            (0, 3): [(4, 1), (5, 1)],
            (1, 4): [(5, 2), (6, 1)],
            (2, 5): [(6, 2), (7, 1)],
            (3, 6): [(7, 2), (8, 1)],
        }
        for (a, b), cells in rows.items():
            pred = m.predict(v[a:b])
            for (t, k), value in zip(cells, pred):
                assert pm.get(t, k) == value
        ev = error_vectors(pm, s)
        for i, t in enumerate(range(5, 9)):
            assert ev.vectors[i].tolist() == [pm.get(t, 1) - v[t - 1], pm.get(t, 2) - v[t - 1]]

    def test_fully_predicted_points_n8(self):
        pm = predict_all(_ar_model(3, 2), Series(0, 1, np.arange(8.0)))
        assert (pm.fully_predicted + 1).tolist() == [5, 6, 7, 8]


@settings(max_examples=300, deadline=None)
@given(B=st.integers(1, 8), F=st.integers(1, 8), n=st.integers(0, 64))
def test_window_count_identity(B, F, n):
    expected = naive_fully_predicted(n, B, F)
    assert expected == max(0, n - B - F + 1)
    if n < B + F:
        if n >= 1:
            with pytest.raises(SeriesTooShort):
                predict_all(_ar_model(B, F), Series(0, 1, np.zeros(n)))
        return
    s = Series(0, 1, np.arange(n, dtype=float))
    pm = predict_all(_ar_model(B, F), s)
    assert np.array_equal(pm.mask, naive_mask(n, B, F))
    assert np.array_equal(np.isnan(pm.values), ~pm.mask)
    assert len(pm.fully_predicted) == expected
    assert len(error_vectors(pm, s)) == expected


def _enumerate_predictions(predict_one, v, B, F):
    """Brute force: for each t, call the predictor on every window that
    forecasts v_t, oldest window first."""
    n = len(v)
    out = {}
    for t in range(1, n + 1):
        k = 0
        for end in range(1, t):
            step = t - end
            if end >= B and 1 <= step <= F:
                k += 1
                out[(t, k)] = predict_one(v[end - B:end])[step - 1]
    return out


def _assert_matches_enumeration(pm, predict_one, v, B, F):
    expected = _enumerate_predictions(predict_one, v, B, F)
    assert int(pm.mask.sum()) == len(expected)
    for (t, k), value in expected.items():
        assert pm.mask[t - 1, k - 1]
        assert pm.values[t - 1, k - 1] == value


def _naive_ar(coef, icpt):
    def predict_one(window):
        out = []
        for k in range(coef.shape[0]):
            acc = float(icpt[k])
            for j in range(coef.shape[1]):
                acc += float(coef[k, j]) * float(window[j])
            out.append(acc)
        return out
    return predict_one


@settings(max_examples=60, deadline=None)
@given(B=st.integers(1, 8), F=st.integers(1, 8), extra=st.integers(0, 30), seed=st.integers(0, 1000))
def test_linear_ar_matches_naive_loop(B, F, extra, seed):
    n = B + F + extra
    m = _ar_model(B, F, seed)
    v = np.random.default_rng(seed).normal(size=n)
    pm = predict_all(m, Series(0, 1, v))
    _assert_matches_enumeration(pm, _naive_ar(m.params.coef, m.params.intercept), v, B, F)


def test_lstm_predict_all_matches_per_window(small_bundle, small_series):
    m = small_bundle.predictor
    s = small_bundle.normalizer.apply(small_series)
    pm = predict_all(m, s)
    _assert_matches_enumeration(pm, m.predict, s.values, m.lookback, m.horizon)


def test_zero_predictor_mask_unchanged():
    m = PredictorModel("linear-ar", PredictorConfig(lookback=3, horizon=2), ArParams(np.zeros((2, 3)), np.zeros(2)))
    pm = predict_all(m, Series(0, 1, np.arange(10.0)))
    assert np.all(pm.values[pm.mask] == 0.0)
    assert np.array_equal(pm.mask, naive_mask(10, 3, 2))


def test_perfect_predictions_give_zero_errors():
    v = np.random.default_rng(0).normal(size=12)
    mask = naive_mask(12, 3, 2)
    values = np.where(mask, v[:, None], np.nan)
    ev = error_vectors(PredictionMatrix(values, mask, 3, 2), Series(0, 1, v))
    assert np.all(ev.vectors == 0.0)


def test_shift_observations():
    v = np.random.default_rng(1).normal(size=15)
    s = Series(0, 1, v)
    pm = predict_all(_ar_model(4, 3), s)
    base = error_vectors(pm, s).vectors
    shifted = error_vectors(pm, Series(0, 1, v + 2.5)).vectors
    np.testing.assert_allclose(shifted, base - 2.5, atol=1e-12)


class TestTrainPipeline:
    def test_bundle_contents(self, small_bundle, small_series, small_config):
        b = small_bundle
        assert b.segment_lengths == (200, 100, 100)
        assert b.error_model.dim == small_config.horizon
        assert b.threshold == b.threshold_model.quantile(0.99)
        assert b.percentile == 0.99
        seg1 = small_series.values[:200]
        assert b.normalizer.mean == float(np.mean(seg1))

    def test_percentile_ordering(self, small_series, small_config):
        lo = train_pipeline(small_series, small_config, percentile=0.5)
        hi = train_pipeline(small_series, small_config, percentile=0.99)
        assert lo.threshold < hi.threshold
        assert lo.predictor == hi.predictor and lo.error_model == hi.error_model

    def test_with_percentile_matches_retraining(self, small_bundle, small_series, small_config):
        again = train_pipeline(small_series, small_config, percentile=0.9)
        assert small_bundle.with_percentile(0.9) == again

    def test_segment_too_short_names_step(self, small_config):
        s = Series(0, 1, np.sin(np.arange(60.0)))
        with pytest.raises(SegmentTooShort) as info:
            train_pipeline(s, small_config, SplitSpec((0.8, 0.1, 0.1)))
        assert info.value.segment == 2
        assert "step 1" in str(info.value)

    def test_takes_no_labels(self):
        params = set(inspect.signature(train_pipeline).parameters)
        assert params == {"series", "config", "split", "percentile", "kind"}

    def test_linear_ar_kind(self, small_series, small_config):
        b = train_pipeline(small_series, small_config, kind="linear-ar")
        assert b.predictor.kind == "linear-ar"
        assert b.threshold > 0


class TestPersistence:
    def test_round_trip(self, small_bundle, tmp_path):
        path = tmp_path / "b.json"
        save_bundle(small_bundle, path)
        back = load_bundle(path)
        assert back == small_bundle
        for name, arr in small_bundle.predictor.params.arrays().items():
            assert np.array_equal(getattr(back.predictor.params, name), arr)
        assert back.threshold == small_bundle.threshold
        assert dumps_bundle(back) == path.read_text()

    def test_round_trip_linear(self, small_series, small_config, tmp_path):
        b = train_pipeline(small_series, small_config, kind="linear-ar")
        save_bundle(b, tmp_path / "b.json")
        assert load_bundle(tmp_path / "b.json") == b

    def test_schema_tag(self, small_bundle):
        assert json.loads(dumps_bundle(small_bundle))["schema_version"] == SCHEMA_VERSION == "greenhouse-bundle/1"

    def test_truncated(self, small_bundle):
        text = dumps_bundle(small_bundle)
        with pytest.raises(MalformedBundle):
            loads_bundle(text[: len(text) // 2])

    def test_schema_mismatch(self, small_bundle):
        d = json.loads(dumps_bundle(small_bundle))
        d["schema_version"] = "greenhouse-bundle/2"
        with pytest.raises(SchemaVersionMismatch):
            loads_bundle(json.dumps(d))

    def test_missing_field(self, small_bundle):
        d = json.loads(dumps_bundle(small_bundle))
        del d["error_model"]
        with pytest.raises(MalformedBundle):
            loads_bundle(json.dumps(d))

    def test_tampered_threshold(self, small_bundle):
        d = json.loads(dumps_bundle(small_bundle))
        d["threshold"] *= 1.5
        with pytest.raises(MalformedBundle):
            loads_bundle(json.dumps(d))

    def test_dimension_mismatch(self, small_bundle):
        d = json.loads(dumps_bundle(small_bundle))
        d["config"]["horizon"] = 4
        with pytest.raises(BundleDimensionMismatch):
            loads_bundle(json.dumps(d))

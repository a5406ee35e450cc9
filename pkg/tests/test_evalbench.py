import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenhouse.detector import DetectionResult, label
from greenhouse.errors import BadParams, CannotPlace, LabelOutOfRange, MalformedLabels
from greenhouse.evalbench import (
    LabelSet,
    Metrics,
    clean_prefix_dataset,
    f1_score,
    generate_synthetic,
    inject_anomalies,
    load_labels_csv,
    load_nab_csv,
    load_nab_labels,
    match,
    read_report,
    run_benchmark,
    score,
    sine_closed_form,
    synthetic_dataset,
    write_labels_csv,
    write_report,
)
from greenhouse.series import Series


def _result(n, anomalous, start=0, step=1):
    d = np.zeros(n)
    d[list(anomalous)] = 10.0
    ts = start + step * np.arange(n)
    return DetectionResult(ts, np.zeros(n), label(d, 1.0), d, 1.0, 0.99)


class TestScore:
    def test_perfect(self):
        m = score(_result(50, [3, 20, 41]), LabelSet((3, 20, 41), 0))
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)

    def test_direct_formulas(self):
        m = Metrics.from_counts(1, 1, 3)
        assert (m.precision, m.recall) == (0.5, 0.25)
        assert m.f1 == pytest.approx(1 / 3, rel=1e-15)

    @pytest.mark.parametrize(
        "p, r, f1",
        [(0.49, 0.06, 0.11), (0.22, 0.14, 0.17), (0.25, 0.58, 0.35)],
    )
    def test_f1_of_rounded_pairs(self, p, r, f1):
        assert round(f1_score(p, r), 2) == f1

    def test_aapl_style_counts(self):
        m = Metrics.from_counts(147, 153, 2303)
        assert (m.precision, m.recall) == (0.49, 0.06)
        assert m.f1 == pytest.approx(0.1069, abs=1e-4)
        assert f"{m.f1:.2f}" == "0.11"

    def test_tolerance_window(self):
        r = _result(40, [12])
        assert score(r, LabelSet((10,), 1)).tp == 0
        assert score(r, LabelSet((10,), 2)).tp == 1

    def test_tolerance_in_steps(self):
        r = _result(40, [12], start=100, step=10)
        assert score(r, LabelSet((220,), 0)).tp == 1
        assert score(r, LabelSet((240,), 2)).tp == 1
        assert score(r, LabelSet((250,), 2)).tp == 0

    def test_nearest_label_wins(self):
        assert match([5], [3, 6], 3) == [(5, 6)]
        # one-to-one: the second prediction cannot reuse label 11
        assert match([10, 12], [11], 2) == [(10, 11)]
        assert match([10, 12], [11, 13], 1) == [(10, 11), (12, 13)]

    def test_empty_predictions(self):
        m = score(_result(30, []), LabelSet((5, 9), 2))
        assert (m.tp, m.fp, m.fn, m.recall) == (0, 0, 2, 0.0)

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            score(_result(30, [2]), LabelSet((30,), 0))

    def test_label_set_validation(self):
        with pytest.raises(BadParams):
            LabelSet((1, 1))
        with pytest.raises(BadParams):
            LabelSet((1,), -1)


@settings(max_examples=300, deadline=None)
@given(tp=st.integers(0, 1000), fp=st.integers(0, 1000), fn=st.integers(0, 1000))
def test_metric_identities(tp, fp, fn):
    m = Metrics.from_counts(tp, fp, fn)
    assert m.precision == (tp / (tp + fp) if tp + fp else 0.0)
    assert m.recall == (tp / (tp + fn) if tp + fn else 0.0)
    pr = m.precision + m.recall
    assert m.f1 == (2 * m.precision * m.recall / pr if pr else 0.0)
    for v in (m.precision, m.recall, m.f1):
        assert 0.0 <= v <= 1.0
    assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12


@settings(max_examples=150, deadline=None)
@given(
    preds=st.sets(st.integers(0, 99), max_size=30),
    labels=st.sets(st.integers(0, 99), max_size=30),
    w=st.integers(0, 5),
    shift=st.integers(-10**6, 10**6),
)
def test_matching_properties(preds, labels, w, shift):
    base = score(_result(100, preds), LabelSet(labels, w))
    moved = score(_result(100, preds, start=shift), LabelSet({t + shift for t in labels}, w))
    assert base == moved
    assert base.tp <= min(len(preds), len(labels))
    assert base.tp + base.fp == len(preds)
    assert base.tp + base.fn == len(labels)
    pairs = match(sorted(preds), sorted(labels), w)
    assert len({p for p, _ in pairs}) == len(pairs) == len({lab for _, lab in pairs})
    assert all(abs(p - lab) <= w for p, lab in pairs)


class TestSynthetic:
    def test_clean_sine_closed_form(self):
        s = generate_synthetic("sine", 500, 3, {"amplitude": 2.0, "period": 37.0})
        t = np.arange(500)
        np.testing.assert_allclose(s.values, 2.0 * np.sin(2 * np.pi * t / 37.0), atol=1e-12, rtol=0)
        assert np.array_equal(s.values, sine_closed_form(500, amplitude=2.0, period=37.0))

    @pytest.mark.parametrize("kind", ["sine", "sine+noise", "random-walk-with-drift"])
    def test_seeded(self, kind):
        assert generate_synthetic(kind, 300, 11) == generate_synthetic(kind, 300, 11)

    def test_seeds_differ(self):
        assert generate_synthetic("sine+noise", 300, 1) != generate_synthetic("sine+noise", 300, 2)

    def test_noise_level(self):
        s = generate_synthetic("sine+noise", 10_000, 5, {"noise_std": 0.1})
        resid = s.values - sine_closed_form(10_000)
        assert abs(resid.std(ddof=1) - 0.1) < 0.005

    def test_random_walk_drift(self):
        s = generate_synthetic("random-walk-with-drift", 5000, 2, {"drift": 0.5, "step_std": 0.0})
        np.testing.assert_allclose(np.diff(s.values), 0.5, rtol=1e-12)
        s = generate_synthetic("random-walk-with-drift", 20000, 2, {"drift": 0.1, "step_std": 1.0})
        assert abs(np.mean(np.diff(s.values)) - 0.1) < 4 / np.sqrt(20000)

    @pytest.mark.parametrize(
        "kind, n, params",
        [
            ("square", 10, None),
            ("sine", 0, None),
            ("sine", 10, {"period": 0}),
            ("sine", 10, {"noise_std": -1}),
            ("sine", 10, {"drift": 1.0}),
            ("random-walk-with-drift", 10, {"step_std": -0.1}),
        ],
    )
    def test_bad_params(self, kind, n, params):
        with pytest.raises(BadParams):
            generate_synthetic(kind, n, 0, params)


class TestInject:
    def test_single(self):
        s = generate_synthetic("sine", 400, 0)
        spiked, labels = inject_anomalies(s, 1, count=1, magnitude=10, min_gap=1, lookback=10, horizon=2)
        assert len(labels) == 1 and labels.tolerance == 2
        (t,) = labels.timestamps
        i = (t - s.start_time) // s.step
        assert spiked.values[i] != s.values[i]
        assert abs(spiked.values[i] - s.values[i]) == pytest.approx(10 * s.values.std(ddof=1))
        others = np.delete(np.arange(400), i)
        assert np.array_equal(spiked.values[others], s.values[others])

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32), count=st.integers(1, 8), gap=st.integers(1, 40),
           B=st.integers(1, 20), F=st.integers(1, 5))
    def test_positions(self, seed, count, gap, B, F):
        s = Series(0, 1, np.zeros(400))
        try:
            spiked, labels = inject_anomalies(s, seed, count, 5.0, gap, B, F)
        except CannotPlace:
            assert 400 - (B + F - 1) < (count - 1) * gap + 1
            return
        ts = np.array(labels.timestamps)
        assert len(ts) == count
        assert ts.min() >= B + F - 1
        assert np.all(np.diff(ts) >= gap)
        assert np.count_nonzero(spiked.values) == count

    def test_tight_fit(self):
        s = Series(0, 1, np.zeros(30))
        _, labels = inject_anomalies(s, 0, count=3, magnitude=1, min_gap=10, lookback=8, horizon=2)
        assert labels.timestamps == (9, 19, 29)
        with pytest.raises(CannotPlace):
            inject_anomalies(s, 0, count=3, magnitude=1, min_gap=11, lookback=8, horizon=2)

    def test_seeded(self):
        s = generate_synthetic("sine", 500, 0)
        assert inject_anomalies(s, 4, 3, 10, 20) == inject_anomalies(s, 4, 3, 10, 20)


class TestFiles:
    def test_labels_round_trip(self, tmp_path):
        labels = LabelSet((3, 99, 1000), 0)
        write_labels_csv(labels, tmp_path / "l.csv")
        assert load_labels_csv(tmp_path / "l.csv") == labels

    def test_labels_bad(self, tmp_path):
        (tmp_path / "l.csv").write_text("time\n1\n")
        with pytest.raises(MalformedLabels):
            load_labels_csv(tmp_path / "l.csv")
        (tmp_path / "l.csv").write_text("timestamp\nabc\n")
        with pytest.raises(MalformedLabels):
            load_labels_csv(tmp_path / "l.csv")

    def test_nab_adapter(self, tmp_path):
        rows = ["timestamp,value"] + [
            f"2014-07-01 {h:02d}:{m:02d}:00,{10 + (h * 2 + m // 30) % 7}"
            for h in range(24) for m in (0, 30)
        ]
        (tmp_path / "nyc.csv").write_text("\n".join(rows) + "\n")
        (tmp_path / "labels.json").write_text(json.dumps({"realKnownCause/nyc.csv": ["2014-07-01 20:00:00"]}))
        s = load_nab_csv(tmp_path / "nyc.csv")
        assert s.step == 1800 and len(s) == 48
        assert s.start_time == 1404172800
        labels = load_nab_labels(tmp_path / "labels.json", "realKnownCause/nyc.csv", tolerance=1)
        assert labels.timestamps == (1404172800 + 40 * 1800,)
        ds = clean_prefix_dataset("nyc", s, labels, lookback=4, horizon=2)
        assert len(ds.train) + len(ds.test) == 48
        assert ds.train.end_time < labels.timestamps[0]
        first_label_index = (labels.timestamps[0] - ds.test.start_time) // ds.test.step
        assert first_label_index >= 4 + 2 - 1

    def test_nab_missing_key(self, tmp_path):
        (tmp_path / "labels.json").write_text("{}")
        with pytest.raises(MalformedLabels):
            load_nab_labels(tmp_path / "labels.json", "x.csv")


@pytest.fixture(scope="module")
def small_report(small_config):
    ds = synthetic_dataset("sine", "sine+noise", 400, 400, seed=3, count=3, config=small_config,
                           params={"period": 25})
    return run_benchmark([ds], small_config, (0.5, 0.9, 0.99, 0.999))


def test_report_structure(small_report):
    assert [r.percentile for r in small_report] == [0.5, 0.9, 0.99, 0.999]
    assert all(r.dataset == "sine" and 0 <= r.f1 <= 1 for r in small_report)
    assert all(r.tp + r.fn == 3 for r in small_report)


def test_report_fp_non_increasing(small_report):
    fps = [r.fp for r in small_report]
    assert all(a >= b for a, b in zip(fps, fps[1:]))


def test_report_round_trip(small_report, tmp_path):
    path = tmp_path / "report.csv"
    write_report(small_report, path)
    assert path.read_text().splitlines()[0] == "dataset,percentile,tp,fp,fn,precision,recall,f1,seed"
    assert read_report(path) == small_report


def test_benchmark_deterministic(small_config, small_report):
    ds = synthetic_dataset("sine", "sine+noise", 400, 400, seed=3, count=3, config=small_config,
                           params={"period": 25})
    assert run_benchmark([ds], small_config, (0.5, 0.9, 0.99, 0.999)) == small_report

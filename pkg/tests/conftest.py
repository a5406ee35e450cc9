import time
from contextlib import contextmanager

import pytest

from greenhouse.evalbench import generate_synthetic
from greenhouse.pipeline import train_pipeline
from greenhouse.predictor import PredictorConfig

TRAIN_SEED = 0
FRESH_SEED = 1


@pytest.fixture(scope="session")
def default_config():
    return PredictorConfig(seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def noisy_train_series():
    return generate_synthetic("sine+noise", 2000, TRAIN_SEED)


@pytest.fixture(scope="session")
def noisy_bundle(noisy_train_series, default_config):
    """Default-size LSTM bundle on sine + N(0, 0.1^2) noise (about 40 s)."""
    return train_pipeline(noisy_train_series, default_config, percentile=0.99)


@pytest.fixture(scope="session")
def clean_train_series():
    return generate_synthetic("sine", 2000, TRAIN_SEED)


@pytest.fixture(scope="session")
def clean_bundle(clean_train_series, default_config):
    """Default-size LSTM bundle on a noiseless sine (about 40 s)."""
    return train_pipeline(clean_train_series, default_config, percentile=0.99)


@pytest.fixture(scope="session")
def small_config():
    return PredictorConfig(lookback=8, horizon=3, hidden_size=6, epochs=4, seed=7)


@pytest.fixture(scope="session")
def small_series():
    return generate_synthetic("sine+noise", 400, 3, {"period": 25})


@pytest.fixture(scope="session")
def small_bundle(small_series, small_config):
    return train_pipeline(small_series, small_config)


_CRITERIA = pytest.StashKey[list]()


class _Criterion:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion(request):
    """Context manager that records one acceptance line and enforces its time budget."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    @contextmanager
    def record(number, title, budget):
        c = _Criterion()
        start = time.perf_counter()
        try:
            yield c
            elapsed = time.perf_counter() - start
            assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            line = f"criterion {number} FAIL {title} ({elapsed:.2f}s) {c.detail} {exc}".rstrip()
            lines.append(line)
            print(line)
            raise
        line = f"criterion {number} PASS {title} ({elapsed:.2f}s) {c.detail}".rstrip()
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line.splitlines()[0])

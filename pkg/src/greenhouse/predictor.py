"""Window-to-window sequence predictors.

Both predictors map a look-back window of ``B`` values to the next ``F``
values in one shot:

* ``lstm``: a single-layer LSTM run over the window from a zero state, with a
  linear read-out of the final hidden state. Trained with minibatch SGD and
  global-norm gradient clipping on the mean squared error.
* ``linear-ar``: one autoregression per horizon step fitted by ridge-damped
  normal equations.

Random initialization draws from ``numpy.random.PCG64`` seeded with
``PredictorConfig.seed``; nothing else consumes entropy. Minibatches are
visited in series order every epoch.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .errors import DivergedTraining, NonFiniteActivation, SeriesTooShort, WrongWindowLength

KINDS = ("lstm", "linear-ar")
AR_RIDGE = 1e-9


@dataclass(frozen=True)
class PredictorConfig:
    lookback: int = 64
    horizon: int = 8
    hidden_size: int = 32
    epochs: int = 100
    learning_rate: float = 0.05
    batch_size: int = 32
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("lookback", "horizon", "hidden_size", "epochs", "batch_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("learning_rate", "grad_clip"):
            value = float(getattr(self, name))
            if not (value > 0) or not np.isfinite(value):
                raise ValueError(f"{name} must be a positive real, got {value!r}")
            object.__setattr__(self, name, value)
        seed = self.seed
        if isinstance(seed, bool) or int(seed) != seed or not (0 <= seed < 2**64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        object.__setattr__(self, "seed", int(seed))

    @property
    def span(self):
        """Shortest series that yields one training pair."""
        return self.lookback + self.horizon


def make_training_pairs(values, lookback, horizon):
    """Sliding (input, target) pairs.

    Row ``j`` of the inputs is ``values[j:j+B]`` and row ``j`` of the targets
    is ``values[j+B:j+B+F]``; there are ``n - B - F + 1`` rows.
    """
    v = np.asarray(getattr(values, "values", values), dtype=np.float64)
    n = v.size
    if n < lookback + horizon:
        raise SeriesTooShort(
            f"series of length {n} is shorter than lookback + horizon = {lookback + horizon}"
        )
    windows = sliding_window_view(v, lookback + horizon)
    return windows[:, :lookback].copy(), windows[:, lookback:].copy()


# -- LSTM ----------------------------------------------------------------------

_GATES = ("i", "f", "o", "g")


@dataclass(eq=False)
class LstmParams:
    """Gate weights act on ``[x_t, h_{t-1}]`` (input first)."""

    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @property
    def hidden_size(self):
        return self.b_i.shape[0]

    @property
    def horizon(self):
        return self.b_out.shape[0]

    def arrays(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def __eq__(self, other):
        if not isinstance(other, LstmParams):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.arrays().values(), other.arrays().values()))

    def stacked(self):
        W = np.concatenate([self.W_i, self.W_f, self.W_o, self.W_g], axis=0)
        b = np.concatenate([self.b_i, self.b_f, self.b_o, self.b_g])
        return W, b

    @classmethod
    def zeros(cls, hidden_size, horizon):
        H = hidden_size
        return cls(
            *(np.zeros((H, 1 + H)) for _ in _GATES),
            *(np.zeros(H) for _ in _GATES),
            np.zeros((horizon, H)),
            np.zeros(horizon),
        )

    @classmethod
    def from_stacked(cls, W, b, W_out, b_out):
        H = b.shape[0] // 4
        Ws = [W[k * H:(k + 1) * H].copy() for k in range(4)]
        bs = [b[k * H:(k + 1) * H].copy() for k in range(4)]
        return cls(*Ws, *bs, W_out.copy(), b_out.copy())

    def map(self, fn, *others):
        out = {}
        for name, arr in self.arrays().items():
            out[name] = fn(arr, *(getattr(o, name) for o in others))
        return LstmParams(**out)


def init_lstm(hidden_size, horizon, rng):
    """Uniform(-k, k), ``k = 1/sqrt(hidden_size)``; forget bias set to 1."""
    H = hidden_size
    k = 1.0 / np.sqrt(H)
    W = rng.uniform(-k, k, size=(4 * H, 1 + H))
    b = rng.uniform(-k, k, size=4 * H)
    W_out = rng.uniform(-k, k, size=(horizon, H))
    b_out = rng.uniform(-k, k, size=horizon)
    params = LstmParams.from_stacked(W, b, W_out, b_out)
    params.b_f[:] = 1.0
    return params


@dataclass
class LstmCache:
    windows: np.ndarray
    xh: list
    gates: list        # (i, f, o, g) activations per step
    cells: list        # c_0 .. c_B
    tanh_cells: list   # tanh(c_1) .. tanh(c_B)
    h_last: np.ndarray


def _rowwise(a, b):
    # einsum without BLAS: each output row is computed the same way no
    # matter how many rows are in the batch
    return np.einsum("nh,hk->nk", a, b)


def lstm_forward_batch(params, windows, exact=False):
    """Run the cell over each row of ``windows`` (shape ``(N, B)``).

    With ``exact=True`` every row comes out bit-for-bit as it would if that
    window were evaluated alone; the default uses BLAS matmul, which is
    faster but may differ in the last bit between batch sizes.
    """
    x = np.asarray(windows, dtype=np.float64)
    mm = _rowwise if exact else np.matmul
    N, B = x.shape
    H = params.hidden_size
    W, b = params.stacked()
    Wh_t = W[:, 1:].T
    # input contribution for every step at once: (B, N, 4H)
    zx = x.T[:, :, None] * W[:, 0] + b
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    xh_list, gate_list, cells, tanh_cells = [], [], [c], []
    for t in range(B):
        xh = np.concatenate([x[:, t:t + 1], h], axis=1)
        z = zx[t] + mm(h, Wh_t)
        sig = expit(z[:, :3 * H])
        i, f, o = sig[:, :H], sig[:, H:2 * H], sig[:, 2 * H:]
        g = np.tanh(z[:, 3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        xh_list.append(xh)
        gate_list.append((i, f, o, g))
        cells.append(c)
        tanh_cells.append(tc)
    y = mm(h, params.W_out.T) + params.b_out
    if not np.all(np.isfinite(y)):
        raise NonFiniteActivation("LSTM produced a non-finite output")
    return y, LstmCache(x, xh_list, gate_list, cells, tanh_cells, h)


def lstm_forward(params, window):
    """Single-window forward pass; returns ``(prediction, cache)``."""
    y, cache = lstm_forward_batch(params, np.asarray(window, dtype=np.float64)[None, :], exact=True)
    return y[0], cache


def lstm_backward(params, cache, output_gradient):
    """Backpropagation through time.

    ``output_gradient`` is dLoss/dPrediction with the prediction's shape
    (``(F,)`` for a single window or ``(N, F)`` for a batch). Returns an
    :class:`LstmParams` of gradients.
    """
    dy = np.asarray(output_gradient, dtype=np.float64)
    if dy.ndim == 1:
        dy = dy[None, :]
    H = params.hidden_size
    W, _ = params.stacked()
    dW = np.zeros_like(W)
    db = np.zeros(4 * H)
    dW_out = dy.T @ cache.h_last
    db_out = dy.sum(axis=0)
    dh = dy @ params.W_out
    dc = np.zeros_like(dh)
    for t in range(len(cache.xh) - 1, -1, -1):
        i, f, o, g = cache.gates[t]
        tc = cache.tanh_cells[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * cache.cells[t] * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ],
            axis=1,
        )
        dW += dz.T @ cache.xh[t]
        db += dz.sum(axis=0)
        dh = (dz @ W)[:, 1:]
        dc = dc * f
    return LstmParams.from_stacked(dW, db, dW_out, db_out)


def mse_and_gradient(prediction, target):
    diff = prediction - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


# -- linear AR -----------------------------------------------------------------

@dataclass(eq=False)
class ArParams:
    """``pred[k] = intercept[k] + sum_j coef[k, j] * window[j]``."""

    coef: np.ndarray       # (F, B)
    intercept: np.ndarray  # (F,)

    def __eq__(self, other):
        if not isinstance(other, ArParams):
            return NotImplemented
        return np.array_equal(self.coef, other.coef) and np.array_equal(self.intercept, other.intercept)

    def arrays(self):
        return {"coef": self.coef, "intercept": self.intercept}


def ar_predict_batch(params, windows):
    x = np.asarray(windows, dtype=np.float64)
    # Explicit lag-by-lag accumulation so a row's result never depends on
    # how many windows are evaluated together.
    out = np.broadcast_to(params.intercept, (x.shape[0], params.intercept.size)).copy()
    for j in range(x.shape[1]):
        out += x[:, j:j + 1] * params.coef[:, j]
    return out


def fit_ar(inputs, targets):
    X = np.hstack([inputs, np.ones((inputs.shape[0], 1))])
    gram = X.T @ X + AR_RIDGE * np.eye(X.shape[1])
    beta = cho_solve(cho_factor(gram, lower=True), X.T @ targets)
    return ArParams(np.ascontiguousarray(beta[:-1].T), beta[-1].copy())


# -- common model --------------------------------------------------------------

@dataclass(eq=False)
class PredictorModel:
    kind: str
    config: PredictorConfig
    params: object
    loss_history: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}; expected one of {KINDS}")

    def __eq__(self, other):
        if not isinstance(other, PredictorModel):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.config == other.config
            and self.params == other.params
            and tuple(self.loss_history) == tuple(other.loss_history)
        )

    @property
    def lookback(self):
        return self.config.lookback

    @property
    def horizon(self):
        return self.config.horizon

    @property
    def train_mse(self):
        return self.loss_history[-1] if self.loss_history else float("nan")

    def predict_many(self, windows):
        """Predictions for each row of an ``(N, B)`` array."""
        x = np.asarray(windows, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.lookback:
            raise WrongWindowLength(f"expected windows of length {self.lookback}, got shape {x.shape}")
        if x.shape[0] == 0:
            return np.zeros((0, self.horizon))
        if self.kind == "lstm":
            return lstm_forward_batch(self.params, x, exact=True)[0]
        return ar_predict_batch(self.params, x)

    def predict(self, window):
        w = np.asarray(window, dtype=np.float64)
        if w.ndim != 1 or w.size != self.lookback:
            raise WrongWindowLength(f"expected a window of length {self.lookback}, got shape {w.shape}")
        return self.predict_many(w[None, :])[0]


def predict(model, window):
    return model.predict(window)


def untrained(kind, config):
    """Zero-parameter model of the given kind (predicts all zeros)."""
    if kind == "lstm":
        params = LstmParams.zeros(config.hidden_size, config.horizon)
    elif kind == "linear-ar":
        params = ArParams(np.zeros((config.horizon, config.lookback)), np.zeros(config.horizon))
    else:
        raise ValueError(f"unknown predictor kind {kind!r}")
    return PredictorModel(kind, config, params)


def _clip(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays().values()))
    if total > max_norm:
        scale = max_norm / total
        return grads.map(lambda a: a * scale)
    return grads


def _train_lstm(inputs, targets, cfg):
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = init_lstm(cfg.hidden_size, cfg.horizon, rng)

    def full_mse(p):
        return mse_and_gradient(lstm_forward_batch(p, inputs)[0], targets)[0]

    best_params, best_loss = params, full_mse(params)
    history = []
    n = inputs.shape[0]
    # divergence is caught by the finiteness checks below, not by fp warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            for start in range(0, n, cfg.batch_size):
                idx = slice(start, start + cfg.batch_size)
                try:
                    y, cache = lstm_forward_batch(params, inputs[idx])
                except NonFiniteActivation:
                    raise DivergedTraining(epoch) from None
                _, dy = mse_and_gradient(y, targets[idx])
                grads = _clip(lstm_backward(params, cache, dy), cfg.grad_clip)
                params = params.map(lambda p, g: p - cfg.learning_rate * g, grads)
            try:
                loss = full_mse(params)
            except NonFiniteActivation:
                raise DivergedTraining(epoch) from None
            if not np.isfinite(loss):
                raise DivergedTraining(epoch)
            history.append(loss)
            if loss < best_loss:
                best_params, best_loss = params, loss
    return best_params, tuple(history)


def train(kind, series, config=None):
    """Fit a predictor on every sliding pair of ``series``.

    For ``lstm`` the returned parameters are those of the epoch with the
    lowest full-data training loss (the initialization counts as epoch 0), so
    training never ends worse than it started.
    """
    config = config or PredictorConfig()
    inputs, targets = make_training_pairs(series, config.lookback, config.horizon)
    if kind == "lstm":
        params, history = _train_lstm(inputs, targets, config)
        return PredictorModel(kind, config, params, history)
    if kind == "linear-ar":
        params = fit_ar(inputs, targets)
        model = PredictorModel(kind, config, params)
        mse = mse_and_gradient(model.predict_many(inputs), targets)[0]
        return replace(model, loss_history=(mse,))
    raise ValueError(f"unknown predictor kind {kind!r}; expected one of {KINDS}")

"""Tiny 4-layer ReLU perceptron regressor trained with Adam, written against numpy.

Layer sizes follow ``(N_i, ceil(kappa*N_i), ceil(kappa*N_i), ceil(ceil(kappa*N_i)/2), 2)``.
The loss is the batch mean of the squared Euclidean error (summed over the two
outputs). Labels are used in meters, unscaled; inputs stay in radians and are
only re-wrapped per slot by :class:`AngleRecentering`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.pipeline import Pipeline
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class TrainingDivergedError(RuntimeError):
    pass


def build_architecture(n_input: int, kappa: float) -> tuple[int, int, int, int, int]:
    if n_input < 1:
        raise ValueError("n_input must be >= 1")
    # round first so that e.g. 0.9 * 10 does not ceil to 10 + 1 through float error
    h1 = math.ceil(round(kappa * n_input, 9))
    return (n_input, h1, h1, math.ceil(h1 / 2), 2)


@dataclass
class MlpConfig:
    n_input: int
    kappa: float = 0.9
    dropout_p: float = 0.1
    learning_rate: float = 0.003
    batch_fraction: float = 0.5
    epochs: int = 2000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_tol: float = 1e-6
    early_stop_patience: int = 100

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must be in (0, 1]")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must be in [0, 1)")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    trained: bool = False

    @classmethod
    def initialize(cls, layer_sizes, rng: np.random.Generator, output_bias=None) -> "MlpModel":
        """He-uniform weights (bound sqrt(6 / fan_in)); zero biases unless ``output_bias`` is given."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        if output_bias is not None:
            biases[-1][:] = output_bias
        return cls(tuple(layer_sizes), weights, biases)

    @classmethod
    def zeros(cls, layer_sizes) -> "MlpModel":
        return cls(tuple(layer_sizes),
                   [np.zeros((a, b)) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])],
                   [np.zeros(b) for b in layer_sizes[1:]])

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def forward(model: MlpModel, X) -> np.ndarray:
    """Inference pass (dropout off). Accepts one vector or a batch."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"expected {model.layer_sizes[0]} inputs, got {X.shape[1]}")
    a = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def loss_and_grads(model: MlpModel, X: np.ndarray, Y: np.ndarray,
                   dropout_p: float = 0.0, rng: np.random.Generator | None = None):
    """Loss and gradients (ordered like ``model.params``) for one batch."""
    acts = [X]
    masks = []
    a = X
    last = len(model.weights) - 1
    zs = []
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        zs.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
            if dropout_p > 0:
                keep = (rng.random(a.shape) >= dropout_p) / (1.0 - dropout_p)
                a = a * keep
                masks.append(keep)
            else:
                masks.append(None)
        else:
            a = z
        acts.append(a)
    n = X.shape[0]
    err = a - Y
    loss = float(np.sum(err ** 2) / n)
    delta = 2.0 * err / n
    grads = [None] * (2 * len(model.weights))
    for i in range(last, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i].T
            if masks[i - 1] is not None:
                delta = delta * masks[i - 1]
            delta = delta * (zs[i - 1] > 0)
    return loss, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Bias-corrected Adam update applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


@dataclass
class TrainReport:
    epoch_mse: list[float] = field(default_factory=list)
    final_mse: float | None = None
    wall_clock: float = 0.0


def train(model: MlpModel, X, Y, cfg: MlpConfig) -> TrainReport:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) == 0:
        raise ValueError("training data is empty")
    if not np.all(np.isfinite(Y)):
        raise ValueError("labels must be finite")
    report = TrainReport()
    if cfg.epochs == 0:
        return report
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed + 1)
    n = len(X)
    bs = max(1, math.ceil(cfg.batch_fraction * n))
    params = model.params
    state = AdamState.zeros_like(params)
    best, since = np.inf, 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s:s + bs]
            loss, grads = loss_and_grads(model, X[idx], Y[idx], cfg.dropout_p, rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at epoch {epoch}")
            adam_step(params, grads, state, cfg.learning_rate,
                      cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            total += loss * len(idx)
        mse = total / n
        report.epoch_mse.append(mse)
        if mse < best - cfg.early_stop_tol:
            best, since = mse, 0
        else:
            since += 1
            if since >= cfg.early_stop_patience:
                break
    model.trained = True
    report.final_mse = report.epoch_mse[-1]
    report.wall_clock = time.perf_counter() - start
    return report


class TinyMLPRegressor(BaseEstimator, RegressorMixin):
    """scikit-learn wrapper around :func:`train` and :func:`forward`.

    Parameters mirror :class:`MlpConfig`; the input width is taken from ``X``
    at fit time. ``init_output_bias="label_mean"`` starts the output layer's
    bias at the mean training label ("zero" for a plain zero bias): labels are
    positions of up to ~20 m and Adam moves a bias by at most about the
    learning rate per step. ``scene_fingerprint``, when set, is stored with
    the model and checked on load.
    """

    def __init__(self, kappa=0.9, dropout_p=0.1, learning_rate=0.003, batch_fraction=0.5,
                 epochs=2000, seed=0, adam_beta1=0.9, adam_beta2=0.999, adam_eps=1e-8,
                 early_stop_tol=1e-6, early_stop_patience=100, init_output_bias="label_mean",
                 scene_fingerprint=None):
        self.kappa = kappa
        self.dropout_p = dropout_p
        self.learning_rate = learning_rate
        self.batch_fraction = batch_fraction
        self.epochs = epochs
        self.seed = seed
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.early_stop_tol = early_stop_tol
        self.early_stop_patience = early_stop_patience
        self.init_output_bias = init_output_bias
        self.scene_fingerprint = scene_fingerprint

    def _config(self, n_input: int) -> MlpConfig:
        params = self.get_params()
        del params["scene_fingerprint"], params["init_output_bias"]
        return MlpConfig(n_input=n_input, **params)

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = y.reshape(len(y), -1)
        if y.shape[1] != 2:
            raise ValueError("labels must be 2-D positions")
        cfg = self._config(X.shape[1])
        if self.init_output_bias == "label_mean":
            bias = y.mean(axis=0)
        elif self.init_output_bias == "zero":
            bias = None
        else:
            raise ValueError(f"init_output_bias must be 'label_mean' or 'zero', got {self.init_output_bias!r}")
        self.model_ = MlpModel.initialize(build_architecture(X.shape[1], cfg.kappa),
                                          np.random.default_rng(cfg.seed), output_bias=bias)
        self.report_ = train(self.model_, X, y, cfg)
        self.loss_curve_ = list(self.report_.epoch_mse)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return forward(self.model_, X)

    @property
    def layer_sizes_(self):
        check_is_fitted(self, "model_")
        return self.model_.layer_sizes


class AngleRecentering(TransformerMixin, BaseEstimator):
    """Move each input slot's wrap cut opposite to that slot's circular mean.

    Visible ADoA values are re-wrapped into ``(c_j - pi, c_j + pi]`` where
    ``c_j`` is the circular mean of slot ``j`` over the fitted data, so that
    noise near +-pi does not flip an input by 2*pi. Zero (masked) entries stay
    zero, and a visible exact zero also maps to zero.
    """

    def fit(self, X, y=None):
        X = check_array(X)
        visible = X != 0.0
        z = np.where(visible, np.exp(1j * X), 0.0).sum(axis=0)
        self.centers_ = np.where(visible.any(axis=0), np.angle(z), 0.0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "centers_")
        X = check_array(X)
        shifted = np.mod(X - self.centers_ + np.pi, 2 * np.pi) - np.pi
        shifted = np.where(shifted == -np.pi, np.pi, shifted)
        return np.where(X != 0.0, shifted + self.centers_, 0.0)


def make_localizer_net(**params) -> Pipeline:
    """Recentering followed by the tiny MLP; ``params`` go to :class:`TinyMLPRegressor`."""
    return Pipeline([("recenter", AngleRecentering()), ("mlp", TinyMLPRegressor(**params))])

"""Choosing the active section model along a track.

Two schemes are provided:

* ``kf``: a constant-velocity Kalman filter follows the active model's fixes;
  when the NIS of a fix exceeds ``eta`` every model is queried and the one
  closest to the filter's prediction becomes active.
* ``odd``: when consecutive fixes jump by more than ``zeta`` meters, every
  model is queried and the one whose fix is most in-distribution (Mahalanobis
  distance to that model's own training-label statistics) becomes active.
  Candidates within ``tie_tolerance`` of the best distance are resolved by
  proximity to the previous fix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .bootstrap import LabelStats, compute_label_stats
from .geometry import Section
from .tinynn import make_localizer_net
from .tracking import H, KalmanState, KfConfig, initial_state, predict, update


class ConfigError(ValueError):
    pass


@dataclass
class ModelBank:
    models: list
    stats: list[LabelStats]
    sections: list[Section | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.models:
            raise ConfigError("model bank is empty")
        if not self.sections:
            self.sections = [None] * len(self.models)
        if not (len(self.models) == len(self.stats) == len(self.sections)):
            raise ConfigError("models, stats and sections must have equal length")

    def __len__(self):
        return len(self.models)

    def estimates(self, x) -> np.ndarray:
        """Fix from every model for one encoded input, shape (M, 2)."""
        row = np.asarray(x, dtype=float).reshape(1, -1)
        return np.vstack([np.asarray(m.predict(row), dtype=float).reshape(2) for m in self.models])

    def nearest_mean(self, position) -> int:
        mus = np.array([s.mu for s in self.stats])
        return int(np.argmin(np.linalg.norm(mus - np.asarray(position, dtype=float), axis=1)))


@dataclass(frozen=True)
class SwitchConfig:
    eta: float = 2.0
    zeta: float = 1.0
    tie_tolerance: float = 0.5
    cooldown: int = 3
    cov_inflation: float = 4.0

    def __post_init__(self):
        if self.eta <= 0 or self.zeta <= 0:
            raise ConfigError("eta and zeta must be positive")
        if self.tie_tolerance < 0 or self.cooldown < 0 or self.cov_inflation < 1:
            raise ConfigError("invalid tie_tolerance, cooldown or cov_inflation")


@dataclass(frozen=True)
class SwitchEvent:
    k: int
    from_model: int
    to_model: int
    trigger: str  # "kf-beta" | "odd-jump"
    metrics: tuple[float, ...]


@dataclass
class StepTrace:
    k: int
    active: int
    estimate: np.ndarray
    per_model: np.ndarray
    triggered: bool = False
    beta: float = float("nan")
    delta: float = float("nan")
    jump: float = float("nan")
    predicted: np.ndarray | None = None
    metrics: np.ndarray | None = None
    state: np.ndarray | None = None  # KF posterior after the step (kf scheme)


def select_model(metrics) -> int:
    """Index of the smallest metric; exact ties go to the lowest index."""
    return int(np.argmin(np.asarray(metrics, dtype=float)))


def select_odd(rho, dist_to_prev, tie_tolerance: float) -> int:
    """Smallest Mahalanobis distance, near-ties broken by distance to the previous fix."""
    rho = np.asarray(rho, dtype=float)
    dist = np.asarray(dist_to_prev, dtype=float)
    cand = np.flatnonzero(rho <= rho.min() + tie_tolerance)
    return int(cand[select_model(dist[cand])])


def kf_switch_step(bank: ModelBank, active: int, state: KalmanState, x, kf_cfg: KfConfig,
                   cfg: SwitchConfig, k: int = 0, armed: bool = True):
    """One step of the KF scheme; returns (estimate, new state, active, event or None, trace)."""
    per = bank.estimates(x)
    pred = predict(state, kf_cfg)
    post, rec = update(pred, per[active], kf_cfg)
    trace = StepTrace(k, active, per[active], per, beta=rec.beta, delta=rec.delta,
                      predicted=H @ pred.s)
    event = None
    if armed and rec.beta > cfg.eta:
        deltas = np.linalg.norm(per - H @ pred.s, axis=1)
        best = select_model(deltas)
        trace.triggered = True
        trace.metrics = deltas
        if best != active:
            post, _ = update(pred, per[best], kf_cfg)
            post = KalmanState(post.s, post.P * cfg.cov_inflation, post.t)
            event = SwitchEvent(k, active, best, "kf-beta", tuple(deltas.tolist()))
            active = best
    trace.active = active
    trace.estimate = per[active]
    trace.state = post.s
    return per[active], post, active, event, trace


def odd_switch_step(bank: ModelBank, active: int, prev_estimate, x, cfg: SwitchConfig,
                    k: int = 0, armed: bool = True):
    """One step of the ODD scheme; returns (estimate, active, event or None, trace)."""
    per = bank.estimates(x)
    prev = np.asarray(prev_estimate, dtype=float)
    jump = float(np.linalg.norm(per[active] - prev))
    trace = StepTrace(k, active, per[active], per, jump=jump)
    event = None
    if armed and jump > cfg.zeta:
        rho = np.array([s.mahalanobis(p)[0] for s, p in zip(bank.stats, per)])
        best = select_odd(rho, np.linalg.norm(per - prev, axis=1), cfg.tie_tolerance)
        trace.triggered = True
        trace.metrics = rho
        if best != active:
            event = SwitchEvent(k, active, best, "odd-jump", tuple(rho.tolist()))
            active = best
    trace.active = active
    trace.estimate = per[active]
    return per[active], active, event, trace


@dataclass
class TrackResult:
    scheme: str
    initial_model: int
    estimates: np.ndarray
    active: np.ndarray
    events: list[SwitchEvent]
    traces: list[StepTrace]

    @property
    def per_model(self) -> np.ndarray:
        return np.stack([t.per_model for t in self.traces])


def run_track(bank: ModelBank, X, scheme: str = "kf", kf_cfg: KfConfig | None = None,
              cfg: SwitchConfig | None = None, initial_model: int = 0) -> TrackResult:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ConfigError("empty track")
    if scheme not in ("kf", "odd"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    if not 0 <= initial_model < len(bank):
        raise ConfigError(f"initial model {initial_model} not in bank")
    kf_cfg = kf_cfg or KfConfig()
    cfg = cfg or SwitchConfig()
    active = initial_model
    per = bank.estimates(X[0])
    est = per[active]
    state = initial_state(est, kf_cfg)
    traces = [StepTrace(0, active, est, per, predicted=est, state=state.s)]
    estimates = [est]
    actives = [active]
    events: list[SwitchEvent] = []
    hold = 0
    for k in range(1, len(X)):
        armed = hold == 0
        hold = max(hold - 1, 0)
        if scheme == "kf":
            est, state, active, ev, tr = kf_switch_step(bank, active, state, X[k], kf_cfg, cfg,
                                                        k, armed)
        else:
            est, active, ev, tr = odd_switch_step(bank, active, estimates[-1], X[k], cfg, k, armed)
        if ev is not None:
            events.append(ev)
            hold = cfg.cooldown
        traces.append(tr)
        estimates.append(est)
        actives.append(active)
    return TrackResult(scheme, initial_model, np.array(estimates), np.array(actives), events, traces)


def replay(initial_model: int, events: Sequence[SwitchEvent], per_model: np.ndarray):
    """Rebuild the active-model and estimate sequences from switch events alone."""
    n = len(per_model)
    active = np.empty(n, dtype=int)
    cur = initial_model
    by_step = {e.k: e for e in events}
    for k in range(n):
        if k in by_step:
            cur = by_step[k].to_model
        active[k] = cur
    return active, per_model[np.arange(n), active]


class MultiNNLocalizer(BaseEstimator, RegressorMixin):
    """One tiny MLP per section plus a switching rule, as a single estimator.

    ``fit(X, y, groups)`` trains one model per distinct group label and keeps
    the label statistics of each group. ``predict(X)`` treats the rows of ``X``
    as consecutive steps of one track.

    ``mlp_params`` is either one dict shared by every section or a dict keyed by
    group label.
    """

    def __init__(self, scheme="kf", eta=2.0, zeta=1.0, tie_tolerance=0.5, cooldown=3,
                 cov_inflation=4.0, process_noise_q=0.5, obs_noise_std=0.5, mlp_params=None,
                 initial_model=None):
        self.scheme = scheme
        self.eta = eta
        self.zeta = zeta
        self.tie_tolerance = tie_tolerance
        self.cooldown = cooldown
        self.cov_inflation = cov_inflation
        self.process_noise_q = process_noise_q
        self.obs_noise_std = obs_noise_std
        self.mlp_params = mlp_params
        self.initial_model = initial_model

    def _params_for(self, g):
        p = self.mlp_params or {}
        if p and all(k in p for k in self.groups_):
            return dict(p[g])
        return dict(p)

    def fit(self, X, y, groups):
        X = check_array(X)
        y = np.asarray(y, dtype=float).reshape(len(X), 2)
        groups = np.asarray(groups)
        self.groups_ = sorted(np.unique(groups).tolist())
        models, stats = [], []
        for g in self.groups_:
            sel = groups == g
            models.append(make_localizer_net(**self._params_for(g)).fit(X[sel], y[sel]))
            stats.append(compute_label_stats(y[sel]))
        self.bank_ = ModelBank(models, stats)
        self.n_features_in_ = X.shape[1]
        return self

    def configs(self) -> tuple[KfConfig, SwitchConfig]:
        kf = KfConfig(process_noise_q=self.process_noise_q,
                      obs_noise_v=self.obs_noise_std ** 2 * np.eye(2))
        sw = SwitchConfig(self.eta, self.zeta, self.tie_tolerance, self.cooldown,
                          self.cov_inflation)
        return kf, sw

    def run(self, X, initial_position=None) -> TrackResult:
        check_is_fitted(self, "bank_")
        X = check_array(X)
        if initial_position is not None:
            init = self.bank_.nearest_mean(initial_position)
        else:
            init = 0 if self.initial_model is None else int(self.initial_model)
        kf, sw = self.configs()
        self.result_ = run_track(self.bank_, X, self.scheme, kf, sw, init)
        return self.result_

    def predict(self, X, initial_position=None):
        return self.run(X, initial_position).estimates

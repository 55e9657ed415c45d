"""Constant-velocity Kalman filter over 2-D position fixes, with NIS bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# observe x and y out of [x, vx, y, vy]
H = np.array([[1.0, 0.0, 0.0, 0.0],
              [0.0, 0.0, 1.0, 0.0]])


class FilterDegenerateError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KfConfig:
    dt: float = 1.0
    process_noise_q: float = 0.5
    obs_noise_v: np.ndarray = field(default_factory=lambda: 0.25 * np.eye(2))
    initial_cov: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        v = np.asarray(self.obs_noise_v, dtype=float)
        if v.ndim == 0:
            v = float(v) * np.eye(2)
        object.__setattr__(self, "obs_noise_v", v)
        object.__setattr__(self, "initial_cov", np.asarray(self.initial_cov, dtype=float))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.process_noise_q < 0:
            raise ValueError("process_noise_q must be non-negative")
        if v.shape != (2, 2) or not np.allclose(v, v.T) or np.linalg.eigvalsh(v).min() <= 0:
            raise ValueError("obs_noise_v must be a symmetric positive definite 2x2 matrix")


def transition_matrix(dt: float) -> np.ndarray:
    return np.kron(np.eye(2), np.array([[1.0, dt], [0.0, 1.0]]))


def process_noise(dt: float, q: float) -> np.ndarray:
    """White-acceleration CV discretization, per axis ``q * [[dt^3/3, dt^2/2], [dt^2/2, dt]]``."""
    block = np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0], [dt ** 2 / 2.0, dt]])
    return np.kron(np.eye(2), q * block)


@dataclass(frozen=True)
class KalmanState:
    s: np.ndarray
    P: np.ndarray
    t: int = 0

    @property
    def position(self) -> np.ndarray:
        return H @ self.s


@dataclass(frozen=True)
class InnovationRecord:
    y_hat: np.ndarray
    G: np.ndarray
    K: np.ndarray
    beta: float
    delta: float


def _symmetrize(P):
    return 0.5 * (P + P.T)


def initial_state(first_fix, cfg: KfConfig) -> KalmanState:
    x, y = np.asarray(first_fix, dtype=float)
    return KalmanState(np.array([x, 0.0, y, 0.0]), cfg.initial_cov.copy(), 0)


def predict(state: KalmanState, cfg: KfConfig) -> KalmanState:
    F = transition_matrix(cfg.dt)
    P = F @ state.P @ F.T + process_noise(cfg.dt, cfg.process_noise_q)
    return KalmanState(F @ state.s, _symmetrize(P), state.t + 1)


def update(state: KalmanState, meas, cfg: KfConfig) -> tuple[KalmanState, InnovationRecord]:
    z = np.asarray(meas, dtype=float)
    y_hat = z - H @ state.s
    G = H @ state.P @ H.T + cfg.obs_noise_v
    G = _symmetrize(G)
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > 1e12:
        raise FilterDegenerateError("innovation covariance is numerically singular")
    G_inv_y = np.linalg.solve(G, y_hat)
    K = np.linalg.solve(G, H @ state.P).T  # P H^T G^-1, G symmetric
    s = state.s + K @ y_hat
    P = _symmetrize((np.eye(4) - K @ H) @ state.P)
    beta = float(y_hat @ G_inv_y)
    delta = float(np.linalg.norm(y_hat))
    return KalmanState(s, P, state.t), InnovationRecord(y_hat, G, K, max(beta, 0.0), delta)


def nis_consistency(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("no innovation records")
    return float(np.mean([r.beta for r in records]))


class ConstantVelocityKF:
    """Stateful convenience wrapper that keeps the step history."""

    def __init__(self, cfg: KfConfig | None = None):
        self.cfg = cfg or KfConfig()
        self.state: KalmanState | None = None
        self.records: list[InnovationRecord] = []

    def step(self, fix) -> InnovationRecord | None:
        if self.state is None:
            self.state = initial_state(fix, self.cfg)
            return None
        pred = predict(self.state, self.cfg)
        self.state, rec = update(pred, fix, self.cfg)
        self.records.append(rec)
        return rec

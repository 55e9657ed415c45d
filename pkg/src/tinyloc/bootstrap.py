"""Self-supervised labels from a geometric ADoA least-squares localizer.

The localizer knows the simulated anchor positions; ``label_noise_std`` adds
Gaussian position noise to the produced labels so that the label error level
of an environment-agnostic bootstrap can be emulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .geometry import Anchor, RoomPolygon
from .measurements import AdoaVector, InsufficientMeasurementsError, wrap_angle

STATS_EPS = 1e-6


class BootstrapFailure(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


def adoa_objective(points, v: AdoaVector, anchor_xy: np.ndarray) -> np.ndarray:
    """Sum of squared wrapped ADoA residuals at each candidate point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    slots = np.flatnonzero(v.mask)
    diff_j = anchor_xy[slots][None, :, :] - pts[:, None, :]
    diff_r = anchor_xy[v.reference_anchor][None, :] - pts
    phi_j = np.arctan2(diff_j[..., 1], diff_j[..., 0])
    phi_r = np.arctan2(diff_r[:, 1], diff_r[:, 0])
    res = wrap_angle(phi_j - phi_r[:, None] - v.values[slots][None, :])
    return np.sum(np.atleast_2d(res) ** 2, axis=1)


@dataclass(frozen=True)
class LocalizeResult:
    position: np.ndarray
    residual: float
    degraded: bool


class AdoaLocalizer:
    """Grid search plus Nelder-Mead refinement of the ADoA least-squares objective."""

    def __init__(self, anchors: Sequence[Anchor], room: RoomPolygon, pitch: float = 0.5,
                 xatol: float = 1e-3, n_starts: int = 3):
        self.anchor_xy = np.array([a.position for a in anchors], dtype=float)
        self.room = room
        self.pitch = pitch
        self.xatol = xatol
        self.n_starts = n_starts
        self.grid = room.grid(pitch)

    def localize(self, v: AdoaVector) -> LocalizeResult:
        if v.n_visible < 3:
            raise InsufficientMeasurementsError(f"need >= 3 ADoAs, got {v.n_visible}")
        cost = adoa_objective(self.grid, v, self.anchor_xy)
        order = np.argsort(cost, kind="stable")
        starts = [order[0]]
        for idx in order[1:]:
            if len(starts) == self.n_starts:
                break
            if np.min(np.linalg.norm(self.grid[starts] - self.grid[idx], axis=1)) > 2 * self.pitch:
                starts.append(idx)

        def f(p):
            return float(adoa_objective(p, v, self.anchor_xy)[0])

        best = None
        for idx in starts:
            x0 = self.grid[idx]
            simplex = np.array([x0, x0 + [self.pitch / 2, 0.0], x0 + [0.0, self.pitch / 2]])
            res = minimize(f, x0, method="Nelder-Mead",
                           options=dict(xatol=self.xatol, fatol=1e-14, initial_simplex=simplex,
                                        maxiter=2000))
            if not self.room.contains(res.x)[0]:
                continue
            if best is None or res.fun < best[1]:
                best = (res.x, float(res.fun))
        if best is None:
            x0 = self.grid[order[0]]
            return LocalizeResult(x0.copy(), float(cost[order[0]]), True)
        return LocalizeResult(np.asarray(best[0], dtype=float), best[1], False)

    def predict(self, vectors: Sequence[AdoaVector]) -> np.ndarray:
        return np.array([self.localize(v).position for v in vectors])


def brute_force_localize(v: AdoaVector, anchor_xy: np.ndarray, room: RoomPolygon,
                         pitch: float = 0.01, chunk: int = 200_000) -> np.ndarray:
    """Exhaustive grid argmin of the objective; slow, used as a test oracle."""
    pts = room.grid(pitch)
    best, best_cost = None, np.inf
    for i in range(0, len(pts), chunk):
        c = adoa_objective(pts[i:i + chunk], v, anchor_xy)
        j = int(np.argmin(c))
        if c[j] < best_cost:
            best, best_cost = pts[i + j], c[j]
    return best


@dataclass
class LabelSet:
    section_id: int
    point_index: np.ndarray  # index into the section's training set
    positions: np.ndarray    # (n, 2) labels after optional corruption
    residuals: np.ndarray
    degraded: np.ndarray     # per input, True where dropped
    n_degraded: int

    def __len__(self):
        return len(self.positions)


def build_label_set(section_id: int, vectors: Sequence[AdoaVector], localizer: AdoaLocalizer,
                    label_noise_std: float = 0.0,
                    rng: np.random.Generator | None = None) -> LabelSet:
    """Localize every training vector; degraded or unlocalizable points are dropped."""
    if len(vectors) == 0:
        raise InsufficientDataError("no training data")
    pos, res, keep = [], [], []
    degraded = np.zeros(len(vectors), dtype=bool)
    for i, v in enumerate(vectors):
        try:
            r = localizer.localize(v)
        except InsufficientMeasurementsError:
            degraded[i] = True
            continue
        if r.degraded:
            degraded[i] = True
            continue
        pos.append(r.position)
        res.append(r.residual)
        keep.append(i)
    n_bad = int(degraded.sum())
    if n_bad > 0.5 * len(vectors):
        raise BootstrapFailure(f"section {section_id}: {n_bad}/{len(vectors)} points degraded")
    pos = np.array(pos, dtype=float).reshape(-1, 2)
    if label_noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        pos = pos + rng.normal(0.0, label_noise_std, size=pos.shape)
    return LabelSet(section_id, np.array(keep, dtype=int), pos,
                    np.array(res, dtype=float), degraded, n_bad)


@dataclass(frozen=True)
class LabelStats:
    mu: np.ndarray
    sigma: np.ndarray

    def mahalanobis(self, x) -> np.ndarray:
        d = np.atleast_2d(np.asarray(x, dtype=float)) - self.mu
        sol = np.linalg.solve(self.sigma, d.T).T
        return np.sqrt(np.maximum(np.sum(d * sol, axis=1), 0.0))

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelStats":
        return cls(np.asarray(d["mu"], dtype=float), np.asarray(d["sigma"], dtype=float))


def compute_label_stats(labels, eps: float = STATS_EPS) -> LabelStats:
    """Sample mean and covariance of label positions, regularized by ``eps * I`` if near-singular."""
    pos = labels.positions if isinstance(labels, LabelSet) else np.asarray(labels, dtype=float)
    pos = np.asarray(pos, dtype=float).reshape(-1, 2)
    if len(pos) < 3:
        raise InsufficientDataError(f"need >= 3 labels, got {len(pos)}")
    mu = pos.mean(axis=0)
    sigma = np.cov(pos, rowvar=False)
    sigma = 0.5 * (sigma + sigma.T)
    if np.linalg.eigvalsh(sigma).min() < eps:
        sigma = sigma + eps * np.eye(2)
    return LabelStats(mu, sigma)

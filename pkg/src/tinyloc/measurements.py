"""AoA perturbation and angle-difference-of-arrival (ADoA) feature vectors.

Encoding convention: slot ``j`` of an encoded vector belongs to global anchor
id ``j`` (so ``N_i`` equals the scene's anchor count). Slots of anchors that
are not visible, and the reference anchor's own slot, hold 0; visible slots
hold the wrapped ADoA in radians.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import visible_anchors

SENTINEL = 0.0


class InsufficientMeasurementsError(ValueError):
    pass


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float = np.deg2rad(5.0)
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class AoaSet:
    ids: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=int).reshape(-1)
        angles = wrap_angle(np.asarray(self.angles, dtype=float).reshape(-1))
        angles = np.atleast_1d(angles)
        if ids.shape != angles.shape:
            raise ValueError("ids and angles must have equal length")
        if np.any(np.diff(ids) <= 0):
            raise ValueError("anchor ids must be unique and sorted ascending")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, float]]) -> "AoaSet":
        pairs = sorted(pairs)
        return cls(np.array([p[0] for p in pairs], dtype=int),
                   np.array([p[1] for p in pairs], dtype=float))

    def __len__(self):
        return len(self.ids)


def perturb_aoa(aoas: AoaSet, cfg: NoiseConfig, rng: np.random.Generator) -> AoaSet:
    if cfg.sigma == 0:
        return aoas
    noise = rng.normal(0.0, cfg.sigma, size=len(aoas))
    return AoaSet(aoas.ids.copy(), aoas.angles + noise)


def lowest_id_reference(aoas: AoaSet) -> int:
    return int(aoas.ids[0])


@dataclass(frozen=True)
class AdoaVector:
    values: np.ndarray
    mask: np.ndarray
    reference_anchor: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != mask.shape or values.ndim != 1:
            raise ValueError("values and mask must be 1-D and equally long")
        if not 0 <= self.reference_anchor < len(values):
            raise ValueError("reference anchor outside the vector")
        if mask[self.reference_anchor]:
            raise ValueError("reference anchor slot must be masked")
        if np.any(values[~mask] != SENTINEL):
            raise ValueError("masked slots must carry the sentinel")
        vis = values[mask]
        if np.any(vis <= -np.pi) or np.any(vis > np.pi):
            raise ValueError("ADoA values must lie in (-pi, pi]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n_input(self) -> int:
        return len(self.values)

    @property
    def n_visible(self) -> int:
        return int(self.mask.sum())


def compute_adoa(aoas: AoaSet, n_anchors: int,
                 reference_policy: Callable[[AoaSet], int] = lowest_id_reference) -> AdoaVector:
    """ADoA of every visible anchor against the policy's reference, slotted by anchor id."""
    if len(aoas) < 2:
        raise InsufficientMeasurementsError(f"need >= 2 visible anchors, got {len(aoas)}")
    ref = reference_policy(aoas)
    ref_pos = np.flatnonzero(aoas.ids == ref)
    if len(ref_pos) != 1:
        raise ValueError(f"reference anchor {ref} is not among the measured anchors")
    values = np.zeros(n_anchors)
    mask = np.zeros(n_anchors, dtype=bool)
    others = aoas.ids != ref
    values[aoas.ids[others]] = wrap_angle(aoas.angles[others] - aoas.angles[ref_pos[0]])
    mask[aoas.ids[others]] = True
    return AdoaVector(values, mask, ref)


def encode_input(v: AdoaVector) -> np.ndarray:
    return np.where(v.mask, v.values, SENTINEL)


def decode_input(x, mask, reference_anchor: int) -> AdoaVector:
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    return AdoaVector(np.where(mask, x, SENTINEL), mask, reference_anchor)


def stack_inputs(vectors: Sequence[AdoaVector]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encoded design matrix, mask matrix and reference ids for a list of ADoA vectors."""
    X = np.vstack([encode_input(v) for v in vectors])
    M = np.vstack([v.mask for v in vectors])
    refs = np.array([v.reference_anchor for v in vectors], dtype=int)
    return X, M, refs


def unstack_inputs(X, M, refs) -> list[AdoaVector]:
    return [decode_input(x, m, int(r)) for x, m, r in zip(X, M, refs)]


@dataclass(frozen=True)
class Measurement:
    """Everything observed at one client location."""

    position: np.ndarray
    true_aoa: AoaSet
    noisy_aoa: AoaSet
    adoa: AdoaVector


def measure(scene, position, cfg: NoiseConfig, rng: np.random.Generator,
            reference_policy: Callable[[AoaSet], int] = lowest_id_reference) -> Measurement:
    """Ray-trace the visible anchors at ``position`` and build its noisy ADoA vector."""
    true = AoaSet.from_pairs(visible_anchors(scene.room, scene.anchors, position))
    noisy = perturb_aoa(true, cfg, rng)
    adoa = compute_adoa(noisy, scene.n_anchors, reference_policy)
    return Measurement(np.asarray(position, dtype=float), true, noisy, adoa)

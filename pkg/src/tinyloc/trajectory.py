"""Training-location sampling and waypoint test tracks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import GeometryError, RoomPolygon, Section, as_point


class InvalidTrackError(GeometryError):
    pass


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray          # seconds, shape (n,)
    positions: np.ndarray  # meters, shape (n, 2)
    dt: float = 1.0

    def __len__(self):
        return len(self.t)


def generate_training_locations(section: Section, room: RoomPolygon, n: int,
                                rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform on section ∩ room (rejection sampling over the section box)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xmin, ymin, xmax, ymax = section.bounds
    out: list[np.ndarray] = []
    have, tries = 0, 0
    while have < n:
        batch = rng.uniform((xmin, ymin), (xmax, ymax), size=(max(64, 2 * (n - have)), 2))
        keep = batch[room.strictly_contains(batch)]
        out.append(keep)
        have += len(keep)
        tries += 1
        if tries > 50 and have == 0:
            raise GeometryError(f"section {section.id} does not intersect the room")
    return np.vstack(out)[:n]


def generate_test_track(waypoints: Sequence, speed: float, dt: float, room: RoomPolygon,
                        speed_jitter: float = 0.0,
                        rng: np.random.Generator | None = None) -> Trajectory:
    """Sample a polyline at constant speed every ``dt`` seconds.

    ``speed_jitter`` is the relative std of a per-step multiplicative speed
    perturbation (default off); jittered steps never exceed ``speed * dt``.
    """
    if speed <= 0 or dt <= 0:
        raise ValueError("speed and dt must be positive")
    wps = np.array([as_point(w) for w in waypoints])
    if len(wps) == 0:
        raise InvalidTrackError("need at least one waypoint")
    if not room.strictly_contains(wps).all():
        raise InvalidTrackError("waypoints must lie strictly inside the room")
    for a, b in zip(wps[:-1], wps[1:]):
        if not room.line_of_sight(a, b):
            raise InvalidTrackError(f"waypoints {tuple(a)} -> {tuple(b)} are blocked by a wall")
    seg = np.linalg.norm(np.diff(wps, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    step = speed * dt
    if speed_jitter > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        arcs = [0.0]
        while arcs[-1] < total:
            f = np.clip(1.0 + speed_jitter * rng.standard_normal(), 0.1, 1.0)
            arcs.append(arcs[-1] + f * step)
        s = np.array(arcs[:-1])
    else:
        s = np.arange(0.0, total + 1e-9, step)
    pos = np.column_stack([np.interp(s, cum, wps[:, 0]), np.interp(s, cum, wps[:, 1])])
    return Trajectory(np.arange(len(s)) * dt, pos, dt)

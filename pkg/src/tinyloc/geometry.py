"""2-D room geometry: polygon rooms, sections, access points and image-method anchors."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

BOUNDARY_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometry, scene, or query."""


class Point2(NamedTuple):
    x: float
    y: float


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise GeometryError(f"expected a finite 2-D point, got {p!r}")
    return arr


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class Wall:
    endpoint_a: Point2
    endpoint_b: Point2
    id: int

    def __post_init__(self):
        if np.hypot(self.endpoint_b[0] - self.endpoint_a[0],
                    self.endpoint_b[1] - self.endpoint_a[1]) == 0.0:
            raise GeometryError(f"wall {self.id} has zero length")

    @property
    def length(self) -> float:
        return float(np.hypot(self.endpoint_b[0] - self.endpoint_a[0],
                              self.endpoint_b[1] - self.endpoint_a[1]))


def mirror_point(p, wall: Wall) -> Point2:
    """Reflect ``p`` across the infinite line supporting ``wall``."""
    a = np.asarray(wall.endpoint_a, dtype=float)
    d = np.asarray(wall.endpoint_b, dtype=float) - a
    dd = float(d @ d)
    if dd == 0.0:
        raise GeometryError(f"wall {wall.id} has zero length")
    p = as_point(p)
    foot = a + d * (float((p - a) @ d) / dd)
    q = 2.0 * foot - p
    return Point2(float(q[0]), float(q[1]))


def segments_intersect(p0, p1, q0, q1, tol: float = 1e-12) -> np.ndarray | None:
    """Intersection point of closed segments p0-p1 and q0-q1, or None.

    Collinear overlaps return the overlap point nearest ``p0``.
    """
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))
    r, s = p1 - p0, q1 - q0
    denom = _cross(r, s)
    qp = q0 - p0
    if abs(denom) > tol:
        t = _cross(qp, s) / denom
        u = _cross(qp, r) / denom
        if -tol <= t <= 1 + tol and -tol <= u <= 1 + tol:
            return p0 + np.clip(t, 0.0, 1.0) * r
        return None
    if abs(_cross(qp, r)) > tol * max(1.0, np.linalg.norm(r)):
        return None
    rr = float(r @ r)
    if rr == 0.0:
        return None
    t0, t1 = sorted((float(qp @ r) / rr, float((q1 - p0) @ r) / rr))
    lo, hi = max(t0, 0.0), min(t1, 1.0)
    if lo > hi + tol:
        return None
    return p0 + lo * r


@dataclass(frozen=True)
class RoomPolygon:
    """Simple polygon room; vertices counterclockwise, wall ``i`` joins vertex i and i+1."""

    vertices: tuple[Point2, ...]
    walls: tuple[Wall, ...] = field(init=False, repr=False)

    def __post_init__(self):
        verts = tuple(Point2(*map(float, as_point(v))) for v in self.vertices)
        if len(verts) < 3:
            raise GeometryError("a room needs at least 3 vertices")
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        walls = tuple(Wall(verts[i], verts[(i + 1) % n], i) for i in range(n))
        object.__setattr__(self, "walls", walls)
        if self.signed_area() <= 0:
            raise GeometryError("room vertices must be ordered counterclockwise")
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                wi, wj = walls[i], walls[j]
                if segments_intersect(wi.endpoint_a, wi.endpoint_b,
                                      wj.endpoint_a, wj.endpoint_b) is not None:
                    raise GeometryError(f"walls {i} and {j} intersect; polygon is not simple")

    @property
    def vertex_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def _edges(self):
        a = self.vertex_array
        return a, np.roll(a, -1, axis=0)

    def signed_area(self) -> float:
        a, b = self._edges()
        return 0.5 * float(np.sum(_cross(a, b)))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        v = self.vertex_array
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))

    def boundary_distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self._edges()
        d = b - a
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.sum(rel * d, axis=-1) / np.sum(d * d, axis=-1), 0.0, 1.0)
        foot = a[None] + t[..., None] * d[None]
        return np.min(np.linalg.norm(pts[:, None, :] - foot, axis=-1), axis=1)

    def contains(self, points, tol: float = BOUNDARY_TOL) -> np.ndarray:
        """Closed point-in-polygon test (points within ``tol`` of a wall are inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self._edges()
        px, py = pts[:, 0:1], pts[:, 1:2]
        ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
        crossings = np.sum(straddle & (px < x_cross), axis=1)
        inside = (crossings % 2) == 1
        return inside | (self.boundary_distance(pts) <= tol)

    def strictly_contains(self, points, tol: float = BOUNDARY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.contains(pts, tol=0.0) & (self.boundary_distance(pts) > tol)

    def line_of_sight(self, a, b) -> bool:
        """True iff the segment a-b never leaves the closed room."""
        return bool(self.segments_inside(as_point(a)[None], as_point(b)[None])[0])

    def segments_inside(self, A, B) -> np.ndarray:
        """Vectorized line-of-sight for segments ``A[i]-B[i]``.

        Each segment is split at every wall intersection (including touches
        and collinear overlaps); it is inside iff its endpoints and the
        midpoint of every piece are inside the closed polygon.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        n = len(A)
        if n == 0:
            return np.zeros(0, dtype=bool)
        ok = self.contains(A) & self.contains(B)
        r = B - A                                     # (n, 2)
        wa, wb = self._edges()
        s = wb - wa                                   # (w, 2)
        qp = wa[None, :, :] - A[:, None, :]           # (n, w, 2)
        denom = _cross(r[:, None, :], s[None, :, :])  # (n, w)
        proper = np.abs(denom) > 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            t = _cross(qp, s[None]) / denom
            u = _cross(qp, r[:, None, :]) / denom
        hit = proper & (t >= 0) & (t <= 1) & (u >= -1e-12) & (u <= 1 + 1e-12)
        ts = [np.zeros((n, 1)), np.ones((n, 1)), np.where(hit, t, np.nan)]
        rr = np.sum(r * r, axis=1)
        collinear = ~proper & (np.abs(_cross(qp, r[:, None, :])) <= 1e-12) & (rr[:, None] > 0)
        if collinear.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                for end in (wa, wb):
                    te = np.sum((end[None] - A[:, None, :]) * r[:, None, :], axis=2) / rr[:, None]
                    ts.append(np.where(collinear & (te >= 0) & (te <= 1), te, np.nan))
        T = np.sort(np.concatenate(ts, axis=1), axis=1)  # nan sorts last
        lo, hi = T[:, :-1], T[:, 1:]
        valid = np.isfinite(hi) & (hi > lo)
        rows, cols = np.nonzero(valid)
        mid_t = 0.5 * (lo[rows, cols] + hi[rows, cols])
        mids = A[rows] + mid_t[:, None] * r[rows]
        bad = np.zeros(n, dtype=bool)
        if len(mids):
            np.logical_or.at(bad, rows, ~self.contains(mids))
        return ok & ~bad

    def grid(self, pitch: float) -> np.ndarray:
        """Grid points at ``pitch`` spacing (offset by half a pitch) lying inside the room."""
        xmin, ymin, xmax, ymax = self.bounds
        xs = np.arange(xmin + pitch / 2, xmax, pitch)
        ys = np.arange(ymin + pitch / 2, ymax, pitch)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        return pts[self.strictly_contains(pts)]


def line_of_sight(room: RoomPolygon, a, b) -> bool:
    return room.line_of_sight(a, b)


@dataclass(frozen=True)
class Section:
    id: int
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        xmin, ymin, xmax, ymax = map(float, self.bounds)
        if not (xmax > xmin and ymax > ymin):
            raise GeometryError(f"section {self.id} has empty bounds {self.bounds}")
        object.__setattr__(self, "bounds", (xmin, ymin, xmax, ymax))

    def contains(self, points, tol: float = BOUNDARY_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xmin, ymin, xmax, ymax = self.bounds
        return ((pts[:, 0] >= xmin - tol) & (pts[:, 0] <= xmax + tol)
                & (pts[:, 1] >= ymin - tol) & (pts[:, 1] <= ymax + tol))


@dataclass(frozen=True)
class Anchor:
    id: int
    kind: str  # "physical" | "virtual"
    position: Point2
    parent_ap: int
    mirror_wall: int | None = None

    @property
    def is_virtual(self) -> bool:
        return self.kind == "virtual"


def generate_virtual_anchors(room: RoomPolygon, aps: Sequence) -> list[Anchor]:
    """Physical APs (input order) followed by one first-order image per (AP, wall)."""
    aps = [as_point(p) for p in aps]
    if aps and not room.strictly_contains(np.vstack(aps)).all():
        raise GeometryError("every access point must lie strictly inside the room")
    anchors = [Anchor(i, "physical", Point2(float(p[0]), float(p[1])), i)
               for i, p in enumerate(aps)]
    for i, p in enumerate(aps):
        for wall in room.walls:
            anchors.append(Anchor(len(anchors), "virtual", mirror_point(p, wall), i, wall.id))
    return anchors


def reflection_point(room: RoomPolygon, anchor: Anchor, client) -> np.ndarray | None:
    """Bounce point on the mirroring wall for a virtual anchor, or None if the path misses it."""
    wall = room.walls[anchor.mirror_wall]
    client = as_point(client)
    va = np.asarray(anchor.position, dtype=float)
    # client and image must sit on opposite sides of the wall line
    d = np.asarray(wall.endpoint_b) - np.asarray(wall.endpoint_a)
    side_c = _cross(d, client - np.asarray(wall.endpoint_a))
    side_v = _cross(d, va - np.asarray(wall.endpoint_a))
    if side_c * side_v >= 0:
        return None
    return segments_intersect(client, va, wall.endpoint_a, wall.endpoint_b)


def visible_anchors(room: RoomPolygon, anchors: Sequence[Anchor], client) -> list[tuple[int, float]]:
    """``(anchor id, aoa)`` for every anchor with a valid direct or single-bounce path.

    The AoA is the global-frame direction from the client towards the anchor
    position, i.e. the apparent arrival direction under the image method.
    """
    client = as_point(client)
    if not room.strictly_contains(client)[0]:
        raise GeometryError(f"client {tuple(client)} is not strictly inside the room")
    physical = {a.id: np.asarray(a.position, dtype=float) for a in anchors if not a.is_virtual}
    direct_ids, direct_pos = [], []
    bounce_ids, bounce_q, bounce_ap = [], [], []
    for anc in anchors:
        if anc.is_virtual:
            q = reflection_point(room, anc, client)
            if q is not None:
                bounce_ids.append(anc.id)
                bounce_q.append(q)
                bounce_ap.append(physical[anc.parent_ap])
        else:
            direct_ids.append(anc.id)
            direct_pos.append(physical[anc.id])
    seg_a = direct_pos + bounce_ap + bounce_q
    seg_b = [client] * len(direct_pos) + bounce_q + [client] * len(bounce_q)
    if not seg_a:
        return []
    ok = room.segments_inside(np.array(seg_a), np.array(seg_b))
    nd, nb = len(direct_pos), len(bounce_q)
    visible = [i for i, v in zip(direct_ids, ok[:nd]) if v]
    visible += [i for i, v1, v2 in zip(bounce_ids, ok[nd:nd + nb], ok[nd + nb:]) if v1 and v2]
    by_id = {a.id: a for a in anchors}
    out = []
    for i in sorted(visible):
        diff = np.asarray(by_id[i].position, dtype=float) - client
        out.append((i, float(np.arctan2(diff[1], diff[0]))))
    return out


def anchor_fingerprint(anchors: Sequence[Anchor]) -> str:
    """Stable hash of anchor ids, kinds and positions; ties models to their scene."""
    h = hashlib.sha256()
    for a in anchors:
        h.update(f"{a.id}|{a.kind}|{a.position[0]:.9f}|{a.position[1]:.9f}|"
                 f"{a.parent_ap}|{a.mirror_wall}\n".encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class Scene:
    """A room with its access points and training sections."""

    room: RoomPolygon
    aps: tuple[Point2, ...]
    sections: tuple[Section, ...]
    anchors: tuple[Anchor, ...] = field(init=False, repr=False)

    def __post_init__(self):
        aps = tuple(Point2(*map(float, as_point(p))) for p in self.aps)
        object.__setattr__(self, "aps", aps)
        object.__setattr__(self, "sections", tuple(self.sections))
        ids = [s.id for s in self.sections]
        if len(set(ids)) != len(ids):
            raise GeometryError("section ids must be unique")
        for s in self.sections:
            if len(section_grid(s, self.room, 0.25)) == 0:
                raise GeometryError(f"section {s.id} does not intersect the room")
        object.__setattr__(self, "anchors", tuple(generate_virtual_anchors(self.room, aps)))

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    @property
    def fingerprint(self) -> str:
        return anchor_fingerprint(self.anchors)

    def section(self, section_id: int) -> Section:
        for s in self.sections:
            if s.id == section_id:
                return s
        raise KeyError(section_id)


def section_grid(section: Section, room: RoomPolygon, pitch: float) -> np.ndarray:
    pts = room.grid(pitch)
    return pts[section.contains(pts)]

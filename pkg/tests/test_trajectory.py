import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tinyloc.geometry import GeometryError, Section
from tinyloc.trajectory import InvalidTrackError, generate_test_track, generate_training_locations


def test_training_locations_in_section(u_scene, rng):
    for s in u_scene.sections:
        pts = generate_training_locations(s, u_scene.room, 800, rng)
        assert pts.shape == (800, 2)
        assert s.contains(pts).all() and u_scene.room.strictly_contains(pts).all()


def test_single_point_in_unit_section(square, rng):
    pts = generate_training_locations(Section(0, (3, 3, 4, 4)), square, 1, rng)
    assert pts.shape == (1, 2) and np.all((pts >= 3) & (pts <= 4))


def test_uniformity_mean(square):
    pts = generate_training_locations(Section(0, (1, 2, 7, 5)), square, 100_000,
                                      np.random.default_rng(1))
    assert abs(pts[:, 0].mean() - 4.0) < 0.01 * 6
    assert abs(pts[:, 1].mean() - 3.5) < 0.01 * 3


def test_training_seeded(u_scene):
    s = u_scene.sections[0]
    a = generate_training_locations(s, u_scene.room, 50, np.random.default_rng(3))
    b = generate_training_locations(s, u_scene.room, 50, np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()


def test_section_outside_room(u_room, rng):
    with pytest.raises(GeometryError):
        generate_training_locations(Section(0, (30, 30, 31, 31)), u_room, 5, rng)
    with pytest.raises(ValueError):
        generate_training_locations(Section(0, (0, 0, 1, 1)), u_room, 0, rng)


def test_straight_track(square):
    tr = generate_test_track([(0.5, 1), (9.5, 1)], 1.0, 1.0, square)
    assert len(tr) == 10
    assert np.allclose(tr.positions[:, 0], np.arange(10) + 0.5)
    assert np.allclose(tr.t, np.arange(10))


def test_track_from_wall_corner_in_tolerance():
    from tinyloc.geometry import RoomPolygon
    room = RoomPolygon([(-1, -1), (11, -1), (11, 1), (-1, 1)])
    tr = generate_test_track([(0, 0), (10, 0)], 1.0, 1.0, room)
    assert len(tr) == 11 and np.allclose(tr.positions[:, 0], np.arange(11))


def test_single_waypoint(square):
    tr = generate_test_track([(3, 3)], 1.0, 1.0, square)
    assert len(tr) == 1


def test_blocked_waypoints(u_room):
    with pytest.raises(InvalidTrackError):
        generate_test_track([(2.5, 15), (17, 15)], 1.0, 1.0, u_room)
    with pytest.raises(ValueError):
        generate_test_track([(2.5, 15), (2.5, 2)], 0.0, 1.0, u_room)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0.2, 4.8), st.floats(0.2, 17.8)), min_size=1, max_size=6),
       st.floats(0.3, 2.0), st.floats(0.0, 0.5), st.integers(0, 10))
def test_speed_bound_and_containment(wps, speed, jitter, seed):
    from tinyloc.geometry import RoomPolygon
    room = RoomPolygon([(0, 0), (20, 0), (20, 18), (14, 18), (14, 5), (5, 5), (5, 18), (0, 18)])
    tr = generate_test_track(wps, speed, 1.0, room, speed_jitter=jitter,
                             rng=np.random.default_rng(seed))
    steps = np.linalg.norm(np.diff(tr.positions, axis=0), axis=1)
    assert np.all(steps <= speed * 1.0 + 1e-9)
    assert room.strictly_contains(tr.positions).all()
    assert np.allclose(np.diff(tr.t), 1.0)

import numpy as np
import pytest

from tinyloc.geometry import RoomPolygon, Scene, Section

U_VERTICES = [(0, 0), (20, 0), (20, 18), (14, 18), (14, 5), (5, 5), (5, 18), (0, 18)]
U_SECTIONS = [Section(0, (0, 0, 5, 18)), Section(1, (0, 0, 20, 5)), Section(2, (14, 0, 20, 18))]
U_APS = [(2.5, 17), (0.5, 2.5), (17, 17), (10, 0.5), (0.5, 9), (19.5, 9), (19.5, 0.5)]


@pytest.fixture(scope="session")
def u_room():
    return RoomPolygon(U_VERTICES)


@pytest.fixture(scope="session")
def u_scene(u_room):
    return Scene(u_room, U_APS, U_SECTIONS)


@pytest.fixture(scope="session")
def square():
    return RoomPolygon([(0, 0), (10, 0), (10, 10), (0, 10)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

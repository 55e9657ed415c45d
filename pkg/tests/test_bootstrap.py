import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tinyloc.bootstrap import (STATS_EPS, AdoaLocalizer, BootstrapFailure, InsufficientDataError,
                               LabelSet, adoa_objective, brute_force_localize, build_label_set,
                               compute_label_stats)
from tinyloc.measurements import (AdoaVector, InsufficientMeasurementsError, NoiseConfig,
                                  measure)
from tinyloc.trajectory import generate_training_locations


@pytest.fixture(scope="module")
def localizer(u_scene):
    return AdoaLocalizer(u_scene.anchors, u_scene.room)


def _clients(scene, rng, n):
    pts = rng.uniform((0, 0), (20, 18), size=(4 * n, 2))
    pts = pts[scene.room.strictly_contains(pts)]
    return pts[scene.room.boundary_distance(pts) > 0.3][:n]


def test_noiseless_recovery(u_scene, localizer):
    rng = np.random.default_rng(2)
    for p in _clients(u_scene, rng, 30):
        m = measure(u_scene, p, NoiseConfig(sigma=0.0), rng)
        res = localizer.localize(m.adoa)
        assert not res.degraded
        assert np.linalg.norm(res.position - p) <= 0.01
        assert u_scene.room.contains(res.position)[0]


def test_objective_zero_at_truth(u_scene):
    rng = np.random.default_rng(3)
    xy = np.array([a.position for a in u_scene.anchors])
    for p in _clients(u_scene, rng, 20):
        m = measure(u_scene, p, NoiseConfig(sigma=0.0), rng)
        assert adoa_objective(p, m.adoa, xy)[0] <= 1e-10


def test_matches_dense_grid_oracle(u_scene, localizer):
    rng = np.random.default_rng(5)
    xy = localizer.anchor_xy
    for p in _clients(u_scene, rng, 20):
        m = measure(u_scene, p, NoiseConfig(sigma=0.0), rng)
        brute = brute_force_localize(m.adoa, xy, u_scene.room, pitch=0.01)
        assert np.linalg.norm(localizer.localize(m.adoa).position - brute) <= 0.02


def test_too_few_adoas(localizer):
    v = AdoaVector(np.r_[0.0, 0.3, 0.2, np.zeros(60)], np.r_[False, True, True, np.zeros(60, bool)], 0)
    with pytest.raises(InsufficientMeasurementsError):
        localizer.localize(v)


def test_label_set_counts(u_scene, localizer):
    rng = np.random.default_rng(8)
    pts = generate_training_locations(u_scene.sections[0], u_scene.room, 40, rng)
    vecs = [measure(u_scene, p, NoiseConfig(sigma=0.0), rng).adoa for p in pts]
    ls = build_label_set(0, vecs, localizer)
    assert len(ls) == 40 and ls.n_degraded == 0
    assert np.all(ls.residuals >= 0)
    assert np.array_equal(ls.point_index, np.arange(40))


def test_label_set_failure(localizer):
    v = AdoaVector(np.r_[0.0, 0.3, np.zeros(61)], np.r_[False, True, np.zeros(61, bool)], 0)
    with pytest.raises(BootstrapFailure):
        build_label_set(0, [v] * 5, localizer)
    with pytest.raises(InsufficientDataError):
        build_label_set(0, [], localizer)


def test_label_corruption_is_seeded(u_scene, localizer):
    rng = np.random.default_rng(9)
    pts = generate_training_locations(u_scene.sections[1], u_scene.room, 10, rng)
    vecs = [measure(u_scene, p, NoiseConfig(sigma=0.0), rng).adoa for p in pts]
    a = build_label_set(1, vecs, localizer, 0.3, np.random.default_rng(1))
    b = build_label_set(1, vecs, localizer, 0.3, np.random.default_rng(1))
    clean = build_label_set(1, vecs, localizer, 0.0)
    assert np.array_equal(a.positions, b.positions)
    assert 0.05 < np.mean(np.linalg.norm(a.positions - clean.positions, axis=1)) < 0.8


def test_section_one_submeter_labels(u_scene, localizer):
    """Uncorrupted labels under 5 degree AoA noise are sub-meter for about 80% of points."""
    rng = np.random.default_rng(11)
    pts = generate_training_locations(u_scene.sections[0], u_scene.room, 300, rng)
    vecs = [measure(u_scene, p, NoiseConfig(), rng).adoa for p in pts]
    ls = build_label_set(0, vecs, localizer)
    err = np.linalg.norm(ls.positions - pts[ls.point_index], axis=1)
    assert np.mean(err <= 1.0) >= 0.70


def test_label_error_matches_localizer_error(u_scene, localizer):
    rng = np.random.default_rng(12)
    pts = generate_training_locations(u_scene.sections[2], u_scene.room, 60, rng)
    vecs = [measure(u_scene, p, NoiseConfig(), rng).adoa for p in pts]
    ls = build_label_set(2, vecs, localizer)
    direct = localizer.predict([vecs[i] for i in ls.point_index])
    assert np.allclose(ls.positions, direct)


def test_stats_degenerate():
    st_ = compute_label_stats(np.tile([2.0, 3.0], (10, 1)))
    assert np.allclose(st_.mu, (2, 3))
    assert np.allclose(st_.sigma, STATS_EPS * np.eye(2))


def test_stats_uniform_rectangle():
    pts = np.random.default_rng(0).uniform((0, 0), (4, 2), size=(10_000, 2))
    s = compute_label_stats(pts)
    expected = np.diag([16 / 12, 4 / 12])
    assert np.allclose(np.diag(s.sigma), np.diag(expected), rtol=0.05)
    assert abs(s.sigma[0, 1]) < 0.05 * np.sqrt(expected[0, 0] * expected[1, 1])


def test_stats_too_few():
    with pytest.raises(InsufficientDataError):
        compute_label_stats(np.zeros((2, 2)))


@settings(max_examples=50)
@given(st.integers(3, 40), st.integers(0, 10_000))
def test_stats_properties(n, seed):
    pts = np.random.default_rng(seed).normal(size=(n, 2)) * [3, 0.5]
    s = compute_label_stats(pts)
    perm = compute_label_stats(pts[::-1])
    assert np.allclose(s.mu, perm.mu) and np.allclose(s.sigma, perm.sigma)
    assert np.allclose(s.sigma, s.sigma.T)
    assert np.linalg.eigvalsh(s.sigma).min() >= STATS_EPS * 0.999
    assert s.mahalanobis(s.mu)[0] == pytest.approx(0.0, abs=1e-12)


def test_stats_from_label_set():
    ls = LabelSet(0, np.arange(4), np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]]), np.zeros(4),
                  np.zeros(4, bool), 0)
    assert np.allclose(compute_label_stats(ls).mu, (0.5, 0.5))


def test_stats_roundtrip_dict():
    s = compute_label_stats(np.random.default_rng(1).normal(size=(20, 2)))
    from tinyloc.bootstrap import LabelStats
    back = LabelStats.from_dict(s.to_dict())
    assert np.array_equal(back.mu, s.mu) and np.array_equal(back.sigma, s.sigma)

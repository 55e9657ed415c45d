import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tinyloc.bootstrap import LabelStats
from tinyloc.switching import (ConfigError, ModelBank, MultiNNLocalizer, SwitchConfig,
                               kf_switch_step, odd_switch_step, replay, run_track, select_model,
                               select_odd)
from tinyloc.tracking import KalmanState, KfConfig, initial_state, predict


class TableModel:
    """Looks up a fixed fix per step; the step index is carried in column 0 of X."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)

    def predict(self, X):
        return self.table[np.asarray(X)[:, 0].astype(int)]


class ConstModel:
    def __init__(self, xy):
        self.xy = np.asarray(xy, dtype=float)

    def predict(self, X):
        return np.tile(self.xy, (len(X), 1))


def _stats(mu, c=1.0):
    return LabelStats(np.asarray(mu, dtype=float), c * np.eye(2))


def _steps(n):
    return np.arange(n, dtype=float).reshape(-1, 1)


@given(arrays(float, st.integers(1, 8), elements=st.floats(0, 100)))
def test_argmin_property(metrics):
    i = select_model(metrics)
    assert metrics[i] == metrics.min()
    assert i == int(np.flatnonzero(metrics == metrics.min())[0])


def test_exact_tie_lowest_index():
    assert select_model([3.0, 1.0, 1.0, 2.0]) == 1


def test_odd_near_tie_uses_previous_fix():
    assert select_odd([0.2, 0.5, 3.0], [4.0, 0.1, 0.0], tie_tolerance=0.5) == 1
    assert select_odd([0.2, 0.5, 3.0], [4.0, 0.1, 0.0], tie_tolerance=0.1) == 0


def test_mahalanobis_mean_is_zero():
    assert _stats((1, 2)).mahalanobis((1, 2))[0] == 0.0


@settings(max_examples=50)
@given(st.floats(0.01, 100), st.floats(-50, 50), st.floats(-50, 50))
def test_mahalanobis_scaled_identity(c, x, y):
    s = _stats((1.0, -2.0), c)
    assert s.mahalanobis((x, y))[0] == pytest.approx(np.hypot(x - 1, y + 2) / np.sqrt(c), abs=1e-9)


def test_switch_config_defaults_and_validation():
    cfg = SwitchConfig()
    assert cfg.eta == 2.0 and cfg.zeta == 1.0 and cfg.cooldown == 3
    with pytest.raises(ConfigError):
        SwitchConfig(eta=0)
    with pytest.raises(ConfigError):
        SwitchConfig(zeta=-1)


def test_bank_validation():
    with pytest.raises(ConfigError):
        ModelBank([], [])
    with pytest.raises(ConfigError):
        ModelBank([ConstModel((0, 0))], [_stats((0, 0)), _stats((1, 1))])


def test_constructed_bank_selects_model_two():
    kf_cfg = KfConfig()
    state = KalmanState(np.array([5.0, 1.0, 5.0, 0.0]), np.eye(4))
    pred = predict(state, kf_cfg).position  # (6, 5)
    bank = ModelBank([ConstModel(pred + (8, 0)), ConstModel(pred + (0, -5)), ConstModel(pred),
                      ConstModel(pred + (6, 6))], [_stats((0, 0))] * 4)
    est, _, active, ev, tr = kf_switch_step(bank, 0, state, [0.0], kf_cfg, SwitchConfig())
    assert tr.beta > 2 and active == 2 and ev.to_model == 2 and ev.from_model == 0
    assert np.allclose(est, pred)
    assert ev.trigger == "kf-beta" and len(ev.metrics) == 4


def test_no_trigger_keeps_model():
    kf_cfg = KfConfig()
    state = KalmanState(np.array([5.0, 0.0, 5.0, 0.0]), np.eye(4))
    bank = ModelBank([ConstModel((5.2, 5.1)), ConstModel((5.0, 5.0))], [_stats((0, 0))] * 2)
    est, _, active, ev, tr = kf_switch_step(bank, 0, state, [0.0], kf_cfg, SwitchConfig())
    assert tr.beta <= 2 and active == 0 and ev is None
    assert np.allclose(est, (5.2, 5.1))


def test_odd_step_switches_to_in_distribution_model():
    bank = ModelBank([ConstModel((9.0, 9.0)), ConstModel((3.0, 3.0))],
                     [_stats((0, 0)), _stats((3, 3))])
    est, active, ev, tr = odd_switch_step(bank, 0, (3.2, 3.0), [0.0], SwitchConfig())
    assert active == 1 and ev.trigger == "odd-jump" and ev.metrics[1] == 0.0
    assert np.allclose(est, (3, 3))
    est, active, ev, _ = odd_switch_step(bank, 0, (9.1, 9.0), [0.0], SwitchConfig())
    assert active == 0 and ev is None


def _random_bank(rng, n, m):
    tables = [np.cumsum(rng.normal(scale=rng.uniform(0.2, 2.0), size=(n, 2)), axis=0)
              for _ in range(m)]
    return ModelBank([TableModel(t) for t in tables],
                     [_stats(t.mean(axis=0), float(t.var() + 1)) for t in tables])


def test_single_model_never_switches():
    rng = np.random.default_rng(0)
    bank = _random_bank(rng, 80, 1)
    for scheme in ("kf", "odd"):
        res = run_track(bank, _steps(80), scheme)
        assert res.events == []
        assert np.array_equal(res.estimates, bank.models[0].table)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["kf", "odd"]), st.integers(1, 4))
def test_replay_is_bit_identical(seed, scheme, m):
    rng = np.random.default_rng(seed)
    bank = _random_bank(rng, 60, m)
    res = run_track(bank, _steps(60), scheme, initial_model=int(rng.integers(m)))
    active, est = replay(res.initial_model, res.events, res.per_model)
    assert np.array_equal(active, res.active)
    assert est.tobytes() == res.estimates.tobytes()
    changes = int(np.sum(np.diff(np.r_[res.initial_model, res.active]) != 0))
    assert changes == len(res.events)
    assert all(e.from_model != e.to_model for e in res.events)


def test_no_trigger_stability():
    # smooth tracks: jumps stay below zeta and the filter stays consistent
    n = 50
    a = np.column_stack([np.linspace(0, 10, n), np.zeros(n)])
    bank = ModelBank([TableModel(a), TableModel(a + 30)], [_stats((5, 0)), _stats((35, 30))])
    for scheme in ("kf", "odd"):
        res = run_track(bank, _steps(n), scheme, cfg=SwitchConfig(eta=50.0))
        assert res.events == [] and np.all(res.active == 0)


def test_cooldown_suppresses_triggers():
    n = 30
    a = np.zeros((n, 2))
    b = np.zeros((n, 2))
    a[10:] = 20.0  # model 0 jumps away at step 10
    bank = ModelBank([TableModel(a), TableModel(b)], [_stats((0, 0))] * 2)
    res = run_track(bank, _steps(n), "kf", cfg=SwitchConfig(cooldown=5))
    assert [e.k for e in res.events] == [10]
    assert np.all(res.active[10:] == 1)


def test_run_track_errors():
    bank = ModelBank([ConstModel((0, 0))], [_stats((0, 0))])
    with pytest.raises(ConfigError):
        run_track(bank, np.zeros((0, 1)))
    with pytest.raises(ConfigError):
        run_track(bank, _steps(3), "mixed")
    with pytest.raises(ConfigError):
        run_track(bank, _steps(3), initial_model=4)


def test_kf_trace_records_state():
    bank = _random_bank(np.random.default_rng(1), 20, 2)
    res = run_track(bank, _steps(20), "kf")
    assert all(t.state is not None and t.state.shape == (4,) for t in res.traces)
    assert np.array_equal(res.traces[0].state, initial_state(res.estimates[0], KfConfig()).s)


def test_multi_nn_estimator_end_to_end():
    rng = np.random.default_rng(0)
    n = 200
    y0 = rng.uniform((0, 0), (4, 4), size=(n, 2))
    y1 = rng.uniform((10, 0), (14, 4), size=(n, 2))
    X = np.vstack([np.column_stack([y0, np.zeros(n)]), np.column_stack([y1 - 10, np.ones(n)])])
    y = np.vstack([y0, y1])
    groups = np.r_[np.zeros(n, int), np.ones(n, int)]
    est = MultiNNLocalizer(scheme="odd", mlp_params=dict(epochs=200, dropout_p=0.0, seed=1))
    est.fit(X, y, groups)
    assert len(est.bank_) == 2 and est.groups_ == [0, 1]
    assert np.allclose(est.bank_.stats[1].mu, y1.mean(axis=0))
    track = np.column_stack([np.linspace(1, 3, 10), np.full(10, 2.0), np.zeros(10)])
    out = est.predict(track, initial_position=(2, 2))
    assert out.shape == (10, 2)
    assert np.mean(np.linalg.norm(out - track[:, :2], axis=1)) < 1.0
    params = est.get_params()
    assert params["scheme"] == "odd"

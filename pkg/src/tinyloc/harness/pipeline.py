"""Pipeline stages: generate, bootstrap, train, evaluate, compare.

Each stage reads the previous stage's files from the output directory and
writes its own, so stages can be run one at a time from the CLI. Per-section
work can be spread over ``jobs`` worker processes; every task draws from its
own seeded stream, so the worker count never changes the results.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..bootstrap import AdoaLocalizer, BootstrapFailure, build_label_set, compute_label_stats
from ..geometry import GeometryError, Scene
from ..measurements import InsufficientMeasurementsError, measure, stack_inputs, unstack_inputs
from ..switching import ModelBank, run_track
from ..tinynn import make_localizer_net
from ..tracking import ConstantVelocityKF
from ..trajectory import generate_test_track, generate_training_locations
from . import io
from .config import (STREAM_BASELINE_NOISE, STREAM_LABEL_NOISE, ConfigError, ExperimentConfig,
                     STREAM_NIS_NOISE, STREAM_TRACK_JITTER, STREAM_TRACK_NOISE,
                     STREAM_TRAIN_LOC, STREAM_TRAIN_NOISE, save_config)
from .metrics import EvaluationReport, MethodReport, error_cdf, localization_errors

log = logging.getLogger(__name__)

STAGES = ("generate", "bootstrap", "train", "evaluate", "compare")
METHODS = ("bootstrap", "single_nn", "multi_nn_kf", "multi_nn_odd")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it (CLI exit code 3)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _map(fn, tasks, jobs: int):
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


class Layout:
    """File names inside an output directory."""

    def __init__(self, root):
        self.root = Path(root)

    def __getattr__(self, stage):
        if stage in STAGES:
            return self.root / stage
        raise AttributeError(stage)

    def features(self, name):
        return self.generate / f"{name}_features.csv"

    def positions(self, name):
        return self.generate / f"{name}_positions.csv"

    def measurements(self, name):
        return self.generate / f"{name}_measurements.csv"

    def labels(self, sid):
        return self.bootstrap / f"labels_s{sid}.csv"

    @property
    def stats(self):
        return self.bootstrap / "stats.json"

    @property
    def track_bootstrap(self):
        return self.bootstrap / "track_estimates.csv"

    def model(self, name):
        return self.train / f"model_{name}.npz"

    @property
    def report(self):
        return self.compare / "report.json"


# -- generate ----------------------------------------------------------

def _measure_all(scene, positions, cfg: ExperimentConfig, rng):
    noise = cfg.noise_config()
    return [measure(scene, p, noise, rng) for p in positions]


def _save_measured(layout, name, scene, t, positions, ms):
    X, M, refs = stack_inputs([m.adoa for m in ms])
    io.save_positions(layout.positions(name), t, positions, scene.sections)
    io.save_measurements(layout.measurements(name), ms)
    io.save_features(layout.features(name), X, M, refs)


def _generate_section(args):
    cfg, out, sid = args
    scene = cfg.build_scene()
    section = scene.section(sid)
    locs = generate_training_locations(section, scene.room, cfg.n_train, cfg.rng(STREAM_TRAIN_LOC, sid))
    ms = _measure_all(scene, locs, cfg, cfg.rng(STREAM_TRAIN_NOISE, sid))
    _save_measured(Layout(out), f"train_s{sid}", scene, np.arange(len(locs), dtype=float), locs, ms)
    return sid


def _generate_walk(args):
    cfg, out, name = args
    scene = cfg.build_scene()
    sc = cfg.scene
    if name == "track":
        wps, noise_stream = sc.waypoints, STREAM_TRACK_NOISE
    else:
        wps, noise_stream = sc.nis_waypoints, STREAM_NIS_NOISE
    traj = generate_test_track(wps, sc.speed, sc.dt, scene.room, sc.speed_jitter,
                               cfg.rng(STREAM_TRACK_JITTER, noise_stream))
    ms = _measure_all(scene, traj.positions, cfg, cfg.rng(noise_stream))
    _save_measured(Layout(out), name, scene, traj.t, traj.positions, ms)
    return name


def generate(cfg: ExperimentConfig, out, jobs: int = 1):
    layout = Layout(out)
    layout.generate.mkdir(parents=True, exist_ok=True)
    save_config(cfg, layout.root / "config.json")
    tasks_s = [(cfg, str(out), sid) for sid in cfg.section_ids()]
    walks = ["track"] + (["nis"] if cfg.scene.nis_waypoints else [])
    _map(_generate_section, tasks_s, jobs)
    _map(_generate_walk, [(cfg, str(out), w) for w in walks], jobs)


# -- bootstrap ------------------------------------------------------------

def _localizer(cfg: ExperimentConfig, scene: Scene) -> AdoaLocalizer:
    b = cfg.bootstrap
    return AdoaLocalizer(scene.anchors, scene.room, b.pitch, b.xatol, b.n_starts)


def _load_vectors(layout, name):
    X, M, refs = io.load_features(layout.features(name))
    return X, unstack_inputs(X, M, refs)


def _bootstrap_section(args):
    cfg, out, sid = args
    layout = Layout(out)
    scene = cfg.build_scene()
    _, vectors = _load_vectors(layout, f"train_s{sid}")
    labels = build_label_set(sid, vectors, _localizer(cfg, scene), cfg.bootstrap.label_noise_std,
                             cfg.rng(STREAM_LABEL_NOISE, sid))
    io.save_labels(layout.labels(sid), labels)
    return sid, compute_label_stats(labels)


def _bootstrap_track(args):
    """Geometric baseline on the test track, with the same label corruption applied."""
    cfg, out = args
    layout = Layout(out)
    scene = cfg.build_scene()
    loc = _localizer(cfg, scene)
    _, vectors = _load_vectors(layout, "track")
    raw = np.empty((len(vectors), 2))
    failed = np.zeros(len(vectors), dtype=bool)
    for k, v in enumerate(vectors):
        try:
            r = loc.localize(v)
            raw[k] = r.position
            failed[k] = r.degraded
        except InsufficientMeasurementsError:
            # hold the previous fix; room centroid of the grid for the very first one
            raw[k] = raw[k - 1] if k else loc.grid.mean(axis=0)
            failed[k] = True
    noise = cfg.rng(STREAM_BASELINE_NOISE).normal(0.0, cfg.bootstrap.label_noise_std, raw.shape)
    est = raw + noise if cfg.bootstrap.label_noise_std > 0 else raw.copy()
    io.write_rows(layout.track_bootstrap, ["k", "x", "y", "raw_x", "raw_y", "degraded"],
                  ([k, *est[k], *raw[k], bool(failed[k])] for k in range(len(est))))
    return int(failed.sum())


def bootstrap(cfg: ExperimentConfig, out, jobs: int = 1):
    layout = Layout(out)
    layout.bootstrap.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, str(out), sid) for sid in cfg.section_ids()]
    stats = dict(_map(_bootstrap_section, tasks, jobs))
    io.save_stats(layout.stats, stats)
    # runs even with the baseline disabled: it also picks the initial model
    _bootstrap_track((cfg, str(out)))


def load_track_bootstrap(layout) -> tuple[np.ndarray, np.ndarray]:
    _, rows = io.read_rows(layout.track_bootstrap)
    arr = np.array([[float(v) for v in r] for r in rows])
    return arr[:, 1:3], arr[:, 3:5]


# -- train ------------------------------------------------------------------

def _training_data(layout, sid) -> tuple[np.ndarray, np.ndarray]:
    X, _, _ = io.load_features(layout.features(f"train_s{sid}"))
    labels = io.load_labels(layout.labels(sid))
    return X[labels.point_index], labels.positions


def _train_one(args):
    cfg, out, name = args
    layout = Layout(out)
    fp = cfg.build_scene().fingerprint
    if name == "single":
        parts = [_training_data(layout, sid) for sid in cfg.section_ids()]
        X = np.vstack([p[0] for p in parts])
        Y = np.vstack([p[1] for p in parts])
        params = cfg.single_mlp_params()
    else:
        sid = int(name[1:])
        X, Y = _training_data(layout, sid)
        params = cfg.mlp_params(sid)
    net = make_localizer_net(**params, scene_fingerprint=fp).fit(X, Y)
    io.save_model(layout.model(name), net)
    return name


def train(cfg: ExperimentConfig, out, jobs: int = 1):
    layout = Layout(out)
    layout.train.mkdir(parents=True, exist_ok=True)
    names = [f"s{sid}" for sid in cfg.section_ids()]
    if cfg.baselines.get("single_nn", True):
        names.append("single")
    _map(_train_one, [(cfg, str(out), n) for n in names], jobs)


# -- evaluate -------------------------------------------------------------

def load_bank(cfg: ExperimentConfig, layout) -> ModelBank:
    scene = cfg.build_scene()
    stats = io.load_stats(layout.stats)
    ids = cfg.section_ids()
    models = [io.load_model(layout.model(f"s{sid}"), scene.fingerprint) for sid in ids]
    return ModelBank(models, [stats[sid] for sid in ids], [scene.section(sid) for sid in ids])


def _kf_run(fixes, kf_cfg):
    kf = ConstantVelocityKF(kf_cfg)
    rows = []
    for k, z in enumerate(fixes):
        if k == 0:
            kf.step(z)
            rows.append(dict(k=0, s=kf.state.s, predicted=z, measurement=z,
                             beta=float("nan"), delta=float("nan")))
            continue
        rec = kf.step(z)
        pred = np.asarray(z) - rec.y_hat
        rows.append(dict(k=k, s=kf.state.s, predicted=pred, measurement=z,
                         beta=rec.beta, delta=rec.delta))
    return rows


def _nis_check(cfg, layout, bank) -> dict:
    """Single-model KF on the in-section walk: mean NIS over the whole walk."""
    if not cfg.scene.nis_waypoints:
        return {}
    X, _, _ = io.load_features(layout.features("nis"))
    m = cfg.section_ids().index(cfg.scene.nis_section)
    fixes = np.asarray(bank.models[m].predict(X))
    rows = _kf_run(fixes, cfg.kf_config())
    io.save_kf_trace(layout.evaluate / "nis_trace.csv", rows)
    beta = np.array([r["beta"] for r in rows[1:]])
    return {"section": cfg.scene.nis_section, "steps": int(beta.size),
            "mean_beta": float(beta.mean()), "median_beta": float(np.median(beta))}


def _boundary_check(cfg, layout, bank, truth) -> dict:
    """KF that never switches away from the first section's model on the main track.

    Compares the peak NIS in the 30 steps after the track leaves that section
    with the median NIS while the track is inside it.
    """
    sid = cfg.section_ids()[0]
    section = bank.sections[0]
    X, _, _ = io.load_features(layout.features("track"))
    fixes = np.asarray(bank.models[0].predict(X))
    rows = _kf_run(fixes, cfg.kf_config())
    io.save_kf_trace(layout.evaluate / "boundary_trace.csv", rows)
    beta = np.array([r["beta"] for r in rows])
    inside = section.contains(truth)
    if inside.all() or not inside.any():
        return {}
    first_in = int(np.argmax(inside))
    exit_k = first_in + int(np.argmax(~inside[first_in:]))
    in_steps = np.arange(1, exit_k)
    in_steps = in_steps[inside[in_steps]]
    window = np.arange(exit_k, min(exit_k + 30, len(beta)))
    median_in = float(np.median(beta[in_steps]))
    peak = float(np.max(beta[window]))
    return {"section": sid, "exit_index": exit_k, "median_in_section": median_in,
            "peak_after_exit": peak, "peak_index": int(window[np.argmax(beta[window])]),
            "ratio": peak / median_in}


def initial_model(bank: ModelBank, layout) -> int:
    _, raw = load_track_bootstrap(layout)
    return bank.nearest_mean(raw[0])


def evaluate(cfg: ExperimentConfig, out, jobs: int = 1) -> dict:
    layout = Layout(out)
    layout.evaluate.mkdir(parents=True, exist_ok=True)
    bank = load_bank(cfg, layout)
    X, _, _ = io.load_features(layout.features("track"))
    _, truth = io.load_positions(layout.positions("track"))
    init = initial_model(bank, layout)
    kf_cfg, sw_cfg = cfg.kf_config(), cfg.switch_config()
    for scheme in ("kf", "odd"):
        res = run_track(bank, X, scheme, kf_cfg, sw_cfg, init)
        io.save_estimates(layout.evaluate / f"estimates_{scheme}.csv", res.estimates, res.active)
        io.save_events(layout.evaluate / f"events_{scheme}.csv", res.events, len(bank))
        np.save(layout.evaluate / f"per_model_{scheme}.npy", res.per_model)
        if scheme == "kf":
            io.save_kf_trace(layout.evaluate / "kf_trace.csv", [
                dict(k=t.k, s=t.state, predicted=t.predicted, measurement=t.estimate,
                     beta=t.beta, delta=t.delta) for t in res.traces])
    if cfg.baselines.get("single_nn", True):
        net = io.load_model(layout.model("single"), cfg.build_scene().fingerprint)
        est = np.asarray(net.predict(X))
        io.save_estimates(layout.evaluate / "estimates_single.csv", est, np.zeros(len(est), int))
    checks = {"initial_model": init,
              "nis": _nis_check(cfg, layout, bank),
              "boundary": _boundary_check(cfg, layout, bank, truth)}
    io.write_json(layout.evaluate / "checks.json", checks)
    return checks


# -- compare ----------------------------------------------------------------

def _label_quality(cfg, layout) -> dict:
    out = {}
    for sid in cfg.section_ids():
        labels = io.load_labels(layout.labels(sid))
        _, locs = io.load_positions(layout.positions(f"train_s{sid}"))
        e = localization_errors(labels.positions, locs[labels.point_index])
        c = error_cdf(e)
        out[str(sid)] = {"n_labels": len(labels), "n_degraded": labels.n_degraded,
                         "mean_error": c.mean, "fraction_within_1m": c.fraction_within}
    return out


def compare(cfg: ExperimentConfig, out, jobs: int = 1) -> EvaluationReport:
    layout = Layout(out)
    layout.compare.mkdir(parents=True, exist_ok=True)
    _, truth = io.load_positions(layout.positions("track"))
    methods: dict[str, MethodReport] = {}
    if cfg.baselines.get("bootstrap", True):
        est, _ = load_track_bootstrap(layout)
        methods["bootstrap"] = MethodReport("bootstrap", localization_errors(est, truth))
    if cfg.baselines.get("single_nn", True):
        est, _ = io.load_estimates(layout.evaluate / "estimates_single.csv")
        methods["single_nn"] = MethodReport("single_nn", localization_errors(est, truth))
    for scheme in ("kf", "odd"):
        est, _ = io.load_estimates(layout.evaluate / f"estimates_{scheme}.csv")
        events = io.load_events(layout.evaluate / f"events_{scheme}.csv")
        methods[f"multi_nn_{scheme}"] = MethodReport(f"multi_nn_{scheme}",
                                                     localization_errors(est, truth), events)
    checks = io.read_json(layout.evaluate / "checks.json")
    checks["labels"] = _label_quality(cfg, layout)
    report = EvaluationReport(methods, "multi_nn_kf", checks)
    io.write_rows(layout.compare / "comparison.csv", ["method", "mean_error", "fraction_within_1m"],
                  report.table())
    io.write_rows(layout.compare / "cdf.csv", ["method", "error", "probability"],
                  ([name, e, p] for name, m in methods.items()
                   for e, p in zip(m.cdf.errors, m.cdf.probabilities)))
    io.write_json(layout.report, report.to_dict())
    return report


def compare_baselines(cfg: ExperimentConfig, out=None) -> list[tuple[str, float, float]]:
    """(method, mean error, fraction <= 1 m) rows from existing artifacts."""
    out = out or cfg.output_dir
    return run_stage("compare", cfg, out).table()


# -- orchestration -------------------------------------------------------------

_STAGE_FNS = {"generate": generate, "bootstrap": bootstrap, "train": train,
              "evaluate": evaluate, "compare": compare}


def run_stage(stage: str, cfg: ExperimentConfig, out=None, jobs: int = 1):
    if stage not in _STAGE_FNS:
        raise ConfigError(f"unknown stage {stage!r}")
    out = Path(out or cfg.output_dir)
    log.info("stage %s -> %s", stage, out)
    try:
        return _STAGE_FNS[stage](cfg, out, jobs)
    except io.ArtifactError as exc:
        raise StageError(stage, f"missing or invalid input from an earlier stage: {exc}") from exc
    except (BootstrapFailure, GeometryError, np.linalg.LinAlgError, ValueError,
            RuntimeError) as exc:
        if isinstance(exc, (ConfigError, StageError)):
            raise
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc


def run_pipeline(cfg: ExperimentConfig, out=None, jobs: int = 1) -> EvaluationReport:
    out = out or cfg.output_dir
    report = None
    for stage in STAGES:
        report = run_stage(stage, cfg, out, jobs)
    return report

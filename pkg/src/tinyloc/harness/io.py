"""Reading and writing pipeline artifacts.

Floats are written with ``repr`` so every CSV and JSON file round-trips
exactly. Column orders:

* measurements: ``location, anchor_id, true_aoa, noisy_aoa``
* features: ``location, reference, adoa_0..adoa_{N-1}, mask_0..mask_{N-1}``
* positions / track: ``index, t, x, y, in_section_<id>...``
* labels: ``section, point_index, x, y, residual, degraded``
* KF trace: ``k, s_x, s_vx, s_y, s_vy, pred_x, pred_y, meas_x, meas_y, beta, delta``
* events: ``k, trigger, from, to, metric_0..metric_{M-1}``
* estimates: ``k, x, y, active``
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.pipeline import Pipeline

from ..bootstrap import LabelSet, LabelStats
from ..measurements import Measurement
from ..switching import SwitchEvent
from ..tinynn import AngleRecentering, MlpModel, TinyMLPRegressor

FORMAT_VERSION = 1


class ArtifactError(RuntimeError):
    """A persisted artifact is missing, malformed or inconsistent."""


class FingerprintMismatch(ArtifactError):
    """A checkpoint was trained for a different anchor ordering."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ArtifactError(f"empty artifact {path}")
    return rows[0], rows[1:]


def _float_table(path) -> tuple[list[str], np.ndarray]:
    header, rows = read_rows(path)
    arr = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    return header, arr


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"malformed JSON in {path}: {exc}") from exc


# -- measurements and features -------------------------------------------

def save_measurements(path, measurements: Sequence[Measurement]) -> Path:
    rows = []
    for i, m in enumerate(measurements):
        for aid, true_a, noisy_a in zip(m.true_aoa.ids, m.true_aoa.angles, m.noisy_aoa.angles):
            rows.append((i, aid, true_a, noisy_a))
    return write_rows(path, ["location", "anchor_id", "true_aoa", "noisy_aoa"], rows)


def load_measurements(path) -> list[tuple[int, int, float, float]]:
    _, rows = read_rows(path)
    return [(int(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in rows]


def save_features(path, X: np.ndarray, mask: np.ndarray, references: Sequence[int]) -> Path:
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    header = ["location", "reference"] + [f"adoa_{j}" for j in range(n)] + [f"mask_{j}" for j in range(n)]
    rows = ([i, int(ref), *x.tolist(), *m.astype(int).tolist()]
            for i, (x, m, ref) in enumerate(zip(X, mask, references)))
    return write_rows(path, header, rows)


def load_features(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(X, mask, references)``."""
    header, arr = _float_table(path)
    n = (len(header) - 2) // 2
    X = arr[:, 2:2 + n]
    mask = arr[:, 2 + n:].astype(bool)
    return X, mask, arr[:, 1].astype(int)


def save_positions(path, t, positions, sections=()) -> Path:
    positions = np.asarray(positions, dtype=float)
    header = ["index", "t", "x", "y"] + [f"in_section_{s.id}" for s in sections]
    flags = [s.contains(positions) for s in sections]
    rows = ([i, float(t[i]), p[0], p[1], *[bool(f[i]) for f in flags]]
            for i, p in enumerate(positions))
    return write_rows(path, header, rows)


def load_positions(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(t, positions)``."""
    _, arr = _float_table(path)
    return arr[:, 1], arr[:, 2:4]


# -- labels and stats ------------------------------------------------------

def save_labels(path, labels: LabelSet) -> Path:
    """One row per training point; dropped (degraded) points carry NaN coordinates."""
    kept = {int(i): j for j, i in enumerate(labels.point_index)}
    rows = []
    for i, bad in enumerate(labels.degraded):
        if i in kept:
            j = kept[i]
            rows.append([labels.section_id, i, *labels.positions[j], labels.residuals[j], False])
        else:
            rows.append([labels.section_id, i, np.nan, np.nan, np.nan, bool(bad)])
    return write_rows(path, ["section", "point_index", "x", "y", "residual", "degraded"], rows)


def load_labels(path) -> LabelSet:
    _, arr = _float_table(path)
    if len(arr) == 0:
        raise ArtifactError(f"no labels in {path}")
    degraded = arr[:, 5].astype(bool)
    keep = ~degraded
    return LabelSet(section_id=int(arr[0, 0]), point_index=arr[keep, 1].astype(int),
                    positions=arr[keep, 2:4], residuals=arr[keep, 4], degraded=degraded,
                    n_degraded=int(degraded.sum()))


def save_stats(path, stats: dict[int, LabelStats]) -> Path:
    return write_json(path, {str(k): v.to_dict() for k, v in sorted(stats.items())})


def load_stats(path) -> dict[int, LabelStats]:
    return {int(k): LabelStats.from_dict(v) for k, v in read_json(path).items()}


# -- model checkpoints -----------------------------------------------------

def _split(estimator):
    if isinstance(estimator, Pipeline):
        return estimator.named_steps["recenter"], estimator.named_steps["mlp"]
    return None, estimator


def save_model(path, estimator, fingerprint: str | None = None) -> Path:
    """Write a fitted net (bare regressor or recentering pipeline) to ``.npz``."""
    recenter, mlp = _split(estimator)
    model: MlpModel = mlp.model_
    fp = fingerprint if fingerprint is not None else mlp.scene_fingerprint
    arrays = {f"W{i}": W for i, W in enumerate(model.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(model.biases)})
    if recenter is not None:
        arrays["centers"] = recenter.centers_
    meta = {"format": FORMAT_VERSION, "layer_sizes": list(model.layer_sizes),
            "params": mlp.get_params(), "fingerprint": fp,
            "loss_curve": list(mlp.loss_curve_)}
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_model(path, expected_fingerprint: str | None = None):
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT_VERSION:
            raise ArtifactError(f"unsupported checkpoint format in {path}")
        n = len(meta["layer_sizes"]) - 1
        weights = [data[f"W{i}"].copy() for i in range(n)]
        biases = [data[f"b{i}"].copy() for i in range(n)]
        centers = data["centers"].copy() if "centers" in data.files else None
    if expected_fingerprint is not None and meta["fingerprint"] != expected_fingerprint:
        raise FingerprintMismatch(
            f"{path} was trained for anchors {meta['fingerprint']}, scene has {expected_fingerprint}")
    mlp = TinyMLPRegressor(**meta["params"])
    mlp.model_ = MlpModel(tuple(meta["layer_sizes"]), weights, biases, trained=True)
    mlp.loss_curve_ = list(meta["loss_curve"])
    mlp.n_features_in_ = meta["layer_sizes"][0]
    if centers is None:
        return mlp
    recenter = AngleRecentering()
    recenter.centers_ = centers
    recenter.n_features_in_ = len(centers)
    return Pipeline([("recenter", recenter), ("mlp", mlp)])


# -- tracking and switching outputs ---------------------------------------

def save_kf_trace(path, traces) -> Path:
    """``traces`` are dicts with keys k, s, predicted, measurement, beta, delta."""
    header = ["k", "s_x", "s_vx", "s_y", "s_vy", "pred_x", "pred_y", "meas_x", "meas_y",
              "beta", "delta"]
    rows = ([tr["k"], *np.asarray(tr["s"]).tolist(), *np.asarray(tr["predicted"]).tolist(),
             *np.asarray(tr["measurement"]).tolist(), tr["beta"], tr["delta"]] for tr in traces)
    return write_rows(path, header, rows)


def load_kf_trace(path) -> dict[str, np.ndarray]:
    header, arr = _float_table(path)
    return {h: arr[:, i] for i, h in enumerate(header)}


def save_events(path, events: Sequence[SwitchEvent], n_models: int) -> Path:
    header = ["k", "trigger", "from", "to"] + [f"metric_{m}" for m in range(n_models)]
    rows = ([e.k, e.trigger, e.from_model, e.to_model, *e.metrics] for e in events)
    return write_rows(path, header, rows)


def load_events(path) -> list[SwitchEvent]:
    _, rows = read_rows(path)
    return [SwitchEvent(int(r[0]), int(r[2]), int(r[3]), r[1], tuple(float(v) for v in r[4:]))
            for r in rows]


def save_estimates(path, estimates, active) -> Path:
    rows = ([k, p[0], p[1], int(a)] for k, (p, a) in enumerate(zip(np.asarray(estimates), active)))
    return write_rows(path, ["k", "x", "y", "active"], rows)


def load_estimates(path) -> tuple[np.ndarray, np.ndarray]:
    _, arr = _float_table(path)
    return arr[:, 1:3], arr[:, 3].astype(int)

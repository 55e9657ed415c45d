"""Experiment configuration (JSON) and its conversion to library objects."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..geometry import GeometryError, RoomPolygon, Scene, Section
from ..measurements import NoiseConfig
from ..switching import SwitchConfig
from ..tracking import KfConfig


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


@dataclass
class SceneConfig:
    vertices: list
    aps: list
    sections: list           # [{"id": int, "bounds": [xmin, ymin, xmax, ymax]}]
    waypoints: list
    speed: float = 1.0
    dt: float = 1.0
    speed_jitter: float = 0.0
    # a second, single-section walk used for the NIS consistency check
    nis_section: int = 0
    nis_waypoints: list = field(default_factory=list)


@dataclass
class BootstrapConfig:
    pitch: float = 0.5
    xatol: float = 1e-3
    n_starts: int = 3
    label_noise_std: float = 0.3


@dataclass
class KfSettings:
    dt: float = 1.0
    process_noise_q: float = 0.5
    obs_noise_std: float = 0.5
    initial_cov_diag: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])


@dataclass
class SwitchSettings:
    eta: float = 2.0
    zeta: float = 1.0
    tie_tolerance: float = 0.5
    cooldown: int = 3
    cov_inflation: float = 4.0


@dataclass
class ExperimentConfig:
    scene: SceneConfig
    mlp: list                 # one dict of TinyMLPRegressor params per section, with "section"
    single_mlp: dict = field(default_factory=dict)
    noise_sigma_deg: float = 5.0
    seed: int = 0
    n_train: int = 800
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    kf: KfSettings = field(default_factory=KfSettings)
    switch: SwitchSettings = field(default_factory=SwitchSettings)
    baselines: dict = field(default_factory=lambda: {"single_nn": True, "bootstrap": True})
    output_dir: str = "out"

    # -- construction -------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        try:
            cfg = cls(
                scene=SceneConfig(**d.pop("scene")),
                mlp=d.pop("mlp"),
                bootstrap=BootstrapConfig(**d.pop("bootstrap", {})),
                kf=KfSettings(**d.pop("kf", {})),
                switch=SwitchSettings(**d.pop("switch", {})),
                **d,
            )
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        try:
            scene = self.build_scene()
        except GeometryError as exc:
            raise ConfigError(str(exc)) from exc
        ids = {s.id for s in scene.sections}
        mlp_ids = [m.get("section") for m in self.mlp]
        if sorted(mlp_ids) != sorted(ids):
            raise ConfigError(f"mlp configs cover sections {mlp_ids}, scene has {sorted(ids)}")
        if self.scene.nis_waypoints and self.scene.nis_section not in ids:
            raise ConfigError(f"nis_section {self.scene.nis_section} is not a section")
        if self.n_train < 1:
            raise ConfigError("n_train must be >= 1")
        if self.noise_sigma_deg < 0:
            raise ConfigError("noise_sigma_deg must be >= 0")
        try:
            self.switch_config()
            self.kf_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- library objects ----------------------------------------------
    def build_scene(self) -> Scene:
        room = RoomPolygon(self.scene.vertices)
        sections = [Section(int(s["id"]), tuple(s["bounds"])) for s in self.scene.sections]
        return Scene(room, self.scene.aps, sections)

    def section_ids(self) -> list[int]:
        return sorted(int(s["id"]) for s in self.scene.sections)

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(sigma=float(np.deg2rad(self.noise_sigma_deg)), seed=self.seed)

    def kf_config(self) -> KfConfig:
        return KfConfig(dt=self.kf.dt, process_noise_q=self.kf.process_noise_q,
                        obs_noise_v=self.kf.obs_noise_std ** 2 * np.eye(2),
                        initial_cov=np.diag(self.kf.initial_cov_diag))

    def switch_config(self) -> SwitchConfig:
        s = self.switch
        return SwitchConfig(s.eta, s.zeta, s.tie_tolerance, s.cooldown, s.cov_inflation)

    def mlp_params(self, section_id: int) -> dict:
        for m in self.mlp:
            if m.get("section") == section_id:
                p = {k: v for k, v in m.items() if k != "section"}
                p["seed"] = self.seed * 1000 + int(p.get("seed", 0)) + section_id
                return p
        raise ConfigError(f"no mlp config for section {section_id}")

    def single_mlp_params(self) -> dict:
        ids = self.section_ids()
        if len(ids) == 1:
            # the pooled data is that section's data, so the single net is the section net
            return self.mlp_params(ids[0])
        p = dict(self.single_mlp) if self.single_mlp else self.mlp_params(ids[0])
        p.pop("section", None)
        p["seed"] = self.seed * 1000 + 999
        return p

    def rng(self, *stream: int) -> np.random.Generator:
        """Independent generator per purpose; never seeded from the clock."""
        return np.random.default_rng([self.seed, *stream])


# rng stream tags
STREAM_TRAIN_LOC = 1
STREAM_TRAIN_NOISE = 2
STREAM_TRACK_NOISE = 3
STREAM_LABEL_NOISE = 4
STREAM_BASELINE_NOISE = 5
STREAM_TRACK_JITTER = 6
STREAM_NIS_NOISE = 7


def default_config_path() -> Path:
    return Path(str(resources.files("tinyloc") / "data" / "default_config.json"))


def load_config(path=None, seed: int | None = None, output_dir: str | None = None) -> ExperimentConfig:
    path = Path(path) if path else default_config_path()
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if seed is not None:
        d["seed"] = int(seed)
    if output_dir is not None:
        d["output_dir"] = str(output_dir)
    return ExperimentConfig.from_dict(d)


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

"""Indoor localization with several tiny ADoA-fed neural nets and model switching.

Submodules: ``geometry`` (room, anchors, visibility), ``measurements`` (AoA/ADoA
features), ``trajectory``, ``bootstrap`` (geometric labeller), ``tinynn``,
``tracking`` (Kalman filter), ``switching`` and ``harness`` (pipeline and CLI).
"""

from .bootstrap import AdoaLocalizer, LabelStats, build_label_set, compute_label_stats
from .geometry import RoomPolygon, Scene, Section, generate_virtual_anchors, visible_anchors
from .measurements import NoiseConfig, compute_adoa, measure
from .switching import ModelBank, MultiNNLocalizer, SwitchConfig, run_track
from .tinynn import AngleRecentering, TinyMLPRegressor, build_architecture, make_localizer_net
from .tracking import ConstantVelocityKF, KfConfig

__version__ = "0.1.0"

__all__ = [
    "AdoaLocalizer", "AngleRecentering", "ConstantVelocityKF", "KfConfig", "LabelStats",
    "ModelBank", "MultiNNLocalizer", "NoiseConfig", "RoomPolygon", "Scene", "Section",
    "SwitchConfig", "TinyMLPRegressor", "build_architecture", "build_label_set",
    "compute_adoa", "compute_label_stats", "generate_virtual_anchors", "make_localizer_net",
    "measure", "run_track", "visible_anchors",
]

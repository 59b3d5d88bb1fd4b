"""Simulation toolkit for LiDAR spoofing attacks on camera-LiDAR fusion perception.

Modules: :mod:`geometry` (frames, frusta, boxes), :mod:`scene` (synthetic scans),
:mod:`attack` (spoof placement), :mod:`detect` (frustum-constrained detection and
outcome matching), :mod:`defense` (pass-through and shadow scoring), :mod:`track`
(Kalman tracking with gating), :mod:`kitti` (file formats) and :mod:`harness`
(experiments, case studies and the CLI).
"""

from .attack import AttackSchedule, AttackSpec, SpoofPattern, place_frustum_attack
from .defense import CarloConfig, ShadowConfig, carlo_score, roc_curve, shadow_anomaly_score
from .detect import Detection, DetectorConfig, detect_frustum_constrained, match_outcomes
from .geometry import BBox2D, Box3D, CameraModel, Frustum, frustum_from_bbox, project_box3d
from .scene import PointCloud, ScannerModel, Scene, SceneObject, default_scene, simulate_scan
from .track import MotionModel, TrackState, gate, manage_tracks, predict, update

__version__ = "0.1.0"

__all__ = [
    "AttackSchedule", "AttackSpec", "BBox2D", "Box3D", "CameraModel", "CarloConfig",
    "Detection", "DetectorConfig", "Frustum", "MotionModel", "PointCloud", "ScannerModel",
    "Scene", "SceneObject", "ShadowConfig", "SpoofPattern", "TrackState", "carlo_score",
    "default_scene", "detect_frustum_constrained", "frustum_from_bbox", "gate",
    "manage_tracks", "match_outcomes", "place_frustum_attack", "predict", "project_box3d",
    "roc_curve", "shadow_anomaly_score", "simulate_scan", "update",
]

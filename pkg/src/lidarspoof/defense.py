"""Model-agnostic spoofing defenses: pass-through (CARLO) and shadow plausibility scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import Polygon

from .detect import Detection
from .geometry import (CameraModel, GeometryError, frustum_from_bbox, project_box3d,
                       ray_box_intersect_many)
from .scene import DEFAULT_MOUNT_HEIGHT, PointCloud, ScannerModel, expected_point_count


class EmptyClass(ValueError):
    pass


@dataclass(frozen=True)
class CarloConfig:
    threshold: float = 0.5
    behind_margin: float = 0.5
    box_dilation: float = 0.2
    # Ground returns are not evidence of a body; skip them when counting P_in.
    ground_z: Optional[float] = -DEFAULT_MOUNT_HEIGHT
    ground_eps: float = 0.2
    require_ray_hit: bool = True

    def __post_init__(self):
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must lie in [0, 1]")
        if self.behind_margin < 0 or self.box_dilation < 0:
            raise ValueError("margins must be non-negative")


@dataclass(frozen=True)
class ShadowConfig:
    lidar_height: float = DEFAULT_MOUNT_HEIGHT
    max_shadow_len: float = 40.0
    anomaly_threshold: float = 0.5
    cell_size: float = 0.5
    w_shadow: float = 0.7
    w_count: float = 0.3

    def __post_init__(self):
        if self.lidar_height <= 0:
            raise ValueError("lidar_height must be positive")
        if self.max_shadow_len <= 0 or self.cell_size <= 0:
            raise ValueError("max_shadow_len and cell_size must be positive")
        if not (0.0 <= self.anomaly_threshold <= 1.0):
            raise ValueError("anomaly_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class DefenseVerdict:
    score: float
    classified_spoof: bool

    @classmethod
    def from_score(cls, score: float, threshold: float) -> "DefenseVerdict":
        return cls(float(score), bool(score > threshold))


# --- CARLO -------------------------------------------------------------------

def carlo_counts(cloud: PointCloud, det: Detection, sensor_origin=None, *,
                 camera: Optional[CameraModel] = None,
                 cfg: CarloConfig = CarloConfig()) -> Tuple[int, int]:
    """(P_in, P_thru) over points inside the detection's own camera frustum."""
    camera = camera or CameraModel.kitti_default()
    origin = np.zeros(3) if sensor_origin is None else np.asarray(sensor_origin, dtype=float)
    try:
        bbox = project_box3d(camera, det.box)
    except GeometryError:
        return 0, 0
    frustum = frustum_from_bbox(camera, bbox, 1.0, 100.0)
    pts = cloud.xyz[frustum.contains(cloud.xyz)]
    if len(pts) == 0:
        return 0, 0
    inside = det.box.contains(pts, margin=cfg.box_dilation)
    if cfg.ground_z is not None:
        inside &= pts[:, 2] > cfg.ground_z + cfg.ground_eps
    rel = pts - origin
    rng = np.linalg.norm(rel, axis=1)
    dirs = rel / np.maximum(rng, 1e-12)[:, None]
    _, t_exit = ray_box_intersect_many(np.broadcast_to(origin, dirs.shape), dirs, det.box)
    if cfg.require_ray_hit:
        thru = ~np.isnan(t_exit) & (rng > t_exit + cfg.behind_margin)
    else:
        far = np.linalg.norm(det.box.corners() - origin, axis=1).max()
        limit = np.where(np.isnan(t_exit), far, t_exit)
        thru = rng > limit + cfg.behind_margin
    return int(inside.sum()), int((thru & ~inside).sum())


def carlo_score(cloud: PointCloud, det: Detection, sensor_origin=None, *,
                camera: Optional[CameraModel] = None,
                cfg: CarloConfig = CarloConfig()) -> float:
    p_in, p_thru = carlo_counts(cloud, det, sensor_origin, camera=camera, cfg=cfg)
    return p_thru / max(1, p_in + p_thru)


def carlo_classify(score: float, cfg: CarloConfig = CarloConfig()) -> DefenseVerdict:
    return DefenseVerdict.from_score(score, cfg.threshold)


# --- ShadowCatcher surrogate ---------------------------------------------------

@dataclass(frozen=True)
class ShadowRegion:
    polygon: Polygon
    r_start: float
    r_end: float
    az_min: float
    az_max: float

    @property
    def length(self) -> float:
        return self.r_end - self.r_start


def shadow_length(r: float, h: float, cfg: ShadowConfig) -> float:
    """Radial extent of the ground shadow behind an edge of height h at range r."""
    H = cfg.lidar_height
    if h >= H:
        return cfg.max_shadow_len
    return min(r * H / (H - h) - r, cfg.max_shadow_len)


def shadow_region(det: Detection, cfg: ShadowConfig = ShadowConfig(), sensor_origin=None,
                  ground_z: Optional[float] = None) -> ShadowRegion:
    """BEV trapezoid cast by the detection box from its far edge outward."""
    origin = np.zeros(3) if sensor_origin is None else np.asarray(sensor_origin, dtype=float)
    ground_z = origin[2] - cfg.lidar_height if ground_z is None else ground_z
    c = det.box.corners()[:4, :2] - origin[:2]
    az_c = math.atan2(*det.box.center[1::-1] - origin[1::-1])
    az = np.mod(np.arctan2(c[:, 1], c[:, 0]) - az_c + math.pi, 2 * math.pi) - math.pi + az_c
    r = float(np.linalg.norm(c, axis=1).max())
    h = det.box.center[2] + 0.5 * det.box.height - ground_z
    r_end = r + shadow_length(r, max(h, 0.0), cfg)
    a0, a1 = float(az.min()), float(az.max())
    ring = lambda rr, a: (origin[0] + rr * math.cos(a), origin[1] + rr * math.sin(a))
    poly = Polygon([ring(r, a0), ring(r_end, a0), ring(r_end, a1), ring(r, a1)])
    return ShadowRegion(poly, r, r_end, a0, a1)


def _cell_keys(xy: np.ndarray, size: float) -> np.ndarray:
    """Packed integer ids of the grid cells containing ``xy``."""
    ij = np.floor(np.asarray(xy).reshape(-1, 2) / size).astype(np.int64)
    return np.unique((ij[:, 0] << 32) + (ij[:, 1] & 0xFFFFFFFF))


def reachable_ground_cells(region: ShadowRegion, scanner: ScannerModel, size: float,
                           sensor_origin=None) -> np.ndarray:
    """Grid cells in the region that an unobstructed scan would put a ground return in."""
    origin = np.zeros(3) if sensor_origin is None else np.asarray(sensor_origin, dtype=float)
    el = np.asarray(scanner.elevation_angles)
    el = el[el < 0]
    radii = scanner.mount_height / np.tan(-el)
    keep = (radii >= region.r_start) & (radii <= region.r_end)
    keep &= scanner.mount_height / np.sin(-el) <= scanner.max_range
    radii = radii[keep]
    if len(radii) == 0:
        return np.zeros(0, dtype=np.int64)
    step = scanner.azimuth_step
    az = np.arange(math.floor(region.az_min / step), math.ceil(region.az_max / step) + 1) * step
    R, A = np.meshgrid(radii, az)
    xy = np.stack([origin[0] + R * np.cos(A), origin[1] + R * np.sin(A)], axis=-1).reshape(-1, 2)
    xy = xy[shapely.contains_xy(region.polygon, xy[:, 0], xy[:, 1])]
    return _cell_keys(xy, size)


def shadow_features(cloud: PointCloud, det: Detection, cfg: ShadowConfig = ShadowConfig(),
                    sensor_origin=None, scanner: Optional[ScannerModel] = None):
    """(populated shadow-cell fraction, in-box count, expected count)."""
    scanner = scanner or ScannerModel.hdl64(mount_height=cfg.lidar_height)
    region = shadow_region(det, cfg, sensor_origin)
    cells = reachable_ground_cells(region, scanner, cfg.cell_size, sensor_origin)
    xy = cloud.xyz[:, :2]
    lo, hi = np.array(region.polygon.bounds[:2]), np.array(region.polygon.bounds[2:])
    near = np.all((xy >= lo) & (xy <= hi), axis=1)
    xy = xy[near]
    xy = xy[shapely.contains_xy(region.polygon, xy[:, 0], xy[:, 1])]
    frac = float(np.isin(cells, _cell_keys(xy, cfg.cell_size)).mean()) if len(cells) else 0.0
    n_in = int(det.box.contains(cloud.xyz, margin=0.2).sum())
    expected = expected_point_count(det.box, scanner, sensor_origin)
    return frac, n_in, expected


def shadow_anomaly_score(cloud: PointCloud, det: Detection, cfg: ShadowConfig = ShadowConfig(),
                         sensor_origin=None, scanner: Optional[ScannerModel] = None) -> float:
    frac, n_in, expected = shadow_features(cloud, det, cfg, sensor_origin, scanner)
    deficit = float(np.clip(1.0 - n_in / expected, 0.0, 1.0)) if expected > 0 else 0.0
    return float(np.clip(cfg.w_shadow * frac + cfg.w_count * deficit, 0.0, 1.0))


def shadow_classify(score: float, cfg: ShadowConfig = ShadowConfig()) -> DefenseVerdict:
    return DefenseVerdict.from_score(score, cfg.anomaly_threshold)


# --- ROC -----------------------------------------------------------------------

@dataclass(frozen=True)
class RocResult:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores_spoof: Sequence[float], scores_valid: Sequence[float]) -> RocResult:
    """ROC with spoof as the positive class, sweeping ``score >= t`` over unique scores."""
    pos = np.asarray(scores_spoof, dtype=float)
    neg = np.asarray(scores_valid, dtype=float)
    if len(pos) == 0 or len(neg) == 0:
        raise EmptyClass("both classes need at least one score")
    thr = np.unique(np.concatenate([pos, neg]))[::-1]
    pos_s, neg_s = np.sort(pos), np.sort(neg)
    tp = len(pos) - np.searchsorted(pos_s, thr, side="left")
    fp = len(neg) - np.searchsorted(neg_s, thr, side="left")
    tpr = np.concatenate([[0.0], tp / len(pos)])
    fpr = np.concatenate([[0.0], fp / len(neg)])
    auc = float(np.sum(np.diff(fpr) * 0.5 * (tpr[1:] + tpr[:-1])))
    return RocResult(fpr, tpr, np.concatenate([[np.inf], thr]), auc)

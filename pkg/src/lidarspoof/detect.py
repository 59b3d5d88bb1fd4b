"""Surrogate geometric 3D detectors and detection-to-truth outcome matching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import BBox2D, Box3D, Frustum, iou_bev
from .scene import DEFAULT_MOUNT_HEIGHT, PointCloud

# Amodal size priors: detectors regress full vehicle boxes from partial views.
MIN_DIMS = (1.5, 1.5, 1.0)
LENGTH_PRIOR = 4.0
LENGTH_AXIS_MIN_EXTENT = 3.0

MATCH_IOU = 0.5
SPOOF_RADIUS = 2.5


class DegenerateCluster(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float
    source_frustum: Optional[BBox2D] = None
    n_points: int = 0

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class DetectorConfig:
    ground_z: float = -DEFAULT_MOUNT_HEIGHT
    ground_eps: float = 0.2
    cluster_radius: float = 1.0
    min_cluster_points: int = 8
    frustum_mode: bool = False
    score_bias: str = "none"
    score_saturation: float = 200.0
    range_ref: float = 50.0
    merge_iou: float = 0.25

    def __post_init__(self):
        for name in ("ground_eps", "cluster_radius", "min_cluster_points", "score_saturation",
                     "range_ref"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 <= self.merge_iou <= 1.0):
            raise ValueError("merge_iou must lie in [0, 1]")
        if self.score_bias not in ("none", "range_weighted"):
            raise ValueError(f"unknown score_bias {self.score_bias!r}")

    @classmethod
    def biased(cls, **kw) -> "DetectorConfig":
        """Frustum-constrained detector that over-trusts small far clusters."""
        params = dict(frustum_mode=True, score_bias="range_weighted", score_saturation=20.0)
        params.update(kw)
        return cls(**params)


@dataclass(frozen=True)
class OutcomeFlags:
    fp_success: bool = False
    fn_success: bool = False
    translation: bool = False

    def __post_init__(self):
        if self.translation and not (self.fp_success and self.fn_success):
            raise ValueError("translation requires both fp and fn success")

    @classmethod
    def from_parts(cls, fp: bool, fn: bool) -> "OutcomeFlags":
        return cls(bool(fp), bool(fn), bool(fp and fn))


@dataclass(frozen=True)
class MatchResult:
    matches: dict                      # truth index -> detection index
    flags: List[OutcomeFlags]          # per truth
    false_positives: List[int]         # unmatched detection indices
    spoof_detection: Optional[int] = None
    fp_success: bool = False


# --- box fitting -----------------------------------------------------------

def _closeness(xy: np.ndarray, angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles)[:, None], np.sin(angles)[:, None]
    u = c * xy[:, 0] + s * xy[:, 1]
    v = -s * xy[:, 0] + c * xy[:, 1]
    du = np.minimum(u.max(1, keepdims=True) - u, u - u.min(1, keepdims=True))
    dv = np.minimum(v.max(1, keepdims=True) - v, v - v.min(1, keepdims=True))
    d = np.maximum(np.minimum(du, dv), 0.01)
    return (1.0 / d).sum(axis=1)


def fit_yaw(xy: np.ndarray) -> float:
    """Rectangle orientation in [0, pi/2) maximizing point-to-edge closeness.

    Handles partial L-shaped and single-face views, where PCA and
    minimum-area rectangles are biased or ambiguous.
    """
    xy = xy - xy.mean(axis=0)
    coarse = np.deg2rad(np.arange(0.0, 90.0, 1.0))
    a0 = coarse[np.argmax(_closeness(xy, coarse))]
    fine = a0 + np.deg2rad(np.arange(-1.0, 1.0001, 0.05))
    return float(np.mod(fine[np.argmax(_closeness(xy, fine))], math.pi / 2))


def _extend(lo: float, hi: float, size: float, sensor: float):
    if hi - lo >= size:
        return lo, hi
    if sensor <= lo:
        return lo, lo + size
    if sensor >= hi:
        return hi - size, hi
    mid = 0.5 * (lo + hi)
    return mid - 0.5 * size, mid + 0.5 * size


def fit_box(points: np.ndarray, *, ground_z: Optional[float] = None,
            sensor_origin=None, length_prior: float = LENGTH_PRIOR,
            min_dims=MIN_DIMS) -> Box3D:
    """Oriented box around a cluster, completed amodally away from the sensor.

    Yaw comes from an L-shape closeness search over BEV rectangles. Extents
    below the vehicle priors are grown on the side facing away from the
    sensor, since the unseen part of an object is always the far side.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateCluster(f"need >= 3 points, got {len(pts)}")
    xy = pts[:, :2]
    if np.ptp(xy, axis=0).max() < 1e-9:
        raise DegenerateCluster("all points share one BEV location")
    sensor = np.zeros(2) if sensor_origin is None else np.asarray(sensor_origin, float)[:2]
    a = fit_yaw(xy)
    axes = np.array([[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]])
    proj = xy @ axes.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    ext = hi - lo
    s_proj = axes @ sensor

    ray = 0.5 * (lo + hi) - s_proj
    ray /= max(np.linalg.norm(ray), 1e-9)
    if ext.max() >= LENGTH_AXIS_MIN_EXTENT:
        k_len = int(np.argmax(ext))
    else:
        k_len = int(np.argmax(np.abs(ray)))
    k_wid = 1 - k_len
    sizes = np.empty(2)
    sizes[k_len] = max(length_prior, min_dims[0])
    sizes[k_wid] = min_dims[1]
    for k in range(2):
        lo[k], hi[k] = _extend(lo[k], hi[k], sizes[k], s_proj[k])
    center_xy = axes.T @ (0.5 * (lo + hi))

    z0, z1 = pts[:, 2].min(), pts[:, 2].max()
    if ground_z is not None and z0 - ground_z < 0.5:
        z0 = ground_z
    height = max(z1 - z0, min_dims[2])
    yaw = a if k_len == 0 else a + math.pi / 2
    yaw = (yaw + math.pi / 2) % math.pi - math.pi / 2
    return Box3D(np.array([center_xy[0], center_xy[1], z0 + 0.5 * height]),
                 hi[k_len] - lo[k_len], hi[k_wid] - lo[k_wid], height, yaw)


# --- clustering detectors ----------------------------------------------------

def _clusters(xyz: np.ndarray, radius: float, min_pts: int) -> List[np.ndarray]:
    if len(xyz) < min_pts:
        return []
    pairs = cKDTree(xyz).query_pairs(radius, output_type="ndarray")
    n = len(xyz)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    counts = np.bincount(labels)
    return [np.nonzero(labels == k)[0] for k in np.nonzero(counts >= min_pts)[0]]


def cluster_score(n_points: int, box: Box3D, cfg: DetectorConfig) -> float:
    base = min(1.0, n_points / cfg.score_saturation)
    if cfg.score_bias == "none":
        return base
    r = min(float(np.hypot(*box.center[:2])), 2 * cfg.range_ref)
    # (1 + r/r_ref) lies in [1, 3]; normalize back into [0, 1]
    return base * (1.0 + r / cfg.range_ref) / 3.0


def _above_ground(cloud: PointCloud, cfg: DetectorConfig) -> np.ndarray:
    return cloud.xyz[cloud.xyz[:, 2] > cfg.ground_z + cfg.ground_eps]


def _merge_overlapping(xyz: np.ndarray, groups: List[np.ndarray], cfg: DetectorConfig):
    """Fuse clusters whose fitted boxes overlap: one object, one box."""
    items = []
    for idx in groups:
        try:
            items.append((idx, fit_box(xyz[idx], ground_z=cfg.ground_z)))
        except DegenerateCluster:
            continue
    merged = True
    while merged and len(items) > 1:
        merged = False
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                if iou_bev(items[i][1], items[j][1]) > cfg.merge_iou:
                    idx = np.concatenate([items[i][0], items[j][0]])
                    items[j] = (idx, fit_box(xyz[idx], ground_z=cfg.ground_z))
                    del items[i]
                    merged = True
                    break
            if merged:
                break
    return items


def _detect_points(xyz: np.ndarray, cfg: DetectorConfig,
                   bbox: Optional[BBox2D] = None) -> List[Detection]:
    groups = _clusters(xyz, cfg.cluster_radius, cfg.min_cluster_points)
    dets = [Detection(box, cluster_score(len(idx), box, cfg), bbox, len(idx))
            for idx, box in _merge_overlapping(xyz, groups, cfg)]
    dets.sort(key=lambda d: -d.score)
    return dets


def detect_clusters(cloud: PointCloud, cfg: DetectorConfig = DetectorConfig()) -> List[Detection]:
    """LiDAR-only detector: ground removal, single-linkage clustering, box fitting.

    Provenance tags are never read.
    """
    return _detect_points(_above_ground(cloud, cfg), cfg)


def detect_frustum_constrained(cloud: PointCloud, frusta: Sequence[Frustum],
                               cfg: DetectorConfig = DetectorConfig.biased()
                               ) -> List[Optional[Detection]]:
    """At most one detection per camera frustum: the best-scoring in-frustum cluster.

    Returns a list aligned with ``frusta``; entries are None for empty frusta.
    """
    xyz = _above_ground(cloud, cfg)
    out: List[Optional[Detection]] = []
    for f in frusta:
        dets = _detect_points(xyz[f.contains(xyz)], cfg, f.bbox)
        out.append(dets[0] if dets else None)
    return out


def detections_list(per_frustum: Sequence[Optional[Detection]]) -> List[Detection]:
    return [d for d in per_frustum if d is not None]


# --- outcome matching --------------------------------------------------------

def match_outcomes(detections: Sequence[Detection], truths: Sequence[Box3D],
                   spoof_center=None, *, iou_threshold: float = MATCH_IOU,
                   spoof_radius: float = SPOOF_RADIUS) -> MatchResult:
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    matches: dict = {}
    used = set()
    for i in order:
        best, best_iou = None, iou_threshold
        for j, t in enumerate(truths):
            if j in matches:
                continue
            iou = iou_bev(detections[i].box, t)
            if iou >= best_iou:
                best, best_iou = j, iou
        if best is not None:
            matches[best] = i
            used.add(i)
    fps = [i for i in order if i not in used]
    spoof_det = None
    if spoof_center is not None:
        c = np.asarray(spoof_center, dtype=float)[:2]
        for i in fps:
            if np.hypot(*(detections[i].box.center[:2] - c)) <= spoof_radius:
                spoof_det = i
                break
    fp = spoof_det is not None
    flags = [OutcomeFlags.from_parts(fp, j not in matches) for j in range(len(truths))]
    return MatchResult(matches, flags, fps, spoof_det, fp)

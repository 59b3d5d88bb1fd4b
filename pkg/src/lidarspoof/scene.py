"""Synthetic scenes and an occlusion-aware spinning LiDAR simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Box3D, CameraModel, ray_box_intersect_many

DEFAULT_MOUNT_HEIGHT = 1.73
SIM_INTENSITY = 0.5


@dataclass(frozen=True)
class PointCloud:
    """Points with per-point provenance (``spoofed`` True for injected returns)."""

    xyz: np.ndarray
    intensity: np.ndarray
    spoofed: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        n = len(xyz)
        inten = np.broadcast_to(np.asarray(self.intensity, dtype=float), (n,)).copy()
        spoofed = np.broadcast_to(np.asarray(self.spoofed, dtype=bool), (n,)).copy()
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point cloud contains non-finite coordinates")
        for arr in (xyz, inten, spoofed):
            arr.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "spoofed", spoofed)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=bool))

    @classmethod
    def real(cls, xyz, intensity=SIM_INTENSITY) -> "PointCloud":
        return cls(xyz, intensity, False)

    @classmethod
    def spoof(cls, xyz, intensity=SIM_INTENSITY) -> "PointCloud":
        return cls(xyz, intensity, True)

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def n_spoofed(self) -> int:
        return int(self.spoofed.sum())

    def merge(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(np.vstack([self.xyz, other.xyz]),
                          np.concatenate([self.intensity, other.intensity]),
                          np.concatenate([self.spoofed, other.spoofed]))

    def select(self, mask) -> "PointCloud":
        return PointCloud(self.xyz[mask], self.intensity[mask], self.spoofed[mask])

    def erase_provenance(self) -> "PointCloud":
        return PointCloud(self.xyz, self.intensity, False)


@dataclass(frozen=True)
class ScannerModel:
    elevation_angles: Tuple[float, ...]
    azimuth_step: float
    max_range: float = 120.0
    mount_height: float = DEFAULT_MOUNT_HEIGHT

    def __post_init__(self):
        object.__setattr__(self, "elevation_angles", tuple(float(a) for a in self.elevation_angles))
        if len(self.elevation_angles) < 1:
            raise ValueError("scanner needs at least one channel")
        if not (0 < self.azimuth_step <= 2 * math.pi):
            raise ValueError("azimuth_step must lie in (0, 2*pi]")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @classmethod
    def hdl64(cls, **overrides) -> "ScannerModel":
        """64 uniformly spaced channels over [-24.8, +2.0] deg, 0.2 deg azimuth step."""
        elev = np.deg2rad(np.linspace(-24.8, 2.0, 64))
        params = dict(elevation_angles=tuple(elev), azimuth_step=math.radians(0.2),
                      max_range=120.0, mount_height=DEFAULT_MOUNT_HEIGHT)
        params.update(overrides)
        return cls(**params)

    @property
    def n_azimuth(self) -> int:
        return max(1, int(round(2 * math.pi / self.azimuth_step)))

    @property
    def elevation_spacing(self) -> float:
        e = np.sort(self.elevation_angles)
        return float(np.median(np.diff(e))) if len(e) > 1 else self.azimuth_step

    def ray_directions(self) -> np.ndarray:
        az = np.arange(self.n_azimuth) * self.azimuth_step
        el = np.asarray(self.elevation_angles)
        az_g, el_g = np.meshgrid(az, el)
        ce = np.cos(el_g)
        d = np.stack([ce * np.cos(az_g), ce * np.sin(az_g), np.sin(el_g)], axis=-1)
        return d.reshape(-1, 3)


@dataclass(frozen=True)
class SceneObject:
    id: str
    box: Box3D
    cls: str = "vehicle"
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.cls not in ("vehicle", "other"):
            raise ValueError(f"unknown object class {self.cls!r}")
        for name in ("velocity", "acceleration"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(3).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Scene:
    scanner: ScannerModel
    camera: CameraModel
    objects: Tuple[SceneObject, ...] = ()
    ground_z: float = -DEFAULT_MOUNT_HEIGHT
    timestamp: float = 0.0

    def __post_init__(self):
        objs = tuple(self.objects)
        ids = [o.id for o in objs]
        if len(set(ids)) != len(ids):
            raise ValueError("scene object ids must be unique")
        for o in objs:
            bottom = o.box.center[2] - 0.5 * o.box.height
            if bottom < self.ground_z - 1e-6:
                raise ValueError(f"object {o.id} extends below the ground plane")
        object.__setattr__(self, "objects", objs)

    def get(self, object_id) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def with_objects(self, objects: Iterable[SceneObject]) -> "Scene":
        return replace(self, objects=tuple(objects))

    @property
    def truth_boxes(self) -> List[Box3D]:
        return [o.box for o in self.objects]


def vehicle_box(x: float, y: float, *, length=4.5, width=1.8, height=1.5, yaw=0.0,
                ground_z: float = -DEFAULT_MOUNT_HEIGHT) -> Box3D:
    """Box resting on the ground plane with its BEV center at (x, y)."""
    return Box3D(np.array([x, y, ground_z + 0.5 * height]), length, width, height, yaw)


def cast_rays(scene: Scene, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest hit along unit rays from the scanner origin.

    Returns ``(t, hit_id)``: range per ray (``inf`` for no return) and the
    index of the object hit (-1 ground, -2 nothing).
    """
    n = len(dirs)
    t_best = np.full(n, np.inf)
    hit = np.full(n, -2, dtype=int)
    down = dirs[:, 2] < 0
    t_ground = np.full(n, np.inf)
    t_ground[down] = scene.ground_z / dirs[down, 2]
    better = t_ground < t_best
    t_best[better] = t_ground[better]
    hit[better] = -1
    origin = np.zeros((1, 3))
    for k, obj in enumerate(scene.objects):
        box = obj.box
        # cheap azimuth prefilter before the slab test
        r_xy = np.hypot(*box.center[:2])
        rad = 0.5 * math.hypot(box.length, box.width) + 1e-6
        if r_xy > rad:
            half = math.asin(min(1.0, rad / r_xy))
            az_c = math.atan2(box.center[1], box.center[0])
            az = np.arctan2(dirs[:, 1], dirs[:, 0])
            cand = np.abs((az - az_c + math.pi) % (2 * math.pi) - math.pi) <= half
            idx = np.nonzero(cand)[0]
        else:
            idx = np.arange(n)
        if len(idx) == 0:
            continue
        t0, _ = ray_box_intersect_many(np.broadcast_to(origin, (len(idx), 3)), dirs[idx], box)
        ok = ~np.isnan(t0) & (t0 > 0)
        sel = idx[ok]
        closer = t0[ok] < t_best[sel]
        t_best[sel[closer]] = t0[ok][closer]
        hit[sel[closer]] = k
    return t_best, hit


def simulate_scan(scene: Scene, *, return_labels: bool = False):
    """One full revolution of the scanner; every return is tagged real."""
    dirs = scene.scanner.ray_directions()
    t, hit = cast_rays(scene, dirs)
    ok = t <= scene.scanner.max_range
    cloud = PointCloud.real(dirs[ok] * t[ok, None])
    if return_labels:
        return cloud, hit[ok]
    return cloud


def step_scene(scene: Scene, dt: float) -> Scene:
    if dt <= 0:
        raise ValueError("dt must be positive")
    moved = []
    for o in scene.objects:
        center = o.box.center + o.velocity * dt + 0.5 * o.acceleration * dt * dt
        moved.append(replace(o, box=o.box.with_center(center),
                             velocity=o.velocity + o.acceleration * dt))
    return replace(scene, objects=tuple(moved), timestamp=scene.timestamp + dt)


def default_scene(objects: Sequence[SceneObject] = (), **kwargs) -> Scene:
    scanner = kwargs.pop("scanner", None) or ScannerModel.hdl64()
    camera = kwargs.pop("camera", None) or CameraModel.kitti_default()
    return Scene(scanner, camera, tuple(objects), ground_z=-scanner.mount_height, **kwargs)


def expected_point_count(box: Box3D, scanner: ScannerModel,
                         origin: Optional[np.ndarray] = None) -> float:
    """Returns a solid body of this box would produce if unoccluded.

    Silhouette solid angle divided by the solid angle of one beam cell.
    """
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    rel = box.center - origin
    r = float(np.linalg.norm(rel[:2]))
    if r <= 1e-6:
        return 0.0
    view = rel[:2] / r
    perp = np.array([-view[1], view[0]])
    c = box.corners()[:4, :2] - origin[:2]
    lateral = c @ perp
    depth_near = float((c @ view).min())
    depth_near = max(depth_near, 1e-3)
    az_span = (lateral.max() - lateral.min()) / depth_near
    z0 = box.center[2] - 0.5 * box.height - origin[2]
    z1 = box.center[2] + 0.5 * box.height - origin[2]
    el_span = math.atan2(z1, depth_near) - math.atan2(z0, depth_near)
    el = np.asarray(scanner.elevation_angles)
    lo, hi = math.atan2(z0, depth_near), math.atan2(z1, depth_near)
    n_ch = int(np.count_nonzero((el >= lo) & (el <= hi)))
    if n_ch == 0:
        n_ch = el_span / scanner.elevation_spacing
    return float(n_ch * az_span / scanner.azimuth_step)

"""Frames, pinhole projection, frusta, oriented boxes and rays.

Conventions
-----------
Sensor frame (LiDAR): x forward, y left, z up, origin at the scanner.
Camera frame: z forward (optical axis), x right, y down.
A point is moved from the sensor frame into the camera frame with
``p_cam = R @ p_sensor + t`` where ``(R, t)`` is ``CameraModel.pose``.

Vectors are plain ``numpy`` arrays of shape ``(3,)``; batched operations take
``(N, 3)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import shapely.geometry

DEFAULT_Z_NEAR = 1.0
DEFAULT_Z_FAR = 100.0


class GeometryError(ValueError):
    """Base class for invalid geometric configurations."""


class BehindCamera(GeometryError):
    pass


class FullyBehindCamera(GeometryError):
    pass


class OutsideImage(GeometryError):
    """Projection lands entirely outside the image."""


class RangeOutsideFrustum(GeometryError):
    pass


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        arr = np.asarray(x, dtype=float).reshape(3)
    else:
        arr = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"non-finite vector {arr}")
    return arr


def wrap_angle(theta: float) -> float:
    """Wrap to [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def rotz(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# Sensor (x fwd, y left, z up) -> camera (x right, y down, z fwd)
SENSOR_TO_CAMERA_AXES = np.array(
    [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]
)


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: SENSOR_TO_CAMERA_AXES.copy())
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside image")
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise GeometryError("camera rotation is not orthonormal")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_position(cls, fx, fy, cx, cy, width, height, position=(0.0, 0.0, 0.0)):
        """Camera looking along sensor +x, optical center at ``position`` (sensor frame)."""
        R = SENSOR_TO_CAMERA_AXES.copy()
        t = -R @ np.asarray(position, dtype=float)
        return cls(fx, fy, cx, cy, width, height, R, t)

    @classmethod
    def kitti_default(cls) -> "CameraModel":
        # KITTI left color camera: ~0.27 m ahead of and 0.08 m below the Velodyne.
        return cls.from_position(721.5377, 721.5377, 609.5593, 172.854, 1242, 375,
                                 position=(0.27, 0.0, -0.08))

    @property
    def center(self) -> np.ndarray:
        """Optical center in the sensor frame."""
        return -self.rotation.T @ self.translation

    def to_camera(self, p_sensor: np.ndarray) -> np.ndarray:
        p = np.asarray(p_sensor, dtype=float)
        return p @ self.rotation.T + self.translation

    def to_sensor(self, p_cam: np.ndarray) -> np.ndarray:
        p = np.asarray(p_cam, dtype=float)
        return (p - self.translation) @ self.rotation

    def pixels(self, p_cam: np.ndarray) -> np.ndarray:
        """Pinhole projection of camera-frame points, no depth check."""
        p = np.atleast_2d(p_cam)
        u = self.fx * p[:, 0] / p[:, 2] + self.cx
        v = self.fy * p[:, 1] / p[:, 2] + self.cy
        return np.stack([u, v], axis=1)


@dataclass(frozen=True)
class BBox2D:
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise GeometryError(f"degenerate bbox {self}")

    @property
    def center(self) -> Tuple[float, float]:
        return 0.5 * (self.u_min + self.u_max), 0.5 * (self.v_min + self.v_max)

    @property
    def area(self) -> float:
        return (self.u_max - self.u_min) * (self.v_max - self.v_min)

    def contains(self, uv: np.ndarray) -> np.ndarray:
        uv = np.atleast_2d(uv)
        return ((uv[:, 0] >= self.u_min) & (uv[:, 0] <= self.u_max)
                & (uv[:, 1] >= self.v_min) & (uv[:, 1] <= self.v_max))

    def iou(self, other: "BBox2D") -> float:
        iw = min(self.u_max, other.u_max) - max(self.u_min, other.u_min)
        ih = min(self.v_max, other.v_max) - max(self.v_min, other.v_min)
        if iw <= 0 or ih <= 0:
            return 0.0
        inter = iw * ih
        return inter / (self.area + other.area - inter)


@dataclass(frozen=True)
class Box3D:
    """Yaw-oriented box; ``length`` runs along the yaw heading."""

    center: np.ndarray
    length: float
    width: float
    height: float
    yaw: float = 0.0

    def __post_init__(self):
        c = vec3(self.center)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise GeometryError("box extents must be positive")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * np.array([self.length, self.width, self.height])

    @property
    def range(self) -> float:
        return float(np.linalg.norm(self.center))

    def with_center(self, center) -> "Box3D":
        return Box3D(np.asarray(center, dtype=float), self.length, self.width, self.height, self.yaw)

    def to_local(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.center) @ rotz(self.yaw)

    def corners(self) -> np.ndarray:
        """(8, 3) corners; first four on the bottom face."""
        hl, hw, hh = self.half_extents
        local = np.array([[sx * hl, sy * hw, sz * hh]
                          for sz in (-1, 1) for sx, sy in ((1, 1), (1, -1), (-1, -1), (-1, 1))])
        return local @ rotz(self.yaw).T + self.center

    def bev_polygon(self) -> shapely.geometry.Polygon:
        return shapely.geometry.Polygon(self.corners()[:4, :2])

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        local = np.atleast_2d(self.to_local(points))
        return np.all(np.abs(local) <= self.half_extents + margin, axis=1)


def box_contains(box: Box3D, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
    return box.contains(points, margin)


@dataclass(frozen=True)
class Frustum:
    camera: CameraModel
    bbox: BBox2D
    z_near: float = DEFAULT_Z_NEAR
    z_far: float = DEFAULT_Z_FAR

    def __post_init__(self):
        if not (0 < self.z_near < self.z_far):
            raise GeometryError("frustum needs 0 < z_near < z_far")

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            return np.zeros(0, dtype=bool)
        pc = self.camera.to_camera(pts)
        z = pc[:, 2]
        inside = (z >= self.z_near) & (z <= self.z_far)
        out = np.zeros(len(pts), dtype=bool)
        if inside.any():
            uv = self.camera.pixels(pc[inside])
            out[inside] = self.bbox.contains(uv)
        return out

    def ray(self, u: float, v: float) -> Tuple[np.ndarray, np.ndarray]:
        """(origin, direction) in sensor frame for a pixel; direction has unit camera depth."""
        cam = self.camera
        d_cam = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
        return cam.center, d_cam @ cam.rotation

    def clamp(self, points: np.ndarray) -> np.ndarray:
        """Nearest-in-image-coordinates projection of points onto the frustum."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pc = self.camera.to_camera(pts)
        z = pc[:, 2]
        uv = np.empty((len(pts), 2))
        ok = z > 1e-9
        uv[ok] = self.camera.pixels(pc[ok])
        uv[~ok] = self.bbox.center
        uv[:, 0] = np.clip(uv[:, 0], self.bbox.u_min, self.bbox.u_max)
        uv[:, 1] = np.clip(uv[:, 1], self.bbox.v_min, self.bbox.v_max)
        zc = np.clip(np.where(ok, z, self.z_near), self.z_near, self.z_far)
        cam = self.camera
        p_cam = np.stack([(uv[:, 0] - cam.cx) / cam.fx * zc,
                          (uv[:, 1] - cam.cy) / cam.fy * zc, zc], axis=1)
        return cam.to_sensor(p_cam)

    def planes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Inward half-spaces ``n . p + c >= 0`` (sensor frame) bounding the frustum."""
        cam = self.camera
        R, t = cam.rotation, cam.translation
        b = self.bbox
        # camera-frame inward normals through the optical center
        side = [
            np.array([cam.fx, 0.0, cam.cx - b.u_min]),   # u >= u_min
            np.array([-cam.fx, 0.0, b.u_max - cam.cx]),  # u <= u_max
            np.array([0.0, cam.fy, cam.cy - b.v_min]),   # v >= v_min
            np.array([0.0, -cam.fy, b.v_max - cam.cy]),  # v <= v_max
        ]
        normals, offsets = [], []
        for n in side:
            normals.append(n @ R)
            offsets.append(n @ t)
        e3 = np.array([0.0, 0.0, 1.0])
        normals.append(e3 @ R)
        offsets.append(e3 @ t - self.z_near)
        normals.append(-(e3 @ R))
        offsets.append(self.z_far - e3 @ t)
        return np.array(normals), np.array(offsets)


def project_point(camera: CameraModel, p_sensor) -> Tuple[float, float]:
    pc = camera.to_camera(vec3(p_sensor))
    if pc[2] <= 0:
        raise BehindCamera(f"camera depth {pc[2]:.3f} <= 0")
    u, v = camera.pixels(pc)[0]
    return float(u), float(v)


def project_box3d(camera: CameraModel, box: Box3D) -> BBox2D:
    pc = camera.to_camera(box.corners())
    visible = pc[:, 2] > 0
    if not visible.any():
        raise FullyBehindCamera("no box corner in front of the camera")
    uv = camera.pixels(pc[visible])
    u0 = max(0.0, float(uv[:, 0].min()))
    u1 = min(float(camera.width), float(uv[:, 0].max()))
    v0 = max(0.0, float(uv[:, 1].min()))
    v1 = min(float(camera.height), float(uv[:, 1].max()))
    if not (u0 < u1 and v0 < v1):
        raise OutsideImage("box projects outside the image")
    return BBox2D(u0, v0, u1, v1)


def frustum_from_bbox(camera: CameraModel, bbox: BBox2D,
                      z_near: float = DEFAULT_Z_NEAR, z_far: float = DEFAULT_Z_FAR) -> Frustum:
    return Frustum(camera, bbox, z_near, z_far)


def frustum_contains(f: Frustum, p_sensor) -> bool:
    return bool(f.contains(np.asarray(p_sensor, dtype=float).reshape(1, 3))[0])


def frustum_axis_point(f: Frustum, range_m: float, *, range_mode: str = "euclidean") -> np.ndarray:
    """Point on the ray through the bbox center pixel at the requested range.

    ``range_mode="euclidean"`` measures distance from the sensor origin;
    ``"axis"`` measures distance along the ray from the optical center.
    """
    origin, d = f.ray(*f.bbox.center)
    norm = np.linalg.norm(d)
    if range_mode == "axis":
        s = range_m / norm
    elif range_mode == "euclidean":
        if not (f.z_near <= range_m <= f.z_far):
            raise RangeOutsideFrustum(f"range {range_m:.2f} outside [{f.z_near}, {f.z_far}]")
        # |origin + s d| = range_m, take the forward root
        a = d @ d
        b = 2.0 * origin @ d
        c = origin @ origin - range_m ** 2
        disc = b * b - 4 * a * c
        if disc < 0:
            raise RangeOutsideFrustum("range unreachable along frustum axis")
        s = (-b + math.sqrt(disc)) / (2 * a)
    else:
        raise ValueError(f"unknown range_mode {range_mode!r}")
    # d has unit camera depth, so s is the camera-frame depth
    if not (f.z_near <= s <= f.z_far):
        raise RangeOutsideFrustum(f"depth {s:.2f} outside [{f.z_near}, {f.z_far}]")
    return origin + s * d


def ray_box_intersect(origin, direction, box: Box3D) -> Optional[Tuple[float, float]]:
    t0, t1 = ray_box_intersect_many(np.asarray(origin, dtype=float).reshape(1, 3),
                                    np.asarray(direction, dtype=float).reshape(1, 3), box)
    if np.isnan(t0[0]):
        return None
    return float(t0[0]), float(t1[0])


def ray_box_intersect_many(origins: np.ndarray, dirs: np.ndarray, box: Box3D):
    """Slab test for many rays. Returns (t_enter, t_exit), NaN where the ray misses."""
    R = rotz(box.yaw)
    o = (np.atleast_2d(origins) - box.center) @ R
    d = np.atleast_2d(dirs) @ R
    h = box.half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        ta = (-h - o) * inv
        tb = (h - o) * inv
    lo = np.minimum(ta, tb)
    hi = np.maximum(ta, tb)
    # rays parallel to a slab: inside -> unbounded, outside -> miss
    parallel = d == 0
    inside_slab = np.abs(o) <= h
    lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), hi)
    t_enter = lo.max(axis=1)
    t_exit = hi.min(axis=1)
    hit = (t_enter <= t_exit) & (t_exit > 0)
    t_enter = np.where(hit, t_enter, np.nan)
    t_exit = np.where(hit, t_exit, np.nan)
    return t_enter, t_exit


def iou_bev(a: Box3D, b: Box3D) -> float:
    pa, pb = a.bev_polygon(), b.bev_polygon()
    inter = pa.intersection(pb).area
    if inter <= 0.0:
        return 0.0
    union = pa.area + pb.area - inter
    return float(min(1.0, inter / union))


def bev_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))

"""Readers and writers for the KITTI object benchmark file formats."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .geometry import BBox2D, Box3D, CameraModel, GeometryError, project_box3d
from .scene import PointCloud

VELODYNE_DTYPE = np.dtype("<f4")
KITTI_IMAGE_SIZE = (1242, 375)


class MalformedLength(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def load_kitti_velodyne(data: bytes) -> PointCloud:
    if len(data) % 16:
        raise MalformedLength(f"{len(data)} bytes is not a multiple of 16")
    arr = np.frombuffer(data, dtype=VELODYNE_DTYPE).reshape(-1, 4)
    return PointCloud.real(arr[:, :3].astype(float), arr[:, 3].astype(float))


def write_kitti_velodyne(cloud: PointCloud) -> bytes:
    arr = np.empty((len(cloud), 4), dtype=VELODYNE_DTYPE)
    arr[:, :3] = cloud.xyz
    arr[:, 3] = cloud.intensity
    return arr.tobytes()


@dataclass(frozen=True)
class KittiCalib:
    P2: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray

    def rect_to_velo(self, p_rect: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p_rect)
        p_ref = p @ np.linalg.inv(self.R0_rect).T
        R, t = self.Tr_velo_to_cam[:, :3], self.Tr_velo_to_cam[:, 3]
        # published rotations are not exactly orthonormal; invert, don't transpose
        return (p_ref - t) @ np.linalg.inv(R).T

    def velo_to_rect(self, p_velo: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p_velo)
        R, t = self.Tr_velo_to_cam[:, :3], self.Tr_velo_to_cam[:, 3]
        return (p @ R.T + t) @ self.R0_rect.T

    def camera(self, width: int = KITTI_IMAGE_SIZE[0], height: int = KITTI_IMAGE_SIZE[1]) -> CameraModel:
        K = self.P2[:, :3]
        # P2 = K [I | b]; fold the stereo baseline offset into the pose
        b = np.linalg.solve(K, self.P2[:, 3])
        R = self.R0_rect @ self.Tr_velo_to_cam[:, :3]
        t = self.R0_rect @ self.Tr_velo_to_cam[:, 3] + b
        # re-orthonormalize against rounding in published calib files
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        return CameraModel(K[0, 0], K[1, 1], K[0, 2], K[1, 2], width, height, R, t)


def parse_kitti_calib(text: str) -> KittiCalib:
    rows: Dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError("expected 'KEY: values'", lineno)
        key, vals = line.split(":", 1)
        try:
            rows[key.strip()] = np.array([float(v) for v in vals.split()])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    shapes = {"P2": (3, 4), "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4)}
    out = {}
    for key, shape in shapes.items():
        if key not in rows:
            raise ParseError(f"missing {key}")
        if rows[key].size != shape[0] * shape[1]:
            raise ParseError(f"{key} needs {shape[0] * shape[1]} values")
        out[key] = rows[key].reshape(shape)
    return KittiCalib(**out)


def load_kitti_calib(text: str, width: int = KITTI_IMAGE_SIZE[0],
                     height: int = KITTI_IMAGE_SIZE[1]) -> CameraModel:
    return parse_kitti_calib(text).camera(width, height)


def format_kitti_calib(calib: KittiCalib) -> str:
    def row(m):
        return " ".join(f"{v:.12e}" for v in np.asarray(m).ravel())
    return (f"P2: {row(calib.P2)}\nR0_rect: {row(calib.R0_rect)}\n"
            f"Tr_velo_to_cam: {row(calib.Tr_velo_to_cam)}\n")


def calib_for_camera(camera: CameraModel) -> KittiCalib:
    K = np.array([[camera.fx, 0, camera.cx], [0, camera.fy, camera.cy], [0, 0, 1.0]])
    P2 = np.hstack([K, np.zeros((3, 1))])
    Tr = np.hstack([camera.rotation, camera.translation[:, None]])
    return KittiCalib(P2, np.eye(3), Tr)


@dataclass(frozen=True)
class KittiLabel:
    cls: str
    bbox: BBox2D
    box: Box3D
    truncation: float = 0.0
    occlusion: int = 0
    score: Optional[float] = None


def _yaw_velo(ry: float, calib: KittiCalib) -> float:
    heading_rect = np.array([math.cos(ry), 0.0, -math.sin(ry)])
    R = calib.R0_rect @ calib.Tr_velo_to_cam[:, :3]
    h = np.linalg.solve(R, heading_rect)
    return math.atan2(h[1], h[0])


def _ry_rect(yaw: float, calib: KittiCalib) -> float:
    R = calib.R0_rect @ calib.Tr_velo_to_cam[:, :3]
    h = R @ np.array([math.cos(yaw), math.sin(yaw), 0.0])
    return math.atan2(-h[2], h[0])


def load_kitti_labels(text: str, calib: KittiCalib,
                      skip: Iterable[str] = ("DontCare",)) -> List[KittiLabel]:
    skip = set(skip)
    labels = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields:
            continue
        if fields[0] in skip:
            continue
        if len(fields) not in (15, 16):
            raise ParseError(f"expected 15 or 16 fields, got {len(fields)}", lineno)
        try:
            vals = [float(v) for v in fields[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        trunc, occ, _alpha, x1, y1, x2, y2, h, w, l, x, y, z, ry = vals[:14]
        score = vals[14] if len(vals) == 15 else None
        try:
            bbox = BBox2D(x1, y1, x2, y2)
            bottom = calib.rect_to_velo(np.array([x, y, z]))[0]
            up = calib.rect_to_velo(np.array([x, y - h, z]))[0] - bottom
            center = bottom + 0.5 * up
            box = Box3D(center, l, w, h, _yaw_velo(ry, calib))
        except GeometryError as exc:
            raise ParseError(str(exc), lineno) from None
        labels.append(KittiLabel(fields[0], bbox, box, trunc, int(occ), score))
    return labels


def format_kitti_label(cls: str, box: Box3D, calib: KittiCalib, camera: CameraModel,
                       score: Optional[float] = None, bbox: Optional[BBox2D] = None) -> str:
    x, y, z = calib.velo_to_rect(box.center)[0] + np.array([0.0, 0.5 * box.height, 0.0])
    ry = _ry_rect(box.yaw, calib)
    if bbox is None:
        try:
            bbox = project_box3d(camera, box)
        except GeometryError:
            bbox = BBox2D(0.0, 0.0, 1.0, 1.0)
    alpha = ry - math.atan2(x, z)
    parts = [cls, "0.00", "0", f"{alpha:.6f}", f"{bbox.u_min:.4f}", f"{bbox.v_min:.4f}",
             f"{bbox.u_max:.4f}", f"{bbox.v_max:.4f}", f"{box.height:.6f}", f"{box.width:.6f}",
             f"{box.length:.6f}", f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", f"{ry:.6f}"]
    if score is not None:
        parts.append(f"{score:.6f}")
    return " ".join(parts)


def format_kitti_labels(entries: Sequence[tuple], calib: KittiCalib, camera: CameraModel) -> str:
    """``entries`` are ``(cls, box, score)`` tuples; score may be None."""
    return "".join(format_kitti_label(c, b, calib, camera, s) + "\n" for c, b, s in entries)

"""Spoof point generation and placement: naive, frustum and invalidation attacks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (
    DEFAULT_Z_FAR,
    DEFAULT_Z_NEAR,
    Frustum,
    GeometryError,
    frustum_axis_point,
    frustum_from_bbox,
    project_box3d,
)
from .scene import PointCloud, Scene, SceneObject, default_scene, simulate_scan, vehicle_box

MAX_SPOOF_POINTS = 200
MIN_SPOOF_POINTS = 1
FRUSTUM_D_RANGE = (-10.0, 30.0)
MIN_IN_FRUSTUM_FRACTION = 0.9
MAX_REDRAWS = 16

# Per-axis (forward, left, up) moments in meters; forward points at the victim.
DEFAULT_MEAN = (1.0, 0.0, 1.0)
DEFAULT_STD = (0.1, 0.5, 0.2)


class AttackError(ValueError):
    pass


class CapExceeded(AttackError):
    pass


class TargetNotVisible(AttackError):
    pass


@dataclass(frozen=True)
class SpoofPattern:
    kind: str = "gaussian"
    mean: Tuple[float, float, float] = DEFAULT_MEAN
    std: Tuple[float, float, float] = DEFAULT_STD
    points: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    name: str = "table1"

    def __post_init__(self):
        if self.kind not in ("gaussian", "trace"):
            raise AttackError(f"unknown pattern kind {self.kind!r}")
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "std", tuple(float(s) for s in self.std))
        if any(s < 0 for s in self.std):
            raise AttackError("pattern stddev must be non-negative")
        if self.kind == "trace":
            pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
            if len(pts) == 0:
                raise AttackError("trace pattern needs at least one point")
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)

    @classmethod
    def gaussian(cls, mean=DEFAULT_MEAN, std=DEFAULT_STD) -> "SpoofPattern":
        return cls("gaussian", mean, std)

    @classmethod
    def trace(cls, points, name: str = "trace") -> "SpoofPattern":
        return cls("trace", points=np.asarray(points, dtype=float), name=name)


@dataclass(frozen=True)
class AttackSpec:
    n_points: int
    relative_distance: float = 0.0
    pattern: SpoofPattern = field(default_factory=SpoofPattern)
    seed: int = 0
    target_id: Optional[str] = None

    def __post_init__(self):
        if int(self.n_points) != self.n_points:
            raise AttackError("n_points must be an integer")
        object.__setattr__(self, "n_points", int(self.n_points))
        if self.n_points < MIN_SPOOF_POINTS:
            raise AttackError(f"n_points must be >= {MIN_SPOOF_POINTS}")
        if self.n_points > MAX_SPOOF_POINTS:
            raise CapExceeded(f"n_points {self.n_points} exceeds the {MAX_SPOOF_POINTS}-point cap")


@dataclass(frozen=True)
class AttackSchedule:
    frames: Tuple[Tuple[int, AttackSpec], ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        idx = [f for f, _ in frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise AttackError("schedule frame indices must be strictly increasing")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def spec_at(self, frame: int) -> Optional[AttackSpec]:
        for f, spec in self.frames:
            if f == frame:
                return spec
        return None

    @property
    def distances(self) -> List[float]:
        return [s.relative_distance for _, s in self.frames]


def _check_cap(n: int) -> None:
    if n < MIN_SPOOF_POINTS:
        raise AttackError(f"need at least {MIN_SPOOF_POINTS} spoof point")
    if n > MAX_SPOOF_POINTS:
        raise CapExceeded(f"{n} points exceeds the {MAX_SPOOF_POINTS}-point cap")


def local_frame(forward_dir) -> np.ndarray:
    """Rows: forward (horizontal, toward victim), left, up."""
    f = np.asarray(forward_dir, dtype=float).copy()
    f[2] = 0.0
    norm = np.linalg.norm(f)
    if norm < 1e-9:
        raise AttackError("forward direction has no horizontal component")
    f /= norm
    up = np.array([0.0, 0.0, 1.0])
    left = np.cross(up, f)
    return np.stack([f, left, up])


def _draw_local(pattern: SpoofPattern, n: int, rng: np.random.Generator) -> np.ndarray:
    if pattern.kind == "gaussian":
        return rng.normal(pattern.mean, pattern.std, size=(n, 3))
    pts = pattern.points
    idx = rng.choice(len(pts), size=n, replace=n > len(pts))
    return pts[idx]


def sample_spoof_points(center, forward_dir, pattern: SpoofPattern, n: int,
                        seed) -> PointCloud:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n < 1:
        raise AttackError("n must be >= 1")
    frame = local_frame(forward_dir)
    local = _draw_local(pattern, n, rng)
    return PointCloud.spoof(np.asarray(center, dtype=float) + local @ frame)


def place_naive_attack(cloud: PointCloud, sensor_origin, azimuth: float, range_m: float,
                       spec: AttackSpec, *, ground_z: Optional[float] = None) -> PointCloud:
    """Inject a spoof cluster at (azimuth, range) with no cross-sensor consistency.

    The cluster is anchored at ground level below the commanded location
    (``ground_z`` defaults to the scanner mount height below the origin).
    """
    _check_cap(spec.n_points)
    if range_m <= 0:
        raise AttackError("range must be positive")
    origin = np.asarray(sensor_origin, dtype=float)
    if ground_z is None:
        ground_z = origin[2] - 1.73
    center = origin + range_m * np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
    center[2] = ground_z
    spoof = sample_spoof_points(center, origin - center, spec.pattern, spec.n_points, spec.seed)
    return cloud.merge(spoof)


def target_frustum(scene: Scene, target_id, *, z_near: float = DEFAULT_Z_NEAR,
                   z_far: float = DEFAULT_Z_FAR) -> Frustum:
    target = scene.get(target_id)
    try:
        bbox = project_box3d(scene.camera, target.box)
    except GeometryError as exc:
        raise TargetNotVisible(f"target {target_id}: {exc}") from None
    return frustum_from_bbox(scene.camera, bbox, z_near, z_far)


def place_frustum_attack(cloud: PointCloud, scene: Scene, target_id, spec: AttackSpec, *,
                         z_near: float = DEFAULT_Z_NEAR, z_far: float = DEFAULT_Z_FAR,
                         range_mode: str = "euclidean",
                         return_stats: bool = False):
    """Spoof inside the target's camera frustum at range ``r0 + d``.

    Out-of-frustum samples are re-drawn up to ``MAX_REDRAWS`` times and any
    stragglers are clamped onto the frustum boundary.
    Returns ``(cloud, spoof_center)`` (plus a stats dict if requested).
    """
    _check_cap(spec.n_points)
    lo, hi = FRUSTUM_D_RANGE
    if not (lo <= spec.relative_distance <= hi):
        raise AttackError(f"relative distance {spec.relative_distance} outside [{lo}, {hi}]")
    frustum = target_frustum(scene, target_id, z_near=z_near, z_far=z_far)
    r0 = float(np.linalg.norm(scene.get(target_id).box.center))
    try:
        spoof_center = frustum_axis_point(frustum, r0 + spec.relative_distance,
                                          range_mode=range_mode)
    except GeometryError as exc:
        raise AttackError(f"spoof location outside frustum: {exc}") from None

    anchor = spoof_center.copy()
    anchor[2] = scene.ground_z
    forward = -anchor
    frame = local_frame(forward)
    rng = np.random.default_rng(spec.seed)
    pts = anchor + _draw_local(spec.pattern, spec.n_points, rng) @ frame
    inside = frustum.contains(pts)
    first_pass = float(inside.mean())
    redraws = 0
    while not inside.all() and redraws < MAX_REDRAWS:
        bad = ~inside
        pts[bad] = anchor + _draw_local(spec.pattern, int(bad.sum()), rng) @ frame
        inside[bad] = frustum.contains(pts[bad])
        redraws += 1
    if not inside.all():
        pts[~inside] = frustum.clamp(pts[~inside])
    final = float(frustum.contains(pts).mean())
    if final < MIN_IN_FRUSTUM_FRACTION:
        raise AttackError(f"only {final:.2%} of spoof points inside the frustum")
    out = cloud.merge(PointCloud.spoof(pts))
    if return_stats:
        return out, spoof_center, {"first_pass_inside": first_pass, "redraws": redraws,
                                   "final_inside": final}
    return out, spoof_center


def shadow_subfrustum_sampler(scene: Scene, target_id, *, depth: float = 25.0,
                              z_band: Tuple[float, float] = (0.2, 2.0)):
    frustum = target_frustum(scene, target_id)
    box = scene.get(target_id).box
    r_far = float(np.max(np.linalg.norm(box.corners(), axis=1)))
    return frustum, r_far, r_far + depth, (scene.ground_z + z_band[0], scene.ground_z + z_band[1])


def place_invalidation_attack(cloud: PointCloud, scene: Scene, target_id, n: int, seed, *,
                              depth: float = 25.0,
                              z_band: Tuple[float, float] = (0.2, 2.0)) -> PointCloud:
    """Scatter ``n`` points uniformly in the shadow sub-frustum behind a target."""
    _check_cap(n)
    frustum, r_lo, r_hi, (z_lo, z_hi) = shadow_subfrustum_sampler(
        scene, target_id, depth=depth, z_band=z_band)
    b = frustum.bbox
    corners = []
    for u in (b.u_min, b.u_max):
        for v in (b.v_min, b.v_max):
            o, d = frustum.ray(u, v)
            dn = d / np.linalg.norm(d)
            for r in (r_lo, r_hi):
                corners.append(o + dn * (r + np.linalg.norm(o)))
    corners = np.array(corners)
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    lo[2] = max(lo[2], z_lo)
    hi[2] = min(hi[2], z_hi)
    if np.any(hi <= lo):
        raise AttackError("empty shadow region")
    rng = np.random.default_rng(seed)
    accepted = np.zeros((0, 3))
    for _ in range(200):
        cand = rng.uniform(lo, hi, size=(max(4 * n, 256), 3))
        r = np.linalg.norm(cand, axis=1)
        ok = (r >= r_lo) & (r <= r_hi) & frustum.contains(cand)
        accepted = np.vstack([accepted, cand[ok]])
        if len(accepted) >= n:
            break
    if len(accepted) < n:
        raise AttackError("could not sample the shadow region")
    return cloud.merge(PointCloud.spoof(accepted[:n]))


def constant_acceleration_offsets(n_frames: int, dt: float, *, v0: float = 0.0,
                                  a: float = 0.0, t0: Optional[float] = None) -> List[float]:
    """Displacements ``v0 t + a t^2 / 2`` at ``t = t0 + k dt``."""
    t0 = dt if t0 is None else t0
    ts = t0 + dt * np.arange(n_frames)
    return list(v0 * ts + 0.5 * a * ts ** 2)


def schedule_longitudinal(target_id, start_d: float, offsets: Sequence[float],
                          base_spec: AttackSpec, *, first_frame: int = 0,
                          vary_seed: bool = True) -> AttackSchedule:
    if len(offsets) < 1:
        raise AttackError("schedule needs at least one frame")
    lo, hi = FRUSTUM_D_RANGE
    frames = []
    for k, off in enumerate(offsets):
        d = float(start_d + off)
        if not (lo <= d <= hi):
            raise AttackError(f"frame {k}: distance {d:.2f} outside [{lo}, {hi}]")
        seed = base_spec.seed + k if vary_seed else base_spec.seed
        frames.append((first_frame + k, replace(base_spec, relative_distance=d,
                                                target_id=target_id, seed=seed)))
    return AttackSchedule(tuple(frames))


# --- trace templates -------------------------------------------------------

_TEMPLATE_LAYOUTS = (
    # (target range, occluder lateral offset, occluder range)
    (10.0, 1.2, 6.0),
    (12.0, -1.0, 7.0),
    (9.0, 1.6, 5.0),
    (14.0, -1.4, 8.0),
    (11.0, 0.9, 6.5),
)


@lru_cache(maxsize=None)
def _canned_templates() -> Tuple[np.ndarray, ...]:
    out = []
    for r, off, r_occ in _TEMPLATE_LAYOUTS:
        scene = default_scene([SceneObject("target", vehicle_box(r, 0.0)),
                               SceneObject("occluder", vehicle_box(r_occ, off, length=4.0,
                                                                   width=1.7, height=1.2))])
        cloud, labels = simulate_scan(scene, return_labels=True)
        pts = cloud.xyz[labels == 0]
        out.append(template_from_points(pts, ground_z=scene.ground_z))
    return tuple(out)


def template_from_points(points: np.ndarray, *, ground_z: float) -> np.ndarray:
    """Express captured object points in the (forward, left, up) pattern frame.

    Shifted so that the mean sits at forward +1 m, left 0 (matching the
    Gaussian pattern), with ``up`` measured from the ground.
    """
    pts = np.asarray(points, dtype=float)
    c = pts.mean(axis=0)
    frame = local_frame(-c)
    local = (pts - c) @ frame.T
    local[:, 0] += 1.0
    local[:, 2] = pts[:, 2] - ground_z
    return local


def canned_trace_patterns() -> List[SpoofPattern]:
    return [SpoofPattern.trace(t, name=f"occluded-vehicle-{k}")
            for k, t in enumerate(_canned_templates())]


def load_trace_pattern(path) -> SpoofPattern:
    """Load a user template: whitespace text or ``.npy`` with (forward, left, up) rows."""
    path = Path(path)
    if path.suffix == ".npy":
        pts = np.load(path)
    else:
        pts = np.loadtxt(path, ndmin=2)
    return SpoofPattern.trace(pts, name=path.stem)

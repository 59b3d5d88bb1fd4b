"""Synthetic scene factories: random fleets and the fixed case-study layouts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..scene import (DEFAULT_MOUNT_HEIGHT, ScannerModel, Scene, SceneObject, default_scene,
                     vehicle_box)

# (length, width, height, class)
ROAD_USERS: Dict[str, Tuple[float, float, float, str]] = {
    "car": (4.5, 1.8, 1.5, "vehicle"),
    "pedestrian": (0.6, 0.6, 1.75, "other"),
    "cyclist": (1.8, 0.6, 1.7, "other"),
}
DEFAULT_MIX = ("car", "car", "pedestrian", "pedestrian", "cyclist")

# Calibrated so a straight-ahead scan at 25 m returns ~240 points.
FIG6_TARGET = dict(length=4.6, width=1.9, height=1.78, yaw=0.03)


@dataclass(frozen=True)
class FleetConfig:
    mix: Tuple[str, ...] = DEFAULT_MIX
    r_min: float = 8.0
    r_max: float = 45.0
    half_fov: float = 0.6          # radians either side of +x
    min_separation: float = 7.0

    def __post_init__(self):
        unknown = [m for m in self.mix if m not in ROAD_USERS]
        if unknown:
            raise ValueError(f"unknown road users {unknown}")


def random_scene(rng: np.random.Generator, cfg: FleetConfig = FleetConfig(),
                 scanner: Optional[ScannerModel] = None) -> Scene:
    """Scatter the fleet mix in front of the sensor without overlaps."""
    ground_z = -(scanner.mount_height if scanner is not None else DEFAULT_MOUNT_HEIGHT)
    objs: List[SceneObject] = []
    for kind in cfg.mix:
        L, W, H, cls = ROAD_USERS[kind]
        for _ in range(100):
            r = rng.uniform(cfg.r_min, cfg.r_max)
            az = rng.uniform(-cfg.half_fov, cfg.half_fov)
            box = vehicle_box(r * math.cos(az), r * math.sin(az), length=L, width=W, height=H,
                              yaw=rng.uniform(-math.pi, math.pi), ground_z=ground_z)
            if all(np.hypot(*(box.center[:2] - o.box.center[:2])) > cfg.min_separation
                   for o in objs):
                objs.append(SceneObject(f"{kind}{len(objs)}", box, cls=cls))
                break
    return default_scene(objs, scanner=scanner)


def random_vehicle(rng: np.random.Generator, r: float, *, half_fov: float = 0.35) -> Scene:
    """A single passenger vehicle of randomized size and pose at range r."""
    az = rng.uniform(-half_fov, half_fov)
    box = vehicle_box(r * math.cos(az), r * math.sin(az), length=rng.uniform(3.8, 5.2),
                      width=rng.uniform(1.6, 2.0), height=rng.uniform(1.35, 1.9),
                      yaw=rng.uniform(-math.pi, math.pi))
    return default_scene([SceneObject("target", box)])


def target_scene(r0: float, *, lateral: float = 0.0, yaw: float = 0.0,
                 dims: Tuple[float, float, float] = (4.5, 1.8, 1.5)) -> Scene:
    L, W, H = dims
    return default_scene([SceneObject("target", vehicle_box(r0, lateral, length=L, width=W,
                                                            height=H, yaw=yaw))])


def fig6_scene() -> Scene:
    """The translation showcase: a large sedan 25 m ahead."""
    return default_scene([SceneObject("target", vehicle_box(25.0, 0.0, **FIG6_TARGET))])


def stealth_scenes(n: int, seed: int, r_range: Tuple[float, float] = (12.0, 35.0)) -> List[Scene]:
    """Targets placed near the center of the camera view for frustum attacks."""
    rng = np.random.default_rng(seed)
    scenes = []
    for _ in range(n):
        r0 = rng.uniform(*r_range)
        scenes.append(target_scene(r0, lateral=rng.uniform(-0.15, 0.15) * r0,
                                   yaw=rng.uniform(-0.3, 0.3),
                                   dims=(rng.uniform(3.9, 5.0), rng.uniform(1.65, 1.95),
                                         rng.uniform(1.4, 1.8))))
    return scenes

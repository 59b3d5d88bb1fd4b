"""Run configuration: one YAML document, strict keys, sections mapped to dataclasses.

Schema (all keys optional; unknown keys are errors)::

    seed: 0
    scene:    {n_scenes, mix: [car|pedestrian|cyclist, ...], r_min, r_max, half_fov,
               min_separation}
    scanner:  {channels, elevation_min_deg, elevation_max_deg, azimuth_step_deg,
               max_range, mount_height}
    detector: {ground_eps, cluster_radius, min_cluster_points, frustum_mode,
               score_bias: none|range_weighted, score_saturation, range_ref, merge_iou}
    attack:   {n_points, relative_distance, pattern: gaussian|trace, trace_index,
               mean: [f, l, u], std: [f, l, u]}
    defense:  {carlo: {threshold, behind_margin, box_dilation},
               shadow: {max_shadow_len, anomaly_threshold, cell_size}}
    tracker:  {q, dt, meas_var, confidence, max_misses, confirm_hits}
    grid:     {preset: default|stealth|coarse, n_values: [...], d_values: [...]}
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from ..attack import DEFAULT_MEAN, DEFAULT_STD, SpoofPattern, canned_trace_patterns
from ..defense import CarloConfig, ShadowConfig
from ..detect import DetectorConfig
from ..scene import ScannerModel
from .experiments import SweepGrid
from .fleet import DEFAULT_MIX, FleetConfig
from .scenarios import TrackerConfig


class ConfigError(ValueError):
    pass


def _strict(cls, data: Optional[Dict[str, Any]], where: str):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class SceneSection:
    n_scenes: int = 5
    mix: Tuple[str, ...] = DEFAULT_MIX
    r_min: float = 8.0
    r_max: float = 45.0
    half_fov: float = 0.6
    min_separation: float = 7.0

    def fleet(self) -> FleetConfig:
        return FleetConfig(tuple(self.mix), self.r_min, self.r_max, self.half_fov,
                           self.min_separation)


@dataclass(frozen=True)
class ScannerSection:
    channels: int = 64
    elevation_min_deg: float = -24.8
    elevation_max_deg: float = 2.0
    azimuth_step_deg: float = 0.2
    max_range: float = 120.0
    mount_height: float = 1.73

    def model(self) -> ScannerModel:
        elev = np.deg2rad(np.linspace(self.elevation_min_deg, self.elevation_max_deg,
                                      self.channels))
        return ScannerModel(tuple(elev), math.radians(self.azimuth_step_deg), self.max_range,
                            self.mount_height)


@dataclass(frozen=True)
class DetectorSection:
    ground_eps: float = 0.2
    cluster_radius: float = 1.0
    min_cluster_points: int = 8
    frustum_mode: bool = True
    score_bias: str = "range_weighted"
    score_saturation: float = 20.0
    range_ref: float = 50.0
    merge_iou: float = 0.25

    def config(self, ground_z: float) -> DetectorConfig:
        return DetectorConfig(ground_z, self.ground_eps, self.cluster_radius,
                              self.min_cluster_points, self.frustum_mode, self.score_bias,
                              self.score_saturation, self.range_ref, self.merge_iou)


@dataclass(frozen=True)
class AttackSection:
    n_points: int = 20
    relative_distance: float = 7.0
    pattern: str = "gaussian"
    trace_index: int = 0
    mean: Tuple[float, float, float] = DEFAULT_MEAN
    std: Tuple[float, float, float] = DEFAULT_STD

    def spoof_pattern(self) -> SpoofPattern:
        if self.pattern == "gaussian":
            return SpoofPattern.gaussian(tuple(self.mean), tuple(self.std))
        if self.pattern == "trace":
            return canned_trace_patterns()[self.trace_index]
        raise ConfigError(f"attack.pattern: unknown {self.pattern!r}")


@dataclass(frozen=True)
class CarloSection:
    threshold: float = 0.5
    behind_margin: float = 0.5
    box_dilation: float = 0.2


@dataclass(frozen=True)
class ShadowSection:
    max_shadow_len: float = 40.0
    anomaly_threshold: float = 0.5
    cell_size: float = 0.5


@dataclass(frozen=True)
class GridSection:
    preset: str = "coarse"
    n_values: Optional[List[int]] = None
    d_values: Optional[List[float]] = None

    def grid(self) -> SweepGrid:
        base = SweepGrid.preset(self.preset)
        return SweepGrid(tuple(self.n_values) if self.n_values else base.n_values,
                         tuple(self.d_values) if self.d_values else base.d_values)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scene: SceneSection = field(default_factory=SceneSection)
    scanner: ScannerSection = field(default_factory=ScannerSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    attack: AttackSection = field(default_factory=AttackSection)
    carlo: CarloSection = field(default_factory=CarloSection)
    shadow: ShadowSection = field(default_factory=ShadowSection)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    grid: GridSection = field(default_factory=GridSection)

    @property
    def ground_z(self) -> float:
        return -self.scanner.mount_height

    def detector_config(self) -> DetectorConfig:
        return self.detector.config(self.ground_z)

    def carlo_config(self) -> CarloConfig:
        return CarloConfig(self.carlo.threshold, self.carlo.behind_margin,
                           self.carlo.box_dilation, self.ground_z)

    def shadow_config(self) -> ShadowConfig:
        return ShadowConfig(self.scanner.mount_height, self.shadow.max_shadow_len,
                            self.shadow.anomaly_threshold, self.shadow.cell_size)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        carlo, shadow = d.pop("carlo"), d.pop("shadow")
        d["defense"] = dict(carlo=carlo, shadow=shadow)
        return _plain(d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {"scene": SceneSection, "scanner": ScannerSection, "detector": DetectorSection,
             "attack": AttackSection, "tracker": TrackerConfig, "grid": GridSection}


def config_from_dict(data: Optional[Dict[str, Any]]) -> RunConfig:
    data = dict(data or {})
    allowed = set(_SECTIONS) | {"seed", "defense"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    kw: Dict[str, Any] = {}
    if "seed" in data:
        if not isinstance(data["seed"], int):
            raise ConfigError("seed must be an integer")
        kw["seed"] = data["seed"]
    for name, cls in _SECTIONS.items():
        if name in data:
            section = dict(data[name] or {})
            for key in ("mix", "mean", "std"):
                if key in section and isinstance(section[key], list):
                    section[key] = tuple(section[key])
            kw[name] = _strict(cls, section, name)
    defense = data.get("defense") or {}
    if not isinstance(defense, dict):
        raise ConfigError("defense: expected a mapping")
    bad = sorted(set(defense) - {"carlo", "shadow"})
    if bad:
        raise ConfigError(f"defense: unknown keys {bad}")
    if "carlo" in defense:
        kw["carlo"] = _strict(CarloSection, defense["carlo"], "defense.carlo")
    if "shadow" in defense:
        kw["shadow"] = _strict(ShadowSection, defense["shadow"], "defense.shadow")
    cfg = RunConfig(**kw)
    # surface invalid values at load time rather than mid-run
    try:
        cfg.scanner.model()
        cfg.detector_config()
        cfg.carlo_config()
        cfg.shadow_config()
        cfg.grid.grid()
        cfg.scene.fleet()
        cfg.attack.spoof_pattern()
    except (ValueError, IndexError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)

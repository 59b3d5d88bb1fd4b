"""Longitudinal case studies: spoof-driven track manipulation over several frames."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..attack import (AttackSpec, constant_acceleration_offsets,
                      place_frustum_attack, schedule_longitudinal, target_frustum)
from ..detect import SPOOF_RADIUS, DetectorConfig, detect_frustum_constrained
from ..scene import SceneObject, default_scene, simulate_scan, vehicle_box
from ..track import (GateConfig, LifecycleConfig, MotionModel, TrackState,
                     manage_tracks, predict_time_to_impact)

SCENARIO_FIELDS = ("frame", "t", "track_id", "px", "py", "pz", "vx", "vy", "vz",
                   "ax", "ay", "az", "g", "accepted", "tti")


@dataclass(frozen=True)
class ScenarioFrame:
    frame: int
    t: float
    track: Optional[TrackState]
    g: float
    accepted: bool
    tti: Optional[float]
    truth: np.ndarray
    measurement: Optional[np.ndarray]
    spoof_d: Optional[float] = None
    spoof_associated: bool = False

    def row(self) -> Dict[str, object]:
        trk = self.track
        nan3 = [float("nan")] * 3
        p = trk.position if trk is not None else nan3
        v = trk.velocity if trk is not None else nan3
        a = trk.acceleration if trk is not None else nan3
        return dict(frame=self.frame, t=self.t, track_id=trk.id if trk is not None else "",
                    px=p[0], py=p[1], pz=p[2], vx=v[0], vy=v[1], vz=v[2],
                    ax=a[0], ay=a[1], az=a[2], g=self.g, accepted=int(self.accepted),
                    tti="" if self.tti is None else self.tti)


@dataclass(frozen=True)
class ScenarioReport:
    name: str
    frames: List[ScenarioFrame]
    summary: Dict[str, object]

    def rows(self) -> List[Dict[str, object]]:
        return [f.row() for f in self.frames]


@dataclass(frozen=True)
class TrackerConfig:
    q: float = 1.0
    dt: float = 0.2
    meas_var: float = 0.09
    confidence: float = 0.99
    max_misses: int = 5
    confirm_hits: int = 2

    @property
    def model(self) -> MotionModel:
        return MotionModel(self.q, self.dt)

    @property
    def R(self) -> np.ndarray:
        return self.meas_var * np.eye(3)

    @property
    def gate(self) -> GateConfig:
        return GateConfig(self.confidence, 3)

    @property
    def life(self) -> LifecycleConfig:
        return LifecycleConfig(self.max_misses, self.confirm_hits)


@dataclass(frozen=True)
class IntersectionConfig:
    """Static target across an intersection; spoofs approach the victim from behind it."""
    target_range: float = 35.0
    lane_width: float = 4.0
    vehicle_length: float = 5.0
    n_points: int = 65
    n_frames: int = 10
    start_d: float = 28.0
    accel: float = 13.0
    victim_extent: float = 2.5
    attack: bool = True
    seed: int = 0
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig.biased)


@dataclass(frozen=True)
class AccConfig:
    """Lead vehicle in highway flow; spoofs drag its track away from the victim."""
    lead_range: float = 30.0
    speed: float = 25.0
    vehicle_length: float = 4.5
    n_points: int = 60
    preroll: int = 2
    distances: Sequence[float] = (1.75, 2.25, 3.0, 4.0, 5.5)
    victim_extent: float = 2.5
    attack: bool = True
    seed: int = 0
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig.biased)


def _run(name: str, scene, plan: Sequence[Optional[AttackSpec]], tracker: TrackerConfig,
         detector: DetectorConfig, victim_extent: float,
         tracks: Optional[Dict] = None) -> ScenarioReport:
    cloud = simulate_scan(scene)
    frustum = target_frustum(scene, "target")
    truth = scene.get("target").box.center
    tracks = dict(tracks or {})
    frames: List[ScenarioFrame] = []
    for k, spec in enumerate(plan):
        spoof_center = None
        attacked = cloud
        if spec is not None:
            attacked, spoof_center = place_frustum_attack(cloud, scene, "target", spec)
        det = detect_frustum_constrained(attacked, [frustum], detector)[0]
        z = det.box.center if det is not None else None
        tracks, events = manage_tracks(tracks, {"target": z}, model=tracker.model,
                                       R=tracker.R, gate_cfg=tracker.gate, life=tracker.life)
        ev = [e for e in events if e.kind in ("birth", "update", "reject")]
        g = ev[0].g if ev else float("nan")
        accepted = bool(ev and ev[0].accepted)
        trk = tracks.get("target")
        tti = None
        if trk is not None and trk.confirmed:
            tti = predict_time_to_impact(trk, victim_extent)
        assoc = (z is not None and spoof_center is not None
                 and float(np.hypot(*(z[:2] - spoof_center[:2]))) <= SPOOF_RADIUS)
        frames.append(ScenarioFrame(k, k * tracker.dt, trk, g, accepted, tti, truth, z,
                                    None if spec is None else spec.relative_distance, assoc))
    return ScenarioReport(name, frames, {})


def run_scenario_intersection(cfg: IntersectionConfig = IntersectionConfig()) -> ScenarioReport:
    """Spoofs march from far behind the target toward the victim under constant acceleration.

    No track exists before the attack: the first injection is what the
    tracker sees first, and the track is born on it.
    """
    dims = dict(length=cfg.vehicle_length, width=1.9, height=1.6)
    scene = default_scene([
        SceneObject("target", vehicle_box(cfg.target_range, 0.0, **dims)),
        # cross traffic waiting one lane over
        SceneObject("cross", vehicle_box(cfg.target_range - 8.0, cfg.lane_width * 2.5,
                                         yaw=np.pi / 2, **dims)),
    ])
    plan: List[Optional[AttackSpec]] = [None] * cfg.n_frames
    if cfg.attack:
        offsets = constant_acceleration_offsets(cfg.n_frames, cfg.tracker.dt, a=-cfg.accel)
        base = AttackSpec(cfg.n_points, seed=cfg.seed * 1000)
        sched = schedule_longitudinal("target", cfg.start_d, offsets, base)
        plan = [spec for _, spec in sched]
    rep = _run("intersection", scene, plan, cfg.tracker, cfg.detector, cfg.victim_extent)
    injected = [f for f in rep.frames if f.spoof_d is not None]
    accepted = sum(f.accepted and f.spoof_associated for f in injected)
    last = rep.frames[-1]
    summary = dict(injections=len(injected), accepted_injections=accepted,
                   final_tti=last.tti, attack=cfg.attack, seed=cfg.seed,
                   success=bool(cfg.attack and accepted >= 7 and last.tti is not None
                                and 0.8 <= last.tti <= 1.5))
    return replace(rep, summary=summary)


def run_scenario_acc(cfg: AccConfig = AccConfig()) -> ScenarioReport:
    """A confirmed lead-vehicle track is dragged away by spoofs at growing distances.

    Victim and lead cruise at the same speed, so the scene is static in the
    victim's sensor frame and the true relative velocity is zero.
    """
    scene = default_scene([SceneObject("target", vehicle_box(
        cfg.lead_range, 0.0, length=cfg.vehicle_length, width=1.8, height=1.5))])
    plan: List[Optional[AttackSpec]] = [None] * cfg.preroll
    if cfg.attack:
        offsets = [d - cfg.distances[0] for d in cfg.distances]
        base = AttackSpec(cfg.n_points, seed=cfg.seed * 1000)
        sched = schedule_longitudinal("target", cfg.distances[0], offsets, base)
        plan += [spec for _, spec in sched]
    else:
        plan += [None] * len(cfg.distances)
    rep = _run("acc", scene, plan, cfg.tracker, cfg.detector, cfg.victim_extent)
    vr = []
    for f in rep.frames:
        if f.track is None:
            vr.append(float("nan"))
            continue
        u = f.track.position / np.linalg.norm(f.track.position)
        vr.append(float(f.track.velocity @ u))
    attack_frames = rep.frames[cfg.preroll:]
    summary = dict(final_rel_velocity=vr[-1], truth_rel_velocity=0.0,
                   max_abs_rel_velocity=float(np.nanmax(np.abs(vr))),
                   accepted_injections=sum(f.accepted for f in attack_frames),
                   speed=cfg.speed, attack=cfg.attack, seed=cfg.seed,
                   success=bool(cfg.attack and vr[-1] >= 2.0))
    return replace(rep, summary=summary)

"""Attack traces, (n, d) sweeps, ASR aggregation and defense studies."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..attack import (AttackError, AttackSpec, SpoofPattern, place_frustum_attack,
                      place_invalidation_attack, place_naive_attack, target_frustum)
from ..defense import (CarloConfig, ShadowConfig, carlo_classify, carlo_score, roc_curve,
                       shadow_anomaly_score, shadow_classify)
from ..detect import (SPOOF_RADIUS, Detection, DetectorConfig, OutcomeFlags, detect_clusters,
                      detect_frustum_constrained, detections_list, match_outcomes)
from ..geometry import iou_bev
from ..scene import PointCloud, Scene, simulate_scan
from .fleet import FleetConfig, random_scene, random_vehicle

TRACE_FIELDS = ("frame", "target_id", "r0", "n", "d", "fp", "fn", "translation",
                "carlo_score", "carlo_spoof", "shadow_score", "shadow_spoof", "seed")
DEFENSES = ("carlo", "shadow")


class EmptyResults(ValueError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    n_values: Tuple[int, ...] = tuple(range(2, 201, 2))
    d_values: Tuple[float, ...] = tuple(float(d) for d in range(-10, 31))

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "d_values", tuple(float(d) for d in self.d_values))
        if any(not (1 <= n <= 200) for n in self.n_values):
            raise ValueError("n values must lie in [1, 200]")
        if any(not (-10 <= d <= 30) for d in self.d_values):
            raise ValueError("d values must lie in [-10, 30]")

    @classmethod
    def preset(cls, name: str) -> "SweepGrid":
        if name == "default":
            return cls()
        if name == "stealth":
            return cls((10, 60, 100, 200), (5.0, 9.0, 12.0, 16.0))
        if name == "coarse":
            return cls((2, 5, 10, 20, 40, 80, 140, 200), tuple(float(d) for d in range(-10, 31, 4)))
        raise ValueError(f"unknown grid preset {name!r}")

    def __len__(self) -> int:
        return len(self.n_values) * len(self.d_values)


@dataclass(frozen=True)
class AttackTraceResult:
    frame: object
    target_id: str
    r0: float
    n: int
    d: float
    outcome: OutcomeFlags
    carlo_score: float = float("nan")
    carlo_spoof: bool = False
    shadow_score: float = float("nan")
    shadow_spoof: bool = False
    seed: int = 0

    def row(self) -> Dict[str, object]:
        return dict(frame=self.frame, target_id=self.target_id, r0=round(self.r0, 6), n=self.n,
                    d=self.d, fp=int(self.outcome.fp_success), fn=int(self.outcome.fn_success),
                    translation=int(self.outcome.translation),
                    carlo_score=round(self.carlo_score, 6), carlo_spoof=int(self.carlo_spoof),
                    shadow_score=round(self.shadow_score, 6), shadow_spoof=int(self.shadow_spoof),
                    seed=self.seed)

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "AttackTraceResult":
        return cls(row["frame"], row["target_id"], float(row["r0"]), int(row["n"]),
                   float(row["d"]),
                   OutcomeFlags(bool(int(row["fp"])), bool(int(row["fn"])),
                                bool(int(row["translation"]))),
                   float(row["carlo_score"]), bool(int(row["carlo_spoof"])),
                   float(row["shadow_score"]), bool(int(row["shadow_spoof"])), int(row["seed"]))


def trace_seed(base: int, *keys) -> int:
    """Order-independent per-trace seed derived from the run seed."""
    ints = [int(base)] + [int(round(k * 1000)) if isinstance(k, float) else int(k) for k in keys]
    return int(np.random.SeedSequence([abs(i) for i in ints]).generate_state(1, np.uint64)[0]
               >> np.uint64(1))


def camera_frusta(scene: Scene) -> Tuple[List[str], list]:
    """Camera-channel frusta for every visible object (the camera is never attacked)."""
    ids, frusta = [], []
    for o in scene.objects:
        try:
            frusta.append(target_frustum(scene, o.id))
            ids.append(o.id)
        except AttackError:
            continue
    return ids, frusta


def run_detector(cloud: PointCloud, scene: Scene, cfg: DetectorConfig) -> List[Detection]:
    if cfg.frustum_mode:
        _, frusta = camera_frusta(scene)
        return detections_list(detect_frustum_constrained(cloud, frusta, cfg))
    return detect_clusters(cloud, cfg)


def _score_defenses(cloud, det, defenses, carlo_cfg, shadow_cfg):
    out = dict(carlo_score=float("nan"), carlo_spoof=False,
               shadow_score=float("nan"), shadow_spoof=False)
    if det is None:
        return out
    if "carlo" in defenses:
        s = carlo_score(cloud, det, cfg=carlo_cfg)
        out.update(carlo_score=s, carlo_spoof=carlo_classify(s, carlo_cfg).classified_spoof)
    if "shadow" in defenses:
        s = shadow_anomaly_score(cloud, det, shadow_cfg)
        out.update(shadow_score=s, shadow_spoof=shadow_classify(s, shadow_cfg).classified_spoof)
    return out


def run_attack_trace(scene: Scene, spec: Optional[AttackSpec],
                     detector_cfg: DetectorConfig = DetectorConfig.biased(),
                     defenses: Sequence[str] = DEFENSES, *, target_id: Optional[str] = None,
                     frame=0, clean: Optional[PointCloud] = None,
                     carlo_cfg: CarloConfig = CarloConfig(),
                     shadow_cfg: ShadowConfig = ShadowConfig()) -> AttackTraceResult:
    """attack -> detect -> match -> defend, for one (scene, spec).

    ``spec=None`` runs the unattacked baseline on ``target_id``.
    """
    tid = target_id if spec is None else (spec.target_id or target_id)
    if tid is None:
        raise ValueError("a target id is required")
    clean = simulate_scan(scene) if clean is None else clean
    target = scene.get(tid)
    r0 = float(np.linalg.norm(target.box.center))
    cloud, spoof_center = clean, None
    if spec is not None:
        cloud, spoof_center = place_frustum_attack(clean, scene, tid, spec)
    dets = run_detector(cloud, scene, detector_cfg)
    truths = scene.truth_boxes
    t_idx = [o.id for o in scene.objects].index(tid)
    match = match_outcomes(dets, truths, spoof_center)
    det = dets[match.spoof_detection] if match.spoof_detection is not None else None
    scores = _score_defenses(cloud, det, defenses, carlo_cfg, shadow_cfg)
    return AttackTraceResult(frame, tid, r0, 0 if spec is None else spec.n_points,
                             0.0 if spec is None else spec.relative_distance,
                             match.flags[t_idx], seed=0 if spec is None else spec.seed, **scores)


def detected_unattacked(scene: Scene, target_id: str, cfg: DetectorConfig,
                        clean: Optional[PointCloud] = None) -> bool:
    clean = simulate_scan(scene) if clean is None else clean
    box = scene.get(target_id).box
    return any(iou_bev(d.box, box) >= 0.5 for d in run_detector(clean, scene, cfg))


@dataclass(frozen=True)
class Attackability:
    scene_index: int
    target_id: str
    r0: float
    attackable_fp: bool
    attackable_fn: bool
    attackable_translation: bool
    min_n: Optional[int]


@dataclass(frozen=True)
class SweepReport:
    targets: List[Attackability]
    discarded: int
    traces: List[AttackTraceResult] = field(default_factory=list)

    def by_range(self, bin_width: float = 10.0) -> Dict[float, Dict[str, float]]:
        bins: Dict[float, List[Attackability]] = defaultdict(list)
        for t in self.targets:
            bins[math.floor(t.r0 / bin_width) * bin_width].append(t)
        out = {}
        for lo in sorted(bins):
            ts = bins[lo]
            mins = [t.min_n for t in ts if t.min_n is not None]
            out[lo] = dict(count=len(ts),
                           attackable_fp=float(np.mean([t.attackable_fp for t in ts])),
                           attackable_fn=float(np.mean([t.attackable_fn for t in ts])),
                           mean_min_n=float(np.mean(mins)) if mins else float("nan"))
        return out


def sweep_attackability(scenes: Sequence[Scene], grid: SweepGrid = SweepGrid(),
                        detector_cfg: DetectorConfig = DetectorConfig.biased(), *,
                        seed: int = 0, pattern: SpoofPattern = SpoofPattern(),
                        keep_traces: bool = False) -> SweepReport:
    """Existence of a successful (n, d) per target, and the smallest such n.

    Targets the unattacked detector misses are discarded first and counted.
    """
    targets: List[Attackability] = []
    traces: List[AttackTraceResult] = []
    discarded = 0
    for si, scene in enumerate(scenes):
        clean = simulate_scan(scene)
        for obj in scene.objects:
            if obj.cls != "vehicle":
                continue
            try:
                target_frustum(scene, obj.id)
            except AttackError:
                continue
            if not detected_unattacked(scene, obj.id, detector_cfg, clean):
                discarded += 1
                continue
            fp = fn = tr = False
            min_n = None
            for n in grid.n_values:
                success_n = False
                for d in grid.d_values:
                    spec = AttackSpec(n, d, pattern=pattern, seed=trace_seed(seed, si, n, d),
                                      target_id=obj.id)
                    try:
                        res = run_attack_trace(scene, spec, detector_cfg, (), frame=si,
                                               clean=clean)
                    except AttackError:
                        continue
                    if keep_traces:
                        traces.append(res)
                    fp |= res.outcome.fp_success
                    fn |= res.outcome.fn_success
                    tr |= res.outcome.translation
                    success_n |= res.outcome.translation
                if success_n and min_n is None:
                    min_n = n
            targets.append(Attackability(si, obj.id, float(np.linalg.norm(obj.box.center)),
                                         fp, fn, tr, min_n))
    return SweepReport(targets, discarded, traces)


def compute_asr(results: Sequence[AttackTraceResult], group_by: Sequence[str] = (),
                r0_bin: float = 10.0):
    """Success ratios with raw counts, optionally grouped by n, d and/or r0 bin."""
    if len(results) == 0:
        raise EmptyResults("no attack traces to aggregate")

    def key(r):
        parts = []
        for g in group_by:
            if g == "n":
                parts.append(r.n)
            elif g == "d":
                parts.append(r.d)
            elif g in ("r0", "r0_bin"):
                parts.append(math.floor(r.r0 / r0_bin) * r0_bin)
            else:
                raise ValueError(f"cannot group by {g!r}")
        return tuple(parts)

    groups: Dict[tuple, List[AttackTraceResult]] = defaultdict(list)
    for r in results:
        groups[key(r)].append(r)
    out = {}
    for k in sorted(groups):
        rs = groups[k]
        n = len(rs)
        fps = [r for r in rs if r.outcome.fp_success]
        stats = dict(count=n, fp=len(fps), fn=sum(r.outcome.fn_success for r in rs),
                     translation=sum(r.outcome.translation for r in rs))
        stats.update(fp_asr=stats["fp"] / n, fn_asr=stats["fn"] / n,
                     translation_rate=stats["translation"] / n)
        for dname in DEFENSES:
            passed = sum(not getattr(r, f"{dname}_spoof") for r in fps)
            stats[f"{dname}_stealthy"] = passed
            stats[f"{dname}_stealth"] = passed / len(fps) if fps else float("nan")
        out[k] = stats
    return out if group_by else out[()]


# --- defense studies ------------------------------------------------------------

def stealth_grid(scenes: Sequence[Scene], grid: SweepGrid = SweepGrid.preset("stealth"),
                 detector_cfg: DetectorConfig = DetectorConfig.biased(), *, seed: int = 0,
                 carlo_cfg: CarloConfig = CarloConfig(),
                 shadow_cfg: ShadowConfig = ShadowConfig()) -> List[AttackTraceResult]:
    """Every (n, d) cell on every scene's target, scored by both defenses."""
    out = []
    for si, scene in enumerate(scenes):
        clean = simulate_scan(scene)
        tid = scene.objects[0].id
        for n in grid.n_values:
            for d in grid.d_values:
                spec = AttackSpec(n, d, seed=trace_seed(seed, si, n, d), target_id=tid)
                out.append(run_attack_trace(scene, spec, detector_cfg, DEFENSES, frame=si,
                                            clean=clean, carlo_cfg=carlo_cfg,
                                            shadow_cfg=shadow_cfg))
    return out


@dataclass(frozen=True)
class RangeRoc:
    auc: Dict[str, float]
    spoof_scores: Dict[str, List[float]]
    valid_scores: List[float]


def _clear_azimuth(rng, scene: Scene, r: float, half_fov: float, clearance: float = 4.0):
    for _ in range(100):
        az = rng.uniform(-half_fov, half_fov)
        c = np.array([r * math.cos(az), r * math.sin(az)])
        if all(np.hypot(*(o.box.center[:2] - c)) > clearance + 0.5 * o.box.length
               for o in scene.objects):
            return az
    return None


def carlo_range_roc(n_scenes: int = 100, ranges=((6.0, 8.0), 8.0, 15.0, 20.0, 30.0), *,
                    n_points: int = 60, seed: int = 0, fleet: FleetConfig = FleetConfig(),
                    carlo_cfg: CarloConfig = CarloConfig(),
                    detector_cfg: DetectorConfig = DetectorConfig()) -> RangeRoc:
    """ROC of CARLO scores: genuine detections vs naive spoofs at each range bin."""
    rng = np.random.default_rng(seed)
    valid: List[float] = []
    spoof: Dict[str, List[float]] = {_range_label(r): [] for r in ranges}
    for si in range(n_scenes):
        scene = random_scene(rng, fleet)
        clean = simulate_scan(scene)
        # every detection on an unattacked cloud is of a genuine object, even
        # when its vehicle-prior box fits a small road user poorly
        valid.extend(carlo_score(clean, det, cfg=carlo_cfg)
                     for det in detect_clusters(clean, detector_cfg))
        for r in ranges:
            rr = rng.uniform(*r) if isinstance(r, tuple) else float(r)
            az = _clear_azimuth(rng, scene, rr, 0.5)
            if az is None:
                continue
            spec = AttackSpec(n_points, seed=trace_seed(seed, si, rr))
            att = place_naive_attack(clean, np.zeros(3), az, rr, spec, ground_z=scene.ground_z)
            c = np.array([rr * math.cos(az), rr * math.sin(az)])
            near = [d for d in detect_clusters(att, detector_cfg)
                    if np.hypot(*(d.box.center[:2] - c)) <= SPOOF_RADIUS]
            if near:
                spoof[_range_label(r)].append(carlo_score(att, near[0], cfg=carlo_cfg))
    auc = {k: roc_curve(v, valid).auc for k, v in spoof.items() if v}
    return RangeRoc(auc, spoof, valid)


def _range_label(r) -> str:
    return f"{r[0]:g}-{r[1]:g}" if isinstance(r, tuple) else f"{r:g}"


def carlo_invalidation(ranges=(20.0, 35.0, 50.0), n_per_range: int = 40, *, n_points: int = 200,
                       seed: int = 0, carlo_cfg: CarloConfig = CarloConfig(),
                       detector_cfg: DetectorConfig = DetectorConfig()) -> Dict[float, Dict]:
    """Fraction of genuine vehicles CARLO rejects after random points are added behind them."""
    out = {}
    for r in ranges:
        rng = np.random.default_rng(trace_seed(seed, r))
        scores = []
        for k in range(n_per_range):
            scene = random_vehicle(rng, r)
            clean = simulate_scan(scene)
            att = place_invalidation_attack(clean, scene, "target", n_points,
                                            trace_seed(seed, r, k))
            box = scene.get("target").box
            dets = [d for d in detect_clusters(att, detector_cfg) if iou_bev(d.box, box) >= 0.5]
            if dets:
                scores.append(carlo_score(att, dets[0], cfg=carlo_cfg))
        inval = sum(carlo_classify(s, carlo_cfg).classified_spoof for s in scores)
        out[r] = dict(detected=len(scores), invalidated=inval,
                      rate=inval / len(scores) if scores else float("nan"), scores=scores)
    return out

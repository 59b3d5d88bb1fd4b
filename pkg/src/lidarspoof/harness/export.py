"""KITTI-layout export of (attacked) frames and re-scoring of external predictions.

Directory layout::

    velodyne/NNNNNN.bin   attacked cloud, provenance erased
    calib/NNNNNN.txt      calibration of the scene camera
    label_2/NNNNNN.txt    ground truth
    pred/NNNNNN.txt       predictions (internal detector on export; replace with any model's)
    spoof.csv             per-frame spoof center in sensor coordinates
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..attack import AttackError, AttackSpec, place_frustum_attack
from ..detect import Detection, DetectorConfig, MatchResult, match_outcomes
from ..kitti import (calib_for_camera, format_kitti_calib, format_kitti_labels,
                     load_kitti_labels, parse_kitti_calib, write_kitti_velodyne)
from ..scene import Scene, simulate_scan
from .experiments import run_detector
from .io import read_csv, write_csv

SPOOF_FIELDS = ("frame", "target_id", "x", "y", "z")
KITTI_CLASS = {"vehicle": "Car", "other": "Misc"}


@dataclass(frozen=True)
class ExportedFrame:
    frame: str
    target_id: Optional[str]
    spoof_center: Optional[np.ndarray]
    detections: List[Detection]
    match: MatchResult


def frame_name(k: int) -> str:
    return f"{k:06d}"


def export_kitti_frames(out_dir, scenes: Sequence[Scene], spec: Optional[AttackSpec],
                        detector_cfg: DetectorConfig) -> List[ExportedFrame]:
    """Attack the first vehicle in each scene, detect, and write every artifact."""
    out = Path(out_dir)
    for sub in ("velodyne", "calib", "label_2", "pred"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    frames: List[ExportedFrame] = []
    spoof_rows = []
    for k, scene in enumerate(scenes):
        name = frame_name(k)
        cloud = simulate_scan(scene)
        tid = next((o.id for o in scene.objects if o.cls == "vehicle"), None)
        spoof_center = None
        if spec is not None and tid is not None:
            try:
                cloud, spoof_center = place_frustum_attack(
                    cloud, scene, tid, AttackSpec(spec.n_points, spec.relative_distance,
                                                  spec.pattern, spec.seed + k, tid))
            except AttackError:
                spoof_center = None
        cloud = cloud.erase_provenance()
        dets = run_detector(cloud, scene, detector_cfg)
        calib = calib_for_camera(scene.camera)
        (out / "velodyne" / f"{name}.bin").write_bytes(write_kitti_velodyne(cloud))
        (out / "calib" / f"{name}.txt").write_text(format_kitti_calib(calib))
        truth = [(KITTI_CLASS.get(o.cls, "Misc"), o.box, None) for o in scene.objects]
        (out / "label_2" / f"{name}.txt").write_text(
            format_kitti_labels(truth, calib, scene.camera))
        (out / "pred" / f"{name}.txt").write_text(
            format_kitti_labels([("Car", d.box, d.score) for d in dets], calib, scene.camera))
        c = spoof_center if spoof_center is not None else [None] * 3
        spoof_rows.append(dict(frame=name, target_id=tid, x=c[0], y=c[1], z=c[2]))
        frames.append(ExportedFrame(name, tid, spoof_center, dets,
                                    match_outcomes(dets, scene.truth_boxes, spoof_center)))
    write_csv(out / "spoof.csv", SPOOF_FIELDS, spoof_rows)
    return frames


def score_kitti_predictions(export_dir, pred_dir=None) -> Dict[str, MatchResult]:
    """Match predictions in KITTI label format against the exported ground truth.

    ``pred_dir`` defaults to the exported ``pred/``; point it at any external
    detector's output for the same frames.
    """
    root = Path(export_dir)
    pred_root = Path(pred_dir) if pred_dir is not None else root / "pred"
    spoof = {r["frame"]: r for r in read_csv(root / "spoof.csv")}
    out: Dict[str, MatchResult] = {}
    for name in sorted(spoof):
        calib = parse_kitti_calib((root / "calib" / f"{name}.txt").read_text())
        truths = [lab.box for lab in load_kitti_labels(
            (root / "label_2" / f"{name}.txt").read_text(), calib)]
        pred_path = pred_root / f"{name}.txt"
        text = pred_path.read_text() if pred_path.exists() else ""
        dets = [Detection(lab.box, float(np.clip(1.0 if lab.score is None else lab.score, 0, 1)))
                for lab in load_kitti_labels(text, calib)]
        row = spoof[name]
        center = None if row["x"] == "" else np.array([float(row[a]) for a in "xyz"])
        out[name] = match_outcomes(dets, truths, center)
    return out

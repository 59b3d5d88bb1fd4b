"""CSV tables with fixed column order and the JSON run manifest."""

from __future__ import annotations

import csv
import json
import math
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .experiments import TRACE_FIELDS, AttackTraceResult, SweepReport
from .scenarios import SCENARIO_FIELDS, ScenarioReport

ATTACKABILITY_FIELDS = ("scene_index", "target_id", "r0", "attackable_fp", "attackable_fn",
                        "attackable_translation", "min_n")
ROC_FIELDS = ("range_bin", "kind", "score")
AUC_FIELDS = ("range_bin", "auc", "n_spoof", "n_valid")
INVALIDATION_FIELDS = ("range", "detected", "invalidated", "rate")
SCENE_FIELDS = ("frame", "object_id", "cls", "x", "y", "z", "length", "width", "height", "yaw",
                "n_points")
MANIFEST_NAME = "manifest.json"
_PACKAGES = ("numpy", "scipy", "shapely", "PyYAML")


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, fields: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write rows with exactly ``fields`` as columns; extra or missing keys are errors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            if set(row) != set(fields):
                raise ValueError(f"row keys {sorted(row)} do not match columns {list(fields)}")
            w.writerow([_cell(row[f]) for f in fields])
    return path


def read_csv(path) -> List[Dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_traces(path, traces: Sequence[AttackTraceResult]) -> Path:
    return write_csv(path, TRACE_FIELDS, (t.row() for t in traces))


def read_traces(path) -> List[AttackTraceResult]:
    rows = read_csv(path)
    if rows and set(rows[0]) != set(TRACE_FIELDS):
        raise ValueError(f"{path}: not an attack-trace table")
    return [AttackTraceResult.from_row(r) for r in rows]


def write_attackability(path, report: SweepReport) -> Path:
    rows = (dict(scene_index=t.scene_index, target_id=t.target_id, r0=round(t.r0, 6),
                 attackable_fp=t.attackable_fp, attackable_fn=t.attackable_fn,
                 attackable_translation=t.attackable_translation, min_n=t.min_n)
            for t in report.targets)
    return write_csv(path, ATTACKABILITY_FIELDS, rows)


def write_scenario(path, report: ScenarioReport) -> Path:
    return write_csv(path, SCENARIO_FIELDS, report.rows())


def package_versions() -> Dict[str, str]:
    out = {"python": platform.python_version()}
    for name in ("lidarspoof",) + _PACKAGES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "unknown"
    return out


def write_manifest(out_dir, *, command: str, config: Mapping[str, Any], seed: int,
                   frames: Sequence[Any] = (), outputs: Sequence[str] = (),
                   extra: Optional[Mapping[str, Any]] = None) -> Path:
    """Config echo, package versions, frame list and produced files; no timestamps."""
    path = Path(out_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(command=command, seed=seed, config=config, versions=package_versions(),
               frames=list(frames), outputs=sorted(outputs))
    if extra:
        doc["results"] = dict(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_manifest(out_dir) -> Dict[str, Any]:
    return json.loads((Path(out_dir) / MANIFEST_NAME).read_text())

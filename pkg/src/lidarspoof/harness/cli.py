"""Command-line entry point: ``lidarspoof <command> [options]``.

Every command takes ``--config`` (YAML, see :mod:`lidarspoof.harness.config`)
and ``--seed``, which overrides the config seed. Outputs go to ``--out`` along
with a ``manifest.json``. Repeated runs with the same seed write identical CSVs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..attack import AttackError, AttackSpec
from ..scene import Scene, simulate_scan
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .experiments import (EmptyResults, compute_asr, carlo_invalidation, carlo_range_roc,
                          run_attack_trace, stealth_grid, sweep_attackability, trace_seed)
from .export import export_kitti_frames, score_kitti_predictions
from .fleet import fig6_scene, random_scene, stealth_scenes
from .io import (AUC_FIELDS, INVALIDATION_FIELDS, ROC_FIELDS, SCENE_FIELDS, read_traces,
                 write_attackability, write_csv, write_manifest, write_scenario, write_traces)
from .scenarios import (AccConfig, IntersectionConfig, run_scenario_acc,
                        run_scenario_intersection)


class CliError(RuntimeError):
    pass


def _scenes(cfg: RunConfig, n: Optional[int] = None) -> List[Scene]:
    rng = np.random.default_rng(trace_seed(cfg.seed, 0))
    scanner = cfg.scanner.model()
    fleet = cfg.scene.fleet()
    return [random_scene(rng, fleet, scanner) for _ in range(n or cfg.scene.n_scenes)]


def _spec(cfg: RunConfig, seed: int, target_id: Optional[str] = None) -> AttackSpec:
    a = cfg.attack
    return AttackSpec(a.n_points, a.relative_distance, a.spoof_pattern(), seed, target_id)


def _finish(args, cfg: RunConfig, outputs: Sequence[str], frames=(), results=None) -> None:
    write_manifest(args.out, command=args.command, config=cfg.to_dict(), seed=cfg.seed,
                   frames=frames, outputs=outputs, extra=results)
    if results is not None:
        print(json.dumps(results, indent=2, sort_keys=True, default=str))


# --- commands ----------------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig) -> None:
    rows = []
    for k, scene in enumerate(_scenes(cfg, args.scenes)):
        _, labels = simulate_scan(scene, return_labels=True)
        for i, o in enumerate(scene.objects):
            b = o.box
            rows.append(dict(frame=k, object_id=o.id, cls=o.cls, x=round(b.center[0], 6),
                             y=round(b.center[1], 6), z=round(b.center[2], 6),
                             length=round(b.length, 6), width=round(b.width, 6),
                             height=round(b.height, 6), yaw=round(b.yaw, 6),
                             n_points=int(np.count_nonzero(labels == i))))
    write_csv(Path(args.out) / "scenes.csv", SCENE_FIELDS, rows)
    _finish(args, cfg, ["scenes.csv"], sorted({r["frame"] for r in rows}))


def cmd_attack(args, cfg: RunConfig) -> None:
    scenes = [fig6_scene()] if args.layout == "fig6" else _scenes(cfg, args.scenes)
    traces = []
    for k, scene in enumerate(scenes):
        tid = next((o.id for o in scene.objects if o.cls == "vehicle"), None)
        if tid is None:
            continue
        spec = _spec(cfg, trace_seed(cfg.seed, k), tid)
        try:
            traces.append(run_attack_trace(scene, spec, cfg.detector_config(), frame=k,
                                           carlo_cfg=cfg.carlo_config(),
                                           shadow_cfg=cfg.shadow_config()))
        except AttackError as exc:
            print(f"frame {k}: skipped ({exc})", file=sys.stderr)
    if not traces:
        raise CliError("no attackable vehicle in any scene")
    write_traces(Path(args.out) / "traces.csv", traces)
    _finish(args, cfg, ["traces.csv"], [t.frame for t in traces], compute_asr(traces))


def cmd_sweep(args, cfg: RunConfig) -> None:
    if args.grid:
        cfg = replace(cfg, grid=replace(cfg.grid, preset=args.grid, n_values=None,
                                        d_values=None))
    rep = sweep_attackability(_scenes(cfg, args.scenes), cfg.grid.grid(),
                              cfg.detector_config(), seed=cfg.seed,
                              pattern=cfg.attack.spoof_pattern(), keep_traces=True)
    out = Path(args.out)
    write_attackability(out / "attackability.csv", rep)
    write_traces(out / "traces.csv", rep.traces)
    n_t = len(rep.targets)
    results = dict(targets=n_t, discarded=rep.discarded,
                   attackable_fp=sum(t.attackable_fp for t in rep.targets),
                   attackable_fn=sum(t.attackable_fn for t in rep.targets),
                   by_range={str(k): v for k, v in rep.by_range().items()})
    _finish(args, cfg, ["attackability.csv", "traces.csv"],
            sorted({t.scene_index for t in rep.targets}), results)


def _grid_or_preset(cfg: RunConfig, default_preset: str):
    """The configured grid, or ``default_preset`` when the config leaves it untouched."""
    g = cfg.grid
    if g.n_values or g.d_values or g.preset != "coarse":
        return g.grid()
    return replace(g, preset=default_preset).grid()


def cmd_defend(args, cfg: RunConfig) -> None:
    out = Path(args.out)
    carlo_cfg = cfg.carlo_config()
    if args.study == "roc":
        n = args.scenes or cfg.scene.n_scenes
        roc = carlo_range_roc(n, n_points=cfg.attack.n_points, seed=cfg.seed,
                              fleet=cfg.scene.fleet(), carlo_cfg=carlo_cfg,
                              detector_cfg=replace(cfg.detector_config(), frustum_mode=False,
                                                   score_bias="none"))
        rows = [dict(range_bin="valid", kind="valid", score=round(s, 6))
                for s in roc.valid_scores]
        for k, ss in roc.spoof_scores.items():
            rows += [dict(range_bin=k, kind="spoof", score=round(s, 6)) for s in ss]
        write_csv(out / "roc_scores.csv", ROC_FIELDS, rows)
        write_csv(out / "auc.csv", AUC_FIELDS,
                  [dict(range_bin=k, auc=round(v, 6), n_spoof=len(roc.spoof_scores[k]),
                        n_valid=len(roc.valid_scores)) for k, v in roc.auc.items()])
        _finish(args, cfg, ["roc_scores.csv", "auc.csv"], list(range(n)), dict(auc=roc.auc))
    elif args.study == "invalidation":
        n = args.scenes or 40
        res = carlo_invalidation(n_per_range=n, seed=cfg.seed, carlo_cfg=carlo_cfg,
                                 detector_cfg=replace(cfg.detector_config(),
                                                      frustum_mode=False, score_bias="none"))
        rows = [dict(range=r, detected=v["detected"], invalidated=v["invalidated"],
                     rate=round(v["rate"], 6)) for r, v in res.items()]
        write_csv(out / "invalidation.csv", INVALIDATION_FIELDS, rows)
        _finish(args, cfg, ["invalidation.csv"], list(range(n)),
                {str(r["range"]): r["rate"] for r in rows})
    else:
        n = args.scenes or cfg.scene.n_scenes
        traces = stealth_grid(stealth_scenes(n, cfg.seed), _grid_or_preset(cfg, "stealth"),
                              cfg.detector_config(), seed=cfg.seed, carlo_cfg=carlo_cfg,
                              shadow_cfg=cfg.shadow_config())
        write_traces(out / "traces.csv", traces)
        _finish(args, cfg, ["traces.csv"], list(range(n)), compute_asr(traces))


def cmd_scenario(args, cfg: RunConfig) -> None:
    attack = not args.no_attack
    if args.name == "intersection":
        rep = run_scenario_intersection(IntersectionConfig(attack=attack, seed=cfg.seed,
                                                           tracker=cfg.tracker,
                                                           detector=cfg.detector_config()))
    else:
        rep = run_scenario_acc(AccConfig(attack=attack, seed=cfg.seed, tracker=cfg.tracker,
                                         detector=cfg.detector_config()))
    write_scenario(Path(args.out) / "scenario.csv", rep)
    _finish(args, cfg, ["scenario.csv"], [f.frame for f in rep.frames], rep.summary)


def cmd_export_kitti(args, cfg: RunConfig) -> None:
    spec = None if args.no_attack else _spec(cfg, trace_seed(cfg.seed, 1))
    frames = export_kitti_frames(args.out, _scenes(cfg, args.scenes), spec,
                                 cfg.detector_config())
    results = {f.frame: dict(fp=f.match.fp_success,
                             fn=[fl.fn_success for fl in f.match.flags]) for f in frames}
    _finish(args, cfg, ["velodyne", "calib", "label_2", "pred", "spoof.csv"],
            [f.frame for f in frames], results)


def cmd_report(args, cfg: RunConfig) -> None:
    root = Path(args.dir)
    if not root.is_dir():
        raise CliError(f"{root} is not a directory")
    results = {}
    trace_files = sorted(root.rglob("traces.csv"))
    traces = [t for p in trace_files for t in read_traces(p)]
    if traces:
        results["asr"] = compute_asr(traces)
        results["asr_by_range"] = {str(k[0]): v for k, v in
                                   compute_asr(traces, ("r0",)).items()}
    if (root / "spoof.csv").exists():
        scored = score_kitti_predictions(root, args.pred)
        results["kitti"] = {k: dict(fp=m.fp_success, fn=[f.fn_success for f in m.flags])
                            for k, m in scored.items()}
    if not results:
        raise EmptyResults(f"no results found under {root}")
    print(json.dumps(results, indent=2, sort_keys=True, default=_nan_str))


def _nan_str(v):
    return "nan" if isinstance(v, float) and math.isnan(v) else str(v)


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="run seed (overrides the config)")
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", type=Path, required=True, help="output directory")
    scenes = argparse.ArgumentParser(add_help=False)
    scenes.add_argument("--scenes", type=int, help="number of scenes (overrides the config)")

    p = argparse.ArgumentParser(prog="lidarspoof",
                                description="LiDAR spoofing attack and defense harness")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common, out, scenes],
                   help="generate scenes and write their object table")
    a = sub.add_parser("attack", parents=[common, out, scenes],
                       help="one frustum attack per scene, scored by both defenses")
    a.add_argument("--layout", choices=("random", "fig6"), default="random")
    s = sub.add_parser("sweep", parents=[common, out, scenes], help="(n, d) attackability sweep")
    s.add_argument("--grid", choices=("default", "stealth", "coarse"))
    d = sub.add_parser("defend", parents=[common, out, scenes], help="defense studies")
    d.add_argument("--study", choices=("roc", "invalidation", "stealth"), default="roc")
    sc = sub.add_parser("scenario", parents=[common, out], help="multi-frame tracking case study")
    sc.add_argument("name", choices=("intersection", "acc"))
    sc.add_argument("--no-attack", action="store_true")
    e = sub.add_parser("export-kitti", parents=[common, out, scenes],
                       help="write attacked frames in KITTI layout")
    e.add_argument("--no-attack", action="store_true")
    r = sub.add_parser("report", parents=[common], help="summarize a results directory")
    r.add_argument("dir", type=Path)
    r.add_argument("--pred", type=Path, help="external predictions for a KITTI export")
    return p


COMMANDS = {"simulate": cmd_simulate, "attack": cmd_attack, "sweep": cmd_sweep,
            "defend": cmd_defend, "scenario": cmd_scenario, "export-kitti": cmd_export_kitti,
            "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "scenes", None) is not None and args.scenes < 1:
        parser.error("--scenes must be positive")
    try:
        cfg = load_config(args.config) if args.config else config_from_dict({})
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, CliError, EmptyResults, AttackError, FileNotFoundError) as exc:
        print(f"lidarspoof {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

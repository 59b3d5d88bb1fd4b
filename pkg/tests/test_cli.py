"""Command-line surface: outputs, determinism and error exits."""

from __future__ import annotations

import json
import shutil
import subprocess

import pytest

from lidarspoof.harness.cli import main
from lidarspoof.harness.experiments import TRACE_FIELDS
from lidarspoof.harness.io import (ATTACKABILITY_FIELDS, AUC_FIELDS, INVALIDATION_FIELDS,
                                   SCENE_FIELDS, read_csv, read_manifest)
from lidarspoof.harness.scenarios import SCENARIO_FIELDS

SMALL = """\
seed: 7
scene: {n_scenes: 2, mix: [car, car, pedestrian]}
grid: {n_values: [4, 20, 60], d_values: [-4, 3, 9]}
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def _run(*argv) -> int:
    return main([str(a) for a in argv])


def _header(path) -> list:
    return path.read_text().splitlines()[0].split(",")


class TestCommands:
    def test_simulate(self, tmp_path):
        assert _run("simulate", "--out", tmp_path, "--scenes", 2, "--seed", 1) == 0
        assert _header(tmp_path / "scenes.csv") == list(SCENE_FIELDS)
        doc = read_manifest(tmp_path)
        assert doc["command"] == "simulate" and doc["seed"] == 1
        assert doc["config"]["seed"] == 1

    def test_attack_fig6(self, tmp_path, capsys):
        assert _run("attack", "--out", tmp_path, "--layout", "fig6") == 0
        rows = read_csv(tmp_path / "traces.csv")
        assert list(rows[0]) == list(TRACE_FIELDS)
        assert rows[0]["translation"] == "1"
        assert json.loads(capsys.readouterr().out)["translation_rate"] == 1.0

    def test_sweep_tables(self, tmp_path, small_config):
        assert _run("sweep", "--config", small_config, "--out", tmp_path) == 0
        assert _header(tmp_path / "attackability.csv") == list(ATTACKABILITY_FIELDS)
        assert _header(tmp_path / "traces.csv") == list(TRACE_FIELDS)

    def test_sweep_byte_identical(self, tmp_path, small_config):
        for name in ("a", "b"):
            assert _run("sweep", "--config", small_config, "--out", tmp_path / name) == 0
        for f in ("attackability.csv", "traces.csv", "manifest.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_changes_output(self, tmp_path, small_config):
        _run("sweep", "--config", small_config, "--out", tmp_path / "a")
        _run("sweep", "--config", small_config, "--out", tmp_path / "b", "--seed", 8)
        assert ((tmp_path / "a" / "traces.csv").read_bytes()
                != (tmp_path / "b" / "traces.csv").read_bytes())

    def test_defend_invalidation(self, tmp_path):
        assert _run("defend", "--study", "invalidation", "--out", tmp_path, "--scenes", 4) == 0
        rows = read_csv(tmp_path / "invalidation.csv")
        assert list(rows[0]) == list(INVALIDATION_FIELDS)
        assert [float(r["range"]) for r in rows] == [20.0, 35.0, 50.0]

    def test_defend_roc(self, tmp_path):
        assert _run("defend", "--study", "roc", "--out", tmp_path, "--scenes", 6) == 0
        assert _header(tmp_path / "auc.csv") == list(AUC_FIELDS)
        assert (tmp_path / "roc_scores.csv").exists()

    def test_defend_stealth(self, tmp_path, small_config):
        assert _run("defend", "--study", "stealth", "--config", small_config,
                    "--out", tmp_path) == 0
        assert len(read_csv(tmp_path / "traces.csv")) == 2 * 9

    @pytest.mark.parametrize("name", ["intersection", "acc"])
    def test_scenarios(self, tmp_path, name):
        assert _run("scenario", name, "--out", tmp_path) == 0
        rows = read_csv(tmp_path / "scenario.csv")
        assert list(rows[0]) == list(SCENARIO_FIELDS)
        assert read_manifest(tmp_path)["results"]["success"] is True

    def test_scenario_no_attack(self, tmp_path):
        assert _run("scenario", "intersection", "--no-attack", "--out", tmp_path) == 0
        assert read_manifest(tmp_path)["results"]["final_tti"] is None

    def test_export_then_report(self, tmp_path, capsys):
        assert _run("export-kitti", "--out", tmp_path, "--scenes", 2) == 0
        assert sorted(p.name for p in (tmp_path / "velodyne").iterdir()) == ["000000.bin",
                                                                              "000001.bin"]
        capsys.readouterr()
        assert _run("report", tmp_path) == 0
        assert set(json.loads(capsys.readouterr().out)["kitti"]) == {"000000", "000001"}

    def test_report_aggregates_traces(self, tmp_path, capsys):
        _run("attack", "--out", tmp_path / "run", "--layout", "fig6")
        capsys.readouterr()
        assert _run("report", tmp_path) == 0
        assert json.loads(capsys.readouterr().out)["asr"]["count"] == 1


class TestErrors:
    def test_report_empty_dir(self, tmp_path):
        assert _run("report", tmp_path) == 1

    def test_report_missing_dir(self, tmp_path):
        assert _run("report", tmp_path / "nope") == 1

    def test_unknown_config_key(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("detector: {bias: loud}\n")
        assert _run("simulate", "--config", p, "--out", tmp_path) == 1

    def test_missing_config_file(self, tmp_path):
        assert _run("simulate", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == 1

    def test_usage_errors(self, tmp_path):
        for argv in (["frobnicate"], ["sweep"], ["sweep", "--out", tmp_path, "--grid", "huge"],
                     ["simulate", "--out", tmp_path, "--scenes", "0"]):
            with pytest.raises(SystemExit) as exc:
                _run(*argv)
            assert exc.value.code == 2

    def test_unplaceable_attack(self, tmp_path):
        p = tmp_path / "far.yaml"
        p.write_text("attack: {relative_distance: -30}\n")
        assert _run("attack", "--layout", "fig6", "--config", p, "--out", tmp_path) == 1


@pytest.mark.skipif(shutil.which("lidarspoof") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["lidarspoof", "simulate", "--out", str(tmp_path), "--scenes", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run(["lidarspoof", "report", str(tmp_path / "empty")],
                         capture_output=True, text=True)
    assert bad.returncode == 1 and "error" in bad.stderr

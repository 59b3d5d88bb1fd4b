"""Shared fixtures and helpers."""

from __future__ import annotations

import numpy as np
import pytest

from lidarspoof.geometry import CameraModel
from lidarspoof.scene import SceneObject, default_scene, vehicle_box


def identity_camera(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100):
    """Camera whose frame coincides with the sensor frame (no axis swap)."""
    return CameraModel(fx, fy, cx, cy, width, height, np.eye(3), np.zeros(3))


def single_target(r0=25.0, lateral=0.0, yaw=0.0, **dims):
    return default_scene([SceneObject("target", vehicle_box(r0, lateral, yaw=yaw, **dims))])


@pytest.fixture
def kitti_camera():
    return CameraModel.kitti_default()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, gathered from the tests' recorded properties."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            lines.extend(v for k, v in rep.user_properties if k == "acceptance")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

"""Spoof sampling, the three placement families and longitudinal schedules."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarspoof.attack import (DEFAULT_MEAN, DEFAULT_STD, AttackError, AttackSchedule,
                               AttackSpec, CapExceeded, SpoofPattern, TargetNotVisible,
                               canned_trace_patterns, constant_acceleration_offsets,
                               load_trace_pattern, local_frame, place_frustum_attack,
                               place_invalidation_attack, place_naive_attack,
                               sample_spoof_points, schedule_longitudinal, target_frustum)
from lidarspoof.geometry import frustum_contains
from lidarspoof.scene import PointCloud, SceneObject, default_scene, simulate_scan, vehicle_box

from conftest import single_target

PATTERNS = [SpoofPattern.gaussian(), canned_trace_patterns()[0]]


def _spoofed(cloud: PointCloud) -> np.ndarray:
    return cloud.xyz[cloud.spoofed]


class TestSampling:
    def test_zero_std_collapses_to_mean(self):
        pat = SpoofPattern.gaussian(std=(0, 0, 0))
        c = np.array([30.0, 2.0, -1.73])
        fwd = -c
        pts = sample_spoof_points(c, fwd, pat, 50, seed=3).xyz
        f, _, up = local_frame(fwd)
        np.testing.assert_allclose(pts, np.tile(c + 1.0 * f + 1.0 * up, (50, 1)), atol=1e-12)

    def test_sample_mean_law_of_large_numbers(self):
        n = 10_000
        c = np.array([20.0, -3.0, -1.73])
        frame = local_frame(-c)
        pts = sample_spoof_points(c, -c, SpoofPattern.gaussian(), n, seed=11).xyz
        local_mean = (pts - c).mean(axis=0) @ frame.T
        tol = 3 * np.array(DEFAULT_STD) / math.sqrt(n)
        assert np.all(np.abs(local_mean - DEFAULT_MEAN) <= tol)

    def test_same_seed_same_cloud(self):
        a = sample_spoof_points([10, 0, 0], [-1, 0, 0], SpoofPattern.gaussian(), 40, seed=9)
        b = sample_spoof_points([10, 0, 0], [-1, 0, 0], SpoofPattern.gaussian(), 40, seed=9)
        np.testing.assert_array_equal(a.xyz, b.xyz)
        assert a.n_spoofed == 40

    def test_local_frame_is_right_handed(self):
        F = local_frame([-3.0, 1.0, 0.5])
        np.testing.assert_allclose(F @ F.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(F) == pytest.approx(1.0)
        assert F[0, 2] == 0.0

    def test_negative_std_rejected(self):
        with pytest.raises(AttackError):
            SpoofPattern.gaussian(std=(0.1, -0.1, 0.1))


class TestAttackSpec:
    def test_below_minimum(self):
        with pytest.raises(AttackError):
            AttackSpec(0)

    def test_cap(self):
        AttackSpec(200)
        with pytest.raises(CapExceeded):
            AttackSpec(201)


class TestNaive:
    def test_front_near_trace_cluster(self):
        clean = simulate_scan(default_scene([]))
        spec = AttackSpec(60, pattern=canned_trace_patterns()[1], seed=4)
        out = place_naive_attack(clean, np.zeros(3), 0.1, 6.5, spec)
        assert len(out) == len(clean) + 60
        assert out.n_spoofed == 60
        r = np.hypot(*_spoofed(out)[:, :2].T)
        assert np.all(np.abs(r - 6.5) < 4.0)
        assert abs(np.median(r) - 6.5) < 1.5

    def test_gaussian_inside_three_sigma_box(self):
        spec = AttackSpec(200, seed=21)
        hits = total = 0
        for k in range(50):
            spec = AttackSpec(200, seed=k)
            out = place_naive_attack(PointCloud.empty(), np.zeros(3), 0.0, 7.0, spec)
            center = np.array([7.0, 0.0, -1.73])
            local = (out.xyz - center) @ local_frame(-center).T
            z = np.abs(local - DEFAULT_MEAN) / DEFAULT_STD
            hits += int(np.all(z <= 3.0, axis=1).sum())
            total += len(z)
        assert hits / total >= 0.99

    def test_real_points_untouched(self):
        clean = simulate_scan(single_target(15.0))
        out = place_naive_attack(clean, np.zeros(3), 0.0, 6.0, AttackSpec(30))
        np.testing.assert_array_equal(out.xyz[:len(clean)], clean.xyz)
        assert not out.spoofed[:len(clean)].any()

    def test_trace_pattern_hook(self):
        # the same placement contract accepts either pattern kind
        for pat in PATTERNS:
            out = place_naive_attack(PointCloud.empty(), np.zeros(3), 0.2, 7.0,
                                     AttackSpec(25, pattern=pat))
            assert out.n_spoofed == 25


class TestFrustumAttack:
    def test_reference_placement(self):
        scene = single_target(25.0)
        clean = simulate_scan(scene)
        out, center = place_frustum_attack(clean, scene, "target", AttackSpec(20, 7.0, seed=2))
        assert out.n_spoofed == 20
        assert np.linalg.norm(center) == pytest.approx(32.0, abs=0.05)
        pts = _spoofed(out)
        f = target_frustum(scene, "target")
        assert f.contains(pts).all()
        assert abs(np.median(np.hypot(*pts[:, :2].T)) - 31.0) < 1.0

    def test_center_at_sensor_rejected(self):
        scene = single_target(25.0)
        with pytest.raises(AttackError):
            place_frustum_attack(PointCloud.empty(), scene, "target", AttackSpec(10, -25.0))

    def test_band_enforced(self):
        scene = single_target(25.0)
        with pytest.raises(AttackError):
            place_frustum_attack(PointCloud.empty(), scene, "target", AttackSpec(10, 31.0))

    def test_target_out_of_view(self):
        scene = default_scene([SceneObject("target", vehicle_box(-20, 0))])
        with pytest.raises(TargetNotVisible):
            place_frustum_attack(PointCloud.empty(), scene, "target", AttackSpec(10, 5.0))

    def test_first_pass_containment(self):
        scene = single_target(25.0)
        _, _, stats = place_frustum_attack(PointCloud.empty(), scene, "target",
                                           AttackSpec(200, 10.0, seed=5), return_stats=True)
        assert stats["first_pass_inside"] >= 0.9
        assert stats["final_inside"] == 1.0

    def test_spoof_center_always_in_frustum(self):
        rng = np.random.default_rng(0)
        checked = 0
        for k in range(1000):
            r0 = rng.uniform(8, 60)
            scene = single_target(r0, lateral=rng.uniform(-0.25, 0.25) * r0,
                                  yaw=rng.uniform(-math.pi, math.pi))
            d = rng.uniform(-10, 30)
            try:
                _, c = place_frustum_attack(PointCloud.empty(), scene, "target",
                                            AttackSpec(1, d, seed=k))
            except AttackError:
                continue
            assert frustum_contains(target_frustum(scene, "target"), c)
            checked += 1
        assert checked > 900

    @pytest.mark.parametrize("pattern", PATTERNS, ids=["gaussian", "trace"])
    def test_camera_consistency_and_count(self, pattern):
        scene = single_target(18.0, lateral=2.0, yaw=0.5)
        clean = simulate_scan(scene)
        for d in (-6.0, 3.0, 12.0, 25.0):
            out, _ = place_frustum_attack(clean, scene, "target",
                                          AttackSpec(80, d, pattern, seed=int(d + 10)))
            assert out.n_spoofed == 80
            np.testing.assert_array_equal(out.xyz[:len(clean)], clean.xyz)
            inside = target_frustum(scene, "target").contains(_spoofed(out))
            assert inside.mean() >= 0.9

    def test_deterministic(self):
        scene = single_target(22.0)
        spec = AttackSpec(50, 4.0, seed=77)
        a, ca = place_frustum_attack(PointCloud.empty(), scene, "target", spec)
        b, cb = place_frustum_attack(PointCloud.empty(), scene, "target", spec)
        np.testing.assert_array_equal(a.xyz, b.xyz)
        np.testing.assert_array_equal(ca, cb)


class TestInvalidation:
    def test_points_fill_shadow_behind_target(self):
        scene = single_target(50.0)
        box = scene.get("target").box
        out = place_invalidation_attack(PointCloud.empty(), scene, "target", 200, seed=1)
        pts = _spoofed(out)
        assert len(pts) == 200
        r = np.linalg.norm(pts, axis=1)
        r_far = np.linalg.norm(box.corners(), axis=1).max()
        assert np.all(r >= r_far) and np.all(r <= r_far + 25.0)
        assert target_frustum(scene, "target").contains(pts).all()
        z = pts[:, 2] - scene.ground_z
        assert np.all((z >= 0.2) & (z <= 2.0))
        assert not box.contains(pts).any()

    def test_target_filling_the_image(self):
        scene = default_scene([SceneObject("target", vehicle_box(4.5, 0, length=3.0, width=8.0,
                                                                 height=2.5))])
        f = target_frustum(scene, "target")
        assert f.bbox.area == pytest.approx(scene.camera.width * scene.camera.height, rel=0.05)
        out = place_invalidation_attack(PointCloud.empty(), scene, "target", 100, seed=2)
        assert out.n_spoofed == 100
        assert not scene.get("target").box.contains(out.xyz).any()

    def test_cap(self):
        with pytest.raises(CapExceeded):
            place_invalidation_attack(PointCloud.empty(), single_target(20.0), "target", 201, 0)


class TestSchedules:
    def test_intersection_profile_shrinks(self):
        offs = constant_acceleration_offsets(10, 0.2, a=-7.0)
        sched = schedule_longitudinal("target", 20.0, offs, AttackSpec(65))
        d = sched.distances
        assert len(d) == 10
        assert np.all(np.diff(d) < 0)
        # constant acceleration: second differences equal a dt^2
        np.testing.assert_allclose(np.diff(d, 2), -7.0 * 0.2 ** 2, atol=1e-12)

    def test_acc_profile_grows(self):
        sched = schedule_longitudinal("target", 1.0, [0.0, 0.5, 1.25, 2.25, 3.75],
                                      AttackSpec(60))
        assert len(sched) == 5
        assert np.all(np.diff(sched.distances) > 0)

    def test_zero_offsets_static(self):
        sched = schedule_longitudinal("target", 5.0, [0.0] * 4, AttackSpec(30))
        assert sched.distances == [5.0] * 4

    def test_band_violation(self):
        with pytest.raises(AttackError):
            schedule_longitudinal("target", 25.0, [0.0, 10.0], AttackSpec(30))

    def test_empty(self):
        with pytest.raises(AttackError):
            schedule_longitudinal("target", 5.0, [], AttackSpec(30))

    def test_frames_strictly_increasing(self):
        s = AttackSpec(10)
        with pytest.raises(AttackError):
            AttackSchedule(((0, s), (0, s)))
        sched = AttackSchedule(((0, s), (3, s)))
        assert sched.spec_at(3) is s and sched.spec_at(1) is None

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-10, 30), st.integers(1, 12))
    def test_kinematic_helper(self, v0, n):
        offs = constant_acceleration_offsets(n, 0.2, v0=v0, a=0.0)
        np.testing.assert_allclose(offs, v0 * 0.2 * np.arange(1, n + 1), atol=1e-9)


class TestTraceTemplates:
    def test_canned_set(self):
        pats = canned_trace_patterns()
        assert len(pats) == 5
        for p in pats:
            assert p.kind == "trace" and len(p.points) >= 20

    def test_loaders(self, tmp_path):
        pts = np.random.default_rng(0).normal(size=(30, 3))
        np.save(tmp_path / "t.npy", pts)
        np.savetxt(tmp_path / "t.txt", pts)
        for name in ("t.npy", "t.txt"):
            pat = load_trace_pattern(tmp_path / name)
            np.testing.assert_allclose(pat.points, pts)

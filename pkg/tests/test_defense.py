"""CARLO pass-through scoring, the shadow surrogate and ROC machinery."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from lidarspoof.attack import (AttackSpec, canned_trace_patterns, place_invalidation_attack,
                               place_naive_attack)
from lidarspoof.defense import (CarloConfig, DefenseVerdict, EmptyClass, ShadowConfig,
                                carlo_classify, carlo_counts, carlo_score, reachable_ground_cells,
                                roc_curve, shadow_anomaly_score, shadow_classify,
                                shadow_features, shadow_length, shadow_region)
from lidarspoof.detect import Detection, DetectorConfig, detect_clusters
from lidarspoof.scene import PointCloud, default_scene, simulate_scan, vehicle_box

from conftest import single_target

EMPTY = default_scene([])
CLEAN_EMPTY = simulate_scan(EMPTY)


def _naive_detection(r: float, seed: int, n: int = 60):
    """Inject a naive trace cluster at range r and return (cloud, its detection)."""
    spec = AttackSpec(n, pattern=canned_trace_patterns()[seed % 5], seed=seed)
    az = np.random.default_rng(seed).uniform(-0.2, 0.2)
    cloud = place_naive_attack(CLEAN_EMPTY, np.zeros(3), az, r, spec)
    c = np.array([r * math.cos(az), r * math.sin(az)])
    dets = [d for d in detect_clusters(cloud, DetectorConfig())
            if np.hypot(*(d.box.center[:2] - c)) < 3.0]
    return cloud, (dets[0] if dets else None)


class TestCarloScore:
    def _box(self):
        return vehicle_box(20.0, 0.0)

    def test_all_inside_is_valid(self, rng):
        box = self._box()
        pts = box.center + rng.uniform(-0.4, 0.4, size=(50, 3)) * box.half_extents
        assert carlo_score(PointCloud.real(pts), Detection(box, 1.0)) == 0.0

    def test_all_beyond_is_spoof(self):
        box = self._box()
        pts = np.column_stack([np.linspace(25, 40, 40), np.zeros(40), np.full(40, -1.0)])
        assert carlo_score(PointCloud.real(pts), Detection(box, 1.0)) == 1.0

    def test_ratio(self, rng):
        box = self._box()
        inside = box.center + rng.uniform(-0.4, 0.4, size=(30, 3)) * box.half_extents
        beyond = np.column_stack([rng.uniform(25, 40, 90), rng.uniform(-0.3, 0.3, 90),
                                  rng.uniform(-1.2, -0.5, 90)])
        cloud = PointCloud.real(np.vstack([inside, beyond]))
        assert carlo_counts(cloud, Detection(box, 1.0)) == (30, 90)
        assert carlo_score(cloud, Detection(box, 1.0)) == pytest.approx(0.75)

    def test_no_points(self):
        assert carlo_score(PointCloud.empty(), Detection(self._box(), 1.0)) == 0.0


class TestCarloClassify:
    def test_threshold_rule(self):
        assert carlo_classify(0.9).classified_spoof
        assert not carlo_classify(0.5).classified_spoof

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_verdict_invariant(self, score, theta):
        v = carlo_classify(score, CarloConfig(threshold=theta))
        assert v.classified_spoof == (score > theta)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CarloConfig(threshold=1.5)
        with pytest.raises(ValueError):
            CarloConfig(behind_margin=-0.1)

    def test_naive_front_near_spoof_flagged(self):
        cloud, det = _naive_detection(6.5, seed=1)
        assert det is not None
        assert carlo_classify(carlo_score(cloud, det)).classified_spoof

    def test_range_degradation_trend(self):
        means = []
        for r in (8.0, 15.0, 20.0, 30.0):
            scores = [carlo_score(c, d) for c, d in (_naive_detection(r, s) for s in range(20))
                      if d is not None]
            means.append(np.mean(scores))
        assert all(b <= a + 0.05 for a, b in zip(means, means[1:]))
        assert means[0] - means[-1] > 0.2

    def test_points_behind_raise_score(self):
        for r in (20.0, 35.0, 50.0):
            scene = single_target(r)
            clean = simulate_scan(scene)
            det = Detection(scene.get("target").box, 1.0)
            attacked = place_invalidation_attack(clean, scene, "target", 200, seed=int(r))
            assert carlo_score(attacked, det) > carlo_score(clean, det)


class TestShadowGeometry:
    def test_similar_triangles(self):
        cfg = ShadowConfig()
        assert shadow_length(20.0, cfg.lidar_height / 2, cfg) == pytest.approx(20.0)

    def test_clamp(self):
        cfg = ShadowConfig(max_shadow_len=30.0)
        assert shadow_length(20.0, cfg.lidar_height, cfg) == 30.0
        assert shadow_length(20.0, 5.0, cfg) == 30.0

    def test_region_starts_at_far_edge(self):
        det = Detection(vehicle_box(20.0, 0.0, height=0.865 * 2), 1.0)
        reg = shadow_region(det)
        r_far = np.linalg.norm(det.box.corners()[:4, :2], axis=1).max()
        assert reg.r_start == pytest.approx(r_far)
        assert reg.length == pytest.approx(min(shadow_length(r_far, det.box.height,
                                                             ShadowConfig()), 40.0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ShadowConfig(lidar_height=0.0)

    def test_real_object_shadow_is_empty(self):
        for r, yaw in ((12.0, 0.0), (20.0, 0.6), (30.0, -1.1)):
            scene = single_target(r, yaw=yaw)
            cloud = simulate_scan(scene)
            det = Detection(scene.get("target").box, 1.0)
            cfg = ShadowConfig()
            reg = shadow_region(det, cfg)
            cells = reachable_ground_cells(reg, scene.scanner, cfg.cell_size)
            assert len(cells) > 20
            frac, _, _ = shadow_features(cloud, det, cfg)
            assert 1.0 - frac >= 0.95


class TestShadowScore:
    def test_genuine_vehicle_low(self):
        for r in (10.0, 20.0, 35.0):
            scene = single_target(r, yaw=0.3)
            det = Detection(scene.get("target").box, 1.0)
            assert shadow_anomaly_score(simulate_scan(scene), det) < 0.3

    def test_pure_spoof_high(self):
        for s, r in enumerate((8.0, 12.0, 18.0)):
            cloud, det = _naive_detection(r, seed=s)
            assert det is not None
            score = shadow_anomaly_score(cloud, det)
            assert score > 0.6
            assert shadow_classify(score).classified_spoof

    def test_pure_shadow_weight_empty_shadow_scores_zero(self):
        scene = single_target(20.0)
        det = Detection(scene.get("target").box, 1.0)
        cfg = ShadowConfig(w_shadow=1.0, w_count=0.0)
        assert shadow_anomaly_score(simulate_scan(scene), det, cfg) == 0.0


class TestRoc:
    def test_separated(self):
        r = roc_curve([0.8, 0.9, 0.95], [0.1, 0.2])
        assert r.auc == 1.0

    def test_identical(self, rng):
        x = rng.uniform(size=4000)
        assert roc_curve(x[:2000], x[2000:]).auc == pytest.approx(0.5, abs=0.03)

    def test_empty_class(self):
        with pytest.raises(EmptyClass):
            roc_curve([], [0.1])

    def test_ties_count_half(self):
        assert roc_curve([0.5], [0.5]).auc == pytest.approx(0.5)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=40),
           st.lists(st.floats(0, 1), min_size=1, max_size=40))
    def test_endpoints_monotone_and_oracle(self, pos, neg):
        r = roc_curve(pos, neg)
        assert r.points[0] == (0.0, 0.0) and r.points[-1] == (1.0, 1.0)
        assert np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0)
        y = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
        assert r.auc == pytest.approx(roc_auc_score(y, np.r_[pos, neg]), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=30),
           st.lists(st.integers(0, 1000), min_size=1, max_size=30))
    def test_monotone_transform_invariance(self, pos, neg):
        # integer scores keep the transform strictly monotone in floating point
        f = lambda v: np.exp(np.asarray(v) / 200.0) - 7.0
        assert roc_curve(f(pos), f(neg)).auc == pytest.approx(roc_curve(pos, neg).auc,
                                                              abs=1e-12)

    def test_verdict_from_score(self):
        assert DefenseVerdict.from_score(0.7, 0.6).classified_spoof

"""Obstacle record extraction from scans."""

from __future__ import annotations

import math

import numpy as np
from conftest import make_scenario, quiet_config

from aia.detection import ObstacleRecord, detect_obstacles
from aia.estimator import StateEstimate
from aia.world import FlightMode, LidarScan, World


def estimate_at(x: float, y: float, z: float, yaw: float = 0.0) -> StateEstimate:
    return StateEstimate(
        position=np.array([x, y, z]), velocity=np.zeros(3), yaw=yaw,
        accel_bias=np.zeros(3), covariance_proxy=0.02, gnss_available=True,
        scan_aided=False, distance_traveled_m=0.0, t=0.0,
    )


def ring_scan(entries: list[tuple[float, float, str]]) -> LidarScan:
    """Build a scan from (bearing_rad, range_m, category) body-frame returns."""
    pts = np.array([[r * math.cos(b), r * math.sin(b), 0.0] for b, r, _ in entries])
    return LidarScan(pts, [c for _, _, c in entries])


class TestClustering:
    def test_empty_scan_yields_nothing(self):
        assert detect_obstacles(LidarScan(np.zeros((0, 3)), []), estimate_at(0, 0, 5)) == []

    def test_single_cluster_record_fields(self):
        est = estimate_at(0.0, 0.0, 5.0)
        scan = ring_scan([(0.0, 10.0, "building"),
                          (0.1, 10.2, "building"),
                          (0.2, 10.6, "building")])
        records = detect_obstacles(scan, est)
        assert len(records) == 1
        rec = records[0]
        assert rec.category == "building"
        assert rec.point_count == 3
        assert np.allclose(rec.position, [10.0, 0.0, 5.0], atol=1e-12)
        assert abs(rec.distance_m - 10.0) < 1e-9
        assert abs(rec.bearing_rad) < 1e-9

    def test_distance_equals_norm_to_position(self):
        est = estimate_at(3.0, -2.0, 8.0)
        scan = ring_scan([(0.3, 7.0, "tree"), (0.35, 7.1, "tree"),
                          (2.0, 12.0, "building"), (2.05, 12.3, "building")])
        for rec in detect_obstacles(scan, est):
            direct = float(np.linalg.norm(rec.position - est.position))
            assert abs(rec.distance_m - direct) < 1e-9

    def test_range_gap_splits_clusters(self):
        est = estimate_at(0.0, 0.0, 5.0)
        scan = ring_scan([(0.0, 5.0, "tree"), (0.05, 5.1, "tree"),
                          (0.1, 9.0, "tree"), (0.15, 9.1, "tree")])
        records = detect_obstacles(scan, est)
        assert len(records) == 2
        assert records[0].distance_m < records[1].distance_m

    def test_category_change_splits_clusters(self):
        est = estimate_at(0.0, 0.0, 5.0)
        scan = ring_scan([(0.0, 5.0, "tree"), (0.02, 5.02, "tree"),
                          (0.04, 5.04, "building"), (0.06, 5.06, "building")])
        records = detect_obstacles(scan, est)
        assert sorted(r.category for r in records) == ["building", "tree"]

    def test_wrap_around_merges_first_and_last_runs(self):
        est = estimate_at(0.0, 0.0, 5.0)
        # A wall straddling the scan's angular seam: indices 0,1 and n-2,n-1.
        scan = ring_scan([(0.02, 5.0, "tree"), (0.06, 5.01, "tree"),
                          (math.pi, 20.0, "building"), (math.pi + 0.05, 20.1, "building"),
                          (-0.06, 5.01, "tree"), (-0.02, 5.0, "tree")])
        records = detect_obstacles(scan, est)
        trees = [r for r in records if r.category == "tree"]
        assert len(trees) == 1
        assert trees[0].point_count == 4

    def test_records_sorted_nearest_first(self):
        est = estimate_at(0.0, 0.0, 5.0)
        scan = ring_scan([(0.0, 12.0, "building"), (1.5, 4.0, "tree"),
                          (3.0, 8.0, "power_line")])
        dists = [r.distance_m for r in detect_obstacles(scan, est)]
        assert dists == sorted(dists)

    def test_yawed_estimate_maps_points_to_world(self):
        est = estimate_at(0.0, 0.0, 5.0, yaw=math.pi / 2.0)
        scan = ring_scan([(0.0, 6.0, "tree")])
        rec = detect_obstacles(scan, est)[0]
        assert np.allclose(rec.position, [0.0, 6.0, 5.0], atol=1e-9)
        assert abs(rec.bearing_rad - math.pi / 2.0) < 1e-9


class TestAgainstWorldScans:
    def test_box_seen_by_real_scan(self):
        box = {"category": "building",
               "box": {"min": [10.0, -3.0, 0.0], "max": [14.0, 3.0, 20.0]}}
        world = World(make_scenario(obstacles=[box]), quiet_config(), seed=1)
        world.state.position[2] = 5.0
        world.set_mode(FlightMode.AIRBORNE)
        est = estimate_at(0.0, 0.0, 5.0)
        records = detect_obstacles(world.sample_lidar(), est)
        assert len(records) == 1
        rec = records[0]
        assert rec.category == "building"
        assert abs(rec.distance_m - 10.0) < 1e-9

    def test_record_dict_shape(self):
        rec = ObstacleRecord(np.array([1.0, 2.0, 3.0]), "tree", 3.741, 1.107, 4)
        d = rec.to_dict()
        assert d["position"] == [1.0, 2.0, 3.0]
        assert d["category"] == "tree"
        assert d["point_count"] == 4

"""State estimator: dead reckoning, aiding channels, and divergence."""

from __future__ import annotations

import numpy as np
import pytest
from conftest import make_scenario, quiet_config

from _oracles import open_loop_drift_m
from aia.config import EstimatorConfig
from aia.control import Setpoint
from aia.estimator import DivergenceError, Estimator, ScanMatchInput, _local_normals
from aia.world import FlightMode, GnssFix, ImuSample, World
from scipy.spatial import cKDTree

DT = 0.02


def make_estimator(**overrides) -> Estimator:
    config = EstimatorConfig(**overrides)
    return Estimator(config, np.zeros(3), yaw=0.0)


def wall_anchors(y: float = 5.0, x_lo: float = -10.0, x_hi: float = 10.0,
                 spacing: float = 0.5) -> np.ndarray:
    xs = np.arange(x_lo, x_hi + 1e-9, spacing)
    return np.stack([xs, np.full_like(xs, y)], axis=1)


class TestZeroNoiseExactness:
    def test_estimate_tracks_truth_every_tick(self):
        world = World(make_scenario(), quiet_config(), seed=4)
        world.state.position[2] = 5.0
        world.set_mode(FlightMode.AIRBORNE)
        est = Estimator(world.config.estimator, world.state.position.copy())
        sp = Setpoint(np.array([2.0, 1.0, 0.2]), 0.4, None, None)
        for _ in range(500):
            world.step(sp, DT)
            imu = world.sample_imu(DT)
            fix = world.sample_gnss()
            baro = world.sample_baro()
            state = est.update(imu, fix, None, baro)
            assert np.all(np.abs(state.position - world.state.position) < 1e-9)
            assert np.all(np.abs(state.velocity - world.state.velocity) < 1e-9)
            assert abs(state.yaw - world.state.yaw) < 1e-9

    def test_covariance_sits_on_floor_under_gnss(self):
        est = make_estimator()
        for _ in range(200):
            est.update(ImuSample(np.zeros(3), 0.0, DT), GnssFix(np.zeros(3), 0.02))
        assert est.estimate.covariance_proxy == est.config.cov_floor_m


class TestOpenLoopDrift:
    def test_constant_bias_double_integrates(self):
        est = make_estimator(cov_ceiling_m=1e9)
        bias = 0.01
        n = int(60.0 / DT)
        for _ in range(n):
            est.update(ImuSample(np.array([bias, 0.0, 0.0]), 0.0, DT))
        drift = float(np.linalg.norm(est.estimate.position))
        expected = open_loop_drift_m(bias, 60.0)
        assert abs(drift - expected) / expected < 0.01

    def test_covariance_grows_at_open_loop_rate(self):
        est = make_estimator()
        start = est.estimate.covariance_proxy
        for _ in range(100):
            est.update(ImuSample(np.zeros(3), 0.0, DT))
        grown = est.estimate.covariance_proxy - start
        assert abs(grown - est.config.open_loop_rate_mps * 100 * DT) < 1e-12

    def test_divergence_error_at_ceiling(self):
        est = make_estimator(cov_ceiling_m=2.0)
        n_to_ceiling = int(2.0 / (0.5 * DT)) + 2
        with pytest.raises(DivergenceError):
            for _ in range(n_to_ceiling):
                est.update(ImuSample(np.zeros(3), 0.0, DT))

    def test_distance_traveled_accumulates(self):
        est = make_estimator(cov_ceiling_m=1e9)
        est.estimate.velocity = np.array([3.0, 0.0, 0.0])
        for _ in range(100):
            est.update(ImuSample(np.zeros(3), 0.0, DT))
        assert abs(est.estimate.distance_traveled_m - 3.0 * 100 * DT) < 1e-9


class TestGnssAiding:
    def test_position_blends_toward_fix(self):
        est = make_estimator()
        est.estimate.position = np.array([1.0, 0.0, 0.0])
        est.update(ImuSample(np.zeros(3), 0.0, DT), GnssFix(np.zeros(3), 0.0))
        # One blend step moves the estimate by gain * innovation.
        assert abs(est.estimate.position[0] - (1.0 - est.config.gnss_gain)) < 1e-9

    def test_bias_learns_toward_truth_slowly(self):
        est = make_estimator()
        true_bias = 0.004
        for _ in range(3000):
            est.update(ImuSample(np.array([true_bias, 0.0, 0.0]), 0.0, DT),
                       GnssFix(np.zeros(3), 0.0), None, 0.0)
        state = est.estimate
        assert float(np.linalg.norm(state.position)) < 1e-3
        assert 2e-4 < state.accel_bias[0] < true_bias
        assert float(np.linalg.norm(state.velocity)) < 0.01

    def test_gnss_available_flag_follows_fix(self):
        est = make_estimator()
        est.update(ImuSample(np.zeros(3), 0.0, DT), GnssFix(np.zeros(3), 0.0))
        assert est.estimate.gnss_available
        est.update(ImuSample(np.zeros(3), 0.0, DT), None)
        assert not est.estimate.gnss_available


class TestBaroAiding:
    def test_altitude_error_decays_without_gnss(self):
        est = make_estimator(cov_ceiling_m=1e9)
        est.estimate.position = np.array([0.0, 0.0, 1.0])
        for _ in range(600):
            est.update(ImuSample(np.zeros(3), 0.0, DT), None, None, 0.0)
        assert abs(est.estimate.position[2]) < 0.01
        assert abs(est.estimate.velocity[2]) < 0.01

    def test_exact_baro_is_a_fixed_point(self):
        est = make_estimator()
        est.update(ImuSample(np.zeros(3), 0.0, DT), GnssFix(np.zeros(3), 0.0), None, 0.0)
        assert est.estimate.position[2] == 0.0


class TestScanMatching:
    def run_scan(self, est: Estimator, anchors: np.ndarray, body_pts: np.ndarray,
                 version: int = 1) -> bool:
        est.set_anchors(anchors, version)
        before = est.estimate.scan_aided
        est.update(ImuSample(np.zeros(3), 0.0, DT), None,
                   ScanMatchInput(body_pts, anchors_version=version))
        return est.estimate.scan_aided and not before or est.estimate.scan_aided

    def test_cross_track_error_corrected(self):
        est = make_estimator(cov_ceiling_m=1e9)
        est.estimate.position = np.array([0.0, 0.3, 0.0])
        anchors = wall_anchors(y=5.0)
        # Body-frame returns of the wall as seen from the true pose (origin).
        body = wall_anchors(y=5.0)
        err = [abs(est.estimate.position[1])]
        for i in range(50):
            est.set_anchors(anchors, 1)
            est.update(ImuSample(np.zeros(3), 0.0, DT), None, ScanMatchInput(body, 1))
            err.append(abs(est.estimate.position[1]))
        assert est.estimate.scan_aided
        assert err[-1] < 0.02 < err[0]

    def test_along_wall_direction_is_left_alone(self):
        # Translation along a featureless wall is unobservable; the matcher
        # must not move the estimate in that direction, else matching noise
        # accumulates into a steady drag down the corridor.
        est = make_estimator(cov_ceiling_m=1e9)
        est.estimate.position = np.array([0.5, 0.0, 0.0])
        anchors = np.concatenate([wall_anchors(y=5.0), wall_anchors(y=-5.0)])
        body = np.concatenate([wall_anchors(y=5.0), wall_anchors(y=-5.0)])
        for _ in range(100):
            est.set_anchors(anchors, 1)
            est.update(ImuSample(np.zeros(3), 0.0, DT), None, ScanMatchInput(body, 1))
        assert abs(est.estimate.position[0] - 0.5) < 1e-9
        assert abs(est.estimate.velocity[0]) < 1e-9

    def test_end_wall_supplies_along_track_correction(self):
        est = make_estimator(cov_ceiling_m=1e9)
        est.estimate.position = np.array([0.4, 0.0, 0.0])
        ys = np.arange(-4.0, 4.0 + 1e-9, 0.5)
        end_wall = np.stack([np.full_like(ys, 8.0), ys], axis=1)
        for _ in range(60):
            est.set_anchors(end_wall, 1)
            est.update(ImuSample(np.zeros(3), 0.0, DT), None, ScanMatchInput(end_wall, 1))
        assert abs(est.estimate.position[0]) < 0.02

    def test_scan_keeps_covariance_at_denied_rate(self):
        est = make_estimator(cov_ceiling_m=1e9)
        anchors = wall_anchors(y=5.0)
        start = est.estimate.covariance_proxy
        est.set_anchors(anchors, 1)
        est.update(ImuSample(np.zeros(3), 0.0, DT), None, ScanMatchInput(anchors, 1))
        grown = est.estimate.covariance_proxy - start
        assert abs(grown - est.config.denied_rate_mps * DT) < 1e-12

    def test_unmatched_scan_falls_back_to_open_loop_rate(self):
        est = make_estimator(cov_ceiling_m=1e9)
        far = wall_anchors(y=500.0)
        start = est.estimate.covariance_proxy
        est.set_anchors(far, 1)
        est.update(ImuSample(np.zeros(3), 0.0, DT), None,
                   ScanMatchInput(wall_anchors(y=5.0), 1))
        grown = est.estimate.covariance_proxy - start
        assert not est.estimate.scan_aided
        assert abs(grown - est.config.open_loop_rate_mps * DT) < 1e-12

    def test_too_few_points_skips_matching(self):
        est = make_estimator(cov_ceiling_m=1e9)
        est.set_anchors(wall_anchors(y=5.0), 1)
        est.update(ImuSample(np.zeros(3), 0.0, DT), None,
                   ScanMatchInput(np.array([[0.0, 5.0]]), 1))
        assert not est.estimate.scan_aided

    def test_correction_magnitude_is_clamped(self):
        est = make_estimator(cov_ceiling_m=1e9)
        est.estimate.position = np.array([0.0, 1.0, 0.0])
        anchors = wall_anchors(y=5.0)
        before = est.estimate.position[1]
        est.set_anchors(anchors, 1)
        est.update(ImuSample(np.zeros(3), 0.0, DT), None, ScanMatchInput(anchors, 1))
        moved = before - est.estimate.position[1]
        assert moved <= est.config.scan_correction_clamp_m + 1e-9

    def test_anchor_tree_rebuilt_only_on_new_version(self):
        est = make_estimator()
        est.set_anchors(wall_anchors(y=5.0), 1)
        tree = est._tree
        est.set_anchors(wall_anchors(y=6.0), 1)
        assert est._tree is tree
        est.set_anchors(wall_anchors(y=6.0), 2)
        assert est._tree is not tree


class TestLocalNormals:
    def test_wall_normals_point_across_the_wall(self):
        along_x = wall_anchors(y=2.0)
        normals = _local_normals(along_x, cKDTree(along_x), 6)
        assert np.allclose(np.abs(normals[:, 1]), 1.0, atol=1e-12)
        assert np.allclose(normals[:, 0], 0.0, atol=1e-12)

    def test_rotated_wall_normals_follow_heading(self):
        ts = np.linspace(0.0, 10.0, 21)
        diag = np.stack([ts, ts], axis=1)
        normals = _local_normals(diag, cKDTree(diag), 6)
        expected = np.array([1.0, -1.0]) / np.sqrt(2.0)
        dots = normals @ expected
        assert np.allclose(np.abs(dots), 1.0, atol=1e-9)

    def test_degenerate_anchor_count_returns_none(self):
        two = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert _local_normals(two, cKDTree(two), 6) is None

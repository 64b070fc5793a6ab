"""State estimation: IMU dead reckoning with GNSS and scan-to-map aiding.

The filter is a complementary design rather than a full Kalman filter; the
covariance proxy is a scalar confidence radius with three regimes (GNSS
aided, scan aided, open loop) and a hard divergence ceiling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from aia.config import EstimatorConfig
from aia.geometry import wrap_angle, yaw_rotation
from aia.world import GnssFix, ImuSample


class DivergenceError(RuntimeError):
    def __init__(self, covariance_proxy: float, t: float):
        super().__init__(
            f"estimate diverged: covariance proxy {covariance_proxy:.2f} m at t={t:.2f}s")
        self.covariance_proxy = covariance_proxy
        self.t = t


@dataclass
class StateEstimate:
    position: np.ndarray
    velocity: np.ndarray
    yaw: float
    accel_bias: np.ndarray
    covariance_proxy: float
    gnss_available: bool
    scan_aided: bool
    distance_traveled_m: float
    t: float

    def copy(self) -> "StateEstimate":
        return StateEstimate(
            self.position.copy(), self.velocity.copy(), self.yaw,
            self.accel_bias.copy(), self.covariance_proxy, self.gnss_available,
            self.scan_aided, self.distance_traveled_m, self.t,
        )


@dataclass
class ScanMatchInput:
    points_body_xy: np.ndarray    # (n, 2) scan endpoints in the body frame
    anchors_version: int = 0


class Estimator:
    def __init__(self, config: EstimatorConfig, position: np.ndarray, yaw: float = 0.0):
        self.config = config
        self.estimate = StateEstimate(
            position=np.asarray(position, dtype=float).copy(),
            velocity=np.zeros(3),
            yaw=float(yaw),
            accel_bias=np.zeros(3),
            covariance_proxy=config.cov_floor_m,
            gnss_available=True,
            scan_aided=False,
            distance_traveled_m=0.0,
            t=0.0,
        )
        self._anchors: np.ndarray = np.zeros((0, 2))
        self._normals: np.ndarray | None = None
        self._tree: cKDTree | None = None
        self._tree_version = -1

    def set_anchors(self, anchors: np.ndarray, version: int) -> None:
        """Provide the current map anchor points for scan matching."""
        if version != self._tree_version:
            self._anchors = np.asarray(anchors, dtype=float)
            if len(self._anchors) >= 1:
                self._tree = cKDTree(self._anchors)
                self._normals = _local_normals(self._anchors, self._tree,
                                               self.config.scan_normal_neighbors)
            else:
                self._tree = None
                self._normals = None
            self._tree_version = version

    def update(self, imu: ImuSample, gnss: GnssFix | None = None,
               scan: ScanMatchInput | None = None,
               baro: float | None = None) -> StateEstimate:
        """Advance the estimate by one IMU interval; raises DivergenceError
        once the covariance proxy passes the configured ceiling."""
        cfg = self.config
        est = self.estimate
        dt = imu.dt

        # Dead reckoning mirrors the vehicle integrator: yaw first, because
        # the sample's body frame is the end-of-interval attitude, then
        # velocity, then position with the updated velocity.
        est.yaw = wrap_angle(est.yaw + imu.gyro_z * dt)
        accel_world = yaw_rotation(est.yaw) @ (imu.accel_body - est.accel_bias)
        est.velocity = est.velocity + accel_world * dt
        est.position = est.position + est.velocity * dt
        est.distance_traveled_m += float(np.linalg.norm(est.velocity)) * dt
        est.t += dt

        if baro is not None:
            # Scan matching is horizontal and GNSS can drop out, so the
            # barometer is the only altitude aid that never goes away.
            innov_z = float(baro) - float(est.position[2])
            est.position[2] += cfg.baro_gain * innov_z
            est.velocity[2] += cfg.baro_vel_gain * innov_z

        scan_applied = False
        if gnss is None and scan is not None and self._tree is not None \
                and len(scan.points_body_xy) >= cfg.scan_min_points:
            scan_applied = self._apply_scan(scan, dt)

        if gnss is not None:
            innov = gnss.position - est.position
            est.position = est.position + cfg.gnss_gain * innov
            est.velocity = est.velocity + cfg.vel_gain * innov
            # Persistent innovation in one direction is an unmodelled bias.
            innov_body = yaw_rotation(est.yaw).T @ innov
            est.accel_bias = est.accel_bias - cfg.bias_gain * innov_body * dt
            blended = (1.0 - cfg.gnss_gain) * est.covariance_proxy \
                + cfg.gnss_gain * gnss.sigma_m
            est.covariance_proxy = max(cfg.cov_floor_m,
                                       min(est.covariance_proxy, blended))
            est.gnss_available = True
        else:
            est.gnss_available = False
            rate = cfg.denied_rate_mps if scan_applied else cfg.open_loop_rate_mps
            est.covariance_proxy += rate * dt

        est.scan_aided = scan_applied
        if est.covariance_proxy > cfg.cov_ceiling_m:
            raise DivergenceError(est.covariance_proxy, est.t)
        return est

    def _apply_scan(self, scan: ScanMatchInput, dt: float) -> bool:
        """Point-to-plane correction against the map anchors.

        Raw point-to-point residuals are poison in a corridor: translation
        along a straight wall is unobservable, so the along-wall residual
        component is pure matching noise and its mean drags the estimate
        down the tunnel. Projecting each residual onto the local surface
        normal keeps only the constrained directions; cross-facing features
        (niches, an end wall) then supply the along-track correction.
        """
        cfg = self.config
        est = self.estimate
        body = np.asarray(scan.points_body_xy, dtype=float)
        c, s = np.cos(est.yaw), np.sin(est.yaw)
        rot = np.array([[c, -s], [s, c]])
        pts = est.position[:2] + body @ rot.T
        dists, idx = self._tree.query(pts, k=1,
                                      distance_upper_bound=cfg.scan_match_max_dist_m)
        good = np.isfinite(dists)
        if int(np.count_nonzero(good)) < cfg.scan_min_points:
            return False
        residual = self._anchors[idx[good]] - pts[good]
        if self._normals is not None:
            normals = self._normals[idx[good]]
            residual = normals * np.einsum("ij,ij->i", normals, residual)[:, None]
        innov = residual.mean(axis=0)
        corr = cfg.scan_gain * innov
        norm = float(np.linalg.norm(corr))
        if norm > cfg.scan_correction_clamp_m:
            corr = corr * (cfg.scan_correction_clamp_m / norm)
        est.position[0] += corr[0]
        est.position[1] += corr[1]
        # A persistent innovation means the velocity is wrong, and position
        # nudges alone fight it forever; the projected innovation is safe to
        # feed back because the unobserved direction contributes zero.
        est.velocity[0] += cfg.scan_vel_gain * innov[0]
        est.velocity[1] += cfg.scan_vel_gain * innov[1]
        return True


def _local_normals(anchors: np.ndarray, tree: cKDTree, k: int) -> np.ndarray | None:
    """Unit normal of the surface through each anchor's neighborhood.

    The normal is the minor principal axis of the k nearest anchors, which
    for a wall segment points across the wall regardless of its heading.
    """
    m = len(anchors)
    if m < 3:
        return None
    _, idx = tree.query(anchors, k=min(k + 1, m))
    nb = anchors[idx]
    d = nb - nb.mean(axis=1, keepdims=True)
    a = np.einsum("ij,ij->i", d[:, :, 0], d[:, :, 0])
    b = np.einsum("ij,ij->i", d[:, :, 0], d[:, :, 1])
    c = np.einsum("ij,ij->i", d[:, :, 1], d[:, :, 1])
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    return np.stack([-np.sin(theta), np.cos(theta)], axis=1)

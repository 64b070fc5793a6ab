"""Simulated ground truth: terrain, obstacles, wind, airframe, and sensors.

The world owns the single physical state and the only RNG in the system; it
is advanced exclusively by the runtime's fast tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from aia.config import RuntimeConfig
from aia.control import Setpoint
from aia.geometry import point_in_polygon, ray_aabb, ray_capsule, unit, wrap_angle, yaw_rotation
from aia.power import update_energy

MAX_STEP_DT = 0.1  # integration stability bound


class FlightMode(str, Enum):
    GROUNDED = "Grounded"
    TAKEOFF = "Takeoff"
    AIRBORNE = "Airborne"
    LANDING = "Landing"
    ESTOP = "EStop"
    RTH = "RTH"


OBSTACLE_CATEGORIES = (
    "power_line", "building", "tree", "tunnel_wall", "terrain", "water_surface",
)


@dataclass
class AirframeSpec:
    mass_kg: float = 12.0
    propeller_count: int = 6
    thrust_per_prop_kg: float = 3.0
    wheelbase_mm: float = 850.0
    max_speed_mps: float = 15.0

    @property
    def max_lift_kg(self) -> float:
        return self.propeller_count * self.thrust_per_prop_kg

    def can_lift(self, payload_kg: float = 0.0) -> bool:
        return self.mass_kg + payload_kg <= self.max_lift_kg


@dataclass
class Obstacle:
    """Axis-aligned box or a segment with radius (e.g. a power line span)."""

    category: str
    box_min: np.ndarray | None = None
    box_max: np.ndarray | None = None
    seg_a: np.ndarray | None = None
    seg_b: np.ndarray | None = None
    radius: float = 0.0

    @property
    def kind(self) -> str:
        return "box" if self.box_min is not None else "segment"

    def contains(self, p: np.ndarray, margin: float = 0.0) -> bool:
        if self.kind == "box":
            return bool(np.all(p >= self.box_min - margin) and np.all(p <= self.box_max + margin))
        d = _point_seg_dist(p, self.seg_a, self.seg_b)
        return d <= self.radius + margin

    def center(self) -> np.ndarray:
        if self.kind == "box":
            return 0.5 * (self.box_min + self.box_max)
        return 0.5 * (self.seg_a + self.seg_b)


def _batch_quad_root(qa: np.ndarray, qb: np.ndarray, qc: float | np.ndarray) -> np.ndarray:
    """Smallest non-negative root of qa t^2 + qb t + qc = 0, inf when none."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    disc = qb * qb - 4.0 * qa * qc
    out = np.full(qa.shape, np.inf)
    ok = (disc >= 0.0) & (np.abs(qa) > 1e-15)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (-qb - sq) / (2.0 * qa)
        t1 = (-qb + sq) / (2.0 * qa)
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    pick = np.where(lo >= 0.0, lo, np.where(hi >= 0.0, hi, np.inf))
    out[ok] = pick[ok]
    return out


def _point_seg_dist(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    s = min(1.0, max(0.0, float(np.dot(p - a, ab)) / denom))
    return float(np.linalg.norm(p - (a + s * ab)))


@dataclass
class SceneFact:
    position: np.ndarray
    tag: str
    visibility_radius: float


@dataclass
class Terrain:
    """Step-function height field; heights[iy, ix] in meters."""

    origin: np.ndarray          # (x0, y0)
    resolution: float
    heights: np.ndarray         # (ny, nx)

    @property
    def max_height(self) -> float:
        return float(self.heights.max())

    def bounds(self) -> tuple[float, float, float, float]:
        ny, nx = self.heights.shape
        x0, y0 = float(self.origin[0]), float(self.origin[1])
        return x0, y0, x0 + nx * self.resolution, y0 + ny * self.resolution

    def in_bounds(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.bounds()
        return x0 <= x <= x1 and y0 <= y <= y1

    def height_at(self, x: float, y: float) -> float:
        ny, nx = self.heights.shape
        ix = int((x - self.origin[0]) // self.resolution)
        iy = int((y - self.origin[1]) // self.resolution)
        ix = min(max(ix, 0), nx - 1)
        iy = min(max(iy, 0), ny - 1)
        return float(self.heights[iy, ix])


@dataclass
class Wind:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_amp: float = 0.0
    gust_period_s: float = 10.0

    def at(self, t: float, phase: float) -> np.ndarray:
        if self.gust_amp <= 0.0:
            return self.mean.copy()
        gust_dir = unit(self.mean) if float(np.linalg.norm(self.mean)) > 1e-9 else np.array([1.0, 0.0, 0.0])
        gust = self.gust_amp * math.sin(2.0 * math.pi * t / self.gust_period_s + phase)
        return self.mean + gust * gust_dir


@dataclass
class Scenario:
    name: str
    terrain: Terrain
    obstacles: list[Obstacle]
    gnss_mask: list[tuple[np.ndarray, np.ndarray]]   # (min, max) boxes
    geofence_polygon: np.ndarray                     # (n, 2)
    geofence_alt_min: float
    geofence_alt_max: float
    home: np.ndarray
    takeoff_point: np.ndarray
    route: list[np.ndarray]
    scene_truth: list[SceneFact]
    wind: Wind
    airframe: AirframeSpec
    geodetic_text: str = ""
    raw_doc: dict | None = None    # original JSON document, for replay hashing

    def in_geofence(self, p: np.ndarray) -> bool:
        if not point_in_polygon(p[:2], self.geofence_polygon):
            return False
        return self.geofence_alt_min <= float(p[2]) <= self.geofence_alt_max

    def gnss_denied(self, p: np.ndarray) -> bool:
        for lo, hi in self.gnss_mask:
            if bool(np.all(p >= lo) and np.all(p <= hi)):
                return True
        return False


@dataclass
class UavState:
    position: np.ndarray
    yaw: float
    pitch: float
    roll: float
    velocity: np.ndarray
    yaw_rate: float
    mode: FlightMode
    battery_flight_wh: float
    battery_compute_wh: float
    clock_s: float

    def copy(self) -> "UavState":
        return UavState(
            self.position.copy(), self.yaw, self.pitch, self.roll,
            self.velocity.copy(), self.yaw_rate, self.mode,
            self.battery_flight_wh, self.battery_compute_wh, self.clock_s,
        )

    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass
class WorldEvent:
    kind: str        # Crash | GeofenceBreach | BatteryLow | Landed
    t: float
    data: dict = field(default_factory=dict)


@dataclass
class GnssFix:
    position: np.ndarray
    sigma_m: float


@dataclass
class ImuSample:
    accel_body: np.ndarray   # gravity-compensated linear acceleration
    gyro_z: float
    dt: float


@dataclass
class LidarScan:
    points: np.ndarray          # (n, 3) body frame
    categories: list[str]

    def __len__(self) -> int:
        return len(self.categories)


@dataclass
class SceneItem:
    tag: str
    bearing_rad: float
    range_m: float


@dataclass
class SceneObservation:
    items: list[SceneItem]


class World:
    """Owns ground truth and all entropy; stepped externally at a fixed dt."""

    def __init__(self, scenario: Scenario, config: RuntimeConfig, seed: int):
        self.scenario = scenario
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.gust_phase = float(self.rng.uniform(0.0, 2.0 * math.pi))

        ground = scenario.terrain.height_at(float(scenario.takeoff_point[0]),
                                            float(scenario.takeoff_point[1]))
        start = scenario.takeoff_point.copy()
        start[2] = ground
        self.state = UavState(
            position=start, yaw=0.0, pitch=0.0, roll=0.0,
            velocity=np.zeros(3), yaw_rate=0.0, mode=FlightMode.GROUNDED,
            battery_flight_wh=config.power.flight_capacity_wh,
            battery_compute_wh=config.power.compute_capacity_wh,
            clock_s=0.0,
        )
        self._v_air = np.zeros(3)
        self._true_accel = np.zeros(3)
        self._true_yaw_rate = 0.0
        self._in_breach = False
        self._battery_low_emitted = False
        self._crashed = False

    # -- mode management -------------------------------------------------

    def try_takeoff(self) -> bool:
        """Grounded -> Takeoff, refused when the airframe cannot lift itself."""
        if self.state.mode != FlightMode.GROUNDED or self._crashed:
            return False
        if not self.scenario.airframe.can_lift():
            return False
        self.state.mode = FlightMode.TAKEOFF
        return True

    def set_mode(self, mode: FlightMode) -> None:
        self.state.mode = mode

    def imu_calibration(self, duration_s: float, dt: float) -> np.ndarray:
        """Mean body-frame acceleration over a motionless pre-flight window.

        On the pad the true acceleration is zero, so the mean measures the
        accelerometer bias directly; averaging length trades time for noise.
        """
        n = max(1, int(duration_s / dt))
        acc = np.zeros(3)
        for _ in range(n):
            acc += self.sample_imu(dt).accel_body
        return acc / n

    def consume_compute(self, duration_s: float) -> None:
        """Advance the clock through a grounded deliberation window.

        Only the compute battery drains; the airframe is not flying, so
        flight energy is untouched. Used for stage-1 planning, which happens
        before the fast loop starts stepping physics.
        """
        if duration_s <= 0.0:
            return
        self.state.clock_s += duration_s
        drain = self.config.power.compute_draw_w * duration_s / 3600.0
        self.state.battery_compute_wh = max(0.0, self.state.battery_compute_wh - drain)

    # -- physics ---------------------------------------------------------

    def step(self, setpoint: Setpoint, dt: float,
             compute_active: float | bool = False) -> tuple[UavState, list[WorldEvent]]:
        """Advance one tick; returns the new state and any triggered events."""
        if not (0.0 < dt <= MAX_STEP_DT):
            raise ValueError(f"dt must be in (0, {MAX_STEP_DT}], got {dt}")
        st = self.state
        events: list[WorldEvent] = []
        v_old = st.velocity.copy()
        yaw_old = st.yaw

        if st.mode == FlightMode.GROUNDED:
            cmd_v = np.zeros(3)
            cmd_yr = 0.0
        elif st.mode == FlightMode.ESTOP:
            # Commanded motion is zero from the first tick in EStop onward.
            cmd_v = np.zeros(3)
            cmd_yr = 0.0
        else:
            sp = setpoint.clamped()
            cmd_v = np.asarray(sp.velocity_cmd, dtype=float).copy()
            cmd_yr = float(sp.yaw_rate_cmd)
            if sp.altitude_hold is not None:
                err = float(sp.altitude_hold) - float(st.position[2])
                cmd_v[2] = min(self.config.control.climb_rate_mps,
                               max(-self.config.control.descent_rate_mps, 2.0 * err))

        alpha = 1.0 - math.exp(-dt / self.config.control.lag_tau_s)
        self._v_air = self._v_air + alpha * (cmd_v - self._v_air)
        st.yaw_rate = st.yaw_rate + alpha * (cmd_yr - st.yaw_rate)

        if st.mode == FlightMode.GROUNDED:
            v_ground = np.zeros(3)
            self._v_air = np.zeros(3)
            st.yaw_rate = 0.0
        else:
            wind = self.scenario.wind.at(st.clock_s, self.gust_phase)
            v_ground = self._v_air + wind

        if st.mode == FlightMode.LANDING and v_ground[2] < 0.0:
            dest = st.position[:2] + v_ground[:2] * dt
            ground = self.scenario.terrain.height_at(float(dest[0]), float(dest[1]))
            drop = float(st.position[2]) - ground
            if drop >= 0.0 and drop + v_ground[2] * dt <= 0.0:
                # Final tick of the descent: arrive exactly on the terrain so
                # the reported acceleration covers the whole approach and the
                # landing needs no position snap an estimator cannot see.
                v_ground = v_ground.copy()
                v_ground[2] = -drop / dt

        st.velocity = v_ground
        st.position = st.position + v_ground * dt
        st.yaw = wrap_angle(st.yaw + st.yaw_rate * dt)

        self._true_accel = (st.velocity - v_old) / dt
        self._true_yaw_rate = wrap_angle(st.yaw - yaw_old) / dt

        update_energy(st, compute_active, st.speed(), dt, self.config.power)
        st.clock_s += dt

        self._check_transitions(events)
        return st, events

    def _check_transitions(self, events: list[WorldEvent]) -> None:
        st = self.state
        ground = self.scenario.terrain.height_at(float(st.position[0]), float(st.position[1]))

        if st.mode == FlightMode.LANDING and float(st.position[2]) <= ground + 1e-9 and st.velocity[2] <= 0.0:
            st.position[2] = ground
            st.velocity = np.zeros(3)
            self._v_air = np.zeros(3)
            st.mode = FlightMode.GROUNDED
            events.append(WorldEvent("Landed", st.clock_s, {"position": st.position.tolist()}))
            return

        if st.mode != FlightMode.GROUNDED:
            if float(st.position[2]) < ground - 0.01:
                self._record_crash(events, "terrain")
                return
            for obs in self.scenario.obstacles:
                if obs.contains(st.position):
                    self._record_crash(events, obs.category)
                    return

            breach = not self.scenario.in_geofence(st.position)
            if breach and not self._in_breach:
                events.append(WorldEvent("GeofenceBreach", st.clock_s,
                                         {"position": st.position.tolist()}))
            self._in_breach = breach

            if st.battery_flight_wh <= 0.0 and st.mode != FlightMode.LANDING:
                if not self._battery_low_emitted:
                    events.append(WorldEvent("BatteryLow", st.clock_s, {}))
                    self._battery_low_emitted = True
                st.mode = FlightMode.LANDING

    def _record_crash(self, events: list[WorldEvent], into: str) -> None:
        st = self.state
        ground = self.scenario.terrain.height_at(float(st.position[0]), float(st.position[1]))
        st.position[2] = ground
        st.velocity = np.zeros(3)
        self._v_air = np.zeros(3)
        st.mode = FlightMode.GROUNDED
        self._crashed = True
        events.append(WorldEvent("Crash", st.clock_s, {"into": into}))

    @property
    def crashed(self) -> bool:
        return self._crashed

    # -- sensors ---------------------------------------------------------

    def sample_gnss(self) -> GnssFix | None:
        """Noisy position fix, absent exactly inside the denial regions."""
        st = self.state
        if self.scenario.gnss_denied(st.position):
            return None
        sigma = self.config.sensors.gnss_sigma_m
        noise = self.rng.normal(0.0, sigma, size=3) if sigma > 0.0 else np.zeros(3)
        return GnssFix(st.position + noise, sigma)

    def sample_baro(self) -> float:
        """Barometric altitude; keeps working where GNSS does not."""
        sigma = self.config.sensors.baro_sigma_m
        noise = float(self.rng.normal(0.0, sigma)) if sigma > 0.0 else 0.0
        return float(self.state.position[2]) + noise

    def sample_imu(self, dt: float) -> ImuSample:
        """Finite-difference-consistent body accelerations and yaw rate."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        cfg = self.config.sensors
        r_wb = yaw_rotation(self.state.yaw).T  # body-from-world
        accel_body = r_wb @ self._true_accel
        accel_body = accel_body + np.asarray(cfg.imu_accel_bias_mps2, dtype=float)
        if cfg.imu_accel_noise_mps2 > 0.0:
            accel_body = accel_body + self.rng.normal(0.0, cfg.imu_accel_noise_mps2, size=3)
        gyro = self._true_yaw_rate + cfg.imu_gyro_bias_rps
        if cfg.imu_gyro_noise_rps > 0.0:
            gyro += float(self.rng.normal(0.0, cfg.imu_gyro_noise_rps))
        return ImuSample(accel_body, gyro, dt)

    def sample_lidar(self, ray_count: int | None = None,
                     max_range: float | None = None) -> LidarScan:
        """Horizontal ring scan with a semantic channel per return."""
        n = ray_count if ray_count is not None else self.config.sensors.lidar_ray_count
        rng_max = max_range if max_range is not None else self.config.sensors.lidar_max_range_m
        if n <= 0 or rng_max <= 0.0:
            raise ValueError("ray_count and max_range must be positive")

        st = self.state
        angles = 2.0 * math.pi * np.arange(n) / n
        dirs_body = np.stack([np.cos(angles), np.sin(angles), np.zeros(n)], axis=1)
        dirs_world = dirs_body @ yaw_rotation(st.yaw).T

        dists = np.full(n, np.inf)
        cat_idx = np.full(n, -1, dtype=int)
        for i, obs in enumerate(self.scenario.obstacles):
            d = self._batch_hit(st.position, dirs_world, obs)
            closer = d < dists
            dists = np.where(closer, d, dists)
            cat_idx = np.where(closer, i, cat_idx)

        if self.scenario.terrain.max_height >= float(st.position[2]):
            for k in range(n):
                t_hit = self._terrain_ray(st.position, dirs_world[k], min(dists[k], rng_max))
                if t_hit is not None and t_hit < dists[k]:
                    dists[k] = t_hit
                    cat_idx[k] = -2  # terrain

        pts = []
        cats = []
        for k in range(n):
            if dists[k] <= rng_max:
                pts.append(dists[k] * dirs_body[k])
                cats.append("terrain" if cat_idx[k] == -2
                            else self.scenario.obstacles[int(cat_idx[k])].category)
        points = np.array(pts) if pts else np.zeros((0, 3))
        return LidarScan(points, cats)

    def _batch_hit(self, origin: np.ndarray, dirs: np.ndarray, obs: Obstacle) -> np.ndarray:
        n = len(dirs)
        if obs.kind == "box":
            t_near = np.full(n, -np.inf)
            t_far = np.full(n, np.inf)
            for k in range(3):
                d = dirs[:, k]
                o = float(origin[k])
                lo, hi = float(obs.box_min[k]), float(obs.box_max[k])
                parallel = np.abs(d) < 1e-15
                with np.errstate(divide="ignore", invalid="ignore"):
                    t1 = (lo - o) / d
                    t2 = (hi - o) / d
                tlo = np.minimum(t1, t2)
                thi = np.maximum(t1, t2)
                if lo <= o <= hi:
                    tlo = np.where(parallel, -np.inf, tlo)
                    thi = np.where(parallel, np.inf, thi)
                else:
                    tlo = np.where(parallel, np.inf, tlo)
                    thi = np.where(parallel, -np.inf, thi)
                t_near = np.maximum(t_near, tlo)
                t_far = np.minimum(t_far, thi)
            hit = (t_near <= t_far) & (t_far >= 0.0)
            return np.where(hit, np.maximum(t_near, 0.0), np.inf)

        # capsule: quadratic against the axis cylinder, then the end caps
        a_pt, b_pt, r = obs.seg_a, obs.seg_b, obs.radius
        axis = b_pt - a_pt
        length = float(np.linalg.norm(axis))
        best = np.full(n, np.inf)
        if length > 1e-12:
            u = axis / length
            w = origin - a_pt
            d_par = dirs @ u
            d_perp = dirs - np.outer(d_par, u)
            w_perp = w - np.dot(w, u) * u
            qa = np.einsum("ij,ij->i", d_perp, d_perp)
            qb = 2.0 * d_perp @ w_perp
            qc = float(np.dot(w_perp, w_perp)) - r * r
            t = _batch_quad_root(qa, qb, qc)
            s = (np.dot(w, u) + t * d_par)
            ok = np.isfinite(t) & (s >= 0.0) & (s <= length)
            best = np.where(ok, t, np.inf)
        for cap in (a_pt, b_pt):
            w = origin - cap
            qa = np.ones(n)
            qb = 2.0 * dirs @ w
            qc = float(np.dot(w, w)) - r * r
            t = _batch_quad_root(qa, qb, qc)
            best = np.minimum(best, np.where(np.isfinite(t), t, np.inf))
        return best

    def _terrain_ray(self, origin: np.ndarray, direction: np.ndarray,
                     max_t: float) -> float | None:
        """DDA walk over the height grid; hit where cell height >= ray z."""
        terr = self.scenario.terrain
        z = float(origin[2])
        res = terr.resolution
        ny, nx = terr.heights.shape
        x0, y0 = float(terr.origin[0]), float(terr.origin[1])
        dx, dy = float(direction[0]), float(direction[1])
        ix = int((origin[0] - x0) // res)
        iy = int((origin[1] - y0) // res)
        if 0 <= ix < nx and 0 <= iy < ny and terr.heights[iy, ix] >= z:
            return 0.0
        step_x = 1 if dx > 0 else -1
        step_y = 1 if dy > 0 else -1
        t_max_x = math.inf if abs(dx) < 1e-15 else \
            ((x0 + (ix + (step_x > 0)) * res) - float(origin[0])) / dx
        t_max_y = math.inf if abs(dy) < 1e-15 else \
            ((y0 + (iy + (step_y > 0)) * res) - float(origin[1])) / dy
        t_dx = math.inf if abs(dx) < 1e-15 else res / abs(dx)
        t_dy = math.inf if abs(dy) < 1e-15 else res / abs(dy)
        t = 0.0
        while t <= max_t:
            if t_max_x < t_max_y:
                t = t_max_x
                t_max_x += t_dx
                ix += step_x
            else:
                t = t_max_y
                t_max_y += t_dy
                iy += step_y
            if not (0 <= ix < nx and 0 <= iy < ny):
                return None
            if terr.heights[iy, ix] >= z and t <= max_t:
                return t
        return None

    def capture_scene(self) -> SceneObservation:
        """Scene facts within visibility range and unoccluded line of sight."""
        st = self.state
        items: list[SceneItem] = []
        for fact in self.scenario.scene_truth:
            delta = fact.position - st.position
            dist = float(np.linalg.norm(delta))
            if dist > fact.visibility_radius:
                continue
            if dist > 1e-9 and self._occluded(st.position, fact.position, dist):
                continue
            bearing = math.atan2(float(delta[1]), float(delta[0]))
            items.append(SceneItem(fact.tag, bearing, dist))
        items.sort(key=lambda it: it.range_m)
        return SceneObservation(items)

    def _occluded(self, origin: np.ndarray, target: np.ndarray, dist: float) -> bool:
        # Facts sitting on an obstacle surface stay visible: only hits clearly
        # short of the target count as occlusion.
        direction = (target - origin) / dist
        for obs in self.scenario.obstacles:
            if obs.kind == "box":
                t = ray_aabb(origin, direction, obs.box_min, obs.box_max)
            else:
                t = ray_capsule(origin, direction, obs.seg_a, obs.seg_b, obs.radius)
            if t is not None and t < dist - 0.5:
                return True
        return False

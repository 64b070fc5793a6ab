"""Dataclass configuration for the simulator, control loops, and backends."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from dataclasses import fields as dataclass_fields

CONFIG_SCHEMA_VERSION = 1


@dataclass
class SensorConfig:
    gnss_sigma_m: float = 0.02
    # Constant accelerometer bias (body frame) plus white noise; the
    # estimator has to absorb these through GNSS or scan corrections.
    imu_accel_bias_mps2: tuple[float, float, float] = (0.005, -0.003, 0.0)
    imu_accel_noise_mps2: float = 0.02
    imu_gyro_bias_rps: float = 0.0
    imu_gyro_noise_rps: float = 0.002
    baro_sigma_m: float = 0.05
    lidar_ray_count: int = 64
    lidar_max_range_m: float = 30.0


@dataclass
class EstimatorConfig:
    gnss_gain: float = 0.8
    vel_gain: float = 0.6            # velocity feedback per position innovation, 1/s
    bias_gain: float = 0.05          # accel-bias feedback per innovation, 1/s^2
    scan_gain: float = 0.6
    scan_match_max_dist_m: float = 1.2
    scan_min_points: int = 5
    scan_normal_neighbors: int = 6   # local surface fit size for match normals
    scan_vel_gain: float = 0.25      # velocity feedback per scan innovation
    scan_correction_clamp_m: float = 0.3
    baro_gain: float = 0.1           # altitude blend per barometer sample
    baro_vel_gain: float = 0.05      # vertical-rate feedback per baro innovation
    imu_calibration_s: float = 30.0  # motionless pre-flight bias averaging window
    cov_floor_m: float = 0.02
    open_loop_rate_mps: float = 0.5  # covariance growth, no aiding at all
    denied_rate_mps: float = 0.02    # covariance growth while scan-aided
    cov_ceiling_m: float = 25.0
    drift_bound_frac: float = 0.005  # contract: final error <= frac * distance traveled


@dataclass
class MappingConfig:
    resolution_m: float = 0.5
    hit_threshold: int = 2
    allow_unknown_traversal: bool = True
    frontier_max_bearings: int = 8


@dataclass
class SafetyConfig:
    hard_stop_radius_m: float = 3.0
    slowdown_radius_m: float = 6.0
    slowdown_cap_mps: float = 1.0
    geofence_lookahead_s: float = 2.0
    fence_floor_margin_m: float = 0.5   # estimate jitter allowance at ground level
    rth_reserve_factor: float = 1.5
    land_reserve_wh: float = 5.0


@dataclass
class ControlConfig:
    dt_s: float = 0.02               # fast tick, 50 Hz
    lag_tau_s: float = 0.5           # first-order velocity lag time constant
    cruise_speed_mps: float = 4.0
    climb_rate_mps: float = 2.0
    descent_rate_mps: float = 1.0
    accept_radius_m: float = 1.0     # tracker waypoint acceptance
    lookahead_m: float = 3.0         # pure-pursuit carrot distance
    pursuit_gain: float = 1.0
    yaw_gain: float = 1.5
    clearance_m: float = 3.0         # grid inflation, equals hard-stop radius


@dataclass
class PowerConfig:
    compute_capacity_wh: float = 1000.0
    compute_draw_w: float = 250.0
    flight_capacity_wh: float = 700.0
    hover_draw_w: float = 1400.0     # 700 Wh over a 30 min hover
    speed_draw_coeff: float = 0.3    # extra draw fraction at max speed


@dataclass
class BackendConfig:
    kind: str = "mock"               # mock | scripted | remote
    endpoint: str = ""
    model_name: str = "sim"
    timeout_s: float = 120.0
    tokens_per_sec_sim: float = 5.5
    transcript_path: str = ""        # scripted backend only


@dataclass
class MissionConfig:
    cadence_s: float = 5.0           # slow-loop deliberation period (2..60 s)
    max_reruns: int = 5
    grace_cadences: float = 2.0      # hover after this many silent cadences
    prompt_token_budget: int = 4000
    scene_ring_capacity: int = 10
    route_radius_m: float = 2.0      # mission waypoint visitation radius
    parse_retries: int = 1
    takeoff_alt_m: float = 20.0      # fallback when the route has no altitude
    max_sim_time_s: float = 600.0


@dataclass
class RuntimeConfig:
    sensors: SensorConfig = field(default_factory=SensorConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    mission: MissionConfig = field(default_factory=MissionConfig)
    lidar_period_ticks: int = 5      # 10 Hz lidar at the 50 Hz fast tick
    context_write_period_ticks: int = 5
    persist_context_dir: str = ""    # mirror blackboard channels to files when set
    time_scale: float = 0.0          # sim seconds per wall second; 0 = unpaced

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RuntimeConfig":
        def build(sub_cls, d):
            kwargs = {}
            for f in dataclass_fields(sub_cls):
                if f.name in d:
                    v = d[f.name]
                    kwargs[f.name] = tuple(v) if isinstance(v, list) else v
            return sub_cls(**kwargs)

        nested = {
            "sensors": SensorConfig, "estimator": EstimatorConfig,
            "mapping": MappingConfig, "safety": SafetyConfig,
            "control": ControlConfig, "power": PowerConfig,
            "backend": BackendConfig, "mission": MissionConfig,
        }
        kwargs: dict = {name: build(sub, doc[name])
                        for name, sub in nested.items() if name in doc}
        for name in ("lidar_period_ticks", "context_write_period_ticks",
                     "persist_context_dir", "time_scale"):
            if name in doc:
                kwargs[name] = doc[name]
        return cls(**kwargs)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: RuntimeConfig, scenario_payload, seed: int) -> str:
    """Stable digest over everything that must match for a replay.

    scenario_payload is whatever identifies the world: the raw scenario
    document for file-backed runs, or the shipped scenario name.
    """
    payload = {
        "schema": CONFIG_SCHEMA_VERSION,
        "config": config.to_dict(),
        "scenario": scenario_payload,
        "seed": int(seed),
    }
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()

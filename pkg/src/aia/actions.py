"""The closed action vocabulary: typed commands, validation, compilation.

One registry (ACTION_SPECS) defines each action's grammar name, parameters,
and units. The textual catalog shown to the planner, the renderer, and the
parser all derive from it, so they cannot drift apart. Angles cross the
grammar boundary in degrees and live as radians everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Union

import numpy as np

from aia.config import ControlConfig, SafetyConfig
from aia.control import Setpoint, hover_setpoint
from aia.world import FlightMode, Scenario, UavState

AXES = ("x", "y", "z")
_AXIS_VEC = {"x": np.array([1.0, 0.0, 0.0]),
             "y": np.array([0.0, 1.0, 0.0]),
             "z": np.array([0.0, 0.0, 1.0])}
ORBIT_MAX_CHORD_RAD = math.radians(10.0)


# -- command variants ---------------------------------------------------------

@dataclass(frozen=True)
class Takeoff:
    target_alt_m: float


@dataclass(frozen=True)
class Land:
    pass


@dataclass(frozen=True)
class Hover:
    duration_s: float


@dataclass(frozen=True)
class EmergencyStop:
    pass


@dataclass(frozen=True)
class LinearMove:
    axis: str
    distance_m: float
    speed_mps: float


@dataclass(frozen=True)
class AngularMove:
    yaw_delta_rad: float
    rate_rps: float


@dataclass(frozen=True)
class Accelerate:
    delta_mps: float


@dataclass(frozen=True)
class Decelerate:
    delta_mps: float


@dataclass(frozen=True)
class AltitudeHold:
    alt_m: float


@dataclass(frozen=True)
class SpeedLock:
    speed_mps: float


@dataclass(frozen=True)
class WaypointNav:
    waypoints: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class ReturnToHome:
    pass


@dataclass(frozen=True)
class Orbit:
    center: tuple[float, float, float]
    radius_m: float
    angular_speed_rps: float


ActionCommand = Union[
    Takeoff, Land, Hover, EmergencyStop, LinearMove, AngularMove, Accelerate,
    Decelerate, AltitudeHold, SpeedLock, WaypointNav, ReturnToHome, Orbit,
]


# -- grammar registry ---------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    key: str                 # grammar key on the ACTION line
    attr: str                # dataclass attribute
    kind: str                # float | deg | deg_rate | axis
    doc: str


@dataclass(frozen=True)
class ActionSpec:
    name: str                # grammar name
    cls: type
    params: tuple[ParamSpec, ...]
    uses_waypoints: bool
    doc: str


ACTION_SPECS: dict[str, ActionSpec] = {}


def _register(name: str, cls: type, params: tuple[ParamSpec, ...],
              doc: str, uses_waypoints: bool = False) -> None:
    ACTION_SPECS[name] = ActionSpec(name, cls, params, uses_waypoints, doc)


_register("takeoff", Takeoff,
          (ParamSpec("target_alt_m", "target_alt_m", "float", "climb-to altitude in meters"),),
          "Vertical climb from the ground to the target altitude.")
_register("land", Land, (), "Descend straight down and settle on the ground.")
_register("hover", Hover,
          (ParamSpec("duration_s", "duration_s", "float", "hold time in seconds"),),
          "Hold the current position for a fixed duration.")
_register("emergency_stop", EmergencyStop, (),
          "Immediately zero all motion; requires operator recovery.")
_register("linear_move", LinearMove,
          (ParamSpec("axis", "axis", "axis", "world axis, one of x / y / z"),
           ParamSpec("distance_m", "distance_m", "float",
                     "signed travel along the axis in meters"),
           ParamSpec("speed_mps", "speed_mps", "float", "travel speed in m/s, > 0")),
          "Straight translation along one world axis.")
_register("angular_move", AngularMove,
          (ParamSpec("yaw_delta_deg", "yaw_delta_rad", "deg",
                     "signed heading change in degrees"),
           ParamSpec("rate_dps", "rate_rps", "deg_rate", "turn rate in deg/s, > 0")),
          "Yaw in place by a relative angle.")
_register("accelerate", Accelerate,
          (ParamSpec("delta_mps", "delta_mps", "float", "speed-cap increase in m/s"),),
          "Raise the active speed cap.")
_register("decelerate", Decelerate,
          (ParamSpec("delta_mps", "delta_mps", "float", "speed-cap decrease in m/s"),),
          "Lower the active speed cap.")
_register("altitude_hold", AltitudeHold,
          (ParamSpec("alt_m", "alt_m", "float", "altitude to hold in meters"),),
          "Move to and hold a fixed altitude while other motion continues.")
_register("speed_lock", SpeedLock,
          (ParamSpec("speed_mps", "speed_mps", "float", "locked speed cap in m/s"),),
          "Pin the speed cap to an exact value until changed.")
_register("waypoint_navigation", WaypointNav, (),
          "Fly the listed 3-D waypoints in order.", uses_waypoints=True)
_register("return_to_home", ReturnToHome, (),
          "Fly back to the home point and land.")
_register("orbit", Orbit,
          (ParamSpec("center", "center", "point", "circle center as (x, y, z) meters"),
           ParamSpec("radius_m", "radius_m", "float", "circle radius in meters"),
           ParamSpec("angular_speed_dps", "angular_speed_rps", "deg_rate",
                     "angular rate in deg/s, positive = counterclockwise")),
          "One counterclockwise revolution around a center point.")

GRAMMAR_NAMES = tuple(ACTION_SPECS)
_CLS_TO_SPEC = {spec.cls: spec for spec in ACTION_SPECS.values()}


def spec_for(cmd: ActionCommand) -> ActionSpec:
    return _CLS_TO_SPEC[type(cmd)]


# -- rendering ---------------------------------------------------------------

def _fmt_num(v: float) -> str:
    out = f"{float(v):.6f}".rstrip("0")
    return out + "0" if out.endswith(".") else out


def render_action_text(cmd: ActionCommand, rationale: str = "") -> str:
    """Canonical grammar text for a command; inverse of the stage-2 parser."""
    spec = spec_for(cmd)
    parts = [spec.name]
    for p in spec.params:
        raw = getattr(cmd, p.attr)
        if p.kind in ("deg", "deg_rate"):
            parts.append(f"{p.key}={_fmt_num(math.degrees(raw))}")
        elif p.kind == "axis":
            parts.append(f"{p.key}={raw}")
        elif p.kind == "point":
            parts.append(f"{p.key}=({_fmt_num(raw[0])}, {_fmt_num(raw[1])}, {_fmt_num(raw[2])})")
        else:
            parts.append(f"{p.key}={_fmt_num(raw)}")
    lines = ["ACTION: " + " ".join(parts)]
    if spec.uses_waypoints:
        pts = "; ".join(f"({_fmt_num(x)}, {_fmt_num(y)}, {_fmt_num(z)})"
                        for x, y, z in cmd.waypoints)
        lines.append("WAYPOINTS: " + pts)
    if rationale:
        lines.append("RATIONALE: " + rationale)
    return "\n".join(lines)


def action_set_text() -> str:
    """The static catalog handed to the planner, generated from the registry."""
    lines = [
        "AVAILABLE ACTIONS (choose exactly one per decision):",
        "",
    ]
    for spec in ACTION_SPECS.values():
        lines.append(f"- {spec.name}: {spec.doc}")
        if spec.params:
            for p in spec.params:
                lines.append(f"    {p.key}: {p.doc}")
        if spec.uses_waypoints:
            lines.append("    requires a WAYPOINTS line with at least one (x, y, z) point")
    lines += [
        "",
        "RESPONSE FORMAT (plain lines, no markup):",
        "ACTION: <name> key=value key=value ...",
        "WAYPOINTS: (x, y, z); (x, y, z)   <- waypoint_navigation only, meters",
        "RATIONALE: <one short sentence, optional>",
        "Angles are degrees; distances are meters; speeds are m/s.",
    ]
    return "\n".join(lines)


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Rejection:
    code: str
    field: str
    reason: str


OK = Ok()

MOTION_FREE = (EmergencyStop, Accelerate, Decelerate, SpeedLock)


def _finite(v: float) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def _structural(cmd: ActionCommand) -> Rejection | None:
    for f in fields(cmd):
        v = getattr(cmd, f.name)
        if isinstance(v, (int, float)) and not _finite(v):
            return Rejection("ValueRange", f.name, "value must be finite")
    if isinstance(cmd, Takeoff) and cmd.target_alt_m <= 0.0:
        return Rejection("ValueRange", "target_alt_m", "altitude must be positive")
    if isinstance(cmd, Hover) and cmd.duration_s < 0.0:
        return Rejection("ValueRange", "duration_s", "duration must be non-negative")
    if isinstance(cmd, LinearMove):
        if cmd.axis not in AXES:
            return Rejection("ValueRange", "axis", "axis must be one of x, y, z")
        if cmd.speed_mps <= 0.0:
            return Rejection("ValueRange", "speed_mps", "speed must be positive")
    if isinstance(cmd, AngularMove) and cmd.rate_rps <= 0.0:
        return Rejection("ValueRange", "rate_dps", "rate must be positive")
    if isinstance(cmd, (Accelerate, Decelerate)) and cmd.delta_mps < 0.0:
        return Rejection("ValueRange", "delta_mps", "delta must be non-negative")
    if isinstance(cmd, SpeedLock) and cmd.speed_mps <= 0.0:
        return Rejection("ValueRange", "speed_mps", "speed must be positive")
    if isinstance(cmd, WaypointNav):
        if len(cmd.waypoints) < 1:
            return Rejection("ValueRange", "waypoints", "needs at least one waypoint")
        for i, wp in enumerate(cmd.waypoints):
            if len(wp) != 3 or not all(_finite(c) for c in wp):
                return Rejection("ValueRange", f"waypoints[{i}]", "points must be finite 3-D")
    if isinstance(cmd, Orbit):
        if cmd.radius_m <= 0.0:
            return Rejection("ValueRange", "radius_m", "radius must be positive")
        if cmd.angular_speed_rps == 0.0:
            return Rejection("ValueRange", "angular_speed_dps", "angular speed must be nonzero")
        if len(cmd.center) != 3 or not all(_finite(c) for c in cmd.center):
            return Rejection("ValueRange", "center", "center must be a finite 3-D point")
    return None


def validate_action(cmd: ActionCommand, state: UavState, scenario: Scenario,
                    safety: SafetyConfig, control: ControlConfig) -> Ok | Rejection:
    """Gate between parsed text and the flight controller."""
    bad = _structural(cmd)
    if bad is not None:
        return bad

    grounded = state.mode == FlightMode.GROUNDED
    if isinstance(cmd, Takeoff):
        if not grounded:
            return Rejection("InvalidModeTransition", "action", "takeoff requires Grounded")
        if not scenario.airframe.can_lift():
            return Rejection("LiftExceeded", "mass_kg",
                             f"mass {scenario.airframe.mass_kg} kg exceeds lift "
                             f"{scenario.airframe.max_lift_kg} kg")
        if cmd.target_alt_m > scenario.geofence_alt_max:
            return Rejection("GeofenceViolation", "target_alt_m",
                             "target altitude above the fence ceiling")
        return OK
    if grounded and not isinstance(cmd, MOTION_FREE):
        return Rejection("InvalidModeTransition", "action",
                         "only takeoff can begin from the ground")

    max_speed = scenario.airframe.max_speed_mps
    if isinstance(cmd, LinearMove):
        if cmd.speed_mps > max_speed:
            return Rejection("SpeedLimit", "speed_mps",
                             f"speed above the {max_speed} m/s limit")
        endpoint = state.position + cmd.distance_m * _AXIS_VEC[cmd.axis]
        if not scenario.in_geofence(endpoint):
            return Rejection("GeofenceViolation", "distance_m",
                             "move ends outside the geofence")
    if isinstance(cmd, SpeedLock) and cmd.speed_mps > max_speed:
        return Rejection("SpeedLimit", "speed_mps", f"cap above the {max_speed} m/s limit")
    if isinstance(cmd, Accelerate) and cmd.delta_mps > max_speed:
        return Rejection("SpeedLimit", "delta_mps", "delta exceeds the speed limit")
    if isinstance(cmd, AltitudeHold):
        if not (scenario.geofence_alt_min <= cmd.alt_m <= scenario.geofence_alt_max):
            return Rejection("GeofenceViolation", "alt_m", "altitude outside the fence band")
    if isinstance(cmd, WaypointNav):
        for i, wp in enumerate(cmd.waypoints):
            if not scenario.in_geofence(np.array(wp, dtype=float)):
                return Rejection("GeofenceViolation", f"waypoints[{i}]",
                                 "waypoint outside the geofence")
    if isinstance(cmd, Orbit):
        if cmd.radius_m < 2.0 * safety.hard_stop_radius_m:
            return Rejection("RadiusTooSmall", "radius_m",
                             f"radius below {2.0 * safety.hard_stop_radius_m} m")
        speed = abs(cmd.angular_speed_rps) * cmd.radius_m
        if speed > max_speed:
            return Rejection("SpeedLimit", "angular_speed_dps",
                             "tangential speed above the limit")
        for k in range(16):
            ang = 2.0 * math.pi * k / 16
            p = np.array([cmd.center[0] + cmd.radius_m * math.cos(ang),
                          cmd.center[1] + cmd.radius_m * math.sin(ang),
                          cmd.center[2]])
            if not scenario.in_geofence(p):
                return Rejection("GeofenceViolation", "center",
                                 "orbit circle leaves the geofence")
    return OK


# -- compilation --------------------------------------------------------------

@dataclass
class Segment:
    setpoint: Setpoint
    termination: str                      # arrival | duration | external
    duration_s: float | None = None
    target: np.ndarray | None = None


@dataclass
class SetpointProgram:
    segments: list[Segment] = field(default_factory=list)
    effect: tuple[str, float] | None = None
    label: str = ""


def compile_action(cmd: ActionCommand, state: UavState,
                   control: ControlConfig) -> SetpointProgram:
    """Deterministic translation of a validated command into segments."""
    pos = state.position
    alt = float(pos[2])

    if isinstance(cmd, Takeoff):
        target = np.array([pos[0], pos[1], cmd.target_alt_m])
        sp = Setpoint(velocity_cmd=np.array([0.0, 0.0, control.climb_rate_mps]),
                      altitude_hold=cmd.target_alt_m)
        return SetpointProgram([Segment(sp, "arrival", target=target)], label="takeoff")

    if isinstance(cmd, Land):
        sp = Setpoint(velocity_cmd=np.array([0.0, 0.0, -control.descent_rate_mps]))
        return SetpointProgram([Segment(sp, "external")], label="land")

    if isinstance(cmd, Hover):
        return SetpointProgram([Segment(hover_setpoint(alt), "duration",
                                        duration_s=cmd.duration_s)], label="hover")

    if isinstance(cmd, EmergencyStop):
        return SetpointProgram([Segment(Setpoint(), "external")],
                               effect=("estop", 1.0), label="emergency_stop")

    if isinstance(cmd, LinearMove):
        speed = min(cmd.speed_mps, control.cruise_speed_mps
                    if cmd.axis != "z" else control.climb_rate_mps)
        direction = math.copysign(1.0, cmd.distance_m)
        vel = direction * speed * _AXIS_VEC[cmd.axis]
        duration = abs(cmd.distance_m) / speed
        target = pos + cmd.distance_m * _AXIS_VEC[cmd.axis]
        sp = Setpoint(velocity_cmd=vel,
                      altitude_hold=alt if cmd.axis != "z" else None,
                      speed_cap=speed)
        return SetpointProgram([Segment(sp, "arrival", duration_s=duration, target=target)],
                               label="linear_move")

    if isinstance(cmd, AngularMove):
        rate = math.copysign(cmd.rate_rps, cmd.yaw_delta_rad)
        duration = abs(cmd.yaw_delta_rad) / cmd.rate_rps
        sp = Setpoint(yaw_rate_cmd=rate, altitude_hold=alt)
        return SetpointProgram([Segment(sp, "duration", duration_s=duration)],
                               label="angular_move")

    if isinstance(cmd, Accelerate):
        return SetpointProgram([Segment(hover_setpoint(alt), "duration", duration_s=0.0)],
                               effect=("speed_cap_delta", cmd.delta_mps), label="accelerate")

    if isinstance(cmd, Decelerate):
        return SetpointProgram([Segment(hover_setpoint(alt), "duration", duration_s=0.0)],
                               effect=("speed_cap_delta", -cmd.delta_mps), label="decelerate")

    if isinstance(cmd, AltitudeHold):
        target = np.array([pos[0], pos[1], cmd.alt_m])
        sp = Setpoint(altitude_hold=cmd.alt_m)
        return SetpointProgram([Segment(sp, "arrival", target=target)],
                               effect=("altitude_override", cmd.alt_m), label="altitude_hold")

    if isinstance(cmd, SpeedLock):
        return SetpointProgram([Segment(hover_setpoint(alt), "duration", duration_s=0.0)],
                               effect=("speed_cap_set", cmd.speed_mps), label="speed_lock")

    if isinstance(cmd, WaypointNav):
        segs = []
        prev = pos
        for wp in cmd.waypoints:
            target = np.array(wp, dtype=float)
            delta = target - prev
            dist = float(np.linalg.norm(delta))
            vel = (delta / dist * control.cruise_speed_mps) if dist > 1e-9 else np.zeros(3)
            segs.append(Segment(Setpoint(velocity_cmd=vel, speed_cap=control.cruise_speed_mps),
                                "arrival", target=target))
            prev = target
        return SetpointProgram(segs, label="waypoint_navigation")

    if isinstance(cmd, ReturnToHome):
        return SetpointProgram([Segment(Setpoint(speed_cap=control.cruise_speed_mps),
                                        "external")],
                               effect=("rth", 1.0), label="return_to_home")

    if isinstance(cmd, Orbit):
        center = np.array(cmd.center, dtype=float)
        r = cmd.radius_m
        offset = pos[:2] - center[:2]
        theta0 = math.atan2(offset[1], offset[0]) if np.linalg.norm(offset) > 1e-9 else 0.0
        sweep = 2.0 * math.pi
        n = max(int(math.ceil(sweep / ORBIT_MAX_CHORD_RAD)), 1)
        step = math.copysign(sweep / n, cmd.angular_speed_rps)
        speed = min(abs(cmd.angular_speed_rps) * r, control.cruise_speed_mps)
        segs = []
        prev = np.array([center[0] + r * math.cos(theta0),
                         center[1] + r * math.sin(theta0), center[2]])
        for k in range(1, n + 1):
            ang = theta0 + k * step
            target = np.array([center[0] + r * math.cos(ang),
                               center[1] + r * math.sin(ang), center[2]])
            delta = target - prev
            dist = float(np.linalg.norm(delta))
            vel = (delta / dist * speed) if dist > 1e-9 else np.zeros(3)
            segs.append(Segment(Setpoint(velocity_cmd=vel, speed_cap=speed),
                                "arrival", target=target))
            prev = target
        return SetpointProgram(segs, label="orbit")

    raise TypeError(f"unknown action: {type(cmd).__name__}")

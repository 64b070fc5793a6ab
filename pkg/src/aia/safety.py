"""Reflexive safety arbitration, evaluated every fast tick.

Rules are checked independently; the issued verdict is always the most
severe of everything that fired. Severity strictly orders the vocabulary:
EStop > Land > RTH > Hover > SlowDown > Nominal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from aia.config import ControlConfig, PowerConfig, SafetyConfig
from aia.control import Setpoint, hover_setpoint
from aia.geometry import point_in_polygon
from aia.power import flight_draw_w
from aia.world import FlightMode


class VerdictKind(str, Enum):
    NOMINAL = "Nominal"
    SLOW_DOWN = "SlowDown"
    HOVER = "Hover"
    RTH = "RTH"
    LAND = "Land"
    ESTOP = "EStop"


SEVERITY = {
    VerdictKind.NOMINAL: 0,
    VerdictKind.SLOW_DOWN: 1,
    VerdictKind.HOVER: 2,
    VerdictKind.RTH: 3,
    VerdictKind.LAND: 4,
    VerdictKind.ESTOP: 5,
}


@dataclass
class Verdict:
    kind: VerdictKind
    reason: str = ""
    speed_cap: float | None = None
    triggered: list[str] = field(default_factory=list)

    @property
    def severity(self) -> int:
        return SEVERITY[self.kind]


@dataclass
class SafetyInputs:
    position: np.ndarray
    velocity: np.ndarray
    nearest_obstacle_m: float | None
    battery_flight_wh: float
    dist_home_m: float
    geofence_polygon: np.ndarray
    alt_min: float
    alt_max: float
    diverged: bool = False


def rth_energy_wh(dist_home_m: float, control: ControlConfig, power: PowerConfig) -> float:
    """Energy needed to cruise home plus descend, at the planned cruise speed."""
    speed = max(control.cruise_speed_mps, 0.1)
    transit_s = dist_home_m / speed
    descend_s = 30.0 / max(control.descent_rate_mps, 0.1)
    draw = flight_draw_w(power, speed)
    return (transit_s * draw + descend_s * power.hover_draw_w) / 3600.0


def _inside_fence(p: np.ndarray, inputs: SafetyInputs,
                  floor_margin: float | None) -> bool:
    if not point_in_polygon(p[:2], inputs.geofence_polygon):
        return False
    if float(p[2]) > inputs.alt_max:
        return False
    return floor_margin is None or float(p[2]) >= inputs.alt_min - floor_margin


def safety_check(inputs: SafetyInputs, cfg: SafetyConfig,
                 control: ControlConfig, power: PowerConfig) -> Verdict:
    """Evaluate every rule and keep the most severe verdict."""
    fired: list[Verdict] = []

    if inputs.nearest_obstacle_m is not None:
        if inputs.nearest_obstacle_m < cfg.hard_stop_radius_m:
            fired.append(Verdict(VerdictKind.ESTOP,
                                 f"obstacle at {inputs.nearest_obstacle_m:.1f} m"))
        elif inputs.nearest_obstacle_m < cfg.slowdown_radius_m:
            fired.append(Verdict(VerdictKind.SLOW_DOWN,
                                 f"obstacle at {inputs.nearest_obstacle_m:.1f} m",
                                 speed_cap=cfg.slowdown_cap_mps))

    if inputs.battery_flight_wh <= cfg.land_reserve_wh:
        fired.append(Verdict(VerdictKind.LAND,
                             f"flight battery at {inputs.battery_flight_wh:.1f} Wh"))
    else:
        reserve = cfg.rth_reserve_factor * rth_energy_wh(inputs.dist_home_m, control, power)
        if inputs.battery_flight_wh <= reserve:
            fired.append(Verdict(
                VerdictKind.RTH,
                f"battery {inputs.battery_flight_wh:.1f} Wh at the return reserve"))

    # The floor is only checked at the current position, and with a margin:
    # every legitimate takeoff and landing crosses it, so a lookahead across
    # the floor would fire at both ends of the mission, and estimate jitter
    # at ground level sits a few centimetres below it.
    ahead = inputs.position + inputs.velocity * cfg.geofence_lookahead_s
    if not _inside_fence(inputs.position, inputs, cfg.fence_floor_margin_m) \
            or not _inside_fence(ahead, inputs, None):
        fired.append(Verdict(VerdictKind.HOVER, "geofence breach predicted"))

    if inputs.diverged:
        fired.append(Verdict(VerdictKind.HOVER, "state estimate diverged"))

    if not fired:
        return Verdict(VerdictKind.NOMINAL)
    fired.sort(key=lambda v: v.severity, reverse=True)
    top = fired[0]
    top.triggered = [v.kind.value for v in fired]
    return top


def apply_verdict(verdict: Verdict, setpoint: Setpoint, mode: FlightMode,
                  altitude: float, control: ControlConfig) -> tuple[Setpoint, FlightMode]:
    """Transform the commanded setpoint and flight mode under a verdict."""
    if verdict.kind == VerdictKind.ESTOP:
        return Setpoint(velocity_cmd=np.zeros(3), yaw_rate_cmd=0.0), FlightMode.ESTOP
    if verdict.kind == VerdictKind.LAND:
        sp = Setpoint(velocity_cmd=np.array([0.0, 0.0, -control.descent_rate_mps]),
                      yaw_rate_cmd=0.0)
        return sp, FlightMode.LANDING
    if verdict.kind == VerdictKind.RTH:
        return setpoint, FlightMode.RTH
    if verdict.kind == VerdictKind.HOVER:
        return hover_setpoint(altitude), mode
    if verdict.kind == VerdictKind.SLOW_DOWN:
        cap = verdict.speed_cap if verdict.speed_cap is not None else control.cruise_speed_mps
        capped = Setpoint(
            velocity_cmd=setpoint.velocity_cmd.copy(),
            yaw_rate_cmd=setpoint.yaw_rate_cmd,
            altitude_hold=setpoint.altitude_hold,
            speed_cap=cap if setpoint.speed_cap is None else min(cap, setpoint.speed_cap),
        )
        return capped, mode
    return setpoint, mode

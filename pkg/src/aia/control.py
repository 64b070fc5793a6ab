"""Velocity setpoints and pure-pursuit path tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from aia.config import ControlConfig
from aia.geometry import wrap_angle


@dataclass
class Setpoint:
    """One tick's command to the flight controller.

    velocity_cmd is a world-frame velocity target (m/s); altitude_hold, when
    set, overrides the vertical channel; speed_cap clamps the command norm.
    """

    velocity_cmd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_rate_cmd: float = 0.0
    altitude_hold: float | None = None
    speed_cap: float | None = None

    def clamped(self) -> "Setpoint":
        """Return a copy with the velocity norm limited to the active cap."""
        v = np.asarray(self.velocity_cmd, dtype=float)
        if self.speed_cap is not None:
            n = float(np.linalg.norm(v))
            if n > self.speed_cap > 0.0:
                v = v * (self.speed_cap / n)
            elif self.speed_cap <= 0.0:
                v = np.zeros(3)
        return Setpoint(v, self.yaw_rate_cmd, self.altitude_hold, self.speed_cap)


def hover_setpoint(altitude: float | None = None) -> Setpoint:
    return Setpoint(np.zeros(3), 0.0, altitude, None)


def track_path(estimate, path: list[np.ndarray], limits: ControlConfig,
               speed_cap: float | None = None) -> Setpoint:
    """Pure pursuit along a polyline.

    The vehicle position is projected onto the path and the carrot sits one
    lookahead farther along the arc, so a vertex already passed can never
    pull the command backward. Speed ramps down with the remaining arc
    length, which holds cruise speed mid-path and prevents overshoot only
    near the final goal. Returns a hover setpoint once the final vertex is
    inside the acceptance radius.
    """
    if len(path) == 0:
        raise ValueError("track_path requires a non-empty path")
    pos = np.asarray(estimate.position, dtype=float)
    pts = [np.asarray(wp, dtype=float) for wp in path]
    if float(np.linalg.norm(pts[-1] - pos)) <= limits.accept_radius_m:
        return hover_setpoint(float(pts[-1][2]))

    seg_len: list[float] = []
    best_d, best_s, acc = float("inf"), 0.0, 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        ab = b - a
        length = float(np.linalg.norm(ab))
        seg_len.append(length)
        if length < 1e-9:
            frac, p = 0.0, a
        else:
            frac = float(np.clip(np.dot(pos - a, ab) / (length * length), 0.0, 1.0))
            p = a + frac * ab
        d = float(np.linalg.norm(pos - p))
        if d < best_d:
            best_d, best_s = d, acc + frac * length
        acc += length
    total = acc

    carrot_s = min(best_s + limits.lookahead_m, total)
    target = pts[-1]
    run = 0.0
    for a, b, length in zip(pts[:-1], pts[1:], seg_len):
        if length > 1e-9 and carrot_s <= run + length:
            target = a + ((carrot_s - run) / length) * (b - a)
            break
        run += length

    err = target - pos
    dist = float(np.linalg.norm(err))
    if dist < 1e-9:
        return hover_setpoint(float(pts[-1][2]))
    remaining = max(total - best_s, dist)
    limit = limits.cruise_speed_mps
    if speed_cap is not None:
        limit = min(limit, speed_cap)
    speed = min(limit, limits.pursuit_gain * remaining)
    vel = err / dist * speed

    # Yaw the nose toward travel so the forward sensors look where we fly.
    desired_yaw = math.atan2(float(err[1]), float(err[0]))
    yaw_rate = limits.yaw_gain * wrap_angle(desired_yaw - float(estimate.yaw))
    return Setpoint(vel, yaw_rate, None, speed_cap)

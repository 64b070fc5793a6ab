"""Split-battery energy model: flight pack and compute pack."""

from __future__ import annotations

from aia.config import PowerConfig


class NonPositiveDraw(ValueError):
    """Endurance is undefined for a non-positive draw."""


# Reference speed for the linear draw scaling; matches the default airframe
# top speed so the coefficient reads as "extra draw at full tilt".
DRAW_REF_SPEED_MPS = 15.0


def estimate_endurance(capacity_wh: float, draw_w: float) -> float:
    """Hours of continuous operation at a constant draw."""
    if draw_w <= 0.0:
        raise NonPositiveDraw(f"draw must be positive, got {draw_w}")
    return capacity_wh / draw_w


def flight_draw_w(power: PowerConfig, speed_mps: float) -> float:
    """Hover draw scaled up linearly with airspeed."""
    frac = min(abs(speed_mps) / DRAW_REF_SPEED_MPS, 1.0)
    return power.hover_draw_w * (1.0 + power.speed_draw_coeff * frac)


def update_energy(state, compute_active: float | bool, speed_mps: float,
                  dt: float, power: PowerConfig) -> None:
    """Drain both packs for one tick, in place.

    compute_active is the fraction of dt with the token clock running (a bool
    means the whole tick), so a deliberation's total compute energy is exactly
    latency * draw even when the latency is not a multiple of dt. Flight draw
    applies whenever the vehicle is off the ground. Levels clamp at zero and
    never increase.
    """
    frac = 1.0 if compute_active is True else 0.0 if compute_active is False else float(compute_active)
    frac = min(max(frac, 0.0), 1.0)
    if frac > 0.0:
        drain = power.compute_draw_w * frac * dt / 3600.0
        state.battery_compute_wh = max(0.0, state.battery_compute_wh - drain)
    if state.mode.value != "Grounded":
        drain = flight_draw_w(power, speed_mps) * dt / 3600.0
        state.battery_flight_wh = max(0.0, state.battery_flight_wh - drain)

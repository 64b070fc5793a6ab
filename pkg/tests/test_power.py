"""Energy model: endurance arithmetic, draw scaling, and drain bookkeeping."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aia.config import PowerConfig
from aia.power import (
    DRAW_REF_SPEED_MPS,
    NonPositiveDraw,
    estimate_endurance,
    flight_draw_w,
    update_energy,
)
from aia.world import FlightMode, UavState


def _state(mode=FlightMode.AIRBORNE, flight=700.0, compute=1000.0) -> UavState:
    return UavState(
        position=np.zeros(3), yaw=0.0, pitch=0.0, roll=0.0,
        velocity=np.zeros(3), yaw_rate=0.0, mode=mode,
        battery_flight_wh=flight, battery_compute_wh=compute, clock_s=0.0,
    )


def test_endurance_reference_points():
    assert estimate_endurance(1000.0, 250.0) == 4.0
    est = estimate_endurance(1000.0, 220.0)
    assert round(est, 3) == 4.545
    assert abs(est - 1000.0 / 220.0) < 1e-6


def test_endurance_rejects_non_positive_draw():
    with pytest.raises(NonPositiveDraw):
        estimate_endurance(1000.0, 0.0)
    with pytest.raises(NonPositiveDraw):
        estimate_endurance(1000.0, -5.0)


@given(st.floats(min_value=1e-3, max_value=1e6),
       st.floats(min_value=1e-3, max_value=1e5))
def test_endurance_is_capacity_over_draw(capacity, draw):
    assert estimate_endurance(capacity, draw) == capacity / draw


def test_flight_draw_scales_linearly_then_saturates():
    power = PowerConfig()
    assert flight_draw_w(power, 0.0) == power.hover_draw_w
    mid = flight_draw_w(power, DRAW_REF_SPEED_MPS / 2.0)
    assert mid == pytest.approx(power.hover_draw_w * (1.0 + power.speed_draw_coeff / 2.0))
    top = flight_draw_w(power, DRAW_REF_SPEED_MPS)
    beyond = flight_draw_w(power, DRAW_REF_SPEED_MPS * 3.0)
    assert beyond == top == pytest.approx(power.hover_draw_w * (1.0 + power.speed_draw_coeff))


def test_update_energy_exact_drain_amounts():
    power = PowerConfig()
    st_ = _state()
    update_energy(st_, True, 0.0, 60.0, power)
    assert st_.battery_compute_wh == pytest.approx(1000.0 - power.compute_draw_w / 60.0, abs=1e-9)
    assert st_.battery_flight_wh == pytest.approx(700.0 - power.hover_draw_w / 60.0, abs=1e-9)


def test_update_energy_fractional_compute():
    power = PowerConfig()
    st_ = _state()
    update_energy(st_, 0.25, 0.0, 0.02, power)
    want = power.compute_draw_w * 0.25 * 0.02 / 3600.0
    assert 1000.0 - st_.battery_compute_wh == pytest.approx(want, abs=1e-12)


def test_update_energy_grounded_spares_flight_pack():
    power = PowerConfig()
    st_ = _state(mode=FlightMode.GROUNDED)
    update_energy(st_, True, 0.0, 10.0, power)
    assert st_.battery_flight_wh == 700.0
    assert st_.battery_compute_wh < 1000.0


@given(st.floats(min_value=0.0, max_value=1.0),
       st.floats(min_value=0.0, max_value=20.0),
       st.floats(min_value=1e-4, max_value=0.1))
def test_update_energy_monotone_and_conserving(frac, speed, dt):
    """Both packs are non-increasing and the decrease equals draw * dt."""
    power = PowerConfig()
    st_ = _state()
    before_f, before_c = st_.battery_flight_wh, st_.battery_compute_wh
    update_energy(st_, frac, speed, dt, power)
    assert st_.battery_flight_wh <= before_f
    assert st_.battery_compute_wh <= before_c
    want_c = power.compute_draw_w * frac * dt / 3600.0
    want_f = flight_draw_w(power, speed) * dt / 3600.0
    assert before_c - st_.battery_compute_wh == pytest.approx(want_c, abs=1e-9)
    assert before_f - st_.battery_flight_wh == pytest.approx(want_f, abs=1e-9)


def test_update_energy_clamps_at_zero():
    power = PowerConfig()
    st_ = _state(flight=1e-6, compute=1e-6)
    update_energy(st_, True, 10.0, 60.0, power)
    assert st_.battery_flight_wh == 0.0
    assert st_.battery_compute_wh == 0.0

"""Shared builders for the test suite.

Most tests run on a small synthetic scenario so distances and energies stay
easy to reason about; the shipped scenario files get exercised by the
end-to-end suite.
"""

from __future__ import annotations

import copy

import pytest

from aia.config import RuntimeConfig
from aia.scenarios import parse_scenario
from aia.world import World

FLAT_DOC = {
    "name": "flat",
    "terrain": {"origin": [-50.0, -50.0], "resolution": 10.0,
                "size": [12, 12], "fill": 0.0},
    "obstacles": [],
    "geofence": {"polygon": [[-40.0, -40.0], [60.0, -40.0], [60.0, 60.0], [-40.0, 60.0]],
                 "alt_min": 0.0, "alt_max": 50.0},
    "home": [0.0, 0.0, 0.0],
    "takeoff_point": [0.0, 0.0, 0.0],
    "route": [[20.0, 0.0, 15.0], [20.0, 20.0, 15.0]],
    "scene_truth": [],
    "wind": {"mean": [0.0, 0.0, 0.0], "gust_amp": 0.0},
    "geodetic": "flat test field, local ENU frame",
}


def flat_doc(**overrides) -> dict:
    doc = copy.deepcopy(FLAT_DOC)
    doc.update(overrides)
    return doc


def make_scenario(**overrides):
    return parse_scenario(flat_doc(**overrides))


def quiet_config(**overrides) -> RuntimeConfig:
    """Config with all sensor noise and wind-free defaults for exact checks."""
    config = RuntimeConfig()
    config.sensors.gnss_sigma_m = 0.0
    config.sensors.imu_accel_bias_mps2 = (0.0, 0.0, 0.0)
    config.sensors.imu_accel_noise_mps2 = 0.0
    config.sensors.imu_gyro_bias_rps = 0.0
    config.sensors.imu_gyro_noise_rps = 0.0
    config.sensors.baro_sigma_m = 0.0
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


@pytest.fixture
def flat_world():
    return World(make_scenario(), quiet_config(), seed=7)

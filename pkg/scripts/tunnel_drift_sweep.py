"""Sweep the mine-tunnel traverse and report estimator drift against the bound.

The tunnel blanks GNSS inside the mask, so the estimator runs on IMU dead
reckoning corrected by lidar scan matching. The contract is that the final
position error stays below drift_bound_frac of the distance traveled. This
script flies the traverse across seeds, reports the margin, and optionally
scales the IMU noise terms to show where the contract starts to break.

    python scripts/tunnel_drift_sweep.py --seeds 20
    python scripts/tunnel_drift_sweep.py --seeds 10 --imu-scale 1 2 4 8
"""

from __future__ import annotations

import argparse
import dataclasses

import numpy as np

from aia.backends import MockBackend
from aia.config import RuntimeConfig
from aia.mission import run_mission
from aia.scenarios import load_scenario


def scaled_config(imu_scale: float) -> RuntimeConfig:
    config = RuntimeConfig()
    sensors = dataclasses.replace(
        config.sensors,
        imu_accel_bias_mps2=tuple(imu_scale * b
                                  for b in config.sensors.imu_accel_bias_mps2),
        imu_accel_noise_mps2=imu_scale * config.sensors.imu_accel_noise_mps2,
    )
    return dataclasses.replace(config, sensors=sensors)


def traverse(config: RuntimeConfig, seed: int) -> dict:
    scenario = load_scenario("mine_tunnel")
    log = run_mission(scenario, config, seed, backend=MockBackend())
    final = log.final_state() or {}

    denied_ticks = 0
    total_ticks = 0
    for e in log.events_of("tick_state"):
        total_ticks += 1
        denied_ticks += 0 if e.get("gnss_available", True) else 1

    dist = float(final.get("distance_traveled_m", 0.0))
    err = float(final.get("est_err_m", 0.0))
    return {
        "seed": seed,
        "status": final.get("status", "?"),
        "dist_m": dist,
        "err_m": err,
        "frac": err / dist if dist > 0 else 0.0,
        "denied_frac": denied_ticks / total_ticks if total_ticks else 0.0,
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=20,
                        help="seeds 0..N-1 (default 20)")
    parser.add_argument("--imu-scale", type=float, nargs="+", default=[1.0],
                        help="IMU bias/noise multipliers to sweep (default 1)")
    args = parser.parse_args(argv)

    bound = RuntimeConfig().estimator.drift_bound_frac
    any_breach = False
    for scale in args.imu_scale:
        config = scaled_config(scale)
        rows = [traverse(config, seed) for seed in range(args.seeds)]
        fracs = np.array([r["frac"] for r in rows])
        breaches = int(np.sum(fracs > bound))
        any_breach |= breaches > 0

        print(f"imu_scale={scale:g}  bound={100 * bound:.2f}%")
        print(f"{'seed':>4} {'status':<10} {'dist[m]':>9} {'err[m]':>8} "
              f"{'drift%':>8} {'denied%':>8}")
        for r in rows:
            flag = "  <-- over bound" if r["frac"] > bound else ""
            print(f"{r['seed']:>4} {r['status']:<10} {r['dist_m']:>9.1f} "
                  f"{r['err_m']:>8.3f} {100 * r['frac']:>8.4f} "
                  f"{100 * r['denied_frac']:>8.1f}{flag}")
        print(f"  worst {100 * fracs.max():.4f}%  median {100 * np.median(fracs):.4f}%  "
              f"breaches {breaches}/{len(rows)}\n")

    return 1 if any_breach and args.imu_scale == [1.0] else 0


if __name__ == "__main__":
    raise SystemExit(main())

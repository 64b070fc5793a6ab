"""Fly every shipped scenario across a seed range and tabulate the outcomes.

Reproduces the headline closed-loop result: all scenarios complete under the
mock backend with zero crash and zero geofence events, and the final estimate
drift stays inside the configured bound. Useful after touching the world
model, the estimator, or the safety monitor.

    python scripts/run_all_scenarios.py --seeds 20
    python scripts/run_all_scenarios.py --scenario mine_tunnel --seeds 5 -v
"""

from __future__ import annotations

import argparse
import sys
import time

from aia.backends import MockBackend
from aia.config import RuntimeConfig
from aia.mission import run_mission
from aia.scenarios import list_scenarios, load_scenario


def fly(name: str, seed: int, verbose: bool) -> dict:
    scenario = load_scenario(name)
    t0 = time.perf_counter()
    log = run_mission(scenario, RuntimeConfig(), seed, backend=MockBackend())
    wall = time.perf_counter() - t0

    final = log.final_state() or {}
    bad = [e for e in log.events_of("world_event")
           if e.get("event") in ("Crash", "GeofenceBreach")]
    dist = float(final.get("distance_traveled_m", 0.0))
    err = float(final.get("est_err_m", 0.0))
    row = {
        "scenario": name,
        "seed": seed,
        "status": final.get("status", "?"),
        "t_s": float(final.get("t", 0.0)),
        "route": f"{final.get('route_visited', 0)}/{final.get('route_total', 0)}",
        "dist_m": dist,
        "drift_pct": 100.0 * err / dist if dist > 0 else 0.0,
        "bad_events": len(bad),
        "wall_s": wall,
    }
    if verbose:
        for e in bad:
            print(f"    !! {name} seed {seed}: {e['event']} at t={e['t']:.2f}")
    return row


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scenario", action="append",
                        help="scenario name (repeatable; default: all shipped)")
    parser.add_argument("--seeds", type=int, default=20,
                        help="seeds 0..N-1 per scenario (default 20)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    names = args.scenario or list_scenarios()
    rows = []
    for name in names:
        for seed in range(args.seeds):
            rows.append(fly(name, seed, args.verbose))

    header = (f"{'scenario':<14} {'seed':>4} {'status':<10} {'t[s]':>8} "
              f"{'route':>6} {'dist[m]':>9} {'drift%':>8} {'bad':>4} {'wall[s]':>8}")
    print(header)
    print("-" * len(header))
    for r in rows:
        print(f"{r['scenario']:<14} {r['seed']:>4} {r['status']:<10} "
              f"{r['t_s']:>8.1f} {r['route']:>6} {r['dist_m']:>9.1f} "
              f"{r['drift_pct']:>8.4f} {r['bad_events']:>4} {r['wall_s']:>8.2f}")

    print()
    for name in names:
        sub = [r for r in rows if r["scenario"] == name]
        ok = sum(1 for r in sub if r["status"] == "complete" and r["bad_events"] == 0)
        worst = max(r["drift_pct"] for r in sub)
        print(f"{name:<14} {ok}/{len(sub)} clean completions, "
              f"worst drift {worst:.4f}% of distance")

    failures = [r for r in rows if r["status"] != "complete" or r["bad_events"]]
    if failures:
        print(f"\n{len(failures)} run(s) did not complete cleanly", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

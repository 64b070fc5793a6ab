"""Command-line entry points.

  aia run    --scenario <name|path> [--brief <name|path>] [--backend ...]
  aia replay <log.ndjson>
  aia stage1 --brief <name|path> [--backend ...]
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from aia.backends import make_backend
from aia.config import RuntimeConfig
from aia.logbook import MissionLog
from aia.mission import (BackendFailure, MaxRerunsExceeded, cli_decide, replay,
                         run_mission, run_stage1)
from aia.prompts import MissionBrief
from aia.scenarios import load_scenario


def _cadence(text: str) -> float:
    value = float(text)
    if not 2.0 <= value <= 60.0:
        raise argparse.ArgumentTypeError("cadence must be between 2 and 60 seconds")
    return value


def _apply_backend_arg(config: RuntimeConfig, spec: str) -> None:
    kind, _, rest = spec.partition(":")
    kind = kind.lower()
    if kind not in ("mock", "scripted", "remote"):
        raise SystemExit(f"unknown backend '{kind}' (mock | scripted:PATH | remote)")
    config.backend.kind = kind
    if kind == "scripted":
        if not rest:
            raise SystemExit("scripted backend needs a transcript: scripted:PATH")
        config.backend.transcript_path = rest


def load_brief(source: str) -> MissionBrief:
    """Brief from an existing JSON path, or a shipped name under data/briefs."""
    path = Path(source)
    if path.is_file():
        doc = json.loads(path.read_text())
    else:
        name = source[:-5] if source.endswith(".json") else source
        ref = resources.files("aia.data.briefs").joinpath(f"{name}.json")
        try:
            doc = json.loads(ref.read_text())
        except FileNotFoundError:
            raise SystemExit(f"no such brief: {source}")
    return MissionBrief(application=doc["application"],
                        free_text=doc["free_text"],
                        constraints=list(doc.get("constraints", [])))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aia",
                                     description="aerial agent simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="fly a mission")
    run_p.add_argument("--scenario", required=True,
                       help="shipped scenario name or a JSON file path")
    run_p.add_argument("--backend", default="mock",
                       help="mock | scripted:PATH | remote")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--brief", default="",
                       help="run stage-1 planning from this brief first")
    run_p.add_argument("--headless", action="store_true",
                       help="no prompts; plans auto-approved")
    run_p.add_argument("--serve", default="",
                       help="bind the telemetry service, e.g. 127.0.0.1:8765")
    run_p.add_argument("--cadence-s", type=_cadence, default=None)
    run_p.add_argument("--time-scale", type=float, default=None,
                       help="sim seconds per wall second; 0 = unpaced")
    run_p.add_argument("--log", default="", help="write the mission log here")

    replay_p = sub.add_parser("replay", help="re-execute a mission log")
    replay_p.add_argument("log", help="NDJSON mission log path")

    s1_p = sub.add_parser("stage1", help="mission planning only")
    s1_p.add_argument("--brief", required=True)
    s1_p.add_argument("--backend", default="mock")
    s1_p.add_argument("--seed", type=int, default=0)
    s1_p.add_argument("--headless", action="store_true")
    return parser


def _cmd_run(args) -> int:
    config = RuntimeConfig()
    _apply_backend_arg(config, args.backend)
    if args.cadence_s is not None:
        config.mission.cadence_s = args.cadence_s

    scenario = load_scenario(args.scenario)
    brief = load_brief(args.brief) if args.brief else None
    backend = make_backend(config.backend)

    service = None
    decide = None
    hooks: dict = {}
    if args.serve:
        from aia.service import serve_telemetry
        service = serve_telemetry(args.serve)
        decide = service.gate.decide
        hooks["log_hook"] = service.attach_log
        hooks["runtime_hook"] = service.attach_runtime
        # A console watching live telemetry wants roughly real time.
        config.time_scale = 1.0
        print(f"telemetry on http://{service.address[0]}:{service.address[1]}")
    elif brief is not None and not args.headless and sys.stdin.isatty():
        decide = cli_decide
    if args.time_scale is not None:
        config.time_scale = args.time_scale

    try:
        log = run_mission(scenario, config, args.seed, backend=backend,
                          brief=brief, decide=decide, **hooks)
    except (MaxRerunsExceeded, BackendFailure) as exc:
        print(f"mission aborted in stage 1: {exc}", file=sys.stderr)
        return 3
    finally:
        if service is not None:
            service.stop()

    final = log.final_state() or {}
    print(f"status: {final.get('status', 'unknown')}  "
          f"t={final.get('t', 0.0):.1f}s  events={len(log.events)}  "
          f"hash={log.content_hash()[:16]}")
    if args.log:
        path = log.write(args.log)
        print(f"log written to {path}")
    return 0


def _cmd_replay(args) -> int:
    log = MissionLog.read(args.log)
    report, _ = replay(log)
    if report.diverged:
        print(f"DIVERGED: {report.detail} "
              f"(seq={report.first_divergence_seq}, t={report.first_divergence_t})")
        return 1
    final = report.final_state or {}
    print(f"replay matched; status={final.get('status', 'unknown')} "
          f"t={final.get('t', 0.0)}")
    return 0


def _cmd_stage1(args) -> int:
    config = RuntimeConfig()
    _apply_backend_arg(config, args.backend)
    brief = load_brief(args.brief)
    backend = make_backend(config.backend)
    decide = cli_decide if (not args.headless and sys.stdin.isatty()) else None
    try:
        plan = run_stage1(brief, backend, config, decide=decide)
    except (MaxRerunsExceeded, BackendFailure) as exc:
        print(f"stage 1 failed: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({
        "status": plan.status,
        "objectives": plan.objectives,
        "preparation": plan.preparation,
        "planning_items": plan.planning_items,
        "waypoints": [list(w) for w in plan.waypoints],
    }, indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "replay":
        return _cmd_replay(args)
    return _cmd_stage1(args)


if __name__ == "__main__":
    sys.exit(main())

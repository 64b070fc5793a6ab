"""Mission orchestration: stage-1 plan approval and the stage-2 runtime.

One authoritative executor advances the fast tick in simulation time.
Deliberation is computed at its start tick but its result only matures
after the simulated token latency; the fast loop keeps running in between.
Operator commands enter through a queue drained at tick boundaries.
"""

from __future__ import annotations

import hashlib
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from aia import actions
from aia.backends import BackendError, describe_scene, make_backend, query_backend
from aia.blackboard import Blackboard
from aia.config import RuntimeConfig, canonical_json, config_hash
from aia.control import Setpoint, hover_setpoint, track_path
from aia.detection import ObstacleRecord, detect_obstacles
from aia.estimator import DivergenceError, Estimator, ScanMatchInput
from aia.logbook import MissionLog
from aia.mapping import OccupancyGrid
from aia.parsing import ParseError, parse_stage1_plan, parse_stage2_decision
from aia.planner import NoPath, plan_local_path
from aia.prompts import (MissionBrief, MissionPlan, render_stage1_prompt,
                         render_stage2_prompt)
from aia.safety import SafetyInputs, Verdict, VerdictKind, apply_verdict, safety_check
from aia.scenarios import load_scenario, parse_scenario
from aia.world import FlightMode, Scenario, World


class MaxRerunsExceeded(RuntimeError):
    pass


class BackendFailure(RuntimeError):
    pass


class ConfigMismatch(RuntimeError):
    pass


@dataclass
class OperatorDecision:
    plan_id: int
    verdict: str                 # Approve | Reject
    note: str = ""


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- stage 1 -------------------------------------------------------------------


class PlanGate:
    """Hands Pending plans to whoever decides (console, CLI, or auto)."""

    def __init__(self, auto_approve: bool = True):
        self.auto_approve = auto_approve
        self.pending: MissionPlan | None = None
        self._decision: OperatorDecision | None = None
        self._event = threading.Event()

    def submit(self, decision: OperatorDecision) -> bool:
        if self.pending is None or decision.plan_id != self.pending.plan_id:
            return False
        self._decision = decision
        self._event.set()
        return True

    def decide(self, plan: MissionPlan) -> OperatorDecision:
        if self.auto_approve:
            return OperatorDecision(plan.plan_id, "Approve", "auto-approved")
        self.pending = plan
        self._event.clear()
        self._event.wait()
        self.pending = None
        return self._decision


def cli_decide(plan: MissionPlan) -> OperatorDecision:
    """Interactive terminal approval, used when no console is attached."""
    print("\n==== PENDING MISSION PLAN ====")
    print(plan.raw_text)
    print("==============================")
    while True:
        answer = input("approve this plan? [y/n] ").strip().lower()
        if answer in ("y", "yes"):
            return OperatorDecision(plan.plan_id, "Approve")
        if answer in ("n", "no"):
            note = input("rejection note (fed back to the planner): ").strip()
            return OperatorDecision(plan.plan_id, "Reject", note)


def run_stage1(brief: MissionBrief, backend, config: RuntimeConfig,
               decide=None, log: MissionLog | None = None,
               world: World | None = None) -> MissionPlan:
    """Generate-review loop; returns the approved plan or raises.

    When a world is supplied, each deliberation advances its clock by the
    simulated token latency and drains the compute battery accordingly, so
    planning time shows up in the mission timeline.
    """
    decide = decide or (lambda plan: OperatorDecision(plan.plan_id, "Approve", "auto"))
    now = (lambda: world.state.clock_s) if world is not None else (lambda: 0.0)
    feedback = ""
    for attempt in range(1, config.mission.max_reruns + 1):
        prompt = render_stage1_prompt(brief, feedback)
        if log:
            log.append("stage1_attempt", now(), attempt=attempt)
        try:
            result = query_backend(backend, prompt, config.backend)
        except BackendError as first_err:
            try:
                result = query_backend(backend, prompt, config.backend)
            except BackendError as second_err:
                if log:
                    log.append("backend_failure", now(), stage=1,
                               error=str(second_err))
                raise BackendFailure(
                    f"stage 1 backend failed twice: {first_err}; {second_err}"
                ) from second_err
        if world is not None:
            world.consume_compute(result.latency_s)
        if log:
            log.append("backend_response", now(), purpose="stage1",
                       text=result.text, tokens=result.token_count,
                       latency_s=round(result.latency_s, 6),
                       prompt_sha256=_sha(prompt), prompt_tokens=len(prompt.split()))
        try:
            plan = parse_stage1_plan(result.text)
        except ParseError as exc:
            feedback = f"The previous response was rejected by the parser: {exc}"
            if log:
                log.append("stage1_parse_error", now(), error=str(exc))
            continue
        plan.plan_id = attempt
        n_obj, n_prep, n_items = plan.section_counts()
        if log:
            log.append("plan_pending", now(), plan_id=plan.plan_id,
                       objectives=n_obj, preparation=n_prep, planning_items=n_items)
        decision = decide(plan)
        if log:
            log.append("operator_decision", now(), plan_id=decision.plan_id,
                       verdict=decision.verdict, note=decision.note)
        if decision.verdict == "Approve":
            plan.status = "Approved"
            if log:
                log.append("plan_approved", now(), plan_id=plan.plan_id)
            return plan
        plan.status = "Rejected"
        feedback = decision.note or "The operator rejected the plan."
    raise MaxRerunsExceeded(f"no approved plan after {config.mission.max_reruns} attempts")


# -- stage 2 -------------------------------------------------------------------


@dataclass
class Deliberation:
    start_t: float
    end_t: float
    response: str
    epoch: int
    retries_left: int
    tokens: int


@dataclass
class _ProgramState:
    program: actions.SetpointProgram | None = None
    seg_idx: int = 0
    seg_elapsed: float = 0.0
    path: np.ndarray | None = None       # (k, 3) planned waypoints
    path_goal: np.ndarray | None = None
    path_age_ticks: int = 0


class MissionRuntime:
    """Owns the stage-2 loop; also the live handle the telemetry service reads."""

    STATE_LOG_PERIOD = 25             # tick_state cadence, in fast ticks
    REPLAN_PERIOD_TICKS = 100
    OBSTACLE_RECORDS_IN_CONTEXT = 5

    def __init__(self, scenario: Scenario, config: RuntimeConfig, seed: int,
                 backend, plan: MissionPlan | None = None,
                 log: MissionLog | None = None, world: World | None = None):
        self.scenario = scenario
        self.config = config
        self.seed = int(seed)
        self.backend = backend
        self.plan = plan

        payload = scenario.raw_doc if scenario.raw_doc is not None else scenario.name
        self.cfg_hash = config_hash(config, payload, self.seed)
        if log is None:
            header = {"scenario": scenario.name, "seed": self.seed,
                      "config": config.to_dict(), "config_hash": self.cfg_hash,
                      "scenario_doc": scenario.raw_doc}
            log = MissionLog(header)
        self.log = log

        self.world = world if world is not None else World(scenario, config, seed)
        x0, y0, x1, y1 = self._grid_extent()
        self.grid = OccupancyGrid((x0, y0), x1 - x0, y1 - y0, config.mapping)
        self.estimator = Estimator(config.estimator,
                                   self.world.state.position.copy(), yaw=0.0)
        if config.estimator.imu_calibration_s > 0.0:
            # Pre-flight bias averaging on the pad; without it the unlearned
            # accelerometer bias dominates GNSS-denied drift.
            bias = self.world.imu_calibration(config.estimator.imu_calibration_s,
                                              config.control.dt_s)
            self.estimator.estimate.accel_bias = bias
        self.blackboard = Blackboard(config.mission.scene_ring_capacity,
                                     config.persist_context_dir or None)
        self._write_static_channels()

        route = plan.waypoints if plan and plan.waypoints else scenario.route
        self.route: list[np.ndarray] = [np.asarray(p, dtype=float) for p in route]
        self.route_visited = [False] * len(self.route)

        self.records: list[ObstacleRecord] = []
        self.prog = _ProgramState()
        self.delib: Deliberation | None = None
        self.next_cadence_t = 0.0
        self.error_feedback = ""
        self.backend_failed_since: float | None = None
        self.degraded = False
        self.speed_cap: float | None = None
        self.alt_override: float | None = None
        self.estop_requested = False
        self.rth_latch = False
        self._rth_target: np.ndarray | None = None
        self.landing = False
        self._land_anchor: np.ndarray | None = None
        self.mission_complete = False
        self.diverged = False
        self.status = "running"
        self.tick_i = 0
        self._estop_settle = 0
        self._last_verdict_kind = VerdictKind.NOMINAL.value
        self._last_gnss_avail = True
        self._commands: deque = deque()
        self._cmd_lock = threading.Lock()
        self._state_cache: dict = {}
        self.plan_gate: PlanGate | None = None
        self.scene_feed: deque | None = None

    # -- service-facing surface ------------------------------------------------

    def enqueue_command(self, kind: str, **payload) -> None:
        with self._cmd_lock:
            self._commands.append({"kind": kind, **payload})

    def state_snapshot(self) -> dict:
        return dict(self._state_cache)

    def map_snapshot(self) -> dict:
        est = self.estimator.estimate
        summary = self.grid.summarize(est.position[:2], with_frontiers=True)
        return {
            "summary": summary.to_dict(),
            "origin": list(self.grid.origin),
            "obstacles": [r.to_dict() for r in self.records],
            "occupied_cells": self.grid.occupied_cells().tolist(),
            "geofence": self.scenario.geofence_polygon.tolist(),
            "route": [p.tolist() for p in self.route],
            "route_visited": list(self.route_visited),
        }

    def context_snapshot(self) -> dict:
        try:
            return self.blackboard.snapshot().to_dict()
        except Exception:
            return {}

    # -- setup helpers ----------------------------------------------------------

    def _grid_extent(self) -> tuple[float, float, float, float]:
        poly = self.scenario.geofence_polygon
        margin = 20.0
        return (float(poly[:, 0].min()) - margin, float(poly[:, 1].min()) - margin,
                float(poly[:, 0].max()) + margin, float(poly[:, 1].max()) + margin)

    def _write_static_channels(self) -> None:
        sc = self.scenario
        self.blackboard.write("geodetic_info", {
            "datum": "local ENU, meters",
            "boundary_polygon": [[round(float(x), 2), round(float(y), 2)]
                                 for x, y in sc.geofence_polygon],
            "alt_min": sc.geofence_alt_min,
            "alt_max": sc.geofence_alt_max,
            "home": [round(float(v), 2) for v in sc.home],
            "description": sc.geodetic_text,
        })
        self.blackboard.write("action_set", actions.action_set_text())

    # -- main loop ---------------------------------------------------------------

    def run(self) -> MissionLog:
        self._emit("mission_start", self.world.state.clock_s,
                   scenario=self.scenario.name, seed=self.seed,
                   route_points=len(self.route))
        dt = self.config.control.dt_s
        pace = self.config.time_scale
        max_t = self.config.mission.max_sim_time_s
        while self.status == "running":
            if self.world.state.clock_s >= max_t:
                self.status = "timeout"
                break
            self.tick()
            if pace > 0.0:
                time.sleep(dt / pace)
        self._finalize()
        return self.log

    def tick(self) -> None:
        st = self.world.state
        t = st.clock_s
        dt = self.config.control.dt_s
        est = self.estimator.estimate

        self._drain_commands(t)
        self._deliberation_step(t, est)

        setpoint, source = self._command_setpoint(t, est, dt)
        verdict = self._safety(t, est, setpoint)
        if verdict.kind != VerdictKind.NOMINAL:
            setpoint, new_mode = apply_verdict(
                verdict, setpoint, st.mode, float(est.position[2]),
                self.config.control)
            source = "safety"
            if new_mode != st.mode and st.mode not in (FlightMode.GROUNDED,):
                if new_mode == FlightMode.ESTOP:
                    self.world.set_mode(FlightMode.ESTOP)
                elif new_mode == FlightMode.LANDING and not self.landing:
                    self._begin_landing(t, f"safety: {verdict.reason}")
                elif new_mode == FlightMode.RTH:
                    self._engage_rth(t, f"safety: {verdict.reason}")

        frac = self._compute_fraction(t, dt)
        _, events = self.world.step(setpoint, dt, frac)
        for ev in events:
            self._emit("world_event", ev.t, event=ev.kind, **ev.data)
            if ev.kind == "Crash":
                self.status = "crashed"
            elif ev.kind == "Landed":
                self.status = "complete" if self.mission_complete else "landed"

        self._sense_and_estimate(dt)
        self._route_progress(st.clock_s)

        if self.tick_i % self.config.context_write_period_ticks == 0:
            self._write_pose_channel(st.clock_s, full=False)
        if self.tick_i % self.STATE_LOG_PERIOD == 0:
            self._log_tick_state(st.clock_s, verdict, source, setpoint)
        self._state_cache = self._build_state(st.clock_s, verdict, source)

        if self.world.state.mode == FlightMode.ESTOP:
            self._estop_settle += 1
            if self._estop_settle >= self.STATE_LOG_PERIOD:
                self.status = "estopped"
        self.tick_i += 1

    # -- operator commands -------------------------------------------------------

    def _drain_commands(self, t: float) -> None:
        with self._cmd_lock:
            cmds = list(self._commands)
            self._commands.clear()
        for cmd in cmds:
            payload = dict(cmd)
            command = payload.pop("kind")
            self._emit("command", t, command=command, **payload)
            if command == "estop":
                self.estop_requested = True
            elif command == "rth":
                self._engage_rth(t, "operator command")

    # -- deliberation -------------------------------------------------------------

    def _deliberation_allowed(self) -> bool:
        if self.estop_requested or self.rth_latch or self.landing or self.degraded:
            return False
        return self.world.state.mode in (FlightMode.GROUNDED, FlightMode.TAKEOFF,
                                         FlightMode.AIRBORNE)

    def _deliberation_step(self, t: float, est) -> None:
        if self.delib is not None:
            if t >= self.delib.end_t - 1e-9:
                self._deliver_decision(t)
            return
        if t + 1e-9 >= self.next_cadence_t and self._deliberation_allowed():
            self._start_deliberation(t, est)

    def _start_deliberation(self, t: float, est, retries_left: int | None = None) -> None:
        cadence = self.config.mission.cadence_s
        self.next_cadence_t = t + cadence

        obs = self.world.capture_scene()
        if self.scene_feed is not None:
            # Replay path: reuse the logged description verbatim.
            text = self.scene_feed.popleft() if self.scene_feed else ""
        else:
            text = describe_scene(obs, self.backend, self.config.backend)
        self._emit("scene_description", t, text=text, visible=len(obs.items))
        self.blackboard.write("scene_descriptions", {"t": round(t, 3), "text": text})
        self._write_pose_channel(t, full=True)
        snapshot = self.blackboard.snapshot()
        prompt = render_stage2_prompt(snapshot, self.config.mission.prompt_token_budget,
                                      self.error_feedback)
        self.error_feedback = ""
        try:
            result = query_backend(self.backend, prompt, self.config.backend)
        except BackendError as exc:
            self._emit("backend_failure", t, stage=2, error=str(exc))
            if self.backend_failed_since is None:
                self.backend_failed_since = t
            grace = self.config.mission.grace_cadences * cadence
            if t - self.backend_failed_since >= grace - 1e-9 and not self.degraded:
                self.degraded = True
                self.prog = _ProgramState()   # drop the stale decision, hold position
                self._emit("degraded_hover", t, reason="backend unavailable")
            return
        self.backend_failed_since = None
        self._emit("backend_response", t, purpose="stage2", text=result.text,
                   tokens=result.token_count, latency_s=round(result.latency_s, 6),
                   prompt_sha256=_sha(prompt), prompt_tokens=len(prompt.split()))
        self.delib = Deliberation(
            start_t=t, end_t=t + result.latency_s, response=result.text,
            epoch=snapshot.epoch,
            retries_left=self.config.mission.parse_retries
            if retries_left is None else retries_left,
            tokens=result.token_count)
        self._emit("deliberation_started", t, latency_s=round(result.latency_s, 6),
                   tokens=result.token_count, epoch=snapshot.epoch)

    def _deliver_decision(self, t: float) -> None:
        delib = self.delib
        self.delib = None
        est = self.estimator.estimate
        try:
            cmd, waypoints = parse_stage2_decision(delib.response)
        except ParseError as exc:
            self._emit("parse_error", t, error_kind=type(exc).__name__, detail=str(exc))
            self._retry_or_fallback(t, est, delib, f"{type(exc).__name__}: {exc}")
            return
        check = actions.validate_action(cmd, self.world.state, self.scenario,
                                        self.config.safety, self.config.control)
        if isinstance(check, actions.Rejection):
            self._emit("action_rejected", t, code=check.code, field=check.field,
                       reason=check.reason)
            self._retry_or_fallback(
                t, est, delib,
                f"action rejected ({check.code} on {check.field}): {check.reason}")
            return

        latency = delib.end_t - delib.start_t
        self._emit("decision", t, action=actions.spec_for(cmd).name,
                   text=actions.render_action_text(cmd),
                   waypoints=[list(w) for w in waypoints],
                   epoch=delib.epoch, latency_s=round(latency, 6))
        self._apply_decision(t, cmd, est)

    def _retry_or_fallback(self, t: float, est, delib: Deliberation,
                           feedback: str) -> None:
        if delib.retries_left > 0:
            self.error_feedback = feedback
            self._start_deliberation(t, est, retries_left=delib.retries_left - 1)
        else:
            self._emit("decision_fallback", t, to="hover")
            self.prog = _ProgramState()
            self._set_program(actions.SetpointProgram(
                [actions.Segment(hover_setpoint(float(est.position[2])), "duration",
                                 duration_s=self.config.mission.cadence_s)],
                label="hover"))

    def _apply_decision(self, t: float, cmd: actions.ActionCommand, est) -> None:
        pseudo = self.world.state.copy()
        pseudo.position = est.position.copy()
        program = actions.compile_action(cmd, pseudo, self.config.control)

        if program.effect is not None:
            name, value = program.effect
            if name == "estop":
                self.estop_requested = True
                return
            if name == "rth":
                self._engage_rth(t, "planner decision")
                return
            max_speed = self.scenario.airframe.max_speed_mps
            if name == "speed_cap_delta":
                base = self.speed_cap if self.speed_cap is not None \
                    else self.config.control.cruise_speed_mps
                self.speed_cap = float(min(max(base + value, 0.5), max_speed))
            elif name == "speed_cap_set":
                self.speed_cap = float(min(max(value, 0.5), max_speed))
            elif name == "altitude_override":
                self.alt_override = float(value)
            self._emit("effect", t, effect=name, value=float(value))

        if isinstance(cmd, actions.Land):
            self._begin_landing(t, "planner decision")
            return
        self._set_program(program)

    def _set_program(self, program: actions.SetpointProgram) -> None:
        # A fresh decision can replace the climb program mid-ascent; the
        # vehicle is flying by then, so the mode must not stay Takeoff.
        st = self.world.state
        if program.label != "takeoff" and st.mode == FlightMode.TAKEOFF:
            ground = self.scenario.terrain.height_at(
                float(st.position[0]), float(st.position[1]))
            if float(st.position[2]) > ground + self.config.control.accept_radius_m:
                self.world.set_mode(FlightMode.AIRBORNE)
                self._emit("airborne", st.clock_s)
        self.prog = _ProgramState(program=program)

    # -- program execution ---------------------------------------------------------

    def _command_setpoint(self, t: float, est, dt: float) -> tuple[Setpoint, str]:
        st = self.world.state
        if self.landing or st.mode == FlightMode.LANDING:
            # Hold the descent anchor horizontally so wind cannot walk the
            # touchdown point toward the fence.
            horiz = np.zeros(2)
            if self._land_anchor is not None:
                err = self._land_anchor - est.position[:2]
                dist = float(np.hypot(err[0], err[1]))
                if dist > 1e-9:
                    horiz = err * (min(2.0, 1.5 * dist) / dist)
            sp = Setpoint(velocity_cmd=np.array(
                [horiz[0], horiz[1], -self.config.control.descent_rate_mps]))
            return sp, "landing"
        if self.rth_latch:
            return self._rth_setpoint(t, est), "rth"
        if st.mode == FlightMode.GROUNDED and (
                self.prog.program is None
                or self.prog.program.label != "takeoff"):
            return Setpoint(), "none"

        prog = self.prog
        if prog.program is None or prog.seg_idx >= len(prog.program.segments):
            sp = hover_setpoint(float(est.position[2])) \
                if st.mode != FlightMode.GROUNDED else Setpoint()
            return self._capped(sp), "none"

        if prog.program.label == "takeoff" and st.mode == FlightMode.GROUNDED:
            if not self.world.try_takeoff():
                self._emit("takeoff_rejected", t,
                           reason="lift budget or mode refused takeoff")
                self.prog = _ProgramState()
                return Setpoint(), "none"
            self._emit("takeoff", t, target_alt=float(prog.program.segments[0].target[2]))

        seg = prog.program.segments[prog.seg_idx]
        self._advance_segment(t, est, seg, dt)
        prog = self.prog
        if prog.program is None or prog.seg_idx >= len(prog.program.segments):
            return self._capped(hover_setpoint(float(est.position[2]))), "none"
        seg = prog.program.segments[prog.seg_idx]

        if seg.termination == "arrival" and seg.target is not None \
                and prog.program.label in ("waypoint_navigation", "orbit"):
            sp = self._tracked_setpoint(est, seg)
        elif seg.termination == "arrival" and seg.target is not None:
            sp = track_path(est, np.asarray([seg.target]), self.config.control,
                            speed_cap=seg.setpoint.speed_cap)
            if seg.setpoint.altitude_hold is not None:
                sp.altitude_hold = seg.setpoint.altitude_hold
        else:
            sp = Setpoint(velocity_cmd=seg.setpoint.velocity_cmd.copy(),
                          yaw_rate_cmd=seg.setpoint.yaw_rate_cmd,
                          altitude_hold=seg.setpoint.altitude_hold,
                          speed_cap=seg.setpoint.speed_cap)
        if self.alt_override is not None and sp.altitude_hold is None:
            sp.altitude_hold = self.alt_override
        return self._capped(sp), "decision"

    def _capped(self, sp: Setpoint) -> Setpoint:
        if self.speed_cap is not None:
            sp.speed_cap = self.speed_cap if sp.speed_cap is None \
                else min(sp.speed_cap, self.speed_cap)
        return sp

    def _advance_segment(self, t: float, est, seg, dt: float) -> None:
        prog = self.prog
        advance = False
        if seg.termination == "duration":
            prog.seg_elapsed += dt
            if seg.duration_s is not None and prog.seg_elapsed >= seg.duration_s - 1e-9:
                advance = True
        elif seg.termination == "arrival" and seg.target is not None:
            dist = float(np.linalg.norm(est.position - seg.target))
            if dist <= self.config.control.accept_radius_m:
                advance = True
        if not advance:
            return
        label = prog.program.label
        if label == "takeoff" and self.world.state.mode == FlightMode.TAKEOFF:
            self.world.set_mode(FlightMode.AIRBORNE)
            self._emit("airborne", t)
        prog.seg_idx += 1
        prog.seg_elapsed = 0.0
        prog.path = None
        prog.path_goal = None
        if prog.seg_idx >= len(prog.program.segments):
            self._emit("program_complete", t, label=label)
            self.prog = _ProgramState()

    def _tracked_setpoint(self, est, seg) -> Setpoint:
        prog = self.prog
        target = np.asarray(seg.target, dtype=float)
        stale = prog.path is None or prog.path_goal is None \
            or not np.array_equal(prog.path_goal, target) \
            or (self.tick_i - prog.path_age_ticks) >= self.REPLAN_PERIOD_TICKS
        if stale:
            prog.path_goal = target.copy()
            prog.path_age_ticks = self.tick_i
            try:
                xy = plan_local_path(self.grid, est.position[:2], target[:2],
                                     self.config.control.clearance_m,
                                     allow_unknown=self.config.mapping.allow_unknown_traversal)
                z = float(target[2])
                prog.path = np.column_stack([xy, np.full(len(xy), z)])
            except NoPath as exc:
                self._emit("planner_no_path", self.world.state.clock_s,
                           target=[round(float(v), 2) for v in target],
                           reason=exc.reason)
                prog.path = np.asarray([target])
        return track_path(est, prog.path, self.config.control,
                          speed_cap=seg.setpoint.speed_cap)

    # -- safety ---------------------------------------------------------------------

    def _safety(self, t: float, est, setpoint: Setpoint) -> Verdict:
        st = self.world.state
        if self.estop_requested:
            verdict = Verdict(VerdictKind.ESTOP, "operator e-stop", triggered=["EStop"])
        elif st.mode == FlightMode.GROUNDED:
            verdict = Verdict(VerdictKind.NOMINAL)
        else:
            nearest = self.records[0].distance_m if self.records else None
            inputs = SafetyInputs(
                position=est.position,
                velocity=est.velocity,
                nearest_obstacle_m=nearest,
                battery_flight_wh=st.battery_flight_wh,
                dist_home_m=float(np.linalg.norm(
                    est.position[:2] - self.scenario.home[:2])),
                geofence_polygon=self.scenario.geofence_polygon,
                alt_min=self.scenario.geofence_alt_min,
                alt_max=self.scenario.geofence_alt_max,
                diverged=self.diverged,
            )
            verdict = safety_check(inputs, self.config.safety,
                                   self.config.control, self.config.power)
        if verdict.kind.value != self._last_verdict_kind:
            self._emit("safety_verdict", t, verdict=verdict.kind.value,
                       reason=verdict.reason, triggered=verdict.triggered)
            self._last_verdict_kind = verdict.kind.value
        return verdict

    # -- sensing -----------------------------------------------------------------------

    def _sense_and_estimate(self, dt: float) -> None:
        st = self.world.state
        imu = self.world.sample_imu(dt)
        gnss = self.world.sample_gnss()
        baro = self.world.sample_baro()

        avail = gnss is not None
        if avail != self._last_gnss_avail:
            kind = "gnss_regained" if avail else "gnss_lost"
            self._emit(kind, st.clock_s,
                       position=[round(float(v), 2) for v in st.position])
            self._last_gnss_avail = avail

        scan_input = None
        scan = None
        if st.mode != FlightMode.GROUNDED and self.tick_i % self.config.lidar_period_ticks == 0:
            scan = self.world.sample_lidar()
            if len(scan):
                scan_input = ScanMatchInput(scan.points[:, :2],
                                            anchors_version=self.grid.version)
                self.estimator.set_anchors(self.grid.anchors(), self.grid.version)

        try:
            est = self.estimator.update(imu, gnss, scan_input, baro)
        except DivergenceError as exc:
            est = self.estimator.estimate
            if not self.diverged:
                self.diverged = True
                self._emit("divergence", st.clock_s,
                           covariance_proxy=round(exc.covariance_proxy, 3))

        if scan is not None and len(scan):
            self.records = detect_obstacles(scan, est)
            c, s = math.cos(est.yaw), math.sin(est.yaw)
            rot = np.array([[c, -s], [s, c]])
            endpoints = est.position[:2] + scan.points[:, :2] @ rot.T
            self.grid.update(est.position[:2], endpoints)
        elif scan is not None:
            self.records = []

    # -- context / progress ---------------------------------------------------------------

    def _route_progress(self, t: float) -> None:
        if self.mission_complete or self.landing or self.status != "running":
            return
        est = self.estimator.estimate
        radius = self.config.mission.route_radius_m
        for i, visited in enumerate(self.route_visited):
            if visited:
                continue
            if float(np.linalg.norm(est.position - self.route[i])) <= radius:
                self.route_visited[i] = True
                self._emit("route_point_visited", t, index=i,
                           position=[round(float(v), 2) for v in self.route[i]])
            break
        if self.route and all(self.route_visited):
            self.mission_complete = True
            self._begin_landing(t, "route complete")

    def _begin_landing(self, t: float, reason: str) -> None:
        if self.landing:
            return
        self.landing = True
        self.delib = None
        self.prog = _ProgramState()
        self._land_anchor = self.estimator.estimate.position[:2].copy()
        if self.world.state.mode != FlightMode.GROUNDED:
            self.world.set_mode(FlightMode.LANDING)
        self._emit("landing", t, reason=reason)

    def _engage_rth(self, t: float, reason: str) -> None:
        if self.rth_latch or self.landing:
            return
        self.rth_latch = True
        self.delib = None
        self.prog = _ProgramState()
        est = self.estimator.estimate
        alt = max(float(est.position[2]), self.config.mission.takeoff_alt_m)
        self._rth_target = np.array([self.scenario.home[0], self.scenario.home[1], alt])
        if self.world.state.mode in (FlightMode.AIRBORNE, FlightMode.TAKEOFF):
            self.world.set_mode(FlightMode.RTH)
        self._emit("rth_engaged", t, reason=reason)

    def _rth_setpoint(self, t: float, est) -> Setpoint:
        target = self._rth_target
        if target is None:
            return hover_setpoint(float(est.position[2]))
        if float(np.linalg.norm(est.position[:2] - target[:2])) <= \
                self.config.control.accept_radius_m:
            self._begin_landing(t, "rth arrival")
            return Setpoint(velocity_cmd=np.array(
                [0.0, 0.0, -self.config.control.descent_rate_mps]))
        prog = self.prog
        stale = prog.path is None or (self.tick_i - prog.path_age_ticks) \
            >= self.REPLAN_PERIOD_TICKS
        if stale:
            prog.path_age_ticks = self.tick_i
            try:
                xy = plan_local_path(self.grid, est.position[:2], target[:2],
                                     self.config.control.clearance_m)
                prog.path = np.column_stack([xy, np.full(len(xy), target[2])])
            except NoPath:
                prog.path = np.asarray([target])
        return self._capped(track_path(est, prog.path, self.config.control))

    def _write_pose_channel(self, t: float, full: bool) -> None:
        est = self.estimator.estimate
        st = self.world.state
        summary = self.grid.summarize(est.position[:2], with_frontiers=full)
        remaining = [[round(float(v), 1) for v in p]
                     for p, seen in zip(self.route, self.route_visited) if not seen]
        record = {
            "t": round(t, 3),
            "pose": {
                "position": [round(float(v), 3) for v in est.position],
                "yaw_deg": round(math.degrees(est.yaw), 2),
                "mode": st.mode.value,
                "velocity": [round(float(v), 3) for v in est.velocity],
            },
            "speed_mps": round(float(np.linalg.norm(est.velocity)), 3),
            "gnss_available": est.gnss_available,
            "covariance_proxy_m": round(est.covariance_proxy, 4),
            "battery": {"flight_wh": round(st.battery_flight_wh, 3),
                        "compute_wh": round(st.battery_compute_wh, 3)},
            "map": summary.to_dict(),
            "obstacles": [r.to_dict()
                          for r in self.records[:self.OBSTACLE_RECORDS_IN_CONTEXT]],
            "route_remaining": remaining,
            "speed_cap_mps": self.speed_cap,
        }
        self.blackboard.write("pose_map_obstacles", record)

    # -- energy / logging -------------------------------------------------------------------

    def _compute_fraction(self, t: float, dt: float) -> float:
        if self.delib is None:
            return 0.0
        lo = max(t, self.delib.start_t)
        hi = min(t + dt, self.delib.end_t)
        return max(0.0, hi - lo) / dt

    def _build_state(self, t: float, verdict: Verdict, source: str) -> dict:
        st = self.world.state
        est = self.estimator.estimate
        return {
            "t": round(t, 3),
            "mode": st.mode.value,
            "status": self.status,
            "position": [round(float(v), 3) for v in st.position],
            "velocity": [round(float(v), 3) for v in st.velocity],
            "est_position": [round(float(v), 3) for v in est.position],
            "yaw_deg": round(math.degrees(st.yaw), 2),
            "battery_flight_wh": round(st.battery_flight_wh, 3),
            "battery_compute_wh": round(st.battery_compute_wh, 3),
            "gnss_available": est.gnss_available,
            "covariance_proxy_m": round(est.covariance_proxy, 4),
            "verdict": verdict.kind.value,
            "setpoint_source": source,
            "nearest_obstacle_m": round(self.records[0].distance_m, 2)
            if self.records else None,
            "route_visited": sum(self.route_visited),
            "route_total": len(self.route),
            "deliberating": self.delib is not None,
        }

    def _log_tick_state(self, t: float, verdict: Verdict, source: str,
                        setpoint: Setpoint) -> None:
        st = self.world.state
        est = self.estimator.estimate
        sp = setpoint.clamped()
        self._emit(
            "tick_state", t,
            mode=st.mode.value,
            pos=[round(float(v), 4) for v in st.position],
            est_pos=[round(float(v), 4) for v in est.position],
            est_err_m=round(float(np.linalg.norm(est.position - st.position)), 4),
            speed=round(st.speed(), 3),
            battery_flight_wh=round(st.battery_flight_wh, 6),
            battery_compute_wh=round(st.battery_compute_wh, 6),
            gnss_available=est.gnss_available,
            cov_m=round(est.covariance_proxy, 4),
            verdict=verdict.kind.value,
            setpoint_source=source,
            cmd_speed=round(float(np.linalg.norm(sp.velocity_cmd)), 4),
            nearest_obstacle_m=round(self.records[0].distance_m, 2)
            if self.records else None,
            distance_traveled_m=round(est.distance_traveled_m, 3),
        )

    def _finalize(self) -> None:
        st = self.world.state
        est = self.estimator.estimate
        crashes = sum(1 for e in self.log.events_of("world_event")
                      if e.get("event") == "Crash")
        breaches = sum(1 for e in self.log.events_of("world_event")
                       if e.get("event") == "GeofenceBreach")
        self._emit(
            "final_state", st.clock_s,
            status=self.status,
            pos=[round(float(v), 4) for v in st.position],
            est_pos=[round(float(v), 4) for v in est.position],
            est_err_m=round(float(np.linalg.norm(est.position - st.position)), 4),
            battery_flight_wh=round(st.battery_flight_wh, 6),
            battery_compute_wh=round(st.battery_compute_wh, 6),
            distance_traveled_m=round(est.distance_traveled_m, 3),
            route_visited=sum(self.route_visited),
            route_total=len(self.route),
            crash_count=crashes,
            breach_count=breaches,
            mode=st.mode.value,
        )

    def _emit(self, kind: str, t: float, **payload) -> None:
        self.log.append(kind, t, **payload)


# -- top-level entry points --------------------------------------------------------


def run_mission(scenario: Scenario | str, config: RuntimeConfig, seed: int,
                backend=None, brief: MissionBrief | None = None,
                decide=None, runtime_hook=None, log_hook=None) -> MissionLog:
    """Stage 1 (when a brief is given) then stage 2; returns the full log."""
    if isinstance(scenario, str):
        scenario = load_scenario(scenario)
    if backend is None:
        backend = make_backend(config.backend)

    payload = scenario.raw_doc if scenario.raw_doc is not None else scenario.name
    header = {"scenario": scenario.name, "seed": int(seed),
              "config": config.to_dict(),
              "config_hash": config_hash(config, payload, int(seed)),
              "scenario_doc": scenario.raw_doc}
    if brief is not None:
        header["brief"] = {"application": brief.application,
                           "free_text": brief.free_text,
                           "constraints": list(brief.constraints)}
    log = MissionLog(header)
    if log_hook is not None:
        log_hook(log)

    world = World(scenario, config, int(seed))
    plan = None
    if brief is not None:
        plan = run_stage1(brief, backend, config, decide=decide, log=log,
                          world=world)

    runtime = MissionRuntime(scenario, config, seed, backend, plan=plan, log=log,
                             world=world)
    if runtime_hook is not None:
        runtime_hook(runtime)
    return runtime.run()


# -- replay -------------------------------------------------------------------------


@dataclass
class ReplayReport:
    diverged: bool
    first_divergence_seq: int | None = None
    first_divergence_t: float | None = None
    detail: str = ""
    final_state: dict | None = field(default=None, repr=False)


class _ReplayBackend:
    """Feeds logged responses back in order during a replay run."""

    def __init__(self, responses: list[str]):
        self.responses = list(responses)
        self.cursor = 0

    def complete(self, prompt: str) -> str:
        from aia.backends import TranscriptExhausted
        if self.cursor >= len(self.responses):
            raise TranscriptExhausted("replay log has no more responses")
        text = self.responses[self.cursor]
        self.cursor += 1
        return text


def replay(log: MissionLog) -> tuple[ReplayReport, MissionLog]:
    """Re-execute a logged mission; report the first divergence if any."""
    header = log.header
    config = RuntimeConfig.from_dict(header.get("config", {}))
    seed = int(header.get("seed", 0))
    doc = header.get("scenario_doc")
    if doc:
        scenario = parse_scenario(doc, header.get("scenario", ""))
        payload = doc
    else:
        scenario = load_scenario(header.get("scenario", ""))
        payload = scenario.raw_doc if scenario.raw_doc is not None else scenario.name
    expected = config_hash(config, payload, seed)
    if expected != header.get("config_hash"):
        raise ConfigMismatch(
            "log header hash does not match its own config/scenario/seed")

    responses = [e["text"] for e in log.events_of("backend_response")]
    backend = _ReplayBackend(responses)

    decisions = deque(log.events_of("operator_decision"))

    def decide(plan: MissionPlan) -> OperatorDecision:
        if decisions:
            e = decisions.popleft()
            return OperatorDecision(plan.plan_id, e["verdict"], e.get("note", ""))
        return OperatorDecision(plan.plan_id, "Approve", "replay-default")

    brief = None
    brief_doc = header.get("brief")
    if brief_doc:
        brief = MissionBrief(application=brief_doc["application"],
                             free_text=brief_doc["free_text"],
                             constraints=list(brief_doc.get("constraints", [])))

    scenes = deque(e["text"] for e in log.events_of("scene_description"))

    def hook(runtime: MissionRuntime) -> None:
        runtime.scene_feed = scenes

    # Compare event lines as they are emitted. A tampered log steers the
    # replayed run off the recorded trajectory, which can exhaust the
    # response or scene feeds and abort the run mid-flight; the comparison
    # must not depend on the replay reaching a clean terminal state.
    ref_lines = [canonical_json(e) for e in log.events]
    divergence: dict = {}
    live: list[MissionLog] = []

    def watch(fresh: MissionLog) -> None:
        live.append(fresh)
        cursor = [0]

        def compare(event: dict) -> None:
            i = cursor[0]
            cursor[0] += 1
            if divergence:
                return
            if i >= len(ref_lines):
                divergence.update(seq=event.get("seq"), t=event.get("t"),
                                  detail="replay emitted events past the log end")
            elif canonical_json(event) != ref_lines[i]:
                divergence.update(seq=event.get("seq"), t=event.get("t"),
                                  detail=f"event {i + 1} differs")

        fresh.subscribe(compare)

    try:
        new_log = run_mission(scenario, config, seed, backend=backend,
                              brief=brief, decide=decide, runtime_hook=hook,
                              log_hook=watch)
    except Exception as exc:
        if not divergence or not live:
            raise
        new_log = live[0]
        return ReplayReport(
            True, first_divergence_seq=divergence["seq"],
            first_divergence_t=divergence["t"],
            detail=f"{divergence['detail']}; replay aborted: {exc}",
            final_state=new_log.final_state()), new_log

    if divergence:
        return ReplayReport(
            True, first_divergence_seq=divergence["seq"],
            first_divergence_t=divergence["t"],
            detail=divergence["detail"],
            final_state=new_log.final_state()), new_log
    if len(new_log.events) != len(ref_lines):
        return ReplayReport(True, detail="event counts differ",
                            final_state=new_log.final_state()), new_log
    return ReplayReport(False, final_state=new_log.final_state()), new_log

"""Backends: mock rule table, scripted playback, latency accounting."""

from __future__ import annotations

import math
import sys
import types

import pytest

from aia.actions import Hover, Takeoff, WaypointNav
from aia.backends import (
    MockBackend,
    RemoteBackend,
    ScriptedBackend,
    Timeout,
    TranscriptExhausted,
    TransportError,
    describe_scene,
    make_backend,
    query_backend,
)
from aia.blackboard import Blackboard
from aia.config import BackendConfig
from aia.parsing import parse_stage1_plan, parse_stage2_decision
from aia.prompts import MissionBrief, render_stage1_prompt, render_stage2_prompt
from aia.world import SceneItem, SceneObservation

FENCE = [[-40.0, -40.0], [60.0, -40.0], [60.0, 60.0], [-40.0, 60.0]]


def stage2_prompt(pose=None, route=(), obstacles=(), frontiers=(),
                  mode="Airborne") -> str:
    board = Blackboard()
    board.write("geodetic_info", {"boundary_polygon": FENCE,
                                  "alt_min": 0.0, "alt_max": 50.0})
    board.write("action_set", "catalog")
    board.write("pose_map_obstacles", {
        "pose": {"mode": mode,
                 "position": list(pose or [0.0, 0.0, 15.0]),
                 "velocity": [3.0, 0.0, 0.0], "yaw_deg": 0.0},
        "route_remaining": [list(p) for p in route],
        "obstacles": [dict(o) for o in obstacles],
        "map": {"frontier_bearings": [dict(f) for f in frontiers]},
    })
    return render_stage2_prompt(board.snapshot())


class TestMockStage1:
    def test_plan_parses_and_echoes_the_task(self):
        brief = MissionBrief(application="sugarcane",
                             free_text="Assess lodging across the north field. Use rows.")
        out = MockBackend().complete(render_stage1_prompt(brief))
        plan = parse_stage1_plan(out)
        assert plan.section_counts() >= (3, 2, 3)
        assert "Assess lodging across the north field" in plan.objectives[0]

    def test_deterministic(self):
        brief = MissionBrief(application="whale_watch", free_text="Find whales.")
        prompt = render_stage1_prompt(brief)
        backend = MockBackend()
        assert backend.complete(prompt) == backend.complete(prompt)


class TestMockStage2:
    def test_grounded_means_takeoff_at_route_altitude(self):
        out = MockBackend().complete(stage2_prompt(mode="Grounded",
                                                   route=[(20.0, 0.0, 15.0)]))
        cmd, _ = parse_stage2_decision(out)
        assert cmd == Takeoff(target_alt_m=15.0)

    def test_route_following_emits_clamped_waypoints(self):
        out = MockBackend().complete(stage2_prompt(
            route=[(20.0, 0.0, 15.0), (20.0, 20.0, 70.0)]))
        cmd, wps = parse_stage2_decision(out)
        assert isinstance(cmd, WaypointNav)
        assert len(wps) == 2
        assert wps[0] == (20.0, 0.0, 15.0)
        assert wps[1][2] == 48.0   # fence ceiling minus the 2 m margin

    def test_threat_ahead_turns_into_an_escape(self):
        blocker = {"category": "tree", "position": [6.0, 0.0, 15.0],
                   "distance_m": 6.0, "bearing_rad": 0.0}
        out = MockBackend().complete(stage2_prompt(route=[(20.0, 0.0, 15.0)],
                                                   obstacles=[blocker]))
        cmd, wps = parse_stage2_decision(out)
        assert isinstance(cmd, WaypointNav)
        assert wps[0][0] < 0.0   # flees along -x, away from the obstacle
        assert "tree" in out

    def test_abeam_wall_does_not_trigger_evasion(self):
        wall = {"category": "tunnel_wall", "position": [0.0, 4.0, 15.0],
                "distance_m": 4.0, "bearing_rad": math.pi / 2}
        out = MockBackend().complete(stage2_prompt(route=[(20.0, 0.0, 15.0)],
                                                   obstacles=[wall]))
        cmd, wps = parse_stage2_decision(out)
        assert isinstance(cmd, WaypointNav)
        assert wps[0] == (20.0, 0.0, 15.0)

    def test_frontier_fallback_then_hover(self):
        out = MockBackend().complete(stage2_prompt(
            frontiers=[{"bearing_rad": 0.0, "range_m": 9.0}]))
        cmd, wps = parse_stage2_decision(out)
        assert isinstance(cmd, WaypointNav)
        assert wps[0][0] > 10.0
        idle = MockBackend().complete(stage2_prompt())
        cmd, _ = parse_stage2_decision(idle)
        assert cmd == Hover(duration_s=4.0)


class TestScripted:
    def test_sequential_playback_and_exhaustion(self):
        backend = ScriptedBackend([{"response": "A"}, {"response": "B"}])
        assert backend.complete("p1") == "A"
        assert backend.complete("p2") == "B"
        with pytest.raises(TranscriptExhausted):
            backend.complete("p3")

    def test_prompt_matcher_pins_the_entry(self):
        backend = ScriptedBackend([{"prompt_matcher": "tunnel", "response": "A"}])
        with pytest.raises(TransportError):
            backend.complete("a prompt about fields")

    def test_from_file_round_trip(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text('[{"response": "ok"}]')
        assert ScriptedBackend.from_file(path).complete("x") == "ok"
        bad = tmp_path / "bad.json"
        bad.write_text('{"response": "ok"}')
        with pytest.raises(TransportError):
            ScriptedBackend.from_file(bad)


class TestLatencyAccounting:
    def test_latency_is_tokens_over_rate(self):
        backend = ScriptedBackend([{"response": " ".join(["tok"] * 512)}])
        result = query_backend(backend, "p", BackendConfig(tokens_per_sec_sim=5.5))
        assert result.token_count == 512
        assert result.latency_s == 512 / 5.5

    def test_rate_must_be_positive(self):
        with pytest.raises(ValueError):
            query_backend(MockBackend(), "p", BackendConfig(tokens_per_sec_sim=0.0))


class TestFactory:
    def test_kinds(self, tmp_path, monkeypatch):
        monkeypatch.delenv("AIA_REMOTE_ENDPOINT", raising=False)
        assert isinstance(make_backend(BackendConfig(kind="mock")), MockBackend)
        path = tmp_path / "t.json"
        path.write_text("[]")
        scripted = make_backend(BackendConfig(kind="scripted",
                                              transcript_path=str(path)))
        assert isinstance(scripted, ScriptedBackend)
        with pytest.raises(ValueError):
            make_backend(BackendConfig(kind="scripted"))
        with pytest.raises(ValueError):
            make_backend(BackendConfig(kind="remote"))
        with pytest.raises(ValueError):
            make_backend(BackendConfig(kind="telepathy"))

    def test_remote_reads_endpoint_from_env(self, monkeypatch):
        monkeypatch.setenv("AIA_REMOTE_ENDPOINT", "http://example.invalid/v1")
        backend = make_backend(BackendConfig(kind="remote"))
        assert isinstance(backend, RemoteBackend)
        assert backend.endpoint == "http://example.invalid/v1"


class FakeRequests(types.ModuleType):
    class Timeout(Exception):
        pass

    class RequestException(Exception):
        pass

    def __init__(self, behavior):
        super().__init__("requests")
        self.behavior = behavior
        self.calls: list[dict] = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers,
                           "timeout": timeout})
        return self.behavior(self)


class _Resp:
    def __init__(self, doc):
        self.doc = doc

    def raise_for_status(self):
        pass

    def json(self):
        return self.doc


class TestRemoteProtocol:
    def make(self, monkeypatch, behavior) -> tuple[RemoteBackend, FakeRequests]:
        fake = FakeRequests(behavior)
        monkeypatch.setitem(sys.modules, "requests", fake)
        backend = RemoteBackend(BackendConfig(kind="remote",
                                              endpoint="http://unit.test/v1",
                                              model_name="m1", timeout_s=9.0))
        return backend, fake

    def test_success_path_shapes_the_request(self, monkeypatch):
        doc = {"choices": [{"message": {"content": "ACTION: land"}}]}
        backend, fake = self.make(monkeypatch, lambda mod: _Resp(doc))
        assert backend.complete("hello") == "ACTION: land"
        call = fake.calls[0]
        assert call["url"] == "http://unit.test/v1"
        assert call["json"]["messages"] == [{"role": "user", "content": "hello"}]
        assert call["json"]["model"] == "m1"
        assert call["timeout"] == 9.0

    def test_timeout_maps_to_the_typed_error(self, monkeypatch):
        def boom(mod):
            raise mod.Timeout("slow")
        backend, _ = self.make(monkeypatch, boom)
        with pytest.raises(Timeout):
            backend.complete("p")

    def test_malformed_body_maps_to_transport_error(self, monkeypatch):
        backend, _ = self.make(monkeypatch, lambda mod: _Resp({"nope": 1}))
        with pytest.raises(TransportError):
            backend.complete("p")


class TestDescribeScene:
    def test_empty_observation(self):
        obs = SceneObservation(items=[])
        assert describe_scene(obs) == "No notable scene elements observed."

    def test_deterministic_formatting(self):
        obs = SceneObservation(items=[
            SceneItem(tag="pylon", bearing_rad=math.pi / 2, range_m=42.4),
            SceneItem(tag="river", bearing_rad=-math.pi / 2, range_m=9.6),
        ])
        text = describe_scene(obs)
        assert text == ("Detected: pylon bearing 090° at 42 m; "
                        "Detected: river bearing 270° at 10 m.")

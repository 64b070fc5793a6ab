"""Command-line interface tests, driven through main() with argv lists."""

from __future__ import annotations

import json

import pytest

from aia.cli import _apply_backend_arg, load_brief, main
from aia.config import RuntimeConfig
from aia.logbook import MissionLog
from conftest import flat_doc


@pytest.fixture
def scenario_path(tmp_path):
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(flat_doc()))
    return str(path)


class TestBackendArg:
    def test_known_kinds(self):
        config = RuntimeConfig()
        _apply_backend_arg(config, "mock")
        assert config.backend.kind == "mock"
        _apply_backend_arg(config, "scripted:/tmp/t.json")
        assert config.backend.kind == "scripted"
        assert config.backend.transcript_path == "/tmp/t.json"

    def test_unknown_kind_exits(self):
        with pytest.raises(SystemExit):
            _apply_backend_arg(RuntimeConfig(), "bogus")

    def test_scripted_requires_a_path(self):
        with pytest.raises(SystemExit):
            _apply_backend_arg(RuntimeConfig(), "scripted")


class TestLoadBrief:
    def test_shipped_name(self):
        brief = load_brief("sugarcane")
        assert brief.application == "sugarcane"
        assert brief.free_text

    def test_shipped_name_with_extension(self):
        assert load_brief("mine_tunnel.json").application == "mine_tunnel"

    def test_explicit_path(self, tmp_path):
        path = tmp_path / "custom.json"
        path.write_text(json.dumps({
            "application": "whale_watch",
            "free_text": "Track the pod along the coast.",
            "constraints": ["keep 60 m standoff"],
        }))
        brief = load_brief(str(path))
        assert brief.application == "whale_watch"
        assert brief.constraints == ["keep 60 m standoff"]

    def test_missing_brief_exits(self):
        with pytest.raises(SystemExit):
            load_brief("no_such_brief_anywhere")


class TestRunCommand:
    def test_headless_mission_writes_a_log(self, scenario_path, tmp_path, capsys):
        out = tmp_path / "mission.ndjson"
        code = main(["run", "--scenario", scenario_path, "--seed", "1",
                     "--headless", "--brief", "sugarcane", "--log", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "status: complete" in printed
        assert out.exists()
        log = MissionLog.read(out)
        assert log.final_state()["status"] == "complete"
        assert log.header["brief"]["application"] == "sugarcane"

    def test_replay_of_a_written_log_matches(self, scenario_path, tmp_path, capsys):
        out = tmp_path / "mission.ndjson"
        assert main(["run", "--scenario", scenario_path, "--seed", "2",
                     "--headless", "--log", str(out)]) == 0
        capsys.readouterr()
        code = main(["replay", str(out)])
        assert code == 0
        assert "replay matched" in capsys.readouterr().out

    def test_cadence_is_validated(self, scenario_path):
        with pytest.raises(SystemExit):
            main(["run", "--scenario", scenario_path, "--cadence-s", "1.0"])

    def test_unknown_backend_exits(self, scenario_path):
        with pytest.raises(SystemExit):
            main(["run", "--scenario", scenario_path, "--backend", "telepathy"])


class TestStage1Command:
    def test_mock_stage1_prints_the_plan(self, capsys):
        code = main(["stage1", "--brief", "power_grid", "--headless"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["status"] == "Approved"
        assert doc["objectives"]
        assert doc["planning_items"]

    def test_scripted_backend_from_file(self, tmp_path, capsys):
        from test_mission import plan_text_with_tokens
        transcript = tmp_path / "script.json"
        transcript.write_text(json.dumps(
            [{"response": plan_text_with_tokens(40)}]))
        code = main(["stage1", "--brief", "sugarcane", "--headless",
                     "--backend", f"scripted:{transcript}"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["status"] == "Approved"

    def test_exhausted_transcript_fails_cleanly(self, tmp_path, capsys):
        transcript = tmp_path / "empty.json"
        transcript.write_text("[]")
        code = main(["stage1", "--brief", "sugarcane", "--headless",
                     "--backend", f"scripted:{transcript}"])
        assert code == 3
        assert "stage 1 failed" in capsys.readouterr().err

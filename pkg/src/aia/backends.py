"""Planner backends: deterministic Mock, transcript Scripted, HTTP Remote.

The Mock backend is a transparent rule table over the structured blocks the
stage-2 prompt embeds, so closed-loop tests get a plausible planner with no
model anywhere. Scripted replays a fixed transcript. Remote speaks a minimal
chat-completion protocol to a configured endpoint.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from aia.config import BackendConfig
from aia.geometry import clamp_into_polygon
from aia.prompts import token_estimate
from aia.world import SceneObservation


class BackendError(RuntimeError):
    pass


class Timeout(BackendError):
    pass


class TransportError(BackendError):
    pass


class TranscriptExhausted(BackendError):
    pass


@dataclass
class BackendResult:
    text: str
    token_count: int
    latency_s: float


def _block_json(prompt: str, tag: str) -> dict | None:
    """Extract the single-line JSON block following a [TAG] line."""
    lines = prompt.splitlines()
    for i, line in enumerate(lines):
        if line.strip() == tag and i + 1 < len(lines):
            try:
                doc = json.loads(lines[i + 1])
            except json.JSONDecodeError:
                return None
            return doc if isinstance(doc, dict) else None
    return None


class MockBackend:
    """Rule-table planner, a pure function of the prompt text."""

    ESCAPE_BAND_M = 8.0
    DETOUR_BAND_M = 15.0
    ESCAPE_CONE_DEG = 60.0
    DETOUR_CONE_DEG = 30.0

    def complete(self, prompt: str) -> str:
        if "[POSE_MAP_OBSTACLES]" in prompt:
            return self._stage2(prompt)
        return self._stage1(prompt)

    # stage 1: a plan with the three required sections
    def _stage1(self, prompt: str) -> str:
        task = ""
        lines = prompt.splitlines()
        for i, line in enumerate(lines):
            if line.strip() == "TASK:" and i + 1 < len(lines):
                task = lines[i + 1].strip()
                break
        first = task.split(".")[0].strip() if task else "Complete the assigned survey"
        return "\n".join([
            "Mission Objectives:",
            f"1. {first}.",
            "2. Maintain safe separation from all mapped obstacles.",
            "3. Return with full telemetry and imagery records.",
            "Preparation Phase:",
            "1. Verify both battery banks and sensor health before departure.",
            "2. Confirm the geofence polygon and altitude band in the mission planner.",
            "Mission Planning (Using Mission Planner):",
            "1. Fly the survey route at the configured cruise altitude.",
            "2. Capture scene observations at every decision interval.",
            "3. Land at the home point when the route is complete.",
        ])

    # stage 2: distance-banded rule table
    def _stage2(self, prompt: str) -> str:
        pose_doc = _block_json(prompt, "[POSE_MAP_OBSTACLES]") or {}
        geo_doc = _block_json(prompt, "[GEODETIC_INFO]") or {}

        pose = pose_doc.get("pose", {})
        mode = pose.get("mode", "Airborne")
        position = np.array(pose.get("position", [0.0, 0.0, 0.0]), dtype=float)
        route = pose_doc.get("route_remaining", [])
        obstacles = pose_doc.get("obstacles", [])
        frontiers = (pose_doc.get("map", {}) or {}).get("frontier_bearings", [])

        polygon = np.array(geo_doc.get("boundary_polygon", [])) \
            if geo_doc.get("boundary_polygon") else None
        alt_lo = float(geo_doc.get("alt_min", 0.0)) + 2.0
        alt_hi = float(geo_doc.get("alt_max", 120.0)) - 2.0

        def clamp(pt: np.ndarray) -> np.ndarray:
            out = pt.copy()
            if polygon is not None and len(polygon) >= 3:
                out[:2] = clamp_into_polygon(out[:2], polygon)
            out[2] = min(max(out[2], alt_lo), alt_hi)
            return out

        def fmt(pt: np.ndarray) -> str:
            return f"({pt[0]:.1f}, {pt[1]:.1f}, {pt[2]:.1f})"

        if mode == "Grounded":
            alt = route[0][2] if route else 20.0
            return f"ACTION: takeoff target_alt_m={alt:.1f}\nRATIONALE: begin the mission."

        # Only obstacles roughly on the current track matter; corridor walls
        # abeam are the planner's clearance problem, not an evasion trigger.
        velocity = np.array(pose.get("velocity", [0.0, 0.0, 0.0]), dtype=float)
        speed = float(np.hypot(velocity[0], velocity[1]))
        if speed > 0.5:
            track = math.atan2(velocity[1], velocity[0])
        else:
            track = math.radians(float(pose.get("yaw_deg", 0.0)))

        def ahead(record: dict, cone_deg: float) -> bool:
            rel = (float(record.get("bearing_rad", 0.0)) - track + math.pi) \
                % (2.0 * math.pi) - math.pi
            return abs(rel) <= math.radians(cone_deg)

        # Wide cone for point-blank escapes, narrow cone for detours, so a
        # corridor wall niche off the track axis never triggers an evasion.
        escape = next((o for o in obstacles
                       if ahead(o, self.ESCAPE_CONE_DEG)
                       and o.get("distance_m", 1e9) < self.ESCAPE_BAND_M), None)
        detour_obs = next((o for o in obstacles
                           if ahead(o, self.DETOUR_CONE_DEG)
                           and o.get("distance_m", 1e9) < self.DETOUR_BAND_M), None)
        alt = float(position[2])

        if escape is not None:
            nearest = escape
            away = position[:2] - np.array(nearest["position"][:2], dtype=float)
            norm = float(np.hypot(away[0], away[1]))
            away = away / norm if norm > 1e-9 else np.array([1.0, 0.0])
            wp = clamp(np.array([position[0] + 12.0 * away[0],
                                 position[1] + 12.0 * away[1], alt]))
            return (f"ACTION: waypoint_navigation\nWAYPOINTS: {fmt(wp)}\n"
                    f"RATIONALE: open distance from the nearby {nearest.get('category', 'obstacle')}.")

        if detour_obs is not None:
            nearest = detour_obs
            bearing = float(nearest.get("bearing_rad", 0.0))
            side = bearing + math.pi / 2.0
            detour = clamp(np.array([position[0] + 10.0 * math.cos(side),
                                     position[1] + 10.0 * math.sin(side), alt]))
            pts = [detour]
            if route:
                pts.append(clamp(np.array(route[0], dtype=float)))
            wps = "; ".join(fmt(p) for p in pts)
            return (f"ACTION: waypoint_navigation\nWAYPOINTS: {wps}\n"
                    f"RATIONALE: detour around the {nearest.get('category', 'obstacle')} ahead.")

        if route:
            pts = [clamp(np.array(p, dtype=float)) for p in route[:2]]
            wps = "; ".join(fmt(p) for p in pts)
            return (f"ACTION: waypoint_navigation\nWAYPOINTS: {wps}\n"
                    "RATIONALE: continue along the planned route.")

        if frontiers:
            b = float(frontiers[0].get("bearing_rad", 0.0))
            wp = clamp(np.array([position[0] + 15.0 * math.cos(b),
                                 position[1] + 15.0 * math.sin(b), alt]))
            return (f"ACTION: waypoint_navigation\nWAYPOINTS: {fmt(wp)}\n"
                    "RATIONALE: push the mapped frontier.")

        return "ACTION: hover duration_s=4.0\nRATIONALE: route complete, holding."


class ScriptedBackend:
    """Sequential transcript playback; each entry may pin a prompt substring."""

    def __init__(self, entries: list[dict]):
        self.entries = list(entries)
        self.cursor = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        doc = json.loads(Path(path).read_text())
        if not isinstance(doc, list):
            raise TransportError("transcript must be a JSON array")
        return cls(doc)

    def complete(self, prompt: str) -> str:
        if self.cursor >= len(self.entries):
            raise TranscriptExhausted(
                f"transcript exhausted after {len(self.entries)} entries")
        entry = self.entries[self.cursor]
        self.cursor += 1
        matcher = entry.get("prompt_matcher")
        if matcher and matcher not in prompt:
            raise TransportError(
                f"transcript entry {self.cursor - 1} expected prompt containing "
                f"'{matcher}'")
        return entry["response"]


class RemoteBackend:
    """Single-turn chat completion over HTTP; endpoint and key via config/env."""

    def __init__(self, config: BackendConfig):
        self.endpoint = config.endpoint or os.environ.get("AIA_REMOTE_ENDPOINT", "")
        if not self.endpoint:
            raise ValueError("remote backend requires an endpoint "
                             "(config or AIA_REMOTE_ENDPOINT)")
        self.model_name = config.model_name
        self.timeout_s = config.timeout_s
        self.api_key = os.environ.get("AIA_REMOTE_API_KEY", "")

    def complete(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "stream": False,
        }
        try:
            resp = requests.post(self.endpoint, json=body, headers=headers,
                                 timeout=self.timeout_s)
            resp.raise_for_status()
            doc = resp.json()
            return doc["choices"][0]["message"]["content"]
        except requests.Timeout as exc:
            raise Timeout(str(exc)) from exc
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise TransportError(str(exc)) from exc


def make_backend(config: BackendConfig):
    if config.kind == "mock":
        return MockBackend()
    if config.kind == "scripted":
        if not config.transcript_path:
            raise ValueError("scripted backend requires transcript_path")
        return ScriptedBackend.from_file(config.transcript_path)
    if config.kind == "remote":
        return RemoteBackend(config)
    raise ValueError(f"unknown backend kind '{config.kind}'")


def query_backend(backend, prompt: str, config: BackendConfig) -> BackendResult:
    """Run one completion and charge its simulated token latency."""
    if config.tokens_per_sec_sim <= 0.0:
        raise ValueError("tokens_per_sec_sim must be positive")
    text = backend.complete(prompt)
    tokens = token_estimate(text)
    return BackendResult(text, tokens, tokens / config.tokens_per_sec_sim)


def describe_scene(observation: SceneObservation, backend=None,
                   config: BackendConfig | None = None) -> str:
    """Deterministic description of an observation; Remote backends get a
    text-only request instead (pixel inference stays out of scope)."""
    if isinstance(backend, RemoteBackend) and config is not None:
        listing = "; ".join(
            f"{it.tag} bearing {math.degrees(it.bearing_rad) % 360.0:.0f} deg "
            f"range {it.range_m:.0f} m" for it in observation.items) or "nothing"
        prompt = ("Describe this aerial observation in one factual sentence. "
                  f"Visible: {listing}.")
        return backend.complete(prompt)
    if not observation.items:
        return "No notable scene elements observed."
    parts = [
        f"Detected: {it.tag} bearing {math.degrees(it.bearing_rad) % 360.0:03.0f}"
        f"° at {it.range_m:.0f} m"
        for it in observation.items
    ]
    return "; ".join(parts) + "."

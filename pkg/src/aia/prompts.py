"""Prompt templates for both planning stages, plus the brief and plan types.

Rendering is deterministic: the same inputs always produce byte-identical
prompts. Stage-2 prompts embed the four context channels verbatim as
single-line JSON blocks under bracketed tags, which keeps them trivially
machine-checkable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

APPLICATIONS = ("sugarcane", "power_grid", "mine_tunnel", "whale_watch")

STAGE1_HEADINGS = (
    "Mission Objectives",
    "Preparation Phase",
    "Mission Planning (Using Mission Planner)",
)


@dataclass
class MissionBrief:
    application: str
    free_text: str
    constraints: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.application not in APPLICATIONS:
            raise ValueError(f"unknown application '{self.application}'")
        if not self.free_text.strip():
            raise ValueError("brief free_text must be non-empty")


@dataclass
class MissionPlan:
    objectives: list[str]
    preparation: list[str]
    planning_items: list[str]
    waypoints: list[tuple[float, float, float]] = field(default_factory=list)
    raw_text: str = ""
    status: str = "Pending"            # Pending | Approved | Rejected
    plan_id: int = 0

    def section_counts(self) -> tuple[int, int, int]:
        return len(self.objectives), len(self.preparation), len(self.planning_items)


def token_estimate(text: str) -> int:
    """Whitespace token count; the simulator's unit of model output size."""
    return len(text.split())


def render_stage1_prompt(brief: MissionBrief, feedback: str = "") -> str:
    lines = [
        "You are the mission planning assistant for a multirotor aerial platform.",
        "",
        "TASK:",
        brief.free_text.strip(),
    ]
    if brief.constraints:
        lines += ["", "CONSTRAINTS:"]
        lines += [f"- {c}" for c in brief.constraints]
    if feedback:
        lines += ["", "OPERATOR FEEDBACK ON THE PREVIOUS PLAN:", feedback.strip()]
    lines += [
        "",
        "Produce a detailed plan before any flight happens.",
        "Respond in plain text using exactly these section headings, each on its own line:",
    ]
    lines += [f"{h}:" for h in STAGE1_HEADINGS]
    lines += ["List concrete numbered items under every heading."]
    return "\n".join(lines)


def render_stage2_prompt(snapshot, token_budget: int = 4000,
                         error_feedback: str = "") -> str:
    """Instantiate the motion-planner template from one context snapshot.

    Scene descriptions are dropped oldest-first if the whitespace-token
    estimate would exceed the budget; the other channels are never cut.
    """
    scenes = list(snapshot.scene_descriptions)

    def build(scene_entries) -> str:
        lines = [
            "You are the onboard motion planner of an autonomous aerial vehicle.",
            "Decide the single next action from the action set below.",
            "",
            "[GEODETIC_INFO]",
            json.dumps(snapshot.geodetic_info, sort_keys=True),
            "",
            "[POSE_MAP_OBSTACLES]",
            json.dumps(snapshot.pose_map_obstacles, sort_keys=True),
            "",
            "[SCENE_DESCRIPTIONS]",
        ]
        if scene_entries:
            for entry in scene_entries:
                t = entry.get("t", 0.0) if isinstance(entry, dict) else 0.0
                text = entry.get("text", str(entry)) if isinstance(entry, dict) else str(entry)
                lines.append(f"- (t={t:.1f}s) {text}")
        else:
            lines.append("- none yet")
        lines += [
            "",
            "[ACTION_SET]",
            snapshot.action_set or "",
        ]
        if error_feedback:
            lines += ["", "[PREVIOUS_RESPONSE_ERROR]", error_feedback.strip(),
                      "Correct the format and answer again."]
        lines += [
            "",
            "Reply now using the response format. One ACTION line is mandatory.",
        ]
        return "\n".join(lines)

    prompt = build(scenes)
    while scenes and token_estimate(prompt) > token_budget:
        scenes.pop(0)
        prompt = build(scenes)
    return prompt

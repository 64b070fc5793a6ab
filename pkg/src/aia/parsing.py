"""Parsers for model output: stage-1 plans and stage-2 action decisions.

Both parsers are total over arbitrary text: every input either parses or
raises one of the documented error types, never anything else.
"""

from __future__ import annotations

import math
import re

from aia.actions import ACTION_SPECS, ActionCommand, WaypointNav
from aia.prompts import MissionPlan


class ParseError(ValueError):
    pass


class MissingSection(ParseError):
    def __init__(self, name: str):
        super().__init__(f"required section '{name}' not found")
        self.name = name


class UnknownAction(ParseError):
    def __init__(self, name: str):
        super().__init__(f"action '{name}' is not in the action set")
        self.name = name


class MalformedParameter(ParseError):
    def __init__(self, field: str, detail: str = ""):
        super().__init__(f"parameter '{field}' is malformed{': ' + detail if detail else ''}")
        self.field = field


class MissingField(ParseError):
    def __init__(self, field: str):
        super().__init__(f"required field '{field}' is missing")
        self.field = field


class GarbageInput(ParseError):
    def __init__(self, detail: str = "no recognizable structure"):
        super().__init__(detail)


# -- stage 1 -------------------------------------------------------------------

_H_OBJECTIVES = re.compile(r"mission\s+objectives?", re.IGNORECASE)
_H_PREPARATION = re.compile(r"preparation\s+phase", re.IGNORECASE)
_H_PLANNING = re.compile(r"mission\s+planning", re.IGNORECASE)
_HEADING_LINE = re.compile(r"^\s*[#*\d.)\s]*([A-Za-z][A-Za-z ()/-]{2,60})\s*:?\s*\**\s*$")
_ITEM_MARK = re.compile(r"^\s*(?:[-*•]|\d{1,3}[.)])\s+")

_REQUIRED = (
    ("Mission Objectives", _H_OBJECTIVES),
    ("Preparation Phase", _H_PREPARATION),
    ("Mission Planning", _H_PLANNING),
)


def _heading_key(line: str) -> str | None:
    m = _HEADING_LINE.match(line.strip())
    if not m:
        return None
    text = m.group(1)
    for key, rx in _REQUIRED:
        if rx.search(text):
            return key
    # Any other short trailing-colon line starts an unrecognized section.
    if line.strip().rstrip("*").endswith(":"):
        return "__other__"
    return None


def _items(block_lines: list[str]) -> list[str]:
    """Bullet or numbered lines become items; bare lines continue the last one."""
    items: list[str] = []
    for raw in block_lines:
        line = raw.strip().strip("*").strip()
        if not line:
            continue
        if _ITEM_MARK.match(raw.strip()):
            items.append(_ITEM_MARK.sub("", raw.strip()).strip().strip("*").strip())
        elif items:
            items[-1] = items[-1] + " " + line
        else:
            items.append(line)
    return [it for it in items if it]


def parse_stage1_plan(text: str) -> MissionPlan:
    """Extract the three required sections; tolerant of numbering and markdown."""
    if not isinstance(text, str):
        raise GarbageInput("plan text is not a string")
    lines = text.splitlines()
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in lines:
        key = _heading_key(line)
        if key is not None:
            current = key
            sections.setdefault(current, [])
            continue
        if current is not None:
            sections[current].append(line)

    for name, _rx in _REQUIRED:
        if name not in sections:
            raise MissingSection(name)

    return MissionPlan(
        objectives=_items(sections["Mission Objectives"]),
        preparation=_items(sections["Preparation Phase"]),
        planning_items=_items(sections["Mission Planning"]),
        raw_text=text,
        status="Pending",
    )


# -- stage 2 -------------------------------------------------------------------

_KEY_VALUE = re.compile(r"(\w+)\s*=\s*(\([^)]*\)|\S+)")
_POINT_GROUP = re.compile(r"\(([^)]*)\)")


def _parse_float(raw: str, field: str) -> float:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise MalformedParameter(field, f"'{raw}' is not a number") from None
    if not math.isfinite(v):
        raise MalformedParameter(field, "value must be finite")
    return v


def _parse_point(raw: str, field: str) -> tuple[float, float, float]:
    inner = raw.strip()
    if inner.startswith("(") and inner.endswith(")"):
        inner = inner[1:-1]
    parts = [p.strip() for p in inner.split(",")]
    if len(parts) != 3:
        raise MalformedParameter(field, "expected (x, y, z)")
    x, y, z = (_parse_float(p, field) for p in parts)
    return (x, y, z)


def parse_waypoints_line(raw: str) -> list[tuple[float, float, float]]:
    pts = []
    groups = _POINT_GROUP.findall(raw)
    if not groups and raw.strip():
        raise MalformedParameter("waypoints", "expected (x, y, z); (x, y, z) ...")
    for g in groups:
        pts.append(_parse_point(f"({g})", "waypoints"))
    return pts


def parse_stage2_decision(text: str) -> tuple[ActionCommand, list[tuple[float, float, float]]]:
    """Parse the line-oriented decision grammar; unknown lines are ignored."""
    if not isinstance(text, str) or not text.strip():
        raise GarbageInput("empty response")

    action_line: str | None = None
    waypoints_line: str | None = None
    for line in text.splitlines():
        stripped = line.strip()
        low = stripped.lower()
        if action_line is None and low.startswith("action:"):
            action_line = stripped[len("action:"):].strip()
        elif waypoints_line is None and low.startswith("waypoints:"):
            waypoints_line = stripped[len("waypoints:"):].strip()
    if action_line is None:
        raise GarbageInput("no ACTION line found")
    if not action_line:
        raise MissingField("action")

    name_token = action_line.split()[0].lower()
    spec = ACTION_SPECS.get(name_token)
    if spec is None:
        raise UnknownAction(name_token)
    rest = action_line[len(action_line.split()[0]):]

    raw_params = dict(_KEY_VALUE.findall(rest))
    kwargs = {}
    for p in spec.params:
        if p.key not in raw_params:
            raise MissingField(p.key)
        raw = raw_params[p.key]
        if p.kind == "float":
            kwargs[p.attr] = _parse_float(raw, p.key)
        elif p.kind in ("deg", "deg_rate"):
            kwargs[p.attr] = math.radians(_parse_float(raw, p.key))
        elif p.kind == "axis":
            axis = raw.strip().lower()
            if axis not in ("x", "y", "z"):
                raise MalformedParameter(p.key, "axis must be x, y, or z")
            kwargs[p.attr] = axis
        elif p.kind == "point":
            kwargs[p.attr] = _parse_point(raw, p.key)

    waypoints = parse_waypoints_line(waypoints_line) if waypoints_line is not None else []

    if spec.uses_waypoints:
        if not waypoints:
            raise MissingField("waypoints")
        cmd: ActionCommand = WaypointNav(waypoints=tuple(waypoints))
    else:
        cmd = spec.cls(**kwargs)
    return cmd, waypoints

"""Scenario files: JSON schema, validation, and the shipped registry.

A scenario is fully declarative. Terrain can be given either as an explicit
height matrix or as a flat fill plus rectangular patches, which keeps large
worlds readable.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from aia.geometry import point_in_polygon
from aia.world import (
    OBSTACLE_CATEGORIES, AirframeSpec, Obstacle, Scenario, SceneFact, Terrain, Wind,
)


class SchemaError(ValueError):
    """Structurally bad scenario JSON: missing or mistyped fields."""


class ValidationError(ValueError):
    """Well-formed JSON whose content violates a scenario invariant."""


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing required field '{key}'")
    val = obj[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _vec(raw, n: int, where: str) -> np.ndarray:
    if not isinstance(raw, (list, tuple)) or len(raw) != n:
        raise SchemaError(f"{where}: expected a list of {n} numbers")
    try:
        return np.array([float(v) for v in raw])
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected a list of {n} numbers") from None


def _parse_terrain(raw: dict) -> Terrain:
    origin = _vec(_require(raw, "origin", list, "terrain"), 2, "terrain.origin")
    res = _require(raw, "resolution", float, "terrain")
    if res <= 0.0:
        raise ValidationError("terrain.resolution: must be positive")
    if "heights" in raw:
        heights = np.array(raw["heights"], dtype=float)
        if heights.ndim != 2:
            raise SchemaError("terrain.heights: expected a 2-D matrix")
    else:
        size = _require(raw, "size", list, "terrain")
        nx, ny = int(size[0]), int(size[1])
        if nx <= 0 or ny <= 0:
            raise ValidationError("terrain.size: must be positive")
        heights = np.full((ny, nx), float(raw.get("fill", 0.0)))
        for i, patch in enumerate(raw.get("patches", [])):
            lo = _vec(_require(patch, "min", list, f"terrain.patches[{i}]"), 2,
                      f"terrain.patches[{i}].min")
            hi = _vec(_require(patch, "max", list, f"terrain.patches[{i}]"), 2,
                      f"terrain.patches[{i}].max")
            h = _require(patch, "height", float, f"terrain.patches[{i}]")
            ix0 = max(0, int((lo[0] - origin[0]) // res))
            iy0 = max(0, int((lo[1] - origin[1]) // res))
            ix1 = min(nx, int(np.ceil((hi[0] - origin[0]) / res)))
            iy1 = min(ny, int(np.ceil((hi[1] - origin[1]) / res)))
            heights[iy0:iy1, ix0:ix1] = h
    return Terrain(origin=origin, resolution=float(res), heights=heights)


def _parse_obstacle(raw: dict, i: int) -> Obstacle:
    where = f"obstacles[{i}]"
    category = _require(raw, "category", str, where)
    if category not in OBSTACLE_CATEGORIES:
        raise ValidationError(f"{where}.category: unknown category '{category}'")
    if "box" in raw:
        box = raw["box"]
        lo = _vec(_require(box, "min", list, f"{where}.box"), 3, f"{where}.box.min")
        hi = _vec(_require(box, "max", list, f"{where}.box"), 3, f"{where}.box.max")
        if not bool(np.all(lo <= hi)):
            raise ValidationError(f"{where}.box: min must not exceed max")
        return Obstacle(category=category, box_min=lo, box_max=hi)
    if "segment" in raw:
        seg = raw["segment"]
        a = _vec(_require(seg, "a", list, f"{where}.segment"), 3, f"{where}.segment.a")
        b = _vec(_require(seg, "b", list, f"{where}.segment"), 3, f"{where}.segment.b")
        radius = _require(seg, "radius", float, f"{where}.segment")
        if radius <= 0.0:
            raise ValidationError(f"{where}.segment.radius: must be positive")
        return Obstacle(category=category, seg_a=a, seg_b=b, radius=float(radius))
    raise SchemaError(f"{where}: needs either a 'box' or a 'segment' geometry")


def parse_scenario(doc: dict, name_hint: str = "") -> Scenario:
    if not isinstance(doc, dict):
        raise SchemaError("scenario: top level must be an object")
    name = doc.get("name", name_hint)
    if not isinstance(name, str) or not name:
        raise SchemaError("name: expected a non-empty string")

    terrain = _parse_terrain(_require(doc, "terrain", dict, "scenario"))
    obstacles = [_parse_obstacle(o, i)
                 for i, o in enumerate(_require(doc, "obstacles", list, "scenario"))]

    mask = []
    for i, region in enumerate(doc.get("gnss_mask", [])):
        lo = _vec(_require(region, "min", list, f"gnss_mask[{i}]"), 3, f"gnss_mask[{i}].min")
        hi = _vec(_require(region, "max", list, f"gnss_mask[{i}]"), 3, f"gnss_mask[{i}].max")
        if not bool(np.all(lo <= hi)):
            raise ValidationError(f"gnss_mask[{i}]: min must not exceed max")
        mask.append((lo, hi))

    fence = _require(doc, "geofence", dict, "scenario")
    poly_raw = _require(fence, "polygon", list, "geofence")
    if len(poly_raw) < 3:
        raise ValidationError("geofence.polygon: needs at least 3 vertices")
    polygon = np.array([[float(p[0]), float(p[1])] for p in poly_raw])
    alt_min = _require(fence, "alt_min", float, "geofence")
    alt_max = _require(fence, "alt_max", float, "geofence")
    if alt_min >= alt_max:
        raise ValidationError("geofence.alt_min: must be below alt_max")

    home = _vec(_require(doc, "home", list, "scenario"), 3, "home")
    takeoff = _vec(_require(doc, "takeoff_point", list, "scenario"), 3, "takeoff_point")
    route = [_vec(p, 3, f"route[{i}]") for i, p in enumerate(doc.get("route", []))]

    facts = []
    for i, raw in enumerate(doc.get("scene_truth", [])):
        pos = _vec(_require(raw, "position", list, f"scene_truth[{i}]"), 3,
                   f"scene_truth[{i}].position")
        tag = _require(raw, "tag", str, f"scene_truth[{i}]")
        vis = _require(raw, "visibility_radius", float, f"scene_truth[{i}]")
        if vis <= 0.0:
            raise ValidationError(f"scene_truth[{i}].visibility_radius: must be positive")
        facts.append(SceneFact(pos, tag, float(vis)))

    wind_raw = doc.get("wind", {})
    wind = Wind(
        mean=_vec(wind_raw.get("mean", [0.0, 0.0, 0.0]), 3, "wind.mean"),
        gust_amp=float(wind_raw.get("gust_amp", 0.0)),
        gust_period_s=float(wind_raw.get("gust_period_s", 10.0)),
    )

    air_raw = doc.get("airframe", {})
    airframe = AirframeSpec(
        mass_kg=float(air_raw.get("mass_kg", 12.0)),
        propeller_count=int(air_raw.get("propeller_count", 6)),
        thrust_per_prop_kg=float(air_raw.get("thrust_per_prop_kg", 3.0)),
        wheelbase_mm=float(air_raw.get("wheelbase_mm", 850.0)),
        max_speed_mps=float(air_raw.get("max_speed_mps", 15.0)),
    )

    scenario = Scenario(
        name=name, terrain=terrain, obstacles=obstacles, gnss_mask=mask,
        geofence_polygon=polygon, geofence_alt_min=float(alt_min),
        geofence_alt_max=float(alt_max), home=home, takeoff_point=takeoff,
        route=route, scene_truth=facts, wind=wind, airframe=airframe,
        geodetic_text=str(doc.get("geodetic", "")),
        raw_doc=doc,
    )
    _validate(scenario)
    return scenario


def _validate(sc: Scenario) -> None:
    for label, p in (("home", sc.home), ("takeoff_point", sc.takeoff_point)):
        if not point_in_polygon(p[:2], sc.geofence_polygon):
            raise ValidationError(f"{label}: lies outside the geofence polygon")
    for i, p in enumerate(sc.route):
        if not sc.in_geofence(p):
            raise ValidationError(f"route[{i}]: lies outside the geofence")
    x0, y0, x1, y1 = sc.terrain.bounds()
    for i, fact in enumerate(sc.scene_truth):
        if not (x0 <= fact.position[0] <= x1 and y0 <= fact.position[1] <= y1):
            raise ValidationError(f"scene_truth[{i}].position: outside the terrain extent")
    if not sc.airframe.can_lift():
        raise ValidationError("airframe.mass_kg: exceeds maximum lift")


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario by shipped name or by filesystem path."""
    text = None
    name_hint = ""
    path = Path(source)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
        name_hint = path.stem
    else:
        ref = resources.files("aia.data.scenarios").joinpath(f"{source}.json")
        if ref.is_file():
            text = ref.read_text()
            name_hint = str(source)
    if text is None:
        raise FileNotFoundError(f"no scenario named or located at '{source}'")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scenario JSON is unparseable: {exc}") from exc
    return parse_scenario(doc, name_hint)


def list_scenarios() -> list[str]:
    base = resources.files("aia.data.scenarios")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))

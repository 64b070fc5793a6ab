"""Shared geometry primitives: angles, polygons, and analytic ray casts."""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        return np.zeros_like(v)
    return v / n


def yaw_rotation(yaw: float) -> np.ndarray:
    """World-from-body rotation about +z for a yaw angle."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def bearing_to(from_xy: np.ndarray, to_xy: np.ndarray) -> float:
    """Planar bearing (rad, atan2 convention) from one point to another."""
    return math.atan2(float(to_xy[1] - from_xy[1]), float(to_xy[0] - from_xy[0]))


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance from point p to segment ab (any dimension)."""
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    s = float(np.dot(p - a, ab)) / denom
    s = min(1.0, max(0.0, s))
    return float(np.linalg.norm(p - (a + s * ab)))


def point_in_polygon(pt: np.ndarray, polygon: np.ndarray, edge_tol: float = 1e-9) -> bool:
    """Even-odd test; points within edge_tol of the boundary count as inside."""
    x, y = float(pt[0]), float(pt[1])
    n = len(polygon)
    inside = False
    for i in range(n):
        ax, ay = polygon[i]
        bx, by = polygon[(i + 1) % n]
        if point_segment_distance(np.array([x, y]), np.array([ax, ay]), np.array([bx, by])) <= edge_tol:
            return True
        if (ay > y) != (by > y):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
            if x < x_cross:
                inside = not inside
    return inside


def polygon_centroid(polygon: np.ndarray) -> np.ndarray:
    return np.asarray(polygon, dtype=float).mean(axis=0)


def clamp_into_polygon(pt_xy: np.ndarray, polygon: np.ndarray, margin_steps: int = 32) -> np.ndarray:
    """Pull a point toward the polygon centroid until it lies inside.

    Bisection along the centroid ray; returns the point unchanged when it is
    already inside.
    """
    pt = np.asarray(pt_xy, dtype=float)
    if point_in_polygon(pt, polygon):
        return pt
    center = polygon_centroid(polygon)
    lo, hi = 0.0, 1.0  # 0 -> pt, 1 -> centroid (assumed inside)
    for _ in range(margin_steps):
        mid = 0.5 * (lo + hi)
        cand = pt + mid * (center - pt)
        if point_in_polygon(cand, polygon):
            hi = mid
        else:
            lo = mid
    return pt + hi * (center - pt)


def ray_aabb(origin: np.ndarray, direction: np.ndarray,
             box_min: np.ndarray, box_max: np.ndarray) -> float | None:
    """Slab-method ray/box intersection.

    Returns the entry distance along the (unit) ray, 0.0 when the origin is
    inside the box, or None when the ray misses.
    """
    t_near, t_far = -math.inf, math.inf
    for k in range(3):
        o, d = float(origin[k]), float(direction[k])
        lo, hi = float(box_min[k]), float(box_max[k])
        if abs(d) < 1e-15:
            if o < lo or o > hi:
                return None
            continue
        t1 = (lo - o) / d
        t2 = (hi - o) / d
        if t1 > t2:
            t1, t2 = t2, t1
        t_near = max(t_near, t1)
        t_far = min(t_far, t2)
        if t_near > t_far:
            return None
    if t_far < 0.0:
        return None
    return max(t_near, 0.0)


def _smallest_nonneg_root(a: float, b: float, c: float) -> float | None:
    """Smallest root >= 0 of a*t^2 + b*t + c = 0, or None."""
    if abs(a) < 1e-15:
        if abs(b) < 1e-15:
            return None
        t = -c / b
        return t if t >= 0.0 else None
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t1 = (-b - sq) / (2.0 * a)
    t2 = (-b + sq) / (2.0 * a)
    if t1 > t2:
        t1, t2 = t2, t1
    if t1 >= 0.0:
        return t1
    if t2 >= 0.0:
        return t2
    return None


def ray_capsule(origin: np.ndarray, direction: np.ndarray,
                seg_a: np.ndarray, seg_b: np.ndarray, radius: float) -> float | None:
    """Ray against a capsule (segment with radius); returns entry distance or None.

    An origin already inside the capsule yields 0.0, matching ray_aabb.
    """
    if point_segment_distance(origin, seg_a, seg_b) <= radius:
        return 0.0
    best: float | None = None

    axis = seg_b - seg_a
    length = float(np.linalg.norm(axis))
    if length > 1e-12:
        u = axis / length
        w = origin - seg_a
        d_perp = direction - np.dot(direction, u) * u
        w_perp = w - np.dot(w, u) * u
        a = float(np.dot(d_perp, d_perp))
        b = 2.0 * float(np.dot(w_perp, d_perp))
        c = float(np.dot(w_perp, w_perp)) - radius * radius
        t = _smallest_nonneg_root(a, b, c)
        if t is not None:
            s = float(np.dot(origin + t * direction - seg_a, u))
            if 0.0 <= s <= length:
                best = t

    for cap in (seg_a, seg_b):
        w = origin - cap
        a = float(np.dot(direction, direction))
        b = 2.0 * float(np.dot(w, direction))
        c = float(np.dot(w, w)) - radius * radius
        t = _smallest_nonneg_root(a, b, c)
        if t is not None and (best is None or t < best):
            best = t
    return best

"""Local path planning on the inflated occupancy grid.

A* over 8-connected cells with an octile heuristic and a deterministic
lexicographic tie-break on (f, h, cell index). Diagonal moves are refused
when either adjacent orthogonal cell is blocked, so paths cannot cut
corners through inflated obstacles.
"""

from __future__ import annotations

import heapq
import math

import numpy as np
from scipy import ndimage

from aia.mapping import UNKNOWN, OccupancyGrid

SQRT2 = math.sqrt(2.0)


class NoPath(RuntimeError):
    def __init__(self, start, goal, reason: str):
        super().__init__(f"no path from {start} to {goal}: {reason}")
        self.start = tuple(start)
        self.goal = tuple(goal)
        self.reason = reason


def blocked_mask(grid: OccupancyGrid, clearance_m: float,
                 allow_unknown: bool = True) -> np.ndarray:
    """Cells unavailable to the planner after clearance inflation."""
    occ = grid.occupied_mask()
    res = grid.config.resolution_m
    if occ.any():
        dist = ndimage.distance_transform_edt(~occ, sampling=res)
        blocked = dist < clearance_m
    else:
        blocked = np.zeros_like(occ, dtype=bool)
    if not allow_unknown:
        blocked |= grid.state_grid() == UNKNOWN
    return blocked


def astar(blocked: np.ndarray, start: tuple[int, int], goal: tuple[int, int],
          resolution: float = 1.0) -> tuple[list[tuple[int, int]], float]:
    """Shortest 8-connected path over the blocked mask; cells are (ix, iy).

    Returns the path including both endpoints and its metric cost. Raises
    NoPath when the goal is unreachable or an endpoint is blocked.
    """
    ny, nx = blocked.shape
    sx, sy = start
    gx, gy = goal
    if not (0 <= sx < nx and 0 <= sy < ny and 0 <= gx < nx and 0 <= gy < ny):
        raise NoPath(start, goal, "endpoint outside the grid")
    if blocked[sy, sx]:
        raise NoPath(start, goal, "start cell is blocked")
    if blocked[gy, gx]:
        raise NoPath(start, goal, "goal cell is blocked")

    def heuristic(x: int, y: int) -> float:
        dx, dy = abs(x - gx), abs(y - gy)
        return resolution * (max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy))

    g_cost = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    h0 = heuristic(sx, sy)
    open_heap: list[tuple[float, float, int, tuple[int, int]]] = [(h0, h0, sy * nx + sx, start)]
    closed: set[tuple[int, int]] = set()

    while open_heap:
        f, h, _, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in parent:
                cell = parent[cell]
                path.append(cell)
            path.reverse()
            return path, g_cost[goal]
        closed.add(cell)
        cx, cy = cell
        for ddx in (-1, 0, 1):
            for ddy in (-1, 0, 1):
                if ddx == 0 and ddy == 0:
                    continue
                x, y = cx + ddx, cy + ddy
                if not (0 <= x < nx and 0 <= y < ny) or blocked[y, x]:
                    continue
                if ddx != 0 and ddy != 0 and (blocked[cy, x] or blocked[y, cx]):
                    continue
                step = resolution * (SQRT2 if ddx != 0 and ddy != 0 else 1.0)
                cand = g_cost[cell] + step
                if cand < g_cost.get((x, y), math.inf) - 1e-12:
                    g_cost[(x, y)] = cand
                    parent[(x, y)] = cell
                    hh = heuristic(x, y)
                    heapq.heappush(open_heap, (cand + hh, hh, y * nx + x, (x, y)))
    raise NoPath(start, goal, "goal unreachable")


def _segment_clear(blocked: np.ndarray, grid: OccupancyGrid,
                   a_xy: np.ndarray, b_xy: np.ndarray) -> bool:
    length = float(np.linalg.norm(b_xy - a_xy))
    steps = max(2, int(length / (grid.config.resolution_m * 0.5)) + 1)
    for s in np.linspace(0.0, 1.0, steps):
        p = a_xy + s * (b_xy - a_xy)
        ix, iy = grid.world_to_cell(float(p[0]), float(p[1]))
        if not grid.in_bounds(ix, iy) or blocked[iy, ix]:
            return False
    return True


def shortcut(path_xy: list[np.ndarray], blocked: np.ndarray,
             grid: OccupancyGrid) -> list[np.ndarray]:
    """Greedy line-of-sight decimation; keeps the first and last points."""
    if len(path_xy) <= 2:
        return path_xy
    out = [path_xy[0]]
    i = 0
    while i < len(path_xy) - 1:
        j = len(path_xy) - 1
        while j > i + 1 and not _segment_clear(blocked, grid, path_xy[i], path_xy[j]):
            j -= 1
        out.append(path_xy[j])
        i = j
    return out


def _nearest_unblocked(blocked: np.ndarray, cell: tuple[int, int],
                       max_cells: int) -> tuple[int, int] | None:
    ny, nx = blocked.shape
    cx, cy = cell
    best = None
    best_d2 = (max_cells + 1) ** 2
    for y in range(max(0, cy - max_cells), min(ny, cy + max_cells + 1)):
        for x in range(max(0, cx - max_cells), min(nx, cx + max_cells + 1)):
            if blocked[y, x]:
                continue
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            if d2 < best_d2 or (d2 == best_d2 and best is not None and (y, x) < (best[1], best[0])):
                best = (x, y)
                best_d2 = d2
    return best


def plan_local_path(grid: OccupancyGrid, start_xy: np.ndarray, goal_xy: np.ndarray,
                    clearance_m: float, *, allow_unknown: bool = True,
                    snap_m: float = 4.0, do_shortcut: bool = True,
                    return_cost: bool = False) -> np.ndarray | tuple[np.ndarray, float]:
    """World-frame xy waypoints from start to goal honoring the clearance.

    Endpoints falling inside the inflation band are snapped to the nearest
    admissible cell within snap_m; beyond that the request fails with NoPath.
    With return_cost the metric cost of the underlying grid path is returned
    alongside the waypoints; shortcutting never changes that cost, it only
    decimates vertices.
    """
    blocked = blocked_mask(grid, clearance_m, allow_unknown)
    res = grid.config.resolution_m
    snap_cells = max(1, int(snap_m / res))

    start = grid.world_to_cell(float(start_xy[0]), float(start_xy[1]))
    goal = grid.world_to_cell(float(goal_xy[0]), float(goal_xy[1]))
    if not grid.in_bounds(*start):
        raise NoPath(start, goal, "start outside the mapped region")
    if not grid.in_bounds(*goal):
        raise NoPath(start, goal, "goal outside the mapped region")

    goal_snapped = False
    if blocked[start[1], start[0]]:
        snapped = _nearest_unblocked(blocked, start, snap_cells)
        if snapped is None:
            raise NoPath(start, goal, "start blocked beyond the snap radius")
        start = snapped
    if blocked[goal[1], goal[0]]:
        snapped = _nearest_unblocked(blocked, goal, snap_cells)
        if snapped is None:
            raise NoPath(start, goal, "goal blocked beyond the snap radius")
        goal = snapped
        goal_snapped = True

    cells, cost = astar(blocked, start, goal, res)
    pts = [np.array(grid.cell_center(ix, iy)) for ix, iy in cells]
    if not goal_snapped:
        pts[-1] = np.asarray(goal_xy, dtype=float)[:2].copy()
    if do_shortcut:
        pts = shortcut(pts, blocked, grid)
    if return_cost:
        return np.array(pts), cost
    return np.array(pts)

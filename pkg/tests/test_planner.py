"""Grid planner: optimality against an independent oracle, clearance, snapping."""

from __future__ import annotations

import numpy as np
import pytest

from _oracles import dijkstra_cost
from aia.config import MappingConfig
from aia.mapping import OccupancyGrid
from aia.planner import NoPath, astar, blocked_mask, plan_local_path, shortcut

RES = 1.0
CLEARANCE = 1.2   # blocks occupied cells plus orthogonal neighbors


def grid_from_mask(occ: np.ndarray, resolution: float = RES) -> OccupancyGrid:
    ny, nx = occ.shape
    grid = OccupancyGrid((0.0, 0.0), nx * resolution, ny * resolution,
                         MappingConfig(resolution_m=resolution))
    grid.hits[occ] = grid.config.hit_threshold
    grid.misses[~occ] = 1
    grid.version = 1
    return grid


def random_world(rng: np.random.Generator, density: float = 0.25,
                 size: int = 20) -> OccupancyGrid:
    occ = rng.random((size, size)) < density
    return grid_from_mask(occ)


def center(cell: tuple[int, int]) -> np.ndarray:
    return np.array([cell[0] + 0.5, cell[1] + 0.5])


class TestOptimality:

    def test_cost_matches_dijkstra_on_random_grids(self):
        rng = np.random.default_rng(2024)
        reachable = 0
        blocked_runs = 0
        for _ in range(60):
            grid = random_world(rng, density=0.08)
            blocked = blocked_mask(grid, CLEARANCE)
            free = np.argwhere(~blocked)
            if len(free) < 2:
                continue
            sy, sx = free[rng.integers(len(free))]
            gy, gx = free[rng.integers(len(free))]
            oracle = dijkstra_cost(blocked, (sx, sy), (gx, gy), RES)
            if oracle is None:
                with pytest.raises(NoPath):
                    plan_local_path(grid, center((sx, sy)), center((gx, gy)),
                                    CLEARANCE, do_shortcut=False, snap_m=0.0)
                blocked_runs += 1
                continue
            _, cost = plan_local_path(grid, center((sx, sy)), center((gx, gy)),
                                      CLEARANCE, do_shortcut=False,
                                      return_cost=True)
            assert abs(cost - oracle) < 1e-9
            reachable += 1
        assert reachable >= 30
        assert blocked_runs >= 3

    def test_shortcut_reports_the_same_cost(self):
        rng = np.random.default_rng(7)
        grid = random_world(rng, density=0.08)
        blocked = blocked_mask(grid, CLEARANCE)
        free = np.argwhere(~blocked)
        sy, sx = free[0]
        gy, gx = free[-1]
        assert dijkstra_cost(blocked, (sx, sy), (gx, gy), RES) is not None
        full, cost_full = plan_local_path(grid, center((sx, sy)), center((gx, gy)),
                                          CLEARANCE, do_shortcut=False,
                                          return_cost=True)
        cut, cost_cut = plan_local_path(grid, center((sx, sy)), center((gx, gy)),
                                        CLEARANCE, do_shortcut=True,
                                        return_cost=True)
        assert cost_cut == cost_full
        assert len(cut) <= len(full)
        assert np.allclose(cut[0], full[0])
        assert np.allclose(cut[-1], full[-1])


class TestMotionRules:
    def test_diagonal_through_touching_corners_is_refused(self):
        occ = np.zeros((3, 3), dtype=bool)
        occ[0, 1] = True   # cell (1, 0)
        occ[1, 0] = True   # cell (0, 1)
        blocked = occ
        with pytest.raises(NoPath):
            astar(blocked, (0, 0), (2, 2))

    def test_single_adjacent_block_forces_the_long_way(self):
        occ = np.zeros((2, 2), dtype=bool)
        occ[0, 1] = True   # cell (1, 0)
        path, cost = astar(occ, (0, 0), (1, 1))
        assert abs(cost - 2.0) < 1e-12
        assert path == [(0, 0), (0, 1), (1, 1)]

    def test_endpoint_validation(self):
        blocked = np.zeros((4, 4), dtype=bool)
        blocked[2, 2] = True
        with pytest.raises(NoPath):
            astar(blocked, (0, 0), (9, 9))
        with pytest.raises(NoPath):
            astar(blocked, (2, 2), (0, 0))


class TestClearanceAndGeometry:
    def test_path_cells_keep_clearance(self):
        rng = np.random.default_rng(99)
        checked = 0
        for _ in range(25):
            grid = random_world(rng, density=0.08)
            clearance = 1.2
            blocked = blocked_mask(grid, clearance)
            free = np.argwhere(~blocked)
            if len(free) < 2:
                continue
            sy, sx = free[rng.integers(len(free))]
            gy, gx = free[rng.integers(len(free))]
            try:
                path = plan_local_path(grid, center((sx, sy)), center((gx, gy)),
                                       clearance)
            except NoPath:
                continue
            for a, b in zip(path[:-1], path[1:]):
                length = float(np.linalg.norm(b - a))
                steps = max(2, int(length / (RES * 0.5)) + 1)
                for s in np.linspace(0.0, 1.0, steps):
                    p = a + s * (b - a)
                    ix, iy = grid.world_to_cell(float(p[0]), float(p[1]))
                    assert not blocked[iy, ix]
            checked += 1
        assert checked >= 5

    def test_exact_goal_is_kept_when_admissible(self):
        grid = grid_from_mask(np.zeros((10, 10), dtype=bool))
        goal = np.array([7.3, 6.8])
        path = plan_local_path(grid, np.array([1.5, 1.5]), goal, clearance_m=0.4)
        assert np.allclose(path[-1], goal)

    def test_blocked_mask_inflation_radius(self):
        occ = np.zeros((9, 9), dtype=bool)
        occ[4, 4] = True
        grid = grid_from_mask(occ)
        blocked = blocked_mask(grid, 1.2)
        assert blocked[4, 4]
        assert blocked[4, 5] and blocked[5, 4] and blocked[4, 3] and blocked[3, 4]
        assert not blocked[5, 5]   # diagonal neighbor sits sqrt(2) away
        assert not blocked[4, 6]

    def test_unknown_cells_respect_traversal_policy(self):
        occ = np.zeros((5, 5), dtype=bool)
        occ[:4, 2] = True   # wall with a gap at the top, in unknown territory
        grid = OccupancyGrid((0.0, 0.0), 5.0, 5.0, MappingConfig(resolution_m=RES))
        grid.hits[occ] = grid.config.hit_threshold
        grid.misses[:, :2][~occ[:, :2]] = 1   # left half observed free
        start, goal = np.array([0.5, 0.5]), np.array([4.5, 0.5])
        path = plan_local_path(grid, start, goal, clearance_m=0.4, allow_unknown=True)
        assert len(path) >= 2
        with pytest.raises(NoPath):
            plan_local_path(grid, start, goal, clearance_m=0.4,
                            allow_unknown=False, snap_m=0.0)


class TestSnapping:
    def test_blocked_start_snaps_to_nearest_admissible(self):
        occ = np.zeros((10, 10), dtype=bool)
        occ[5, 5] = True
        grid = grid_from_mask(occ)
        clearance = 1.2
        blocked = blocked_mask(grid, clearance)
        start = np.array([5.5, 5.5])   # dead center of the obstacle
        path = plan_local_path(grid, start, np.array([0.5, 0.5]), clearance,
                               snap_m=4.0)
        ix, iy = grid.world_to_cell(float(path[0][0]), float(path[0][1]))
        assert not blocked[iy, ix]
        assert float(np.linalg.norm(path[0] - start)) <= 4.0 + RES

    def test_goal_blocked_beyond_snap_radius_fails(self):
        occ = np.zeros((20, 20), dtype=bool)
        occ[8:13, 8:13] = True
        grid = grid_from_mask(occ)
        with pytest.raises(NoPath) as exc:
            plan_local_path(grid, np.array([0.5, 0.5]), np.array([10.5, 10.5]),
                            clearance_m=3.0, snap_m=1.0)
        assert "snap radius" in str(exc.value)

    def test_snapped_goal_endpoint_is_admissible(self):
        occ = np.zeros((10, 10), dtype=bool)
        occ[5, 5] = True
        grid = grid_from_mask(occ)
        clearance = 1.2
        blocked = blocked_mask(grid, clearance)
        path = plan_local_path(grid, np.array([0.5, 0.5]), np.array([5.5, 5.5]),
                               clearance, snap_m=4.0)
        ix, iy = grid.world_to_cell(float(path[-1][0]), float(path[-1][1]))
        assert not blocked[iy, ix]


class TestDeterminism:
    def test_identical_inputs_yield_identical_paths(self):
        rng = np.random.default_rng(5)
        grid = random_world(rng, density=0.08)
        blocked = blocked_mask(grid, 1.2)
        free = np.argwhere(~blocked)
        sy, sx = free[0]
        goal = next((gxy for gxy in free[::-1]
                     if dijkstra_cost(blocked, (sx, sy), (gxy[1], gxy[0]), RES)
                     is not None), None)
        assert goal is not None
        gy, gx = goal
        a = plan_local_path(grid, center((sx, sy)), center((gx, gy)), 1.2)
        b = plan_local_path(grid, center((sx, sy)), center((gx, gy)), 1.2)
        assert np.array_equal(a, b)

    def test_shortcut_keeps_endpoints_and_is_idempotent(self):
        grid = grid_from_mask(np.zeros((10, 10), dtype=bool))
        blocked = blocked_mask(grid, 0.4)
        pts = [np.array([0.5, 0.5]), np.array([1.5, 1.5]), np.array([2.5, 2.5]),
               np.array([3.5, 2.5]), np.array([4.5, 2.5])]
        once = shortcut(pts, blocked, grid)
        twice = shortcut(once, blocked, grid)
        assert np.allclose(once[0], pts[0]) and np.allclose(once[-1], pts[-1])
        assert len(twice) == len(once)

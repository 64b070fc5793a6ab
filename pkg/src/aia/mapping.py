"""Occupancy mapping at a fixed 2-D resolution with evidence counters.

Cells are tri-state: unknown until observed, free once any beam passes
through, occupied after enough endpoint hits. Beam traversal is rasterized
by half-resolution sampling along each ray (vectorized across the scan);
endpoint hit cells are exact. Each occupied cell keeps the running mean of
its endpoint positions (the anchor), preserving sub-cell wall geometry for
scan matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aia.config import MappingConfig

UNKNOWN, FREE, OCCUPIED = 0, 1, 2


@dataclass
class MapSummary:
    occupied_cell_count: int
    free_fraction: float
    nearest_occupied_range_m: float      # inf rendered as -1 in dicts
    frontier_bearings: list[dict] = field(default_factory=list)
    explored_fraction: float = 0.0
    resolution_m: float = 0.5

    def to_dict(self) -> dict:
        rng = self.nearest_occupied_range_m
        return {
            "occupied_cell_count": self.occupied_cell_count,
            "free_fraction": round(self.free_fraction, 6),
            "nearest_occupied_range_m": round(rng, 2) if np.isfinite(rng) else -1,
            "frontier_bearings": self.frontier_bearings,
            "explored_fraction": round(self.explored_fraction, 6),
            "resolution_m": self.resolution_m,
        }


class OccupancyGrid:
    def __init__(self, origin: tuple[float, float], width_m: float, height_m: float,
                 config: MappingConfig | None = None):
        self.config = config or MappingConfig()
        res = self.config.resolution_m
        if res <= 0.0 or width_m <= 0.0 or height_m <= 0.0:
            raise ValueError("grid extent and resolution must be positive")
        self.origin = (float(origin[0]), float(origin[1]))
        self.nx = int(np.ceil(width_m / res))
        self.ny = int(np.ceil(height_m / res))
        self.hits = np.zeros((self.ny, self.nx), dtype=np.uint16)
        self.misses = np.zeros((self.ny, self.nx), dtype=np.uint16)
        self.anchor_sum = np.zeros((self.ny, self.nx, 2), dtype=np.float64)
        self.anchor_n = np.zeros((self.ny, self.nx), dtype=np.uint32)
        self.version = 0

    # -- coordinates ---------------------------------------------------------

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        res = self.config.resolution_m
        return int((x - self.origin[0]) // res), int((y - self.origin[1]) // res)

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        res = self.config.resolution_m
        return self.origin[0] + (ix + 0.5) * res, self.origin[1] + (iy + 0.5) * res

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.nx and 0 <= iy < self.ny

    def _cells_of(self, pts: np.ndarray) -> np.ndarray:
        res = self.config.resolution_m
        return np.floor((pts - np.array(self.origin)) / res).astype(int)

    # -- updates ---------------------------------------------------------------

    def update(self, sensor_xy: np.ndarray, endpoints_xy: np.ndarray) -> None:
        """Integrate one scan: free space along each beam, a hit at its end."""
        pts = np.atleast_2d(np.asarray(endpoints_xy, dtype=float))
        if pts.size == 0:
            return
        sensor = np.asarray(sensor_xy, dtype=float)[:2]
        res = self.config.resolution_m

        deltas = pts - sensor
        lengths = np.hypot(deltas[:, 0], deltas[:, 1])
        # Sample each beam at half-resolution spacing, excluding the endpoint
        # cell so a beam never erodes the surface it hit.
        miss_points = []
        for i in range(len(pts)):
            n = int(lengths[i] / (0.5 * res))
            if n <= 0:
                continue
            ts = np.linspace(0.0, 1.0, n, endpoint=False)
            miss_points.append(sensor + ts[:, None] * deltas[i])
        if miss_points:
            cells = self._cells_of(np.concatenate(miss_points))
            end_cells = self._cells_of(pts)
            ok = (cells[:, 0] >= 0) & (cells[:, 0] < self.nx) \
                & (cells[:, 1] >= 0) & (cells[:, 1] < self.ny)
            cells = cells[ok]
            flat = np.unique(cells[:, 1] * self.nx + cells[:, 0])
            end_flat = np.unique(end_cells[:, 1] * self.nx + end_cells[:, 0])
            flat = np.setdiff1d(flat, end_flat, assume_unique=True)
            m = self.misses.ravel()
            bump = m[flat] < 65535
            m[flat[bump]] += 1

        end_cells = self._cells_of(pts)
        ok = (end_cells[:, 0] >= 0) & (end_cells[:, 0] < self.nx) \
            & (end_cells[:, 1] >= 0) & (end_cells[:, 1] < self.ny)
        end_cells = end_cells[ok]
        pts_ok = pts[ok]
        if len(end_cells):
            flat = end_cells[:, 1] * self.nx + end_cells[:, 0]
            h = self.hits.ravel()
            np.add.at(h, flat, 1)
            np.minimum(h, 65535, out=h)
            np.add.at(self.anchor_sum.reshape(-1, 2), flat, pts_ok)
            np.add.at(self.anchor_n.ravel(), flat, 1)
        self.version += 1

    # -- queries -----------------------------------------------------------------

    def state_grid(self) -> np.ndarray:
        """(ny, nx) array of UNKNOWN / FREE / OCCUPIED."""
        occ = self.hits >= self.config.hit_threshold
        free = (~occ) & ((self.misses > 0) | (self.hits > 0))
        out = np.full((self.ny, self.nx), UNKNOWN, dtype=np.uint8)
        out[free] = FREE
        out[occ] = OCCUPIED
        return out

    def occupied_mask(self) -> np.ndarray:
        return self.hits >= self.config.hit_threshold

    def occupied_cells(self) -> np.ndarray:
        ys, xs = np.nonzero(self.occupied_mask())
        return np.stack([xs, ys], axis=1) if len(xs) else np.zeros((0, 2), dtype=int)

    def anchors(self) -> np.ndarray:
        """(k, 2) mean endpoint position of every occupied cell."""
        mask = self.occupied_mask() & (self.anchor_n > 0)
        ys, xs = np.nonzero(mask)
        if len(xs) == 0:
            return np.zeros((0, 2))
        n = self.anchor_n[ys, xs].astype(float)
        return self.anchor_sum[ys, xs] / n[:, None]

    def frontier_cells(self) -> np.ndarray:
        """Free cells 4-adjacent to at least one unknown cell."""
        state = self.state_grid()
        free = state == FREE
        unknown = state == UNKNOWN
        near_unknown = np.zeros_like(unknown)
        near_unknown[1:, :] |= unknown[:-1, :]
        near_unknown[:-1, :] |= unknown[1:, :]
        near_unknown[:, 1:] |= unknown[:, :-1]
        near_unknown[:, :-1] |= unknown[:, 1:]
        ys, xs = np.nonzero(free & near_unknown)
        return np.stack([xs, ys], axis=1) if len(xs) else np.zeros((0, 2), dtype=int)

    def summarize(self, pose_xy: np.ndarray | None = None,
                  with_frontiers: bool = True) -> MapSummary:
        occ_mask = self.occupied_mask()
        n_occ = int(np.count_nonzero(occ_mask))
        free = (~occ_mask) & ((self.misses > 0) | (self.hits > 0))
        n_free = int(np.count_nonzero(free))
        total = self.nx * self.ny

        nearest = float("inf")
        bearings: list[dict] = []
        if pose_xy is not None and n_occ:
            ys, xs = np.nonzero(occ_mask)
            res = self.config.resolution_m
            cx = self.origin[0] + (xs + 0.5) * res
            cy = self.origin[1] + (ys + 0.5) * res
            d = np.hypot(cx - float(pose_xy[0]), cy - float(pose_xy[1]))
            nearest = float(d.min())
        if pose_xy is not None and with_frontiers:
            bearings = self.frontier_bearings(pose_xy)

        return MapSummary(
            occupied_cell_count=n_occ,
            free_fraction=n_free / total,
            nearest_occupied_range_m=nearest,
            frontier_bearings=bearings,
            explored_fraction=(n_occ + n_free) / total,
            resolution_m=self.config.resolution_m,
        )

    def frontier_bearings(self, pose_xy: np.ndarray) -> list[dict]:
        """Nearest frontier per bearing sector, at most max_bearings entries."""
        cells = self.frontier_cells()
        if len(cells) == 0:
            return []
        nsec = max(1, self.config.frontier_max_bearings)
        res = self.config.resolution_m
        centers = np.stack([self.origin[0] + (cells[:, 0] + 0.5) * res,
                            self.origin[1] + (cells[:, 1] + 0.5) * res], axis=1)
        delta = centers - np.asarray(pose_xy, dtype=float)[:2]
        dists = np.hypot(delta[:, 0], delta[:, 1])
        bearings = np.arctan2(delta[:, 1], delta[:, 0])
        sector = ((bearings + np.pi) / (2.0 * np.pi) * nsec).astype(int) % nsec
        out = []
        for s in range(nsec):
            idx = np.nonzero(sector == s)[0]
            if len(idx) == 0:
                continue
            best = idx[np.argmin(dists[idx])]
            out.append({"bearing_rad": round(float(bearings[best]), 4),
                        "range_m": round(float(dists[best]), 2)})
        out.sort(key=lambda d: d["bearing_rad"])
        return out

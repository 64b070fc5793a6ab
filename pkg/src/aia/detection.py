"""Obstacle records derived from the current scan, in the estimate frame.

Clusters are chains of angularly consecutive returns of one category whose
neighbor spacing stays under the gap threshold. A record's position is the
nearest point of its cluster, so distance is exactly the Euclidean distance
from the estimate position to the record position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aia.estimator import StateEstimate
from aia.geometry import yaw_rotation
from aia.world import LidarScan

DEFAULT_CLUSTER_GAP_M = 1.5


@dataclass
class ObstacleRecord:
    position: np.ndarray       # world frame, nearest cluster point
    category: str
    distance_m: float
    bearing_rad: float         # world-frame bearing from the estimate
    point_count: int

    def to_dict(self) -> dict:
        return {
            "position": [round(float(v), 3) for v in self.position],
            "category": self.category,
            "distance_m": round(self.distance_m, 3),
            "bearing_rad": round(self.bearing_rad, 4),
            "point_count": self.point_count,
        }


def detect_obstacles(scan: LidarScan, estimate: StateEstimate,
                     cluster_gap_m: float = DEFAULT_CLUSTER_GAP_M) -> list[ObstacleRecord]:
    """Cluster scan returns and report one record per cluster, nearest first."""
    n = len(scan)
    if n == 0:
        return []
    world_pts = estimate.position + scan.points @ yaw_rotation(estimate.yaw).T

    # Split the order-preserved scan into runs; wrap-around joins the first
    # and last runs when they are contiguous.
    runs: list[list[int]] = [[0]]
    for i in range(1, n):
        prev = runs[-1][-1]
        same = scan.categories[i] == scan.categories[prev]
        close = float(np.linalg.norm(world_pts[i] - world_pts[prev])) <= cluster_gap_m
        if same and close:
            runs[-1].append(i)
        else:
            runs.append([i])
    if len(runs) > 1:
        first, last = runs[0], runs[-1]
        same = scan.categories[first[0]] == scan.categories[last[-1]]
        close = float(np.linalg.norm(world_pts[first[0]] - world_pts[last[-1]])) <= cluster_gap_m
        if same and close:
            runs[0] = last + first
            runs.pop()

    records = []
    for run in runs:
        pts = world_pts[run]
        deltas = pts - estimate.position
        dists = np.linalg.norm(deltas, axis=1)
        k = int(np.argmin(dists))
        nearest = pts[k]
        records.append(ObstacleRecord(
            position=nearest.copy(),
            category=scan.categories[run[0]],
            distance_m=float(np.linalg.norm(nearest - estimate.position)),
            bearing_rad=float(np.arctan2(nearest[1] - estimate.position[1],
                                         nearest[0] - estimate.position[0])),
            point_count=len(run),
        ))
    records.sort(key=lambda r: r.distance_m)
    return records

"""Shared context blackboard between the fast loop and the deliberator.

Four channels with single-writer semantics: the fast loop refreshes
pose_map_obstacles, the perception path appends scene_descriptions, and
geodetic_info plus action_set are written exactly once at mission start.
Every write and every snapshot bumps one epoch counter, so two snapshots
never share an epoch and staleness is detectable by comparison.
"""

from __future__ import annotations

import copy
import json
import os
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

CHANNELS = ("pose_map_obstacles", "scene_descriptions", "geodetic_info", "action_set")
STATIC_CHANNELS = ("geodetic_info", "action_set")


class UnknownChannel(KeyError):
    pass


class NotInitialized(RuntimeError):
    """Snapshot requested before the static channels were written."""


class WriteOnceViolation(ValueError):
    """A static channel was written a second time within one mission."""


@dataclass
class ContextSnapshot:
    epoch: int
    pose_map_obstacles: dict | None
    scene_descriptions: list
    geodetic_info: dict | None
    action_set: str | None
    channel_epochs: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "pose_map_obstacles": self.pose_map_obstacles,
            "scene_descriptions": self.scene_descriptions,
            "geodetic_info": self.geodetic_info,
            "action_set": self.action_set,
            "channel_epochs": dict(self.channel_epochs),
        }


class Blackboard:
    def __init__(self, scene_ring_capacity: int = 10, persist_dir: str | Path | None = None):
        if scene_ring_capacity <= 0:
            raise ValueError("scene_ring_capacity must be positive")
        self._lock = threading.Lock()
        self._epoch = 0
        self._pose_map_obstacles: dict | None = None
        self._scene: deque = deque(maxlen=scene_ring_capacity)
        self._geodetic: dict | None = None
        self._action_set: str | None = None
        self._channel_epochs = {name: 0 for name in CHANNELS}
        self._persist_dir = Path(persist_dir) if persist_dir else None
        if self._persist_dir is not None:
            self._persist_dir.mkdir(parents=True, exist_ok=True)

    def write(self, channel: str, value) -> int:
        """Replace (or append, for the scene ring) and return the new epoch."""
        with self._lock:
            if channel not in CHANNELS:
                raise UnknownChannel(channel)
            if channel in STATIC_CHANNELS and self._channel_epochs[channel] > 0:
                raise WriteOnceViolation(f"channel '{channel}' is write-once per mission")
            if channel == "scene_descriptions":
                text = value.get("text", "") if isinstance(value, dict) else str(value)
                if not text:
                    raise ValueError("scene description text must be non-empty")
            self._epoch += 1
            if channel == "pose_map_obstacles":
                self._pose_map_obstacles = value
            elif channel == "scene_descriptions":
                self._scene.append(value)
            elif channel == "geodetic_info":
                self._geodetic = value
            else:
                self._action_set = value
            self._channel_epochs[channel] = self._epoch
            if self._persist_dir is not None:
                self._persist(channel)
            return self._epoch

    def read(self, channel: str):
        with self._lock:
            if channel not in CHANNELS:
                raise UnknownChannel(channel)
            self._epoch += 1
            return copy.deepcopy(self._value(channel))

    def snapshot(self) -> ContextSnapshot:
        """Consistent copy of all four channels under one epoch."""
        with self._lock:
            if self._geodetic is None or self._action_set is None:
                raise NotInitialized("static channels not written yet")
            self._epoch += 1
            return ContextSnapshot(
                epoch=self._epoch,
                pose_map_obstacles=copy.deepcopy(self._pose_map_obstacles),
                scene_descriptions=copy.deepcopy(list(self._scene)),
                action_set=self._action_set,
                geodetic_info=copy.deepcopy(self._geodetic),
                channel_epochs=dict(self._channel_epochs),
            )

    def _value(self, channel: str):
        if channel == "pose_map_obstacles":
            return self._pose_map_obstacles
        if channel == "scene_descriptions":
            return list(self._scene)
        if channel == "geodetic_info":
            return self._geodetic
        return self._action_set

    def _persist(self, channel: str) -> None:
        payload = {"epoch": self._epoch, "value": self._value(channel)}
        path = self._persist_dir / f"{channel}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2, default=str))
        os.replace(tmp, path)

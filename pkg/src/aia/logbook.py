"""Mission log: append-only NDJSON, header first, one event per line.

All timestamps are simulation time. Event ordering is (t, seq) with seq
strictly increasing, since one tick can emit several events. The content
hash covers the exact serialized bytes, which is what replay compares.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from aia.config import canonical_json


class LogFormatError(ValueError):
    pass


class MissionLog:
    def __init__(self, header: dict):
        if "config_hash" not in header:
            raise LogFormatError("header must carry config_hash")
        self.header = dict(header)
        self.header["kind"] = "header"
        self.events: list[dict] = []
        self._seq = 0
        self._last_t = -1.0
        self._listeners: list = []

    def subscribe(self, callback) -> None:
        """Live event feed for the telemetry service; not serialized."""
        self._listeners.append(callback)

    def append(self, kind: str, t: float, **payload) -> dict:
        if t < self._last_t - 1e-12:
            raise LogFormatError(
                f"event time went backwards: {t} after {self._last_t}")
        self._last_t = max(self._last_t, t)
        self._seq += 1
        event = {"kind": kind, "t": round(float(t), 6), "seq": self._seq}
        event.update(payload)
        self.events.append(event)
        for cb in self._listeners:
            try:
                cb(event)
            except Exception:
                pass
        return event

    def events_of(self, *kinds: str) -> list[dict]:
        return [e for e in self.events if e["kind"] in kinds]

    def final_state(self) -> dict | None:
        states = self.events_of("tick_state", "final_state")
        return states[-1] if states else None

    # -- serialization ------------------------------------------------------

    def to_ndjson(self) -> str:
        lines = [canonical_json(self.header)]
        lines += [canonical_json(e) for e in self.events]
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_ndjson().encode("utf-8")).hexdigest()

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_ndjson())
        return path

    @classmethod
    def from_ndjson(cls, text: str) -> "MissionLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise LogFormatError("empty log")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"bad header line: {exc}") from exc
        if header.get("kind") != "header":
            raise LogFormatError("first line is not a header record")
        log = cls(header)
        for i, line in enumerate(lines[1:], start=2):
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"bad event at line {i}: {exc}") from exc
            log.events.append(event)
        if log.events:
            log._seq = max(e.get("seq", 0) for e in log.events)
            log._last_t = max(e.get("t", 0.0) for e in log.events)
        return log

    @classmethod
    def read(cls, path: str | Path) -> "MissionLog":
        return cls.from_ndjson(Path(path).read_text())

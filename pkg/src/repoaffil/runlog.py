"""Structured run logging: one JSON line per request or pipeline decision."""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Optional


class RunLog:
    """Append-only JSONL event log; safe for concurrent writers.

    Auth material must never reach this log: callers log paths and statuses,
    not headers.
    """

    def __init__(self, dest: Optional[str | Path | IO[str]] = None):
        self._lock = threading.Lock()
        self._owns_handle = False
        if dest is None:
            self._handle: Optional[IO[str]] = None
        elif isinstance(dest, (str, Path)):
            path = Path(dest)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = path.open("a", encoding="utf-8")
            self._owns_handle = True
        else:
            self._handle = dest
        self.events: list[dict] = []

    def event(self, kind: str, **fields) -> None:
        record = {
            "at": datetime.now(timezone.utc).isoformat(),
            "event": kind,
            **fields,
        }
        with self._lock:
            self.events.append(record)
            if self._handle is not None:
                self._handle.write(json.dumps(record) + "\n")
                self._handle.flush()

    def count(self, kind: str) -> int:
        with self._lock:
            return sum(1 for e in self.events if e["event"] == kind)

    def close(self) -> None:
        with self._lock:
            if self._owns_handle and self._handle is not None:
                self._handle.close()
                self._handle = None

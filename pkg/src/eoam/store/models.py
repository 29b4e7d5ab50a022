"""Sweep result tables and their row types."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import Any

SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS cells (
    cell_key TEXT PRIMARY KEY,
    speed_kmh REAL NOT NULL,
    mu REAL NOT NULL,
    oncoming_dist REAL,
    outcome TEXT,
    end_reason TEXT,
    t_final REAL,
    max_mode INTEGER NOT NULL DEFAULT 0,
    error TEXT,
    manifest_hash TEXT,
    created_at REAL NOT NULL,
    updated_at REAL NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_cells_outcome ON cells(outcome);

CREATE TABLE IF NOT EXISTS cell_events (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    cell_key TEXT,
    kind TEXT NOT NULL,
    sim_time REAL,
    payload_json TEXT,
    created_at REAL NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_cell_events_key ON cell_events(cell_key, id);
"""

ERROR_LABEL = "error"


def cell_key(speed_kmh: float, mu: float, oncoming_dist: float | None) -> str:
    """Stable key for a (speed, mu, oncoming) cell, e.g. ``120|0.7|none``."""
    oncoming = "none" if oncoming_dist is None else f"{oncoming_dist:g}"
    return f"{speed_kmh:g}|{mu:g}|{oncoming}"


@dataclass(frozen=True, slots=True)
class CellRow:
    cell_key: str
    speed_kmh: float
    mu: float
    oncoming_dist: float | None
    outcome: str | None
    end_reason: str | None
    t_final: float | None
    max_mode: int
    error: str | None
    manifest_hash: str | None
    created_at: float
    updated_at: float

    @property
    def label(self) -> str:
        return self.outcome or ERROR_LABEL


@dataclass(frozen=True, slots=True)
class EventRow:
    id: int
    cell_key: str | None
    kind: str
    sim_time: float | None
    payload_json: str | None
    created_at: float

    @property
    def payload(self) -> dict[str, Any]:
        return json.loads(self.payload_json) if self.payload_json else {}


CELL_COLUMNS = tuple(f.name for f in fields(CellRow))
EVENT_COLUMNS = tuple(f.name for f in fields(EventRow))

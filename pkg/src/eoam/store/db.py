"""aiosqlite-backed store of sweep cells and their mode-transition events."""

from __future__ import annotations

import json
import time
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import aiosqlite
import structlog

from .models import CELL_COLUMNS, ERROR_LABEL, EVENT_COLUMNS, SCHEMA_SQL, CellRow, EventRow

log = structlog.get_logger()

# Same layout as the printed color table: no-oncoming block first, fast rows on top
_TABLE_ORDER = "oncoming_dist IS NOT NULL, oncoming_dist, speed_kmh DESC, mu DESC"

_UPSERT_CELL = f"""
INSERT INTO cells ({", ".join(CELL_COLUMNS)})
VALUES ({", ".join("?" for _ in CELL_COLUMNS)})
ON CONFLICT(cell_key) DO UPDATE SET
    {", ".join(f"{c} = excluded.{c}" for c in CELL_COLUMNS if c not in ("cell_key", "created_at"))}
"""

_INSERT_EVENT = (
    "INSERT INTO cell_events (cell_key, kind, sim_time, payload_json, created_at) VALUES (?, ?, ?, ?, ?)"
)

# (kind, sim_time, payload)
Event = tuple[str, float | None, dict[str, Any] | None]


class ResultStore:
    """One row per sweep cell plus an append-only event log.

    Usable as ``async with ResultStore(path) as store:`` or through explicit
    :meth:`connect` / :meth:`close`.
    """

    def __init__(self, db_path: str | Path) -> None:
        self.path = Path(db_path)
        self._conn: aiosqlite.Connection | None = None

    async def __aenter__(self) -> Self:
        await self.connect()
        return self

    async def __aexit__(self, *exc: object) -> None:
        await self.close()

    async def connect(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        conn = await aiosqlite.connect(self.path)
        await conn.execute("PRAGMA journal_mode=WAL")
        await conn.executescript(SCHEMA_SQL)
        await conn.commit()
        self._conn = conn
        log.info("result_store_opened", path=str(self.path))

    async def close(self) -> None:
        if self._conn is None:
            return
        conn, self._conn = self._conn, None
        await conn.close()

    @property
    def conn(self) -> aiosqlite.Connection:
        if self._conn is None:
            raise RuntimeError(f"Result store {self.path} not connected")
        return self._conn

    async def _write(self, sql: str, params: Sequence[Any] = ()) -> None:
        await self.conn.execute(sql, params)
        await self.conn.commit()

    async def _select(self, sql: str, params: Sequence[Any] = ()) -> list[aiosqlite.Row]:
        async with self.conn.execute(sql, params) as cursor:
            return list(await cursor.fetchall())

    # -- cells ------------------------------------------------------------

    async def upsert_cell(
        self,
        key: str,
        speed_kmh: float,
        mu: float,
        oncoming_dist: float | None,
        *,
        outcome: str | None = None,
        end_reason: str | None = None,
        t_final: float | None = None,
        max_mode: int = 0,
        error: str | None = None,
        manifest_hash: str | None = None,
    ) -> None:
        """Write a cell result. A re-run keeps the original ``created_at``."""
        stamp = time.time()
        row = CellRow(
            key, speed_kmh, mu, oncoming_dist, outcome, end_reason, t_final,
            max_mode, error, manifest_hash, stamp, stamp,
        )
        await self._write(_UPSERT_CELL, [getattr(row, c) for c in CELL_COLUMNS])

    async def get_cell(self, key: str) -> CellRow | None:
        rows = await self._select(f"SELECT {', '.join(CELL_COLUMNS)} FROM cells WHERE cell_key = ?", (key,))
        return CellRow(*rows[0]) if rows else None

    async def list_cells(self) -> list[CellRow]:
        rows = await self._select(f"SELECT {', '.join(CELL_COLUMNS)} FROM cells ORDER BY {_TABLE_ORDER}")
        return [CellRow(*r) for r in rows]

    async def outcome_counts(self) -> dict[str, int]:
        """Cells per outcome label; cells that raised count as ``error``."""
        rows = await self._select(
            "SELECT COALESCE(outcome, ?) AS label, COUNT(*) FROM cells GROUP BY label ORDER BY label",
            (ERROR_LABEL,),
        )
        return {label: count for label, count in rows}

    # -- events -----------------------------------------------------------

    async def clear_events(self, key: str) -> None:
        await self._write("DELETE FROM cell_events WHERE cell_key = ?", (key,))

    async def log_event(
        self,
        kind: str,
        key: str | None = None,
        payload: dict[str, Any] | None = None,
        sim_time: float | None = None,
    ) -> None:
        await self.log_events(key, [(kind, sim_time, payload)])

    async def log_events(self, key: str | None, events: Iterable[Event]) -> None:
        """Append several events for one cell in a single transaction."""
        stamp = time.time()
        params = [
            (key, kind, sim_time, json.dumps(payload) if payload else None, stamp)
            for kind, sim_time, payload in events
        ]
        if not params:
            return
        await self.conn.executemany(_INSERT_EVENT, params)
        await self.conn.commit()

    async def get_recent_events(self, key: str | None = None, limit: int = 100) -> list[EventRow]:
        """Newest first, optionally restricted to one cell."""
        where, params = ("WHERE cell_key = ?", [key]) if key is not None else ("", [])
        rows = await self._select(
            f"SELECT {', '.join(EVENT_COLUMNS)} FROM cell_events {where} ORDER BY id DESC LIMIT ?",
            [*params, limit],
        )
        return [EventRow(*r) for r in rows]

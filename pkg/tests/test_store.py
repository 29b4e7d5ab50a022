"""Tests for the sweep result store."""

import pytest

from eoam.store.db import ResultStore
from eoam.store.models import cell_key


@pytest.fixture
async def store(tmp_path):
    async with ResultStore(tmp_path / "results.sqlite") as store:
        yield store


class TestCellKey:
    def test_formats(self):
        assert cell_key(120, 1, None) == "120|1|none"
        assert cell_key(55.0, 0.7, 300.0) == "55|0.7|300"


class TestResultStore:
    @pytest.mark.asyncio
    async def test_connect_creates_tables(self, store):
        cursor = await store.conn.execute("SELECT name FROM sqlite_master WHERE type='table'")
        tables = {row[0] for row in await cursor.fetchall()}
        assert {"cells", "cell_events"} <= tables

    @pytest.mark.asyncio
    async def test_creates_parent_directory(self, tmp_path):
        path = tmp_path / "nested" / "dir" / "r.sqlite"
        async with ResultStore(path):
            pass
        assert path.is_file()

    @pytest.mark.asyncio
    async def test_upsert_and_get(self, store):
        await store.upsert_cell(
            "120|1|none", 120.0, 1.0, None,
            outcome="green", end_reason="handback", t_final=7.5, max_mode=5, manifest_hash="abc",
        )
        row = await store.get_cell("120|1|none")
        assert row is not None
        assert row.outcome == "green"
        assert row.label == "green"
        assert row.oncoming_dist is None
        assert row.max_mode == 5
        assert row.manifest_hash == "abc"

    @pytest.mark.asyncio
    async def test_upsert_replaces(self, store):
        await store.upsert_cell("k", 90.0, 0.3, 300.0, outcome="red")
        first = await store.get_cell("k")
        await store.upsert_cell("k", 90.0, 0.3, 300.0, error="ValueError: boom")
        row = await store.get_cell("k")
        assert row.outcome is None
        assert row.label == "error"
        assert row.error == "ValueError: boom"
        assert row.created_at == first.created_at
        assert row.updated_at >= first.updated_at

    @pytest.mark.asyncio
    async def test_missing_cell(self, store):
        assert await store.get_cell("nope") is None

    @pytest.mark.asyncio
    async def test_list_in_table_order(self, store):
        await store.upsert_cell(cell_key(55, 1, 300), 55.0, 1.0, 300.0)
        await store.upsert_cell(cell_key(55, 1, None), 55.0, 1.0, None)
        await store.upsert_cell(cell_key(120, 0.7, None), 120.0, 0.7, None)
        await store.upsert_cell(cell_key(120, 1, None), 120.0, 1.0, None)
        keys = [row.cell_key for row in await store.list_cells()]
        assert keys == ["120|1|none", "120|0.7|none", "55|1|none", "55|1|300"]

    @pytest.mark.asyncio
    async def test_outcome_counts(self, store):
        await store.upsert_cell("a", 120.0, 1.0, None, outcome="green")
        await store.upsert_cell("b", 90.0, 1.0, None, outcome="green")
        await store.upsert_cell("c", 90.0, 0.3, None, outcome="yellow")
        await store.upsert_cell("d", 90.0, 0.3, 300.0, error="ConfigError: x")
        assert await store.outcome_counts() == {"error": 1, "green": 2, "yellow": 1}

    @pytest.mark.asyncio
    async def test_outcome_counts_empty(self, store):
        assert await store.outcome_counts() == {}


class TestEvents:
    @pytest.mark.asyncio
    async def test_log_and_filter(self, store):
        await store.log_event("mode_transition", "k", {"to_mode": "UPDATE_BRAKE"}, sim_time=1.25)
        await store.log_event("cell_error", "other")
        events = await store.get_recent_events("k")
        assert len(events) == 1
        assert events[0].kind == "mode_transition"
        assert events[0].sim_time == 1.25
        assert events[0].payload == {"to_mode": "UPDATE_BRAKE"}
        assert len(await store.get_recent_events()) == 2

    @pytest.mark.asyncio
    async def test_empty_payload(self, store):
        await store.log_event("cell_error", "k")
        (event,) = await store.get_recent_events("k")
        assert event.payload_json is None
        assert event.payload == {}

    @pytest.mark.asyncio
    async def test_batch_newest_first(self, store):
        await store.log_events("k", [
            ("mode_transition", 0.5, {"to_mode": "UPDATE_BRAKE"}),
            ("mode_transition", 0.9, {"to_mode": "UPDATE_STEER_BRAKE"}),
        ])
        events = await store.get_recent_events("k")
        assert [e.sim_time for e in events] == [0.9, 0.5]
        assert [e.sim_time for e in await store.get_recent_events("k", limit=1)] == [0.9]

    @pytest.mark.asyncio
    async def test_empty_batch(self, store):
        await store.log_events("k", [])
        assert await store.get_recent_events() == []

    @pytest.mark.asyncio
    async def test_clear_events(self, store):
        await store.log_event("mode_transition", "k", {"to_mode": "RETURN"})
        await store.log_event("mode_transition", "other", {"to_mode": "RETURN"})
        await store.clear_events("k")
        assert await store.get_recent_events("k") == []
        assert len(await store.get_recent_events("other")) == 1


class TestNotConnected:
    def test_conn_raises(self, tmp_path):
        with pytest.raises(RuntimeError, match="not connected"):
            ResultStore(tmp_path / "x.sqlite").conn

    @pytest.mark.asyncio
    async def test_closed_after_context(self, tmp_path):
        async with ResultStore(tmp_path / "x.sqlite") as store:
            pass
        with pytest.raises(RuntimeError, match="not connected"):
            store.conn

    @pytest.mark.asyncio
    async def test_close_twice(self, tmp_path):
        store = ResultStore(tmp_path / "x.sqlite")
        await store.connect()
        await store.close()
        await store.close()

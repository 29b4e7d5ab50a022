"""Tests for matrix sweeps."""

import dataclasses

import pytest

from eoam.config import KMH_TO_MPS, MatrixSpec, ScenarioConfig
from eoam.dmm.phase_diagram import DiagramSet
from eoam.sim.scenario import run_scenario
from eoam.sim.sweep import cell_config, run_cell, sweep_matrix
from eoam.store.db import ResultStore

BASE = ScenarioConfig(aro_brake_time=100.0, t_end=1.0)
MATRIX = MatrixSpec(speeds_kmh=[90.0, 55.0], mus=[1.0, 0.7], oncoming=[None, 300.0])


class TestCellConfig:
    def test_overrides(self):
        config = cell_config(BASE, 90.0, 0.7, 300.0, aro_brake_time=2.0)
        assert config.ego_speed == pytest.approx(90.0 * KMH_TO_MPS)
        assert config.mu == 0.7
        assert config.oncoming_enabled
        assert config.oncoming_init_dist == 300.0
        assert config.aro_brake_time == 2.0
        assert config.name == "baseline_90_0.7_300"

    def test_no_oncoming(self):
        config = cell_config(BASE, 55.0, 1.0, None)
        assert not config.oncoming_enabled
        assert config.aro_brake_time == BASE.aro_brake_time

    def test_invalid_mu_rejected(self):
        with pytest.raises(ValueError):
            cell_config(BASE, 55.0, 1.5, None)


class TestRunCell:
    def test_matches_single_run(self, tables):
        config = cell_config(BASE, 55.0, 1.0, None)
        cell = run_cell(config, tables, 55.0, None, keep_trace=True)
        single = run_scenario(config, tables)
        assert cell.outcome is single.outcome
        assert cell.t_final == single.t_final
        assert cell.key == "55|1|none"
        assert cell.trace[0].shape == single.series["x"].shape

    def test_error_becomes_result(self, tables):
        narrow = dataclasses.replace(tables, diagrams=DiagramSet([tables.diagrams.page(1.0)]))
        cell = run_cell(cell_config(BASE, 55.0, 0.3, None), narrow, 55.0, None)
        assert cell.outcome is None
        assert cell.label == "error"
        assert cell.error.startswith("ConfigError")


class TestSweepMatrix:
    @pytest.mark.asyncio
    async def test_results_in_matrix_order(self, tables):
        results = await sweep_matrix(MATRIX, BASE, tables)
        assert [(r.speed_kmh, r.mu, r.oncoming_dist) for r in results] == MATRIX.cells()

    @pytest.mark.asyncio
    async def test_persists_cells_and_events(self, tables, tmp_path):
        async with ResultStore(tmp_path / "sweep.sqlite") as store:
            results = await sweep_matrix(MATRIX, BASE, tables, store=store, manifest_hash="h1")
            rows = await store.list_cells()
            assert {row.cell_key for row in rows} == {r.key for r in results}
            assert all(row.manifest_hash == "h1" for row in rows)
            assert sum((await store.outcome_counts()).values()) == len(MATRIX.cells())

    @pytest.mark.asyncio
    async def test_error_cell_logs_event(self, tables, tmp_path):
        narrow = dataclasses.replace(tables, diagrams=DiagramSet([tables.diagrams.page(1.0)]))
        matrix = MatrixSpec(speeds_kmh=[55.0], mus=[0.3], oncoming=[None])
        async with ResultStore(tmp_path / "sweep.sqlite") as store:
            (result,) = await sweep_matrix(matrix, BASE, narrow, store=store)
            (event,) = await store.get_recent_events(result.key)
            assert event.kind == "cell_error"
            assert event.payload["error"].startswith("ConfigError")
            assert await store.outcome_counts() == {"error": 1}

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_parallel_matches_serial(self, tables):
        serial = await sweep_matrix(MATRIX, BASE, tables)
        parallel = await sweep_matrix(MATRIX, BASE, tables, workers=2)
        assert [r.label for r in parallel] == [r.label for r in serial]
        assert [r.t_final for r in parallel] == [r.t_final for r in serial]

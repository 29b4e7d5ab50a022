"""Tests for run and sweep exports."""

import csv
import json

import numpy as np
import pytest

from eoam.config import MatrixSpec, ScenarioConfig
from eoam.sim.export import (
    PLOT_SETS,
    color_table,
    write_run,
    write_sweep_csv,
    write_traces,
)
from eoam.sim.outcome import Outcome
from eoam.sim.scenario import CHANNELS, run_scenario
from eoam.sim.sweep import CellResult


@pytest.fixture(scope="module")
def result(tables):
    return run_scenario(ScenarioConfig(name="short", aro_brake_time=100.0, t_end=0.5), tables)


def _read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.reader(lines[1:]))


class TestWriteRun:
    def test_files(self, result, tmp_path):
        written = write_run(tmp_path, result, "abc123")
        assert sorted(p.name for p in written) == ["outcome.json", "phase_trace.csv", "timeseries.csv"]

    def test_timeseries_header_and_rows(self, result, tmp_path):
        write_run(tmp_path, result, "abc123")
        manifest, rows = _read_csv(tmp_path / "timeseries.csv")
        assert manifest == "# manifest: abc123"
        header = rows[0]
        assert header[:3] == ["t_s", "x_m", "y_m"]
        assert "f_t_N" in header and "mode" in header
        assert len(header) == len(CHANNELS)
        assert len(rows) - 1 == result.series["t"].size
        assert float(rows[-1][0]) == result.series["t"][-1]

    def test_values_round_trip_exactly(self, result, tmp_path):
        write_run(tmp_path, result, "abc123")
        _, rows = _read_csv(tmp_path / "timeseries.csv")
        x = np.array([float(r[1]) for r in rows[1:]])
        np.testing.assert_array_equal(x, result.series["x"])

    def test_phase_trace(self, result, tmp_path):
        write_run(tmp_path, result, None)
        manifest, rows = _read_csv(tmp_path / "phase_trace.csv")
        assert manifest == "t_s,rel_dist_m,rel_speed_mps,sector"
        assert len(rows) == len(result.phase_trace)

    def test_outcome_json(self, result, tmp_path):
        write_run(tmp_path, result, "abc123")
        payload = json.loads((tmp_path / "outcome.json").read_text())
        assert payload["manifest"] == "abc123"
        assert payload["scenario"] == "short"
        assert payload["outcome"] == result.outcome.value
        assert payload["exit_code"] == result.outcome.exit_code
        assert payload["collision"] is None

    def test_dump_plots(self, result, tmp_path):
        written = write_run(tmp_path, result, "abc123", dump_plots=True)
        assert len(written) == 3 + len(PLOT_SETS)
        _, rows = _read_csv(tmp_path / "plot_gg.csv")
        assert rows[0] == ["t_s", "a_x_mps2", "a_y_mps2", "ellipse_margin"]


def _cell(speed, mu, oncoming, outcome, **kw):
    return CellResult(speed_kmh=speed, mu=mu, oncoming_dist=oncoming, outcome=outcome, **kw)


class TestSweepExports:
    def test_sweep_csv(self, tmp_path):
        results = [
            _cell(120.0, 1.0, None, Outcome.GREEN, end_reason="handback", t_final=6.5, max_mode=5),
            _cell(120.0, 0.7, 300.0, None, error="ConfigError: bad"),
        ]
        path = write_sweep_csv(tmp_path / "sweep.csv", results, "h")
        manifest, rows = _read_csv(path)
        assert manifest == "# manifest: h"
        assert rows[0][:4] == ["speed_kmh", "mu", "oncoming_dist", "outcome"]
        assert rows[1][2:5] == ["none", "green", "handback"]
        assert rows[2][3] == "error"
        assert rows[2][-1] == "ConfigError: bad"

    def test_color_table(self):
        matrix = MatrixSpec(speeds_kmh=[120.0, 55.0], mus=[1.0, 0.3], oncoming=[None, 300.0])
        results = [
            _cell(120.0, 1.0, None, Outcome.GREEN),
            _cell(120.0, 0.3, None, Outcome.YELLOW),
            _cell(120.0, 1.0, 300.0, Outcome.RED),
            _cell(55.0, 0.3, 300.0, Outcome.ORANGE),
        ]
        table = color_table(results, matrix)
        lines = table.splitlines()
        assert "no oncoming" in lines[0] and "oncoming 300 m" in lines[0]
        row_120 = next(line for line in lines if line.startswith("120"))
        assert row_120.split("|")[1].split() == ["G", "Y"]
        assert row_120.split("|")[2].split() == ["R", "."]
        row_55 = next(line for line in lines if line.startswith("55"))
        assert row_55.split("|")[2].split() == [".", "O"]

    def test_traces_only_for_kept(self, tmp_path):
        kept = _cell(90.0, 1.0, None, Outcome.GREEN, trace=(np.array([0.0, 1.0]), np.array([0.0, 0.5])))
        dropped = _cell(55.0, 1.0, None, Outcome.GREEN)
        written = write_traces(tmp_path, [kept, dropped], "h")
        assert [p.name for p in written] == ["trace_90_1_none.csv"]
        _, rows = _read_csv(written[0])
        assert rows == [["x_m", "y_m"], ["0.0", "0.0"], ["1.0", "0.5"]]

"""Tests for the command layer and the eoam entry point."""

import json
from pathlib import Path

import pytest

from eoam.__main__ import main
from eoam.commands import (
    EXIT_DATAERR,
    EXIT_OK,
    EXIT_USAGE,
    RunManifest,
    UsageError,
    cmd_precompute,
    cmd_validate,
)
from eoam.dmm.persistence import load_table_set

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

QUIET_SCENARIO = """\
[scenario]
name = "quiet"
aro_brake_time = 100.0
t_end = 0.5
"""


def _exit_code(argv):
    with pytest.raises(SystemExit) as exc_info:
        main(argv)
    return exc_info.value.code


@pytest.fixture
def quiet_scenario(tmp_path):
    path = tmp_path / "quiet.toml"
    path.write_text(QUIET_SCENARIO)
    return path


class TestManifest:
    def test_hash_ignores_timestamp(self):
        a = RunManifest("run", {"scenario": "s.toml"}, "prov", "out", timestamp=1.0)
        b = RunManifest("run", {"scenario": "s.toml"}, "prov", "out", timestamp=2.0)
        assert a.manifest_hash == b.manifest_hash

    def test_hash_covers_inputs(self):
        a = RunManifest("run", {"scenario": "s.toml"}, "prov", "out")
        assert a.manifest_hash != RunManifest("run", {"scenario": "t.toml"}, "prov", "out").manifest_hash
        assert a.manifest_hash != RunManifest("run", {"scenario": "s.toml"}, "prov", "elsewhere").manifest_hash

    def test_write(self, tmp_path):
        manifest = RunManifest("validate", {}, "prov", str(tmp_path / "o"))
        data = json.loads(manifest.write().read_text())
        assert data["manifest_hash"] == manifest.manifest_hash
        assert data["command"] == "validate"


class TestPrecompute:
    def test_empty_grid_is_usage_error(self, tmp_path):
        grid = tmp_path / "grid.toml"
        grid.write_text("[grid]\nspeeds = []\n")
        with pytest.raises(UsageError, match="no speeds"):
            cmd_precompute(str(CONFIGS / "vehicle.toml"), str(grid), str(tmp_path / "tables"))

    def test_small_grid_round_trip(self, tmp_path):
        grid = tmp_path / "grid.toml"
        grid.write_text("[grid]\nspeeds = [12.0, 20.0, 28.0]\nmus = [1.0]\noptimize = false\nn_samples = 201\n")
        out = tmp_path / "tables"
        assert cmd_precompute(str(CONFIGS / "vehicle.toml"), str(grid), str(out)) == EXIT_OK
        assert (out / "manifest.json").is_file()
        tables = load_table_set(out)
        assert tables.diagrams.mus == [1.0]
        assert list(tables.table.speeds) == [12.0, 20.0, 28.0]
        assert cmd_validate(str(out), samples=200)[0] == EXIT_OK


class TestValidate:
    def test_clean_tables(self, tables_dir):
        code, problems = cmd_validate(str(tables_dir), samples=500)
        assert code == EXIT_OK
        assert problems == []


class TestMain:
    def test_missing_subcommand(self, tmp_path):
        assert _exit_code(["--log-dir", str(tmp_path)]) == EXIT_USAGE

    def test_unknown_option(self, tmp_path):
        assert _exit_code(["--log-dir", str(tmp_path), "run", "--bogus"]) == EXIT_USAGE

    def test_empty_grid_exit_code(self, tmp_path):
        grid = tmp_path / "grid.toml"
        grid.write_text("[grid]\nmus = []\n")
        argv = [
            "--log-dir", str(tmp_path / "logs"), "precompute",
            "--vehicle", str(CONFIGS / "vehicle.toml"), "--grid", str(grid), "--out", str(tmp_path / "t"),
        ]
        assert _exit_code(argv) == EXIT_USAGE

    def test_missing_config_is_data_error(self, tmp_path, tables_dir):
        argv = [
            "--log-dir", str(tmp_path / "logs"), "run",
            "--scenario", str(tmp_path / "absent.toml"), "--tables", str(tables_dir), "--out", str(tmp_path / "o"),
        ]
        assert _exit_code(argv) == EXIT_DATAERR

    def test_missing_tables_is_data_error(self, tmp_path):
        argv = ["--log-dir", str(tmp_path / "logs"), "validate", "--tables", str(tmp_path / "none")]
        assert _exit_code(argv) == EXIT_DATAERR

    def test_validate(self, tmp_path, tables_dir, capsys):
        argv = ["--log-dir", str(tmp_path / "logs"), "validate", "--tables", str(tables_dir), "--samples", "200"]
        assert _exit_code(argv) == EXIT_OK
        assert "validation passed" in capsys.readouterr().out
        assert (tmp_path / "logs" / "eoam.jsonl").is_file()

    def test_run_writes_outputs(self, tmp_path, tables_dir, quiet_scenario):
        out = tmp_path / "run"
        argv = [
            "--log-dir", str(tmp_path / "logs"), "run",
            "--scenario", str(quiet_scenario), "--tables", str(tables_dir), "--out", str(out),
        ]
        assert _exit_code(argv) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        first_line = (out / "timeseries.csv").read_text().splitlines()[0]
        assert first_line == f"# manifest: {manifest['manifest_hash']}"
        assert json.loads((out / "outcome.json").read_text())["outcome"] == "green"

    def test_sweep(self, tmp_path, tables_dir, quiet_scenario):
        matrix = tmp_path / "matrix.toml"
        matrix.write_text(
            f'[matrix]\nbase_scenario = "{quiet_scenario}"\n'
            'speeds_kmh = [90.0, 55.0]\nmus = [1.0]\noncoming = ["none", 300.0]\n'
        )
        out = tmp_path / "sweep"
        argv = [
            "--log-dir", str(tmp_path / "logs"), "sweep", "--parallel", "1",
            "--matrix", str(matrix), "--tables", str(tables_dir), "--out", str(out),
        ]
        assert _exit_code(argv) == EXIT_OK
        assert (out / "sweep.sqlite").is_file()
        assert len((out / "sweep.csv").read_text().splitlines()) == 1 + 1 + 4
        assert "oncoming 300 m" in (out / "sweep_table.txt").read_text()

    def test_bad_log_level_is_usage_error(self, tmp_path):
        assert _exit_code(["--log-dir", str(tmp_path), "--log-level", "loud", "validate"]) == EXIT_USAGE

    def test_bad_env_setting_is_usage_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EOAM_WORKERS", "-2")
        assert _exit_code(["--log-dir", str(tmp_path), "validate"]) == EXIT_USAGE

"""Tests for settings and the TOML configuration loaders."""

import math
from pathlib import Path

import pytest

from eoam.config import (
    KMH_TO_MPS,
    ConfigError,
    EoamSettings,
    GridSpec,
    MatrixSpec,
    ScenarioConfig,
    load_grid,
    load_matrix,
    load_scenario,
    load_vehicle,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TestShippedConfigs:
    def test_vehicle(self):
        params = load_vehicle(CONFIGS / "vehicle.toml")
        assert params.m == 1650.0
        assert params.alpha_star == pytest.approx(math.radians(5.0))
        assert params.f_t_min_brk == pytest.approx(-1650.0 * 9.81)

    def test_grid(self):
        grid = load_grid(CONFIGS / "grid.toml")
        assert grid.speeds[0] == 12.0 and grid.speeds[-1] == 46.0
        assert grid.ttc_thresholds == {1.0: 2.5, 0.7: 2.5, 0.3: 5.0, 0.1: 20.0}
        assert grid.optimizer.n_nodes == 61

    def test_scenario_converts_kmh(self):
        config = load_scenario(CONFIGS / "scenario_baseline.toml")
        assert config.ego_speed == pytest.approx(120.0 * KMH_TO_MPS)
        assert config.aro_init_speed == pytest.approx(60.0 * KMH_TO_MPS)
        assert config.parked_cars_enabled
        assert config.sensor.range == 150.0
        assert config.runtime.t_max == 8.0
        assert config.sensor_every == 10

    def test_matrix_resolves_base_scenario(self):
        matrix = load_matrix(CONFIGS / "matrix.toml")
        assert Path(matrix.base_scenario).is_file()
        assert matrix.oncoming == [None, 500.0, 300.0, 400.0]
        assert len(matrix.cells()) == 64
        assert matrix.cells()[0] == (165.0, 1.0, None)


class TestLoaderErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="file not found"):
            load_vehicle(tmp_path / "nope.toml")

    def test_syntax_error_keeps_position(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[vehicle]\nm = = 3\n")
        with pytest.raises(ConfigError, match="TOML syntax error.*line 2") as exc_info:
            load_vehicle(path)
        assert exc_info.value.source == str(path)

    def test_out_of_range_value(self, tmp_path):
        path = tmp_path / "scenario.toml"
        path.write_text("[scenario]\nmu = 1.5\n")
        with pytest.raises(ConfigError, match="mu"):
            load_scenario(path)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "vehicle.toml"
        path.write_text("[vehicle]\nmass = 1500.0\n")
        with pytest.raises(ConfigError, match="mass"):
            load_vehicle(path)

    def test_speed_given_twice(self, tmp_path):
        path = tmp_path / "scenario.toml"
        path.write_text("[scenario]\nego_speed = 30.0\nego_speed_kmh = 108.0\n")
        with pytest.raises(ConfigError, match="either ego_speed or ego_speed_kmh"):
            load_scenario(path)

    def test_section_must_be_table(self, tmp_path):
        path = tmp_path / "grid.toml"
        path.write_text("grid = 3\n")
        with pytest.raises(ConfigError, match=r"\[grid\] must be a table"):
            load_grid(path)

    def test_runtime_table_merged(self, tmp_path):
        path = tmp_path / "scenario.toml"
        path.write_text("[scenario]\nname = \"x\"\n\n[runtime]\nk_off = 0.2\n")
        assert load_scenario(path).runtime.k_off == 0.2


class TestModels:
    def test_grid_rejects_unsorted_speeds(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            GridSpec(speeds=[20.0, 10.0])

    def test_grid_rejects_duplicate_mu(self):
        with pytest.raises(ValueError, match="unique"):
            GridSpec(mus=[1.0, 1.0])

    def test_grid_empty(self):
        assert GridSpec(speeds=[]).is_empty

    def test_ttc_interpolates_between_pages(self):
        grid = GridSpec()
        assert grid.ttc_threshold(0.5) == pytest.approx(3.75)
        assert grid.ttc_threshold(0.05) == pytest.approx(20.0)

    def test_scenario_timing(self):
        with pytest.raises(ValueError, match="sensor_period"):
            ScenarioConfig(dt=0.01, sensor_period=0.001)

    def test_matrix_none_strings(self):
        matrix = MatrixSpec(oncoming=["None", 300.0])
        assert matrix.oncoming == [None, 300.0]

    def test_matrix_cells_oncoming_major(self):
        matrix = MatrixSpec(speeds_kmh=[120.0, 90.0], mus=[1.0], oncoming=[None, 300.0])
        assert matrix.cells() == [
            (120.0, 1.0, None), (90.0, 1.0, None), (120.0, 1.0, 300.0), (90.0, 1.0, 300.0),
        ]


class TestSettings:
    def test_defaults(self):
        config = EoamSettings()
        assert config.log_level == "INFO"
        assert config.tables_dir == "tables"

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("EOAM_WORKERS", "3")
        monkeypatch.setenv("EOAM_LOG_LEVEL", "DEBUG")
        config = EoamSettings()
        assert config.worker_count() == 3
        assert config.log_level == "DEBUG"

    def test_zero_workers_means_all_cores(self, monkeypatch):
        monkeypatch.delenv("EOAM_WORKERS", raising=False)
        assert EoamSettings().worker_count() >= 1

    def test_log_level_case_insensitive(self, monkeypatch):
        monkeypatch.setenv("EOAM_LOG_LEVEL", "warning")
        assert EoamSettings().log_level == "WARNING"

    def test_bad_env_rejected(self, monkeypatch):
        monkeypatch.setenv("EOAM_LOG_LEVEL", "LOUD")
        with pytest.raises(ValueError):
            EoamSettings()
        monkeypatch.setenv("EOAM_LOG_LEVEL", "INFO")
        monkeypatch.setenv("EOAM_WORKERS", "-1")
        with pytest.raises(ValueError):
            EoamSettings()

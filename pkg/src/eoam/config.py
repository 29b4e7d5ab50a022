"""Process settings (EOAM_ prefix) and the TOML-backed file configurations."""

from __future__ import annotations

import math
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from eoam.vehicle.params import VehicleParams

KMH_TO_MPS = 1.0 / 3.6

M = TypeVar("M", bound=BaseModel)


class ConfigError(Exception):
    """Raised for any unreadable or invalid configuration file."""

    def __init__(self, source: str | os.PathLike[str], message: str) -> None:
        self.source = str(source)
        self.message = message
        super().__init__(f"{self.source}: {message}")


class EoamSettings(BaseSettings):
    log_dir: str = "logs"
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    workers: int = Field(default=0, ge=0)  # 0 = one per core
    vehicle_config: str = "configs/vehicle.toml"
    grid_config: str = "configs/grid.toml"
    scenario_config: str = "configs/scenario_baseline.toml"
    matrix_config: str = "configs/matrix.toml"
    tables_dir: str = "tables"
    out_dir: str = "out"
    result_db_name: str = "sweep.sqlite"

    model_config = {"env_prefix": "EOAM_"}

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_level(cls, value: Any) -> Any:
        return value.upper() if isinstance(value, str) else value

    def worker_count(self) -> int:
        """Configured worker count, defaulting to the available cores."""
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


class OptimizerSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_nodes: int = Field(default=61, ge=3)
    substeps: int = Field(default=2, ge=1)
    audit_refine: int = Field(default=8, ge=2)
    max_iter: int = Field(default=60, ge=1)
    ftol: float = Field(default=1e-7, gt=0)
    audit_tol: float = Field(default=1e-4, gt=0)
    min_speed: float = Field(default=5.0, gt=0)
    t_f_scale_bounds: tuple[float, float] = (0.5, 2.0)
    terminal_heading_tol: float = Field(default=0.01, gt=0)


def _default_speeds() -> list[float]:
    return [float(v) for v in range(12, 47, 2)]


def _default_ttc() -> dict[float, float]:
    return {1.0: 2.5, 0.7: 2.5, 0.3: 5.0, 0.1: 20.0}


class GridSpec(BaseModel):
    """Offline grid: speeds (m/s) × μ pages, plus the diagram build policy."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    speeds: list[float] = Field(default_factory=_default_speeds)
    mus: list[float] = Field(default_factory=lambda: [1.0, 0.7, 0.3, 0.1])
    y_f: float = Field(default=3.5, gt=0)
    lane_change_ref_time: float = Field(default=2.5, gt=0)
    n_samples: int = Field(default=401, ge=50)
    optimize: bool = True
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    buffer: float = Field(default=1.15, ge=1.0)
    ttc_thresholds: dict[float, float] = Field(default_factory=_default_ttc)
    dx_step: float = Field(default=1.0, gt=0)
    wid_obj: float = Field(default=2.0, gt=0)

    @field_validator("speeds")
    @classmethod
    def _speeds_increasing(cls, v: list[float]) -> list[float]:
        if any(s <= 0 for s in v):
            raise ValueError("speeds must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("speeds must be strictly increasing")
        return v

    @field_validator("mus")
    @classmethod
    def _mus_valid(cls, v: list[float]) -> list[float]:
        if any(not 0 < m <= 1 for m in v):
            raise ValueError("mu pages must lie in (0, 1]")
        if len(set(v)) != len(v):
            raise ValueError("mu pages must be unique")
        return v

    @field_validator("ttc_thresholds")
    @classmethod
    def _ttc_positive(cls, v: dict[float, float]) -> dict[float, float]:
        if not v:
            raise ValueError("at least one TTC threshold is required")
        if any(t <= 0 for t in v.values()):
            raise ValueError("TTC thresholds must be positive")
        return v

    @property
    def is_empty(self) -> bool:
        return not self.speeds or not self.mus

    def lane_change_time(self, mu: float) -> float:
        """Quintic duration on a μ page: t_ref/√μ keeps peak demand a fixed share of μ·g."""
        return self.lane_change_ref_time / math.sqrt(mu)

    def ttc_threshold(self, mu: float) -> float:
        """TTC threshold for μ, linear between configured pages and held beyond them."""
        keys = sorted(self.ttc_thresholds)
        return float(np.interp(mu, keys, [self.ttc_thresholds[k] for k in keys]))


class SensorSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    range: float = Field(default=150.0, gt=0)
    half_angle: float = Field(default=math.radians(20.0), gt=0, lt=math.pi / 2)


class RuntimeGains(BaseModel):
    """Controller gains and runtime thresholds (tuning defaults)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k_off: float = 0.05
    k_la: float = 0.1
    l_la: float = 15.0
    k_yd: float = 0.15
    k_us: float = 0.0015
    delta_rate: float = Field(default=0.8, gt=0)
    accel_kp: float = 0.8
    accel_ki: float = 0.4
    accel_kd: float = 0.02
    speed_kp: float = 1.2
    speed_ki: float = 0.3
    speed_kd: float = 0.0
    pnr_fraction: float = Field(default=0.3, gt=0, lt=1)
    t_max: float = Field(default=8.0, gt=0)
    arrival_tol: float = Field(default=0.25, gt=0)
    clearing_tol: float = Field(default=0.5, ge=0)
    progress_slack: float = Field(default=15.0, ge=0)
    ax_filter_tau: float = Field(default=0.05, gt=0)


class ScenarioConfig(BaseModel):
    """One closed-loop scenario; speeds are m/s (``*_kmh`` keys convert on load)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "baseline"
    ego_speed: float = Field(default=120.0 * KMH_TO_MPS, gt=0)
    mu: float = Field(default=1.0, gt=0, le=1)
    lane_width: float = Field(default=3.5, gt=0)

    aro_init_dist: float = Field(default=120.0, gt=0)
    aro_init_speed: float = Field(default=60.0 * KMH_TO_MPS, ge=0)
    aro_brake_time: float = Field(default=1.0, ge=0)
    aro_decel: float = Field(default=6.0, gt=0)
    aro_length: float = Field(default=5.1, gt=0)
    aro_width: float = Field(default=2.0, gt=0)

    oncoming_enabled: bool = False
    oncoming_init_dist: float = Field(default=300.0, gt=0)
    oncoming_speed: float = Field(default=20.0, ge=0)
    oncoming_length: float = Field(default=4.8, gt=0)
    oncoming_width: float = Field(default=1.9, gt=0)

    parked_cars_enabled: bool = False
    parked_spacing: float = Field(default=30.0, gt=0)
    parked_offset: float = Field(default=1.5, ge=0)
    parked_length: float = Field(default=4.5, gt=0)
    parked_width: float = Field(default=1.8, gt=0)
    parked_count: int = Field(default=40, ge=0)

    sensor: SensorSpec = Field(default_factory=SensorSpec)
    dt: float = Field(default=0.001, gt=0)
    t_end: float = Field(default=40.0, gt=0)
    sensor_period: float = Field(default=0.01, gt=0)
    record_every: int = Field(default=10, ge=1)
    seed: int = 0
    eoam_enabled: bool = True
    runtime: RuntimeGains = Field(default_factory=RuntimeGains)

    @model_validator(mode="before")
    @classmethod
    def _convert_kmh(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        for key in ("ego_speed", "aro_init_speed", "oncoming_speed"):
            kmh_key = f"{key}_kmh"
            if kmh_key in data:
                if key in data:
                    raise ValueError(f"give either {key} or {kmh_key}, not both")
                data[key] = float(data.pop(kmh_key)) * KMH_TO_MPS
        return data

    @model_validator(mode="after")
    def _check_timing(self) -> ScenarioConfig:
        if self.sensor_period < self.dt:
            raise ValueError("sensor_period must not be shorter than dt")
        if self.t_end <= self.dt:
            raise ValueError("t_end must exceed dt")
        return self

    @property
    def sensor_every(self) -> int:
        """Sensor period expressed in control ticks."""
        return max(1, round(self.sensor_period / self.dt))


class MatrixSpec(BaseModel):
    """Sweep matrix: speeds (km/h) × μ × oncoming distance (None = no oncoming)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base_scenario: str = "configs/scenario_baseline.toml"
    speeds_kmh: list[float] = Field(default_factory=lambda: [165.0, 120.0, 90.0, 55.0])
    mus: list[float] = Field(default_factory=lambda: [1.0, 0.7, 0.3, 0.1])
    oncoming: list[float | None] = Field(default_factory=lambda: [None, 500.0, 300.0, 400.0])
    aro_brake_time: float | None = Field(default=None, ge=0)

    @field_validator("oncoming", mode="before")
    @classmethod
    def _none_strings(cls, v: Any) -> Any:
        if isinstance(v, list):
            return [None if isinstance(item, str) and item.lower() == "none" else item for item in v]
        return v

    @field_validator("mus")
    @classmethod
    def _mus_valid(cls, v: list[float]) -> list[float]:
        if any(not 0 < m <= 1 for m in v):
            raise ValueError("mu values must lie in (0, 1]")
        return v

    def cells(self) -> list[tuple[float, float, float | None]]:
        """All (speed km/h, μ, oncoming distance) cells in table order."""
        return [(s, m, o) for o in self.oncoming for s in self.speeds_kmh for m in self.mus]


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def load_toml(path: str | os.PathLike[str]) -> dict[str, Any]:
    """Parse a TOML file; syntax errors keep the parser's line/column diagnostic."""
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(path, "file not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(path, f"TOML syntax error: {exc}") from exc


def validate_model(model: type[M], data: Any, source: str | os.PathLike[str]) -> M:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(source, _format_validation(exc)) from exc


def _section(data: dict[str, Any], name: str, source: str | os.PathLike[str]) -> dict[str, Any]:
    section = data.get(name, data)
    if not isinstance(section, dict):
        raise ConfigError(source, f"[{name}] must be a table")
    return section


def load_vehicle(path: str | os.PathLike[str]) -> VehicleParams:
    return validate_model(VehicleParams, _section(load_toml(path), "vehicle", path), path)


def load_grid(path: str | os.PathLike[str]) -> GridSpec:
    return validate_model(GridSpec, _section(load_toml(path), "grid", path), path)


def load_scenario(path: str | os.PathLike[str]) -> ScenarioConfig:
    data = load_toml(path)
    scenario = dict(_section(data, "scenario", path))
    if "runtime" in data and "runtime" not in scenario:
        scenario["runtime"] = data["runtime"]
    return validate_model(ScenarioConfig, scenario, path)


def load_matrix(path: str | os.PathLike[str]) -> MatrixSpec:
    spec = validate_model(MatrixSpec, _section(load_toml(path), "matrix", path), path)
    base = Path(spec.base_scenario)
    if not base.is_absolute():
        resolved = Path(path).parent / base
        if not base.exists() and resolved.exists():
            spec = spec.model_copy(update={"base_scenario": str(resolved)})
    return spec

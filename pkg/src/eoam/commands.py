"""Command implementations behind the ``eoam`` entry point.

Each ``cmd_*`` returns a process exit code. Configuration and artifact
errors propagate as exceptions; ``__main__`` maps them to exit codes.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import structlog

from eoam import __version__
from eoam.config import (
    GridSpec,
    load_grid,
    load_matrix,
    load_scenario,
    load_vehicle,
)
from eoam.dmm.lookup import build_lookup_tables
from eoam.dmm.persistence import TableSet, load_table_set, save_table_set
from eoam.dmm.phase_diagram import DiagramSet, build_phase_diagram
from eoam.dmm.provenance import digest, provenance_hash
from eoam.dmm.validation import PARTITION_SAMPLES, validate_table_set
from eoam.sim.export import color_table, write_run, write_sweep_csv, write_traces
from eoam.sim.scenario import run_scenario
from eoam.sim.sweep import sweep_matrix
from eoam.store.db import ResultStore
from eoam.trajectory.grid import GridPoint, PointStatus, generate_grid
from eoam.vehicle.params import VehicleParams

log = structlog.get_logger()

EXIT_OK = 0
EXIT_USAGE = 64
EXIT_DATAERR = 65
MANIFEST_FILE = "manifest.json"


class UsageError(Exception):
    """Command invoked with inputs that cannot describe any work."""


@dataclass
class RunManifest:
    command: str
    config_paths: dict[str, str]
    provenance: str
    out_dir: str
    tool_version: str = __version__
    timestamp: float = field(default_factory=time.time)

    @property
    def manifest_hash(self) -> str:
        """Hash over everything except the timestamp."""
        payload = asdict(self)
        payload.pop("timestamp")
        return digest(payload)

    def write(self) -> Path:
        path = Path(self.out_dir) / MANIFEST_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({**asdict(self), "manifest_hash": self.manifest_hash}, indent=2) + "\n")
        return path


def build_table_set(points: list[GridPoint], params: VehicleParams, grid: GridSpec) -> TableSet:
    """Lookup table plus one phase-diagram page per μ from solved grid points."""
    table = build_lookup_tables(points, grid)
    diagrams = DiagramSet([build_phase_diagram(points, float(mu), params, grid) for mu in table.mus])
    return TableSet(
        table=table,
        diagrams=diagrams,
        params=params,
        grid=grid,
        provenance=provenance_hash(params, grid),
    )


def cmd_precompute(vehicle_path: str, grid_path: str, out_dir: str, workers: int = 1) -> int:
    params = load_vehicle(vehicle_path)
    grid = load_grid(grid_path)
    if grid.is_empty:
        raise UsageError(f"{grid_path}: grid has no speeds or no mu values")

    points = generate_grid(grid, params, workers=workers)
    failed = [p for p in points if p.status is PointStatus.FAILED]
    for p in failed:
        log.warning("grid_point_reported_failed", speed=p.speed, mu=p.mu, message=p.message)
    if len(failed) == len(points):
        log.error("precompute_no_points", points=len(points))
        return EXIT_DATAERR

    tables = build_table_set(points, params, grid)
    manifest = RunManifest(
        command="precompute",
        config_paths={"vehicle": str(vehicle_path), "grid": str(grid_path)},
        provenance=tables.provenance,
        out_dir=str(out_dir),
    )
    save_table_set(out_dir, tables, manifest.manifest_hash)
    manifest.write()
    counts: dict[str, int] = {}
    for p in points:
        counts[p.status.value] = counts.get(p.status.value, 0) + 1
    log.info("precompute_finished", out_dir=str(out_dir), pages=len(tables.diagrams), **counts)
    return EXIT_OK


def cmd_run(scenario_path: str, tables_dir: str, out_dir: str, dump_plots: bool = False) -> int:
    """Run one scenario; the exit code encodes the outcome class."""
    config = load_scenario(scenario_path)
    tables = load_table_set(tables_dir)
    result = run_scenario(config, tables)
    manifest = RunManifest(
        command="run",
        config_paths={"scenario": str(scenario_path), "tables": str(tables_dir)},
        provenance=tables.provenance,
        out_dir=str(out_dir),
    )
    write_run(out_dir, result, manifest.manifest_hash, dump_plots=dump_plots)
    manifest.write()
    return result.outcome.exit_code


async def _sweep(
    matrix_path: str, tables_dir: str, out_dir: str, workers: int, traces: bool, db_name: str,
) -> int:
    matrix = load_matrix(matrix_path)
    base = load_scenario(matrix.base_scenario)
    tables = load_table_set(tables_dir)
    if not matrix.cells():
        raise UsageError(f"{matrix_path}: matrix has no cells")
    manifest = RunManifest(
        command="sweep",
        config_paths={"matrix": str(matrix_path), "scenario": matrix.base_scenario, "tables": str(tables_dir)},
        provenance=tables.provenance,
        out_dir=str(out_dir),
    )
    out = Path(out_dir)
    async with ResultStore(out / db_name) as store:
        results = await sweep_matrix(
            matrix, base, tables,
            workers=workers,
            store=store,
            keep_traces=traces,
            manifest_hash=manifest.manifest_hash,
        )
        log.info("sweep_stored", path=str(store.path), **await store.outcome_counts())

    write_sweep_csv(out / "sweep.csv", results, manifest.manifest_hash)
    (out / "sweep_table.txt").write_text(color_table(results, matrix))
    if traces:
        write_traces(out / "traces", results, manifest.manifest_hash)
    manifest.write()
    if all(r.error for r in results):
        return EXIT_DATAERR
    return EXIT_OK


def cmd_sweep(
    matrix_path: str,
    tables_dir: str,
    out_dir: str,
    workers: int = 1,
    traces: bool = False,
    db_name: str = "sweep.sqlite",
) -> int:
    return asyncio.run(_sweep(matrix_path, tables_dir, out_dir, workers, traces, db_name))


def cmd_validate(tables_dir: str, samples: int = PARTITION_SAMPLES, seed: int = 0) -> tuple[int, list[str]]:
    """Re-check persisted artifacts; returns the exit code and the violations found."""
    tables = load_table_set(tables_dir)
    problems = validate_table_set(tables, samples, seed)
    for problem in problems:
        log.error("validation_failed", problem=problem)
    return (EXIT_DATAERR if problems else EXIT_OK), problems

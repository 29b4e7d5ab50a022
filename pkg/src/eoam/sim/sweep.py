"""Scenario matrix sweep: speed × μ × oncoming configuration.

Cells run in a process pool that receives the read-only table set once
per worker. Results come back in matrix order whatever the pool does, so
a parallel sweep produces the same grid as a serial one.
"""

from __future__ import annotations

import asyncio
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
import structlog

from eoam.config import KMH_TO_MPS, MatrixSpec, ScenarioConfig
from eoam.dmm.persistence import TableSet
from eoam.runtime.supervisor import ModeChange
from eoam.sim.outcome import Outcome
from eoam.sim.scenario import run_scenario
from eoam.store.db import ResultStore
from eoam.store.models import cell_key

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]


@dataclass
class CellResult:
    speed_kmh: float
    mu: float
    oncoming_dist: float | None
    outcome: Outcome | None
    end_reason: str | None = None
    t_final: float | None = None
    max_mode: int = 0
    limit_braking_commanded: bool = False
    return_completed: bool = False
    transitions: list[ModeChange] = field(default_factory=list)
    audit: list[str] = field(default_factory=list)
    error: str | None = None
    trace: tuple[FloatArray, FloatArray] | None = None  # (x, y)

    @property
    def key(self) -> str:
        return cell_key(self.speed_kmh, self.mu, self.oncoming_dist)

    @property
    def label(self) -> str:
        return self.outcome.value if self.outcome is not None else "error"


def cell_config(
    base: ScenarioConfig,
    speed_kmh: float,
    mu: float,
    oncoming_dist: float | None,
    aro_brake_time: float | None = None,
) -> ScenarioConfig:
    """Base scenario with one matrix cell's overrides, re-validated."""
    data: dict[str, Any] = base.model_dump()
    data.update(
        name=f"{base.name}_{cell_key(speed_kmh, mu, oncoming_dist).replace('|', '_')}",
        ego_speed=speed_kmh * KMH_TO_MPS,
        mu=mu,
        oncoming_enabled=oncoming_dist is not None,
    )
    if oncoming_dist is not None:
        data["oncoming_init_dist"] = oncoming_dist
    if aro_brake_time is not None:
        data["aro_brake_time"] = aro_brake_time
    return ScenarioConfig.model_validate(data)


def run_cell(
    config: ScenarioConfig,
    tables: TableSet,
    speed_kmh: float,
    oncoming_dist: float | None,
    keep_trace: bool = False,
) -> CellResult:
    """One cell; any exception becomes an error result instead of aborting the sweep."""
    try:
        result = run_scenario(config, tables)
    except Exception as exc:
        log.error("cell_failed", scenario=config.name, error=str(exc))
        return CellResult(speed_kmh, config.mu, oncoming_dist, None, error=f"{type(exc).__name__}: {exc}")
    trace = (result.series["x"].copy(), result.series["y"].copy()) if keep_trace else None
    return CellResult(
        speed_kmh=speed_kmh,
        mu=config.mu,
        oncoming_dist=oncoming_dist,
        outcome=result.outcome,
        end_reason=result.end_reason,
        t_final=result.t_final,
        max_mode=result.max_mode_reached,
        limit_braking_commanded=result.record.limit_braking_commanded,
        return_completed=result.record.return_completed,
        transitions=result.transitions,
        audit=result.audit,
        trace=trace,
    )


_worker_tables: TableSet | None = None


def _init_worker(tables: TableSet) -> None:
    global _worker_tables
    _worker_tables = tables


def _run_in_worker(
    config: ScenarioConfig, speed_kmh: float, oncoming_dist: float | None, keep_trace: bool,
) -> CellResult:
    assert _worker_tables is not None, "worker not initialised"
    return run_cell(config, _worker_tables, speed_kmh, oncoming_dist, keep_trace)


async def _persist(store: ResultStore, results: list[CellResult], manifest_hash: str | None) -> None:
    for r in results:
        await store.clear_events(r.key)
        await store.upsert_cell(
            r.key, r.speed_kmh, r.mu, r.oncoming_dist,
            outcome=r.outcome.value if r.outcome else None,
            end_reason=r.end_reason,
            t_final=r.t_final,
            max_mode=r.max_mode,
            error=r.error,
            manifest_hash=manifest_hash,
        )
        events = [
            ("mode_transition", change.t, {
                "from_mode": change.from_mode.name,
                "to_mode": change.to_mode.name,
                "trigger": change.trigger,
            })
            for change in r.transitions
        ]
        if r.audit:
            events.append(("audit_failed", None, {"outcome": r.label, "problems": r.audit}))
        if r.error:
            events.append(("cell_error", None, {"error": r.error}))
        await store.log_events(r.key, events)


async def sweep_matrix(
    matrix: MatrixSpec,
    base: ScenarioConfig,
    tables: TableSet,
    *,
    workers: int = 1,
    store: ResultStore | None = None,
    keep_traces: bool = False,
    manifest_hash: str | None = None,
) -> list[CellResult]:
    """Run every matrix cell; returns results in ``matrix.cells()`` order."""
    jobs = [
        (cell_config(base, speed, mu, oncoming, matrix.aro_brake_time), speed, oncoming)
        for speed, mu, oncoming in matrix.cells()
    ]
    log.info("sweep_started", cells=len(jobs), workers=workers)

    if workers > 1 and len(jobs) > 1:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(tables,)) as pool:
            results = list(await asyncio.gather(*(
                loop.run_in_executor(pool, _run_in_worker, cfg, speed, oncoming, keep_traces)
                for cfg, speed, oncoming in jobs
            )))
    else:
        results = [run_cell(cfg, tables, speed, oncoming, keep_traces) for cfg, speed, oncoming in jobs]

    if store is not None:
        await _persist(store, results, manifest_hash)

    counts: dict[str, int] = {}
    for r in results:
        counts[r.label] = counts.get(r.label, 0) + 1
    log.info("sweep_finished", cells=len(results), audit_failed=sum(1 for r in results if r.audit), **counts)
    return results

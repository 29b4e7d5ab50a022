"""Invariant checks over a loaded table set.

Each check returns a list of human-readable violations; an empty list
means the artifacts pass.
"""

from __future__ import annotations

import math

import numpy as np
import structlog

from .lookup import PLANES, LookupTable3D
from .persistence import TableSet
from .phase_diagram import CurveMonotonicityError, PhaseDiagram, Sector, _check_increasing

log = structlog.get_logger()

PARTITION_SAMPLES = 100_000


def check_axes(table: LookupTable3D, diagrams: list[PhaseDiagram]) -> list[str]:
    problems = []
    for name in ("speeds", "dx", "mus"):
        axis = getattr(table, name)
        if not np.all(np.diff(axis) > 0):
            problems.append(f"table axis {name} is not strictly increasing")
    for p in PLANES:
        if not np.all(np.isfinite(table.planes[p])):
            problems.append(f"table plane {p} holds non-finite values")
    for d in diagrams:
        if not np.all(np.diff(d.speeds) > 0):
            problems.append(f"diagram mu={d.mu:g}: speed axis is not strictly increasing")
    if [d.mu for d in diagrams] != [float(m) for m in table.mus]:
        problems.append("diagram pages do not match the table mu axis")
    return problems


def check_ttc(tables: TableSet) -> list[str]:
    problems = []
    for d in tables.diagrams:
        expected = tables.grid.ttc_threshold(d.mu)
        if not math.isclose(d.ttc_threshold, expected, rel_tol=0, abs_tol=1e-12):
            problems.append(f"diagram mu={d.mu:g}: TTC threshold {d.ttc_threshold} != {expected}")
    return problems


def check_curves(diagram: PhaseDiagram) -> list[str]:
    problems = []
    if diagram.buffer < 1.0:
        problems.append(f"diagram mu={diagram.mu:g}: buffer {diagram.buffer} < 1")
    finite = np.isfinite(diagram.clear_subopt)
    if np.any(diagram.stop_buffered < diagram.stop):
        problems.append(f"diagram mu={diagram.mu:g}: buffered stop curve below the stop curve")
    if np.any(diagram.clear_buffered[finite] < diagram.clear_subopt[finite]):
        problems.append(f"diagram mu={diagram.mu:g}: buffered clear curve below the clear curve")
    for name, values, strict in (
        ("clear_subopt", diagram.clear_subopt, False),
        ("clear_const", diagram.clear_const, True),
        ("stop", diagram.stop, True),
    ):
        try:
            _check_increasing(name, diagram.mu, diagram.speeds, values, strict=strict)
        except CurveMonotonicityError as exc:
            problems.append(str(exc))
    return problems


def _expected_sector(d: float, S: float, Sb: float, C: float, Cb: float, T: float) -> list[Sector]:
    """Every sector whose defining region contains (d, v); exactly one for a valid page."""
    guard = Sb if math.isinf(Cb) else max(Sb, Cb)
    regions = {
        Sector.G: d >= guard and d >= T,
        Sector.E: d >= guard and d < T,
        Sector.C: Sb <= d < guard,
        Sector.D: S <= d < Sb,
        Sector.B: Cb <= d < S,
        Sector.F: C <= d < min(S, Cb),
        Sector.A: d < min(S, C),
    }
    return [s for s, inside in regions.items() if inside]


def check_partition(diagram: PhaseDiagram, samples: int = PARTITION_SAMPLES, seed: int = 0) -> list[str]:
    """Random (rel_dist, rel_speed) points land in exactly one sector, the classified one."""
    rng = np.random.default_rng(seed)
    v_max = float(diagram.speeds[-1]) * 1.1
    top = diagram.curves_at(v_max)
    finite = [x for x in (top.stop_buffered, top.clear_buffered, top.ttc_line) if math.isfinite(x)]
    d_max = 1.2 * max(finite)
    unbuffered = diagram.with_buffer(1.0)

    vs = rng.uniform(0.0, v_max, samples)
    ds = rng.uniform(0.0, d_max, samples)
    problems = []
    for d, v in zip(ds.tolist(), vs.tolist()):
        got = diagram.classify(d, v)
        if v > 0:
            c = diagram.curves_at(v)
            regions = _expected_sector(d, c.stop, c.stop_buffered, c.clear, c.clear_buffered, c.ttc_line)
            if regions != [got]:
                problems.append(f"mu={diagram.mu:g} (d={d:.6g}, v={v:.6g}): classified {got.value}, regions {regions}")
        if got.caution < unbuffered.classify(d, v).caution:
            problems.append(f"mu={diagram.mu:g} (d={d:.6g}, v={v:.6g}): buffering lowered the caution rank")
        if len(problems) >= 20:
            break
    return problems


def validate_table_set(tables: TableSet, samples: int = PARTITION_SAMPLES, seed: int = 0) -> list[str]:
    diagrams = list(tables.diagrams)
    problems = check_axes(tables.table, diagrams) + check_ttc(tables)
    for d in diagrams:
        problems += check_curves(d)
        problems += check_partition(d, samples, seed)
    log.info("validation_finished", pages=len(diagrams), samples=samples, problems=len(problems))
    return problems

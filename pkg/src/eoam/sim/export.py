"""CSV and text exports for runs and sweeps.

Every CSV starts with a ``# manifest: <hash>`` line; column headers carry
SI units as suffixes.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from eoam.config import MatrixSpec
from eoam.dmm.persistence import manifest_line
from eoam.sim.scenario import CHANNELS, PHASE_COLUMNS, ScenarioResult
from eoam.sim.sweep import CellResult
from eoam.store.models import cell_key

UNITS = {
    "t": "s", "x": "m", "y": "m", "psi": "rad", "v_x": "mps", "v_y": "mps", "psi_dot": "radps",
    "dx": "m", "delta": "rad", "handwheel": "rad", "delta_ff": "rad", "delta_fb": "rad",
    "delta_yd": "rad", "e_offset": "m", "e_lookahead": "m", "y_target": "m", "f_t": "N",
    "ax_target": "mps2", "a_x": "mps2", "a_y": "mps2", "rel_dist": "m", "rel_speed": "mps",
}

# Channel groups written by --dump-plots.
PLOT_SETS: dict[str, tuple[str, ...]] = {
    "plot_motion": ("t", "x", "y", "y_target", "v_x", "mode", "fcw"),
    "plot_lateral": ("t", "e_offset", "e_lookahead", "delta", "delta_ff", "delta_fb", "delta_yd", "handwheel"),
    "plot_longitudinal": ("t", "v_x", "ax_target", "a_x", "f_t"),
    "plot_yaw": ("t", "psi", "psi_dot", "v_y"),
    "plot_gg": ("t", "a_x", "a_y", "ellipse_margin"),
}

COLOR_CODES = {"green": "G", "yellow": "Y", "orange": "O", "red": "R", "error": "!"}


def _header(name: str) -> str:
    unit = UNITS.get(name)
    return f"{name}_{unit}" if unit else name


def _csv_text(manifest_hash: str | None, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    for line in manifest_line(manifest_hash):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([_header(c) for c in columns])
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_time_series(path: str | os.PathLike[str], result: ScenarioResult,
                      manifest_hash: str | None, columns: Sequence[str] = CHANNELS) -> Path:
    out = Path(path)
    data = np.column_stack([result.series[c] for c in columns]) if result.series["t"].size else []
    out.write_text(_csv_text(manifest_hash, columns, data))
    return out


def write_phase_trace(path: str | os.PathLike[str], result: ScenarioResult, manifest_hash: str | None) -> Path:
    out = Path(path)
    rows = [(p.t, p.rel_dist, p.rel_speed, p.sector) for p in result.phase_trace]
    out.write_text(_csv_text(manifest_hash, PHASE_COLUMNS, rows))
    return out


def outcome_payload(result: ScenarioResult, manifest_hash: str | None) -> dict[str, Any]:
    hit = result.record.collision
    return {
        "manifest": manifest_hash,
        "scenario": result.name,
        "outcome": result.outcome.value,
        "exit_code": result.outcome.exit_code,
        "end_reason": result.end_reason,
        "t_final": result.t_final,
        "collision": None if hit is None else {
            "t": hit.t,
            "object_id": hit.object_id,
            "role": hit.role.value,
            "face": hit.face.value,
            "closing_speed_mps": hit.closing_speed,
            "penetration_m": hit.penetration,
        },
        "limit_braking_commanded": result.record.limit_braking_commanded,
        "t_limit_braking": result.record.t_limit_braking,
        "t_pnr": result.record.t_pnr,
        "return_completed": result.record.return_completed,
        "audit": result.audit,
        "transitions": [
            {"t": c.t, "from": c.from_mode.name, "to": c.to_mode.name, "trigger": c.trigger}
            for c in result.transitions
        ],
        "summary": result.summary,
    }


def write_run(out_dir: str | os.PathLike[str], result: ScenarioResult, manifest_hash: str | None,
              *, dump_plots: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_time_series(out / "timeseries.csv", result, manifest_hash),
        write_phase_trace(out / "phase_trace.csv", result, manifest_hash),
    ]
    outcome_path = out / "outcome.json"
    outcome_path.write_text(json.dumps(outcome_payload(result, manifest_hash), indent=2, default=str) + "\n")
    written.append(outcome_path)
    if dump_plots:
        for name, columns in PLOT_SETS.items():
            written.append(write_time_series(out / f"{name}.csv", result, manifest_hash, columns))
    return written


SWEEP_COLUMNS = (
    "speed_kmh", "mu", "oncoming_dist", "outcome", "end_reason", "t", "max_mode",
    "limit_braking_commanded", "return_completed", "error",
)


def write_sweep_csv(path: str | os.PathLike[str], results: list[CellResult], manifest_hash: str | None) -> Path:
    out = Path(path)
    rows = [
        (
            r.speed_kmh, r.mu, "none" if r.oncoming_dist is None else r.oncoming_dist, r.label,
            r.end_reason or "", "" if r.t_final is None else r.t_final, r.max_mode,
            int(r.limit_braking_commanded), int(r.return_completed), r.error or "",
        )
        for r in results
    ]
    out.write_text(_csv_text(manifest_hash, SWEEP_COLUMNS, rows))
    return out


def color_table(results: list[CellResult], matrix: MatrixSpec) -> str:
    """Speed rows against (oncoming group × μ) columns; G/Y/O/R per cell."""
    by_key = {r.key: r for r in results}
    cell_w = 5
    group_w = max(cell_w * len(matrix.mus), 16)

    def row(first: str, groups: list[str]) -> str:
        return f"{first:<8}" + "".join(f"| {g:<{group_w}} " for g in groups)

    titles = ["no oncoming" if o is None else f"oncoming {o:g} m" for o in matrix.oncoming]
    mu_header = "".join(f"{m:<{cell_w}g}" for m in matrix.mus)
    lines = [row("speed", titles), row("km/h", [mu_header] * len(titles))]
    lines.append("-" * len(lines[0]))
    for speed in matrix.speeds_kmh:
        groups = []
        for oncoming in matrix.oncoming:
            marks = []
            for mu in matrix.mus:
                r = by_key.get(cell_key(speed, mu, oncoming))
                marks.append(COLOR_CODES[r.label] if r is not None else ".")
            groups.append("".join(f"{m:<{cell_w}}" for m in marks))
        lines.append(row(f"{speed:g}", groups))
    lines += [
        "",
        "G no contact  Y frontal contact with the in-lane ARO  O side contact",
        "R frontal contact with the oncoming ARO  ! cell error",
    ]
    return "\n".join(lines) + "\n"


def write_traces(out_dir: str | os.PathLike[str], results: list[CellResult], manifest_hash: str | None) -> list[Path]:
    """One y(x) CSV per cell that kept its trace."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for r in results:
        if r.trace is None:
            continue
        x, y = r.trace
        path = out / f"trace_{r.key.replace('|', '_')}.csv"
        path.write_text(_csv_text(manifest_hash, ("x", "y"), zip(x, y)))
        written.append(path)
    return written

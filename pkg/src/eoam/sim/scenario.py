"""Closed-loop scenario execution.

One tick: object states → (every sensor period) sensor scan → supervisor
tick → collision check → plant step. The run ends on contact, on handback
after a completed intervention, or at t_end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
import structlog

from eoam.config import ConfigError, ScenarioConfig
from eoam.dmm.persistence import TableSet
from eoam.runtime.perception import Detection, nearest_in_lane
from eoam.runtime.state_machine import EoamMode
from eoam.runtime.supervisor import EoamSupervisor, ModeChange
from eoam.sim.collision import bounding_radius, collision_check, ego_footprint, may_touch, rectangle
from eoam.sim.outcome import CollisionRecord, Outcome, RunRecord, audit_run, classify_outcome
from eoam.sim.sensor import sensor_scan
from eoam.sim.world import Role, build_world
from eoam.vehicle.dynamics import body_accelerations, friction_ellipse_margin, step
from eoam.vehicle.params import VehicleState

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]

CHANNELS = (
    "t", "x", "y", "psi", "v_x", "v_y", "psi_dot", "dx",
    "mode", "fcw", "caution",
    "delta", "handwheel", "delta_ff", "delta_fb", "delta_yd",
    "e_offset", "e_lookahead", "y_target",
    "f_t", "ax_target", "a_x", "a_y", "ellipse_margin",
)
PHASE_COLUMNS = ("t", "rel_dist", "rel_speed", "sector")


@dataclass(frozen=True)
class PhaseSample:
    t: float
    rel_dist: float
    rel_speed: float
    sector: str


@dataclass
class ScenarioResult:
    name: str
    outcome: Outcome
    end_reason: str  # collision | handback | t_end
    t_final: float
    series: dict[str, FloatArray]
    phase_trace: list[PhaseSample]
    transitions: list[ModeChange]
    record: RunRecord
    summary: dict[str, Any] = field(default_factory=dict)
    audit: list[str] = field(default_factory=list)

    @property
    def mode_trace(self) -> list[tuple[float, int]]:
        return [(round(c.t, 9), int(c.to_mode)) for c in self.transitions]

    @property
    def max_mode_reached(self) -> int:
        return max((int(c.to_mode) for c in self.transitions), default=0)


def _check_tables(config: ScenarioConfig, tables: TableSet) -> None:
    mus = tables.diagrams.mus
    if not mus[0] <= config.mu <= mus[-1]:
        raise ConfigError(
            config.name, f"mu={config.mu} outside the table pages {mus}; no page can be interpolated",
        )


def run_scenario(config: ScenarioConfig, tables: TableSet) -> ScenarioResult:
    """Simulate one scenario to its end and classify the outcome."""
    _check_tables(config, tables)
    params = tables.params
    gains = config.runtime
    dt, mu = config.dt, config.mu
    objects = build_world(config, params)
    supervisor = EoamSupervisor(
        tables, params, gains,
        mu_est=mu,
        v_cruise=config.ego_speed,
        enabled=config.eoam_enabled,
    )
    diagram = supervisor.diagram
    ego = VehicleState(x=0.0, y=0.0, v_x=config.ego_speed, v_y=0.0, psi=0.0, psi_dot=0.0)

    rows: list[tuple[float, ...]] = []
    phase: list[PhaseSample] = []
    phase_open = True
    seen_aro = False
    detections: list[Detection] = []
    ax_filtered = 0.0
    collision: CollisionRecord | None = None
    end_reason = "t_end"
    n_steps = int(round(config.t_end / dt))
    sensor_every = config.sensor_every
    t = 0.0

    moving = [obj for obj in objects if obj.role is not Role.PARKED]
    parked = [obj.state_at(0.0, config) for obj in objects if obj.role is Role.PARKED]
    radii = {obj.object_id: bounding_radius(0.5 * obj.length, 0.5 * obj.length, obj.width) for obj in objects}
    ego_radius = bounding_radius(params.len_front, params.len_rear, params.wid_ego)

    for k in range(n_steps + 1):
        t = k * dt
        states = [obj.state_at(t, config) for obj in moving] + parked

        ego_fp = None
        for obj in states:
            if not may_touch(ego.x, ego.y, ego_radius, obj.x, obj.y, radii[obj.object_id]):
                continue
            if ego_fp is None:
                ego_fp = ego_footprint(ego, params)
            obj_fp = rectangle(obj.x, obj.y, obj.heading, obj.length, obj.width)
            contact = collision_check(ego_fp, obj_fp)
            if contact is not None:
                collision = CollisionRecord(
                    t=t,
                    object_id=obj.object_id,
                    role=obj.role,
                    face=contact.face,
                    closing_speed=ego.v_x * math.cos(ego.psi) - ego.v_y * math.sin(ego.psi) - obj.v_x,
                    penetration=contact.penetration,
                    ego_x=ego.x,
                    ego_y=ego.y,
                )
                break
        if collision is not None:
            end_reason = "collision"
            break

        if k % sensor_every == 0:
            detections = sensor_scan(ego, states, config.sensor, params, config.lane_width)
            aro = nearest_in_lane(detections)
            if aro is not None and phase_open:
                seen_aro = True
                phase.append(PhaseSample(
                    t, aro.rel_dist, aro.rel_speed, diagram.classify(aro.rel_dist, aro.rel_speed).value,
                ))
            elif aro is None and seen_aro:
                phase_open = False

        out = supervisor.tick(t, ego, detections, ax_filtered, dt)
        a_x, a_y = body_accelerations(ego, out.control, mu, params)

        if k % config.record_every == 0:
            rows.append((
                t, ego.x, ego.y, ego.psi, ego.v_x, ego.v_y, ego.psi_dot, supervisor.ctx.dx,
                float(out.mode), float(out.fcw), float(out.sector.caution),
                out.control.delta, out.control.delta * params.steering_ratio,
                out.delta_ff, out.delta_fb, out.delta_yd,
                out.e_offset, out.e_lookahead, out.y_target,
                out.control.f_t, out.ax_target, a_x, a_y, friction_ellipse_margin(a_x, a_y, mu),
            ))

        if supervisor.finished:
            end_reason = "handback"
            break

        ax_filtered += dt / gains.ax_filter_tau * (a_x - ax_filtered)
        ego = step(ego, out.control, mu, dt, params)

    history = supervisor.ctx.history
    record = RunRecord(
        collision=collision,
        maneuvered=any(c.to_mode.steering for c in history),
        return_completed=any(
            c.from_mode is EoamMode.RETURN and c.to_mode is EoamMode.NORMAL for c in history
        ),
        t_limit_braking=supervisor.t_limit_braking,
        t_pnr=supervisor.t_pnr,
    )
    outcome = classify_outcome(record)
    audit = audit_run(record, outcome)
    if audit:
        log.warning("outcome_audit_failed", scenario=config.name, outcome=outcome.value, problems=audit)
    data = np.asarray(rows, dtype=float).reshape(-1, len(CHANNELS))
    series = {name: data[:, i] for i, name in enumerate(CHANNELS)}
    summary = {
        **supervisor.to_dict(),
        "end_reason": end_reason,
        "t_final": t,
        "min_speed": float(series["v_x"].min()) if data.size else config.ego_speed,
    }
    log.info(
        "scenario_finished",
        scenario=config.name,
        outcome=outcome.value,
        end_reason=end_reason,
        t=round(t, 3),
        speed_kmh=round(config.ego_speed * 3.6, 1),
        mu=mu,
        transitions=len(history),
    )
    return ScenarioResult(
        name=config.name,
        outcome=outcome,
        end_reason=end_reason,
        t_final=t,
        series=series,
        phase_trace=phase,
        transitions=list(history),
        record=record,
        summary=summary,
        audit=audit,
    )

"""Online EOAM supervisor.

``update_mode`` is the total transition function over the six modes.
``EoamSupervisor`` owns one run's context and controllers and turns each
tick's (ego state, detections, measured acceleration) into a control
input for the plant.

A lane change still short of the point of no return is abandoned for
limit braking when the sector is A and the latched row, flown as
planned from where the ego is now, no longer clears the obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
import structlog

from eoam.config import RuntimeGains
from eoam.dmm.lookup import ClampCounter, TableRow
from eoam.dmm.persistence import TableSet
from eoam.dmm.phase_diagram import PhaseDiagram, Sector, clearance_gap
from eoam.runtime.controllers import (
    AccelController,
    SpeedController,
    lateral_errors,
    limit_braking_force,
    longitudinal_budget,
    rate_limit,
    steering_control,
)
from eoam.runtime.perception import Detection, nearest_in_lane, oncoming_present
from eoam.runtime.state_machine import EoamMode, transition
from eoam.vehicle.params import ControlInput, VehicleParams, VehicleState

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True, slots=True)
class ModeChange:
    t: float
    from_mode: EoamMode
    to_mode: EoamMode
    trigger: str


@dataclass(frozen=True)
class RowClearing:
    """Where a latched row's front corner passes the obstacle's rear corner."""

    dx_c: float | None  # None: the row never clears
    front_travel: float  # front-bumper travel from maneuver start to the clearing point
    dx: FloatArray
    t: FloatArray
    y: FloatArray  # lateral target, made non-decreasing

    def progress(self, dx: float, offset: float, slack: float) -> float:
        """Row position reached: travelled distance, capped by lateral progress plus ``slack``."""
        return min(dx, float(np.interp(offset, self.y, self.dx)) + slack)

    def margin(self, s: float, rel_dist: float, rel_speed: float, v_x: float) -> float:
        """Gap left when the corner clears, if the rest of the row is flown as planned from ``s``."""
        if self.dx_c is None:
            return -math.inf
        if s >= self.dx_c:
            return rel_dist
        t_rem = float(np.interp(self.dx_c, self.dx, self.t) - np.interp(s, self.dx, self.t))
        v_aro = max(v_x - rel_speed, 0.0)
        return rel_dist - (self.front_travel - s - v_aro * t_rem)


def row_clearing(row: TableRow, wid_obj: float, params: VehicleParams) -> RowClearing:
    gap = clearance_gap(row, wid_obj, params)
    t = row.elapsed()
    y = np.maximum.accumulate(np.abs(row.y_target))
    crossed = np.flatnonzero(gap <= 0.0)
    if crossed.size == 0:
        return RowClearing(None, math.inf, row.dx, t, y)
    k = int(crossed[0])
    if k == 0:
        dx_c = float(row.dx[0])
    else:
        g0, g1 = float(gap[k - 1]), float(gap[k])
        dx_c = float(row.dx[k - 1] + (row.dx[k] - row.dx[k - 1]) * g0 / (g0 - g1))
    heading = float(np.interp(dx_c, row.dx, row.theta_target))
    x_clearance = dx_c + params.len_front * math.cos(heading) + (params.wid_ego / 2.0) * math.sin(heading)
    return RowClearing(dx_c, x_clearance - params.len_front, row.dx, t, y)


@dataclass
class EoamContext:
    mode: EoamMode = EoamMode.NORMAL
    fcw_active: bool = False
    maneuver_timer: float = 0.0
    dx: float = 0.0
    x_dot_0_at_trigger: float = 0.0
    y_origin: float = 0.0
    pnr_crossed: bool = False
    t_pnr: float | None = None  # first crossing in the run
    steer_aborted: bool = False
    mu_est: float = 1.0
    handback_pending: bool = False

    x_start: float = 0.0
    sector: Sector = Sector.G
    phase_input: tuple[float, float] | None = None  # (rel_dist, rel_speed), frozen on loss
    aro_visible: bool = False
    row: TableRow | None = None
    clearing: RowClearing | None = None
    history: list[ModeChange] = field(default_factory=list)

    def offset(self, ego: VehicleState) -> float:
        return abs(ego.y - self.y_origin)


def _switch(ctx: EoamContext, target: EoamMode, t: float, trigger: str) -> None:
    previous = ctx.mode
    ctx.mode = transition(previous, target, t, trigger)
    ctx.history.append(ModeChange(t, previous, target, trigger))


def _start_maneuver(ctx: EoamContext, ego: VehicleState) -> None:
    ctx.x_dot_0_at_trigger = ego.v_x
    ctx.x_start = ego.x
    ctx.dx = 0.0
    ctx.maneuver_timer = 0.0


def _hand_back(ctx: EoamContext, t: float, trigger: str) -> None:
    _switch(ctx, EoamMode.NORMAL, t, trigger)
    ctx.handback_pending = True
    ctx.fcw_active = False


def _clearing_lost(ctx: EoamContext, ego: VehicleState, gains: RuntimeGains) -> float | None:
    """Predicted margin when sector A says the latched row no longer clears, else None."""
    if ctx.sector is not Sector.A or not ctx.aro_visible or ctx.phase_input is None:
        return None
    if ctx.clearing is None:
        margin = -math.inf
    else:
        rel_dist, rel_speed = ctx.phase_input
        s = ctx.clearing.progress(ctx.dx, ctx.offset(ego), gains.progress_slack)
        margin = ctx.clearing.margin(s, rel_dist, rel_speed, ego.v_x)
    return margin if margin < -gains.clearing_tol else None


def update_mode(
    ctx: EoamContext,
    detections: list[Detection],
    ego: VehicleState,
    diagram: PhaseDiagram,
    gains: RuntimeGains,
    *,
    y_f: float = 3.5,
    t: float = 0.0,
) -> EoamMode:
    """Advance the mode machine by one tick; mutates and returns ``ctx.mode``."""
    aro = nearest_in_lane(detections)
    ctx.aro_visible = aro is not None
    if aro is not None:
        ctx.phase_input = (aro.rel_dist, aro.rel_speed)
    ctx.sector = diagram.classify(*ctx.phase_input) if ctx.phase_input is not None else Sector.G
    sector = ctx.sector
    oncoming = oncoming_present(detections)
    closing = ctx.phase_input is not None and ctx.phase_input[1] > 0.0

    if ctx.mode.steering:
        ctx.dx = ego.x - ctx.x_start

    if sector is Sector.E and not ctx.fcw_active:
        ctx.fcw_active = True
        log.info("fcw_latched", t=round(t, 6), rel_dist=ctx.phase_input[0] if ctx.phase_input else None)

    y_pnr = gains.pnr_fraction * y_f
    mode = ctx.mode
    if mode is EoamMode.NORMAL:
        if ctx.handback_pending:
            pass
        elif sector.steers:
            if oncoming:
                _switch(ctx, EoamMode.ONCOMING_BRAKE, t, f"sector={sector.value},oncoming")
            else:
                _start_maneuver(ctx, ego)
                ctx.pnr_crossed = False
                _switch(ctx, EoamMode.UPDATE_STEER_BRAKE, t, f"sector={sector.value}")
        elif sector.brakes:
            _switch(ctx, EoamMode.UPDATE_BRAKE, t, f"sector={sector.value}")

    elif mode is EoamMode.UPDATE_BRAKE:
        if not closing:
            _hand_back(ctx, t, "gap_opening")
        elif oncoming:
            _switch(ctx, EoamMode.ONCOMING_BRAKE, t, "oncoming")
        elif sector.steers and not ctx.steer_aborted:
            _start_maneuver(ctx, ego)
            ctx.pnr_crossed = False
            _switch(ctx, EoamMode.UPDATE_STEER_BRAKE, t, f"sector={sector.value}")

    elif mode is EoamMode.UPDATE_STEER_BRAKE:
        if not ctx.pnr_crossed and ctx.offset(ego) >= y_pnr:
            ctx.pnr_crossed = True
            if ctx.t_pnr is None:
                ctx.t_pnr = t
        lost = None if ctx.pnr_crossed else _clearing_lost(ctx, ego, gains)
        if oncoming:
            if ctx.pnr_crossed:
                _switch(ctx, EoamMode.ONCOMING_STEER_BRAKE, t, f"oncoming,offset={ctx.offset(ego):.3f}")
            else:
                _switch(ctx, EoamMode.ONCOMING_BRAKE, t, f"oncoming,offset={ctx.offset(ego):.3f}")
        elif lost is not None:
            ctx.steer_aborted = True
            _switch(ctx, EoamMode.UPDATE_BRAKE, t, f"sector=A,margin={lost:.2f}")
        elif ctx.maneuver_timer >= gains.t_max:
            _start_maneuver(ctx, ego)
            _switch(ctx, EoamMode.RETURN, t, "maneuver_timer")

    elif mode is EoamMode.ONCOMING_BRAKE:
        if not closing:
            _hand_back(ctx, t, "gap_opening")

    elif mode is EoamMode.ONCOMING_STEER_BRAKE:
        arrived = ctx.offset(ego) >= y_f - gains.arrival_tol
        if arrived or ctx.maneuver_timer >= gains.t_max:
            _start_maneuver(ctx, ego)
            _switch(ctx, EoamMode.RETURN, t, "lane_change_complete" if arrived else "maneuver_timer")

    elif mode is EoamMode.RETURN:
        length = ctx.row.length if ctx.row is not None else 0.0
        back = ctx.dx >= length and ctx.offset(ego) <= gains.arrival_tol
        if back or ctx.maneuver_timer >= gains.t_max:
            _hand_back(ctx, t, "return_complete" if back else "return_timer")

    return ctx.mode


@dataclass(frozen=True, slots=True)
class TickOutput:
    control: ControlInput
    mode: EoamMode
    sector: Sector
    fcw: bool
    delta_ff: float
    delta_fb: float
    delta_yd: float
    e_offset: float
    e_lookahead: float
    y_target: float
    ax_target: float


@dataclass(frozen=True, slots=True)
class _Target:
    y: float
    theta: float
    kappa: float
    ax: float | None  # None: no acceleration reference in this mode


class EoamSupervisor:
    """Runs the EOAM tick for a single simulated vehicle."""

    def __init__(
        self,
        tables: TableSet,
        params: VehicleParams,
        gains: RuntimeGains,
        *,
        mu_est: float,
        v_cruise: float,
        y_origin: float = 0.0,
        enabled: bool = True,
    ) -> None:
        self.table = tables.table
        self.diagram = tables.diagrams.for_mu(mu_est)
        self.y_f = tables.grid.y_f
        self.wid_obj = tables.grid.wid_obj
        self.params = params
        self.gains = gains
        self.v_cruise = v_cruise
        self.enabled = enabled
        self.ctx = EoamContext(mu_est=mu_est, y_origin=y_origin)

        self.accel = AccelController(params, gains)
        self.speed = SpeedController(params, gains)
        self.clamps = ClampCounter()
        self.delta_prev = 0.0
        self.steering_clamp_count = 0

        # Occupant-warning timestamps
        self.t_fcw: float | None = None
        self.t_limit_braking: float | None = None
        self.t_steering: float | None = None

    @property
    def mode(self) -> EoamMode:
        return self.ctx.mode

    @property
    def finished(self) -> bool:
        return self.ctx.handback_pending

    @property
    def t_pnr(self) -> float | None:
        return self.ctx.t_pnr

    def _latch_row(self, ego: VehicleState) -> None:
        self.ctx.row = self.table.row(self.ctx.x_dot_0_at_trigger, self.ctx.mu_est, self.clamps)
        log.info(
            "maneuver_row_latched",
            mode=self.ctx.mode.name,
            x_dot_0=round(self.ctx.x_dot_0_at_trigger, 3),
            mu=self.ctx.mu_est,
            length=round(self.ctx.row.length, 3),
            y=round(ego.y, 3),
        )
        if self.ctx.mode is EoamMode.UPDATE_STEER_BRAKE:
            self.ctx.clearing = row_clearing(self.ctx.row, self.wid_obj, self.params)
        else:
            self.ctx.clearing = None

    def _target(self) -> _Target:
        ctx = self.ctx
        if not ctx.mode.steering or ctx.row is None:
            return _Target(ctx.y_origin, 0.0, 0.0, None)
        returning = ctx.mode is EoamMode.RETURN
        if ctx.dx > ctx.row.length:
            # Past the row: hold the destination lane centre, straight ahead.
            return _Target(ctx.y_origin + (0.0 if returning else self.y_f), 0.0, 0.0, 0.0)
        sample = ctx.row.at(ctx.dx)
        if returning:
            base = ctx.y_origin + self.y_f
            return _Target(base - sample.y_target, -sample.theta_target, -sample.kappa_target, sample.ax_target)
        return _Target(ctx.y_origin + sample.y_target, sample.theta_target, sample.kappa_target, sample.ax_target)

    def tick(
        self,
        t: float,
        ego: VehicleState,
        detections: list[Detection],
        ax_actual: float,
        dt: float,
    ) -> TickOutput:
        ctx = self.ctx
        before = ctx.mode
        if self.enabled:
            if ctx.mode.steering:
                ctx.maneuver_timer += dt
            update_mode(ctx, detections, ego, self.diagram, self.gains, y_f=self.y_f, t=t)
        mode = ctx.mode

        if mode is not before:
            if mode in (EoamMode.UPDATE_STEER_BRAKE, EoamMode.RETURN):
                self._latch_row(ego)
            if mode.steering and not before.steering:
                self.accel.reset()
            if mode is EoamMode.NORMAL:
                self.speed.reset()
        if ctx.fcw_active and self.t_fcw is None:
            self.t_fcw = t
        if mode.limit_braking and self.t_limit_braking is None:
            self.t_limit_braking = t
        if mode.steering and self.t_steering is None:
            self.t_steering = t

        target = self._target()
        e_off, e_la = lateral_errors(ego.y, ego.psi, target.y, target.theta, self.gains.l_la)
        steer = steering_control(e_off, e_la, target.kappa, ego.v_x, ego.psi_dot, self.params, self.gains)
        if steer.clamped:
            if self.steering_clamp_count == 0:
                log.warning("steering_clamped", t=round(t, 6), raw=steer.unclamped, mode=mode.name)
            self.steering_clamp_count += 1
        delta = rate_limit(self.delta_prev, steer.delta, self.gains.delta_rate, dt)
        self.delta_prev = delta

        mu = ctx.mu_est
        if mode.limit_braking:
            f_t = limit_braking_force(self.params, mu)
            ax_target = f_t / self.params.m
        elif target.ax is not None:
            a_lat = max(abs(target.kappa) * ego.v_x**2, abs(ego.v_x * ego.psi_dot))
            budget = longitudinal_budget(mu, a_lat)
            ax_target = min(max(target.ax, -budget), budget)
            f_t = self.accel.command(ax_target, ax_actual, dt, mu)
            f_t = min(max(f_t, -self.params.m * budget), self.params.m * budget)
        else:
            ax_target = math.nan
            f_t = self.speed.command(self.v_cruise, ego.v_x, dt, mu)

        return TickOutput(
            control=ControlInput(f_t=f_t, delta=delta),
            mode=mode,
            sector=ctx.sector,
            fcw=ctx.fcw_active,
            delta_ff=steer.delta_ff,
            delta_fb=steer.delta_fb,
            delta_yd=steer.delta_yd,
            e_offset=e_off,
            e_lookahead=e_la,
            y_target=target.y,
            ax_target=ax_target,
        )

    def to_dict(self) -> dict[str, Any]:
        """Summary snapshot for logs and result rows."""
        return {
            "mode": self.ctx.mode.name,
            "fcw_active": self.ctx.fcw_active,
            "handback_pending": self.ctx.handback_pending,
            "pnr_crossed": self.ctx.pnr_crossed,
            "t_pnr": self.ctx.t_pnr,
            "steer_aborted": self.ctx.steer_aborted,
            "transitions": len(self.ctx.history),
            "steering_clamps": self.steering_clamp_count,
            "table_clamps": dict(self.clamps.counts),
            "t_fcw": self.t_fcw,
            "t_limit_braking": self.t_limit_braking,
            "t_steering": self.t_steering,
        }

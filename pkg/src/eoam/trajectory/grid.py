"""Offline (speed × μ) grid of lane-change trajectories."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import structlog

from eoam.config import GridSpec
from eoam.dmm.phase_diagram import ClearanceError, min_clearing_distance
from eoam.vehicle.params import VehicleParams

from .inverse_dynamics import InfeasibleSteeringError, require_feasible, solve_inverse
from .optimizer import (
    DESIGN_SPEED_FLOOR,
    FullTrajectory,
    OcpInfeasibleError,
    OcpSpec,
    TrajectorySource,
    constant_speed_trajectory,
    solve_ocp,
)
from .path_gen import arc_length_parameterize, quintic_lane_change

log = structlog.get_logger()


class PointStatus(enum.Enum):
    OPTIMIZED = "optimized"
    BASELINE = "baseline"  # constant-speed trajectory kept
    BRAKING_ONLY = "braking_only"  # no feasible lane change at this point
    BELOW_DESIGN_SPEED = "below_design_speed"
    FAILED = "failed"

    @property
    def has_trajectory(self) -> bool:
        return self in (PointStatus.OPTIMIZED, PointStatus.BASELINE)


@dataclass(frozen=True)
class GridPoint:
    speed: float
    mu: float
    status: PointStatus
    trajectory: FullTrajectory | None = None
    baseline: FullTrajectory | None = None
    message: str = ""


def _clearing(traj: FullTrajectory, wid_obj: float, params: VehicleParams) -> float:
    try:
        return min_clearing_distance(traj, wid_obj, params).x_clearance
    except ClearanceError:
        return math.inf


def solve_grid_point(speed: float, mu: float, grid: GridSpec, params: VehicleParams) -> GridPoint:
    """Quintic path, inverse dynamics and (optionally) the OCP for one point.

    The constant-speed geometry is always attached as ``baseline`` so
    every lookup row has a source, even where no maneuver is offered.
    """
    t_f = grid.lane_change_time(mu)
    arc = arc_length_parameterize(quintic_lane_change(speed, t_f, grid.y_f), grid.n_samples)
    baseline = constant_speed_trajectory(arc, speed, mu, grid.y_f)
    if speed < DESIGN_SPEED_FLOOR:
        return GridPoint(speed, mu, PointStatus.BELOW_DESIGN_SPEED, baseline=baseline)

    steering = solve_inverse(arc, speed, mu, params)
    try:
        require_feasible(steering)
    except InfeasibleSteeringError as exc:
        return GridPoint(speed, mu, PointStatus.BRAKING_ONLY, baseline=baseline, message=str(exc))

    if not grid.optimize:
        return GridPoint(speed, mu, PointStatus.BASELINE, trajectory=baseline, baseline=baseline)

    opt = grid.optimizer
    spec = OcpSpec(
        x_dot_0=speed,
        mu=mu,
        y_f=grid.y_f,
        params=params,
        lane_change_time=t_f,
        n_nodes=opt.n_nodes,
        substeps=opt.substeps,
        audit_refine=opt.audit_refine,
        max_iter=opt.max_iter,
        ftol=opt.ftol,
        audit_tol=opt.audit_tol,
        min_speed=opt.min_speed,
        t_f_scale_bounds=opt.t_f_scale_bounds,
        terminal_heading_tol=opt.terminal_heading_tol,
    )
    try:
        trajectory = solve_ocp(spec, steering)
    except OcpInfeasibleError as exc:
        return GridPoint(speed, mu, PointStatus.BRAKING_ONLY, baseline=baseline, message=str(exc))

    if trajectory.source is not TrajectorySource.OPTIMIZED:
        return GridPoint(speed, mu, PointStatus.BASELINE, trajectory=trajectory, baseline=baseline)

    # Shorter total distance does not guarantee an earlier corner clearance.
    optimized = _clearing(trajectory, grid.wid_obj, params)
    constant = _clearing(baseline, grid.wid_obj, params)
    if optimized > constant:
        log.info("optimized_clearing_longer", speed=speed, mu=mu, optimized=optimized, constant=constant)
        return GridPoint(
            speed, mu, PointStatus.BASELINE, trajectory=baseline, baseline=baseline,
            message=f"optimized clearing {optimized:.3f} m exceeds constant-speed {constant:.3f} m",
        )
    return GridPoint(speed, mu, PointStatus.OPTIMIZED, trajectory=trajectory, baseline=baseline)


def _solve_task(task: tuple[float, float, GridSpec, VehicleParams]) -> GridPoint:
    speed, mu, grid, params = task
    try:
        point = solve_grid_point(speed, mu, grid, params)
    except Exception as exc:  # one bad point must not abort the grid
        log.error("grid_point_failed", speed=speed, mu=mu, error=str(exc))
        return GridPoint(speed, mu, PointStatus.FAILED, message=f"{type(exc).__name__}: {exc}")
    log.info(
        "grid_point_solved",
        speed=speed,
        mu=mu,
        status=point.status.value,
        J=point.trajectory.objective if point.trajectory else None,
    )
    return point


def generate_grid(
    grid: GridSpec,
    params: VehicleParams,
    *,
    speeds: list[float] | None = None,
    mus: list[float] | None = None,
    workers: int = 1,
) -> list[GridPoint]:
    """One GridPoint per (μ, speed) pair, μ-major, in input order.

    Points are independent; with ``workers > 1`` they are solved in a
    process pool. ``map`` keeps input order, so results do not depend on
    the worker count.
    """
    speeds = list(grid.speeds if speeds is None else speeds)
    mus = list(grid.mus if mus is None else mus)
    tasks = [(s, m, grid, params) for m in mus for s in speeds]
    if workers <= 1 or len(tasks) <= 1:
        return [_solve_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_task, tasks))

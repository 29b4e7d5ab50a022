"""Quasi-steady inverse dynamics along an arc-length path.

Given the path curvature and a speed profile, the lateral and yaw
demands fix the axle forces through the lateral/yaw balance. The
saturating tire law is inverted for the slip angles and the front slip
kinematics then give the road-wheel angle. The force split starts from
cos δ = 1 and is refined with the exact cos δ until δ settles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import structlog

from eoam.vehicle.dynamics import ModelValidityError
from eoam.vehicle.params import V_X_FLOOR, VehicleParams

from .path_gen import ArcPath

log = structlog.get_logger()

FloatArray = npt.NDArray[np.float64]

_PLATEAU_SLACK = 1.0 + 1e-12


class InfeasibleSteeringError(ValueError):
    """Raised when a path demands more lateral force than the tires can give."""

    def __init__(self, n_infeasible: int, n_total: int, mu: float) -> None:
        self.n_infeasible = n_infeasible
        self.n_total = n_total
        self.mu = mu
        super().__init__(
            f"{n_infeasible}/{n_total} path samples exceed the tire plateau at mu={mu}"
        )


@dataclass(frozen=True)
class InverseSolution:
    arc: ArcPath
    mu: float
    vx: FloatArray
    a_y: FloatArray
    psi_dot: FloatArray
    psi_ddot: FloatArray
    v_y: FloatArray
    delta: FloatArray
    alpha_f: FloatArray
    alpha_r: FloatArray
    f_yf: FloatArray
    f_yr: FloatArray
    feasible: npt.NDArray[np.bool_]

    @property
    def s(self) -> FloatArray:
        return self.arc.s

    @property
    def all_feasible(self) -> bool:
        return bool(np.all(self.feasible))


@dataclass(frozen=True)
class AccelEnvelope:
    s: FloatArray
    ax_min: FloatArray
    ax_max: FloatArray

    @property
    def empty(self) -> npt.NDArray[np.bool_]:
        return self.ax_min > self.ax_max


def _speed_profile(vx_of_s: float | FloatArray, shape: tuple[int, ...]) -> FloatArray:
    return np.array(np.broadcast_to(np.asarray(vx_of_s, dtype=float), shape))


def _invert_tire(force: FloatArray, c_alpha: float, mu: float, alpha_star: float) -> FloatArray:
    return np.clip(-force / (mu * c_alpha), -alpha_star, alpha_star)


def solve_inverse(
    arc: ArcPath,
    vx_of_s: float | FloatArray,
    mu: float,
    params: VehicleParams,
    *,
    max_refine: int = 50,
    tol: float = 1e-14,
) -> InverseSolution:
    """Steering angle, slip angles and axle forces that realise the path."""
    vx = _speed_profile(vx_of_s, arc.s.shape)
    if np.any(vx <= V_X_FLOOR):
        raise ModelValidityError(float(vx.min()))

    p = params
    a_y = arc.kappa * vx**2
    psi_dot = arc.kappa * vx
    psi_ddot = np.gradient(psi_dot, arc.s) * vx

    # Front force enters both balances through F_yf·cos δ.
    f_front = (p.d_r * p.m * a_y + p.i_z * psi_ddot) / p.wheelbase
    f_yr = (p.d_f * p.m * a_y - p.i_z * psi_ddot) / p.wheelbase

    alpha_r = _invert_tire(f_yr, p.c_alpha_r, mu, p.alpha_star)
    v_y = vx * np.tan(alpha_r) + p.d_r * psi_dot
    front_slip_dir = np.arctan((v_y + p.d_f * psi_dot) / vx)

    delta = np.zeros_like(vx)
    for _ in range(max_refine):
        f_yf = f_front / np.cos(delta)
        alpha_f = _invert_tire(f_yf, p.c_alpha_f, mu, p.alpha_star)
        updated = front_slip_dir - alpha_f
        change = float(np.max(np.abs(updated - delta))) if delta.size else 0.0
        delta = updated
        if change <= tol:
            break
    else:
        log.warning("inverse_refine_not_converged", iterations=max_refine, last_change=change)

    f_yf = f_front / np.cos(delta)
    alpha_f = _invert_tire(f_yf, p.c_alpha_f, mu, p.alpha_star)

    feasible = (
        (np.abs(f_yf) <= p.lateral_plateau_front(mu) * _PLATEAU_SLACK)
        & (np.abs(f_yr) <= p.lateral_plateau_rear(mu) * _PLATEAU_SLACK)
        & (delta >= p.delta_min)
        & (delta <= p.delta_max)
    )
    if not np.all(feasible):
        log.info(
            "inverse_infeasible_samples",
            mu=mu,
            count=int(np.count_nonzero(~feasible)),
            total=int(feasible.size),
        )

    return InverseSolution(
        arc=arc, mu=mu, vx=vx, a_y=a_y, psi_dot=psi_dot, psi_ddot=psi_ddot, v_y=v_y,
        delta=delta, alpha_f=alpha_f, alpha_r=alpha_r, f_yf=f_yf, f_yr=f_yr,
        feasible=feasible,
    )


def require_feasible(sol: InverseSolution) -> InverseSolution:
    """Return the solution unchanged, or raise if any sample is infeasible."""
    if not sol.all_feasible:
        raise InfeasibleSteeringError(
            int(np.count_nonzero(~sol.feasible)), int(sol.feasible.size), sol.mu,
        )
    return sol


def force_residuals(sol: InverseSolution, params: VehicleParams) -> tuple[FloatArray, FloatArray]:
    """Exact lateral-force and yaw-moment balance residuals (N, N·m)."""
    cos_d = np.cos(sol.delta)
    lateral = sol.f_yr + sol.f_yf * cos_d - params.m * sol.a_y
    moment = params.d_f * sol.f_yf * cos_d - params.d_r * sol.f_yr - params.i_z * sol.psi_ddot
    return lateral, moment


def accel_envelope(
    sol: InverseSolution,
    vx_of_s: float | FloatArray,
    mu: float,
    params: VehicleParams,
) -> AccelEnvelope:
    """Longitudinal acceleration bounds left over by the rear lateral demand.

    The friction ellipse uses F_x,max = μ·|F_t_min_brk| and F_y,max equal
    to the rear plateau. A negative ellipse remainder (lateral demand past
    the plateau) yields ax_min > ax_max, i.e. an empty envelope.
    """
    vx = _speed_profile(vx_of_s, sol.s.shape)
    if not np.allclose(vx, sol.vx):
        raise ValueError("speed profile differs from the one the steering solution was built on")

    f_x_max = mu * abs(params.f_t_min_brk)
    ratio_sq = (sol.f_yr / params.lateral_plateau_rear(mu)) ** 2
    gap = 1.0 - ratio_sq
    remainder = f_x_max * np.sign(gap) * np.sqrt(np.abs(gap))

    ax_max = np.minimum(params.engine_limit(mu), remainder) / params.m
    ax_min = np.maximum(params.braking_limit(mu), -remainder) / params.m
    return AccelEnvelope(s=sol.s.copy(), ax_min=ax_min, ax_max=ax_max)

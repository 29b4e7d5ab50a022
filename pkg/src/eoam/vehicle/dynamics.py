"""Planar 3-DOF single-track model with a saturating linear tire.

Body-frame force balance::

    F_t − F_yf·sin δ        = m·a_x        a_x = v̇_x − v_y·ψ̇
    F_yr + F_yf·cos δ       = m·a_y        a_y = v̇_y + v_x·ψ̇
    d_f·F_yf·cos δ − d_r·F_yr = I_z·ψ̈

The scalar path below runs inside the 1 ms plant loop, so it sticks to
``math`` on floats. ``lateral_tire_force`` also accepts numpy arrays and
is what the optimizer's vectorized dynamics use.
"""

from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from .params import G, V_X_FLOOR, ControlInput, StateDerivative, VehicleParams, VehicleState


class ModelValidityError(ValueError):
    """Raised when the slip-angle model is evaluated outside its validity range."""

    def __init__(self, v_x: float) -> None:
        self.v_x = v_x
        super().__init__(f"slip angles undefined at v_x={v_x:.4f} m/s (floor {V_X_FLOOR} m/s)")


def lateral_tire_force(
    c_alpha: float,
    alpha: float | npt.NDArray[np.float64],
    mu: float,
    alpha_star: float = math.radians(5.0),
) -> float | npt.NDArray[np.float64]:
    """Saturating linear tire: −μ·C·α, flat at ∓μ·C·α* beyond |α| ≥ α*."""
    return -mu * c_alpha * np.clip(alpha, -alpha_star, alpha_star)


def _saturate(c_alpha: float, alpha: float, mu: float, alpha_star: float) -> float:
    if alpha > alpha_star:
        alpha = alpha_star
    elif alpha < -alpha_star:
        alpha = -alpha_star
    return -mu * c_alpha * alpha


def slip_angles(state: VehicleState, delta: float, params: VehicleParams) -> tuple[float, float]:
    """Front and rear slip angles from single-track kinematics."""
    if state.v_x <= V_X_FLOOR:
        raise ModelValidityError(state.v_x)
    alpha_f = math.atan((state.v_y + params.d_f * state.psi_dot) / state.v_x) - delta
    alpha_r = math.atan((state.v_y - params.d_r * state.psi_dot) / state.v_x)
    return alpha_f, alpha_r


def _rates(
    x: float, y: float, vx: float, vy: float, psi: float, r: float,
    f_t: float, delta: float, mu: float, p: VehicleParams,
) -> tuple[float, float, float, float, float, float]:
    cos_psi = math.cos(psi)
    sin_psi = math.sin(psi)
    x_dot = vx * cos_psi - vy * sin_psi
    y_dot = vx * sin_psi + vy * cos_psi

    if vx <= V_X_FLOOR:
        # Lateral dynamics frozen; brakes cannot drive the car backwards.
        ax = f_t / p.m
        if vx <= 0.0 and ax < 0.0:
            ax = 0.0
        return x_dot, y_dot, ax, 0.0, r, 0.0

    alpha_f = math.atan((vy + p.d_f * r) / vx) - delta
    alpha_r = math.atan((vy - p.d_r * r) / vx)
    f_yf = _saturate(p.c_alpha_f, alpha_f, mu, p.alpha_star)
    f_yr = _saturate(p.c_alpha_r, alpha_r, mu, p.alpha_star)

    cos_d = math.cos(delta)
    sin_d = math.sin(delta)
    a_x = (f_t - f_yf * sin_d) / p.m
    a_y = (f_yr + f_yf * cos_d) / p.m
    psi_ddot = (p.d_f * f_yf * cos_d - p.d_r * f_yr) / p.i_z
    return x_dot, y_dot, a_x + vy * r, a_y - vx * r, r, psi_ddot


def derivatives(
    state: VehicleState, control: ControlInput, mu: float, params: VehicleParams,
) -> StateDerivative:
    """Time derivative of the planar state."""
    slip_angles(state, control.delta, params)
    rates = _rates(
        state.x, state.y, state.v_x, state.v_y, state.psi, state.psi_dot,
        control.f_t, control.delta, mu, params,
    )
    return StateDerivative(*rates)


def body_accelerations(
    state: VehicleState, control: ControlInput, mu: float, params: VehicleParams,
) -> tuple[float, float]:
    """Inertial accelerations (a_x, a_y) resolved in the body frame."""
    _, _, vx_dot, vy_dot, _, _ = _rates(
        state.x, state.y, state.v_x, state.v_y, state.psi, state.psi_dot,
        control.f_t, control.delta, mu, params,
    )
    return vx_dot - state.v_y * state.psi_dot, vy_dot + state.v_x * state.psi_dot


def step(
    state: VehicleState,
    control: ControlInput,
    mu: float,
    dt: float,
    params: VehicleParams,
) -> VehicleState:
    """Advance the plant by one fixed RK4 step."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")

    f_t, delta = control.f_t, control.delta
    s0 = (state.x, state.y, state.v_x, state.v_y, state.psi, state.psi_dot)
    half = 0.5 * dt

    k1 = _rates(*s0, f_t, delta, mu, params)
    k2 = _rates(*(a + half * b for a, b in zip(s0, k1)), f_t, delta, mu, params)
    k3 = _rates(*(a + half * b for a, b in zip(s0, k2)), f_t, delta, mu, params)
    k4 = _rates(*(a + dt * b for a, b in zip(s0, k3)), f_t, delta, mu, params)

    sixth = dt / 6.0
    x, y, vx, vy, psi, r = (
        a + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(s0, k1, k2, k3, k4)
    )

    if vx < V_X_FLOOR:
        vx = max(vx, 0.0)
        vy = 0.0
        r = 0.0
    return VehicleState(x=x, y=y, v_x=vx, v_y=vy, psi=psi, psi_dot=r)


def friction_ellipse_margin(a_x: float, a_y: float, mu: float) -> float:
    """1 − |a|²/(μg)²; non-negative inside the friction circle."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    limit = mu * G
    return 1.0 - ((a_x / limit) ** 2 + (a_y / limit) ** 2)

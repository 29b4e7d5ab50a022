"""Steering and longitudinal control laws.

Steering is feedforward + feedback + yaw damping::

    δ_ff = L·κ + K_us·κ·v_x²
    δ_fb = −k_off·e_offset − k_la·e_lookahead
    δ_yd = −k_yd·(ψ̇ − κ·v_x)

Longitudinal control is a PID on acceleration error while a maneuver
row is active, a PID on speed error otherwise, and open-loop limit
braking in the braking modes. PID outputs are accelerations; commands
are forces (× m) clamped to the μ-scaled engine and brake limits. While
steering, the acceleration reference is further held to what the
friction circle leaves after the lateral load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from eoam.config import RuntimeGains
from eoam.vehicle.params import G, VehicleParams


@dataclass(frozen=True, slots=True)
class SteeringCommand:
    delta: float
    delta_ff: float
    delta_fb: float
    delta_yd: float
    clamped: bool

    @property
    def unclamped(self) -> float:
        return self.delta_ff + self.delta_fb + self.delta_yd


class PID:
    """PID with output clamp and conditional-integration anti-windup."""

    def __init__(
        self,
        kp: float,
        ki: float,
        kd: float,
        output_limits: tuple[float, float] = (-math.inf, math.inf),
    ) -> None:
        self.kp = kp
        self.ki = ki
        self.kd = kd
        self.output_limits = output_limits
        self.integral = 0.0
        self.prev_error: float | None = None
        self.saturated = False

    def update(self, error: float, dt: float) -> float:
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        d_term = 0.0 if self.prev_error is None else self.kd * (error - self.prev_error) / dt
        self.prev_error = error

        candidate = self.integral + error * dt
        output = self.kp * error + self.ki * candidate + d_term
        lo, hi = self.output_limits
        if output > hi or output < lo:
            self.saturated = True
            # Integrate only when the error drives the output back inside.
            if (output > hi and error < 0) or (output < lo and error > 0):
                self.integral = candidate
            return hi if output > hi else lo
        self.saturated = False
        self.integral = candidate
        return output

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None
        self.saturated = False


def lateral_errors(
    y: float, psi: float, y_target: float, theta_target: float, lookahead: float,
) -> tuple[float, float]:
    """(e_offset, e_lookahead): current offset and the offset predicted L_la ahead."""
    e_offset = y - y_target
    return e_offset, e_offset + lookahead * math.sin(psi - theta_target)


def steering_control(
    e_offset: float,
    e_lookahead: float,
    kappa_target: float,
    v_x: float,
    psi_dot: float,
    params: VehicleParams,
    gains: RuntimeGains,
) -> SteeringCommand:
    """Road-wheel angle from the three-part law, clamped to the steering range."""
    ff = params.wheelbase * kappa_target + gains.k_us * kappa_target * v_x**2
    fb = -gains.k_off * e_offset - gains.k_la * e_lookahead
    yd = -gains.k_yd * (psi_dot - kappa_target * v_x)
    raw = ff + fb + yd
    delta = min(max(raw, params.delta_min), params.delta_max)
    return SteeringCommand(delta=delta, delta_ff=ff, delta_fb=fb, delta_yd=yd, clamped=delta != raw)


def rate_limit(previous: float, command: float, rate: float, dt: float) -> float:
    step = rate * dt
    return previous + min(max(command - previous, -step), step)


def _force_limits(params: VehicleParams, mu: float) -> tuple[float, float]:
    return params.braking_limit(mu) / params.m, params.engine_limit(mu) / params.m


class AccelController:
    """F_t = m·PID(ax_target − ax_actual), clamped to the μ-scaled force limits."""

    def __init__(self, params: VehicleParams, gains: RuntimeGains) -> None:
        self.params = params
        self.pid = PID(gains.accel_kp, gains.accel_ki, gains.accel_kd)

    def command(self, ax_target: float, ax_actual: float, dt: float, mu: float) -> float:
        self.pid.output_limits = _force_limits(self.params, mu)
        return self.params.m * self.pid.update(ax_target - ax_actual, dt)

    def reset(self) -> None:
        self.pid.reset()


class SpeedController:
    """Speed-holding PID standing in for the high-level driving system."""

    def __init__(self, params: VehicleParams, gains: RuntimeGains) -> None:
        self.params = params
        self.pid = PID(gains.speed_kp, gains.speed_ki, gains.speed_kd)

    def command(self, v_target: float, v_actual: float, dt: float, mu: float) -> float:
        self.pid.output_limits = _force_limits(self.params, mu)
        return self.params.m * self.pid.update(v_target - v_actual, dt)

    def reset(self) -> None:
        self.pid.reset()


def limit_braking_force(params: VehicleParams, mu: float) -> float:
    """Open-loop limit braking used by the braking modes."""
    return params.braking_limit(mu) * params.decel_eff


def longitudinal_budget(mu: float, a_lat: float) -> float:
    """Longitudinal acceleration left inside the μg friction circle at lateral load ``a_lat``."""
    limit = mu * G
    return math.sqrt(max(limit * limit - a_lat * a_lat, 0.0))


def accel_control(
    controller: AccelController, ax_target: float, ax_actual: float, dt: float, mu: float,
) -> float:
    return controller.command(ax_target, ax_actual, dt, mu)


def speed_control(
    controller: SpeedController,
    v_target: float,
    v_actual: float,
    dt: float,
    mu: float,
    *,
    limit_braking: bool = False,
) -> float:
    """Speed PID, or pure limit braking when the mode demands it."""
    if limit_braking:
        return limit_braking_force(controller.params, mu)
    return controller.command(v_target, v_actual, dt, mu)

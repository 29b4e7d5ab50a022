"""Quintic lane-change path and its arc-length re-parameterization.

The lateral profile is a rest-to-rest quintic in time while the vehicle
moves forward at constant speed, x(t) = v0·t. Re-parameterizing by arc
length gives the path yaw θ(s) and signed curvature K(s) used by the
inverse-dynamics and lookup stages.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Protocol

import numpy as np
import numpy.typing as npt
from numpy.polynomial import Polynomial
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

FloatArray = npt.NDArray[np.float64]

DEFAULT_SAMPLES = 401
MIN_SAMPLES = 50


class ParametricPath(Protocol):
    """Planar curve parameterized by time on [0, t_f]."""

    t_f: float

    def position(self, t: FloatArray) -> tuple[FloatArray, FloatArray]: ...

    def velocity(self, t: FloatArray) -> tuple[FloatArray, FloatArray]: ...

    def acceleration(self, t: FloatArray) -> tuple[FloatArray, FloatArray]: ...


@dataclass(frozen=True)
class QuinticPath:
    coeffs: FloatArray  # ascending powers of y(t)
    v0: float
    t_f: float
    y_f: float

    @cached_property
    def _poly(self) -> Polynomial:
        return Polynomial(self.coeffs)

    @cached_property
    def _dpoly(self) -> Polynomial:
        return self._poly.deriv(1)

    @cached_property
    def _ddpoly(self) -> Polynomial:
        return self._poly.deriv(2)

    def lateral(self, t: FloatArray | float, order: int = 0) -> FloatArray:
        """y(t) or its time derivative of the given order (0..2)."""
        poly = (self._poly, self._dpoly, self._ddpoly)[order]
        return poly(np.asarray(t, dtype=float))

    def position(self, t: FloatArray) -> tuple[FloatArray, FloatArray]:
        t = np.asarray(t, dtype=float)
        return self.v0 * t, self._poly(t)

    def velocity(self, t: FloatArray) -> tuple[FloatArray, FloatArray]:
        t = np.asarray(t, dtype=float)
        return np.full_like(t, self.v0), self._dpoly(t)

    def acceleration(self, t: FloatArray) -> tuple[FloatArray, FloatArray]:
        t = np.asarray(t, dtype=float)
        return np.zeros_like(t), self._ddpoly(t)


def quintic_lane_change(v0: float, t_f: float, y_f: float) -> QuinticPath:
    """Unique quintic with zero lateral velocity and acceleration at both ends."""
    if v0 <= 0:
        raise ValueError(f"v0 must be positive, got {v0}")
    if t_f <= 0:
        raise ValueError(f"t_f must be positive, got {t_f}")

    T = t_f
    A = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 2.0, 0.0, 0.0, 0.0],
        [1.0, T, T**2, T**3, T**4, T**5],
        [0.0, 1.0, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
        [0.0, 0.0, 2.0, 6 * T, 12 * T**2, 20 * T**3],
    ])
    b = np.array([0.0, 0.0, 0.0, y_f, 0.0, 0.0])
    coeffs = np.linalg.solve(A, b)
    return QuinticPath(coeffs=coeffs, v0=float(v0), t_f=float(t_f), y_f=float(y_f))


def _curvature(path: ParametricPath, t: FloatArray) -> FloatArray:
    xd, yd = path.velocity(t)
    xdd, ydd = path.acceleration(t)
    return (xd * ydd - yd * xdd) / np.power(xd**2 + yd**2, 1.5)


def curvature_at(path: ParametricPath, t: float) -> float:
    """Signed curvature from the time-derivative quotient at time t."""
    if not 0.0 <= t <= path.t_f:
        raise ValueError(f"t={t} outside [0, {path.t_f}]")
    return float(_curvature(path, np.array([t]))[0])


@dataclass(frozen=True)
class ArcPath:
    s: FloatArray
    x: FloatArray
    y: FloatArray
    theta: FloatArray
    kappa: FloatArray
    t: FloatArray  # source-path time at each arc-length sample

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def radius(self) -> FloatArray:
        """Radius of curvature; infinite on straight samples."""
        with np.errstate(divide="ignore"):
            return np.where(self.kappa == 0.0, np.inf, 1.0 / self.kappa)

    def reconstruct(self) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Rebuild θ, x, y by integrating K and the heading along s."""
        theta = self.theta[0] + cumulative_simpson(self.kappa, x=self.s, initial=0.0)
        x = self.x[0] + cumulative_simpson(np.cos(self.theta), x=self.s, initial=0.0)
        y = self.y[0] + cumulative_simpson(np.sin(self.theta), x=self.s, initial=0.0)
        return theta, x, y

    def curvature_residual(self) -> float:
        """Largest gap between K and the finite-difference dθ/ds."""
        return float(np.max(np.abs(np.gradient(self.theta, self.s, edge_order=2) - self.kappa)))

    def is_g2(self, tol: float = 1e-5) -> bool:
        """Heading and curvature continuous and mutually consistent on the grid."""
        ds = np.diff(self.s)
        jumps_theta = np.abs(np.diff(self.theta)) / ds
        jumps_kappa = np.abs(np.diff(self.kappa)) / ds
        bounded = np.all(np.isfinite(jumps_theta)) and np.all(np.isfinite(jumps_kappa))
        return bool(bounded and self.curvature_residual() < tol)


def arc_length_parameterize(path: ParametricPath, n_samples: int = DEFAULT_SAMPLES) -> ArcPath:
    """Integrate arc length over a uniform-t grid, then resample uniform in s."""
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_SAMPLES}, got {n_samples}")

    t = np.linspace(0.0, path.t_f, n_samples)
    xd, yd = path.velocity(t)
    s_of_t = cumulative_simpson(np.hypot(xd, yd), x=t, initial=0.0)

    s = np.linspace(0.0, s_of_t[-1], n_samples)
    t_of_s = np.clip(CubicSpline(s_of_t, t)(s), 0.0, path.t_f)
    t_of_s[0], t_of_s[-1] = 0.0, path.t_f

    x, y = path.position(t_of_s)
    xd_s, yd_s = path.velocity(t_of_s)
    return ArcPath(
        s=s,
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        theta=np.arctan2(yd_s, xd_s),
        kappa=_curvature(path, t_of_s),
        t=t_of_s,
    )

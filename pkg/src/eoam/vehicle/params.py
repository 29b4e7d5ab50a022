"""Vehicle parameter set, planar state vector and control input."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

from pydantic import BaseModel, ConfigDict, model_validator

G = 9.81

# Below this longitudinal speed the slip-angle model is not evaluated.
V_X_FLOOR = 1.0


class VehicleParams(BaseModel):
    """Single-track plant parameters (SI units).

    ``f_t_min_brk`` is the full braking force on a μ = 1 surface and is
    scaled by μ wherever it is applied. It defaults to −m·g.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    m: float = 1650.0
    i_z: float = 2900.0
    d_f: float = 1.40
    d_r: float = 1.65
    wid_ego: float = 1.88
    len_front: float = 2.0
    len_rear: float = 2.9
    c_alpha_f: float = 1.2e5
    c_alpha_r: float = 1.2e5
    alpha_star: float = math.radians(5.0)
    delta_min: float = -0.5
    delta_max: float = 0.5
    steering_ratio: float = 16.0
    f_t_max_eng: float = 6000.0
    f_t_min_brk: float = -1650.0 * G
    decel_eff: float = 0.9

    @model_validator(mode="before")
    @classmethod
    def _default_braking_force(cls, data: Any) -> Any:
        if isinstance(data, dict) and "f_t_min_brk" not in data and "m" in data:
            data = {**data, "f_t_min_brk": -float(data["m"]) * G}
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> VehicleParams:
        positive = ("m", "i_z", "d_f", "d_r", "wid_ego", "len_front", "len_rear",
                    "c_alpha_f", "c_alpha_r", "alpha_star", "steering_ratio")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.delta_min < 0 < self.delta_max:
            raise ValueError("steering bounds must satisfy delta_min < 0 < delta_max")
        if not self.f_t_min_brk < 0 < self.f_t_max_eng:
            raise ValueError("force bounds must satisfy f_t_min_brk < 0 < f_t_max_eng")
        if not 0 < self.decel_eff <= 1:
            raise ValueError("decel_eff must lie in (0, 1]")
        return self

    @property
    def wheelbase(self) -> float:
        return self.d_f + self.d_r

    @property
    def length(self) -> float:
        return self.len_front + self.len_rear

    def braking_limit(self, mu: float) -> float:
        """μ-scaled braking force bound (negative)."""
        return mu * self.f_t_min_brk

    def engine_limit(self, mu: float) -> float:
        """μ-scaled tractive force bound."""
        return mu * self.f_t_max_eng

    def lateral_plateau_front(self, mu: float) -> float:
        return mu * self.c_alpha_f * self.alpha_star

    def lateral_plateau_rear(self, mu: float) -> float:
        return mu * self.c_alpha_r * self.alpha_star


@dataclass(frozen=True, slots=True)
class VehicleState:
    x: float
    y: float
    v_x: float
    v_y: float
    psi: float
    psi_dot: float

    @property
    def beta(self) -> float:
        """Body slip angle."""
        return math.atan2(self.v_y, self.v_x)

    @property
    def speed(self) -> float:
        return math.hypot(self.v_x, self.v_y)


@dataclass(frozen=True, slots=True)
class ControlInput:
    f_t: float
    delta: float


@dataclass(frozen=True, slots=True)
class StateDerivative:
    x_dot: float
    y_dot: float
    v_x_dot: float
    v_y_dot: float
    psi_dot: float
    psi_ddot: float

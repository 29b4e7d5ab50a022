"""Scenario world: the in-lane ARO, an optional oncoming ARO and parked cars.

The road is straight along +x with two lanes; lane 0 (the ego lane) is
centred on y = 0 and lane 1 on y = lane_width. Objects move along x with
closed-form speed profiles, so their state at any time is exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from eoam.config import ScenarioConfig
from eoam.vehicle.params import VehicleParams


class Role(enum.Enum):
    ARO = "aro"
    ONCOMING = "oncoming"
    PARKED = "parked"


@dataclass(frozen=True, slots=True)
class ObjectState:
    object_id: int
    role: Role
    x: float  # centre
    y: float
    heading: float
    speed: float  # along heading
    length: float
    width: float

    @property
    def v_x(self) -> float:
        return self.speed * math.cos(self.heading)

    @property
    def near_x(self) -> float:
        """x of the end facing an ego approaching from −x."""
        return self.x - 0.5 * self.length


def aro_speed_profile(t: float, config: ScenarioConfig) -> float:
    """Constant speed until the brake time, then a constant-deceleration stop."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    v0 = config.aro_init_speed
    if t <= config.aro_brake_time:
        return v0
    return max(v0 - config.aro_decel * (t - config.aro_brake_time), 0.0)


def aro_travel(t: float, config: ScenarioConfig) -> float:
    """Distance covered by the ARO since t = 0 (integral of the speed profile)."""
    v0, a, tb = config.aro_init_speed, config.aro_decel, config.aro_brake_time
    if t <= tb:
        return v0 * t
    tau = min(t - tb, v0 / a)
    return v0 * tb + v0 * tau - 0.5 * a * tau**2


@dataclass(frozen=True)
class WorldObject:
    object_id: int
    role: Role
    x0: float
    y: float
    heading: float
    length: float
    width: float
    speed: float = 0.0  # constant speed for non-ARO objects

    def state_at(self, t: float, config: ScenarioConfig) -> ObjectState:
        if self.role is Role.ARO:
            x = self.x0 + aro_travel(t, config)
            v = aro_speed_profile(t, config)
        else:
            x = self.x0 + self.speed * math.cos(self.heading) * t
            v = self.speed
        return ObjectState(self.object_id, self.role, x, self.y, self.heading, v, self.length, self.width)


def build_world(config: ScenarioConfig, params: VehicleParams) -> list[WorldObject]:
    """Place the scenario's objects relative to an ego CG at the origin.

    Initial distances are bumper to bumper. Parked cars stand with their
    inner edge ``parked_offset`` beyond the right lane marker; the seed
    picks the position of the first one within one spacing.
    """
    front = params.len_front
    objects = [
        WorldObject(
            object_id=1,
            role=Role.ARO,
            x0=front + config.aro_init_dist + 0.5 * config.aro_length,
            y=0.0,
            heading=0.0,
            length=config.aro_length,
            width=config.aro_width,
        )
    ]
    if config.oncoming_enabled:
        objects.append(WorldObject(
            object_id=2,
            role=Role.ONCOMING,
            x0=front + config.oncoming_init_dist + 0.5 * config.oncoming_length,
            y=config.lane_width,
            heading=math.pi,
            length=config.oncoming_length,
            width=config.oncoming_width,
            speed=config.oncoming_speed,
        ))
    if config.parked_cars_enabled and config.parked_count > 0:
        rng = np.random.default_rng(config.seed)
        first = float(rng.uniform(0.0, config.parked_spacing))
        y = -(0.5 * config.lane_width + config.parked_offset + 0.5 * config.parked_width)
        for i in range(config.parked_count):
            objects.append(WorldObject(
                object_id=100 + i,
                role=Role.PARKED,
                x0=first + i * config.parked_spacing,
                y=y,
                heading=0.0,
                length=config.parked_length,
                width=config.parked_width,
            ))
    return objects


def lane_index(y: float, lane_width: float) -> int:
    return math.floor((y + 0.5 * lane_width) / lane_width)

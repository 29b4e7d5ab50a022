"""Idealized forward sensor: range and cone gating, no noise, no tracking."""

from __future__ import annotations

import math

from eoam.config import SensorSpec
from eoam.runtime.perception import Detection, LaneClass
from eoam.sim.world import ObjectState, Role, lane_index
from eoam.vehicle.params import VehicleParams, VehicleState

TRAVEL_LANES = (0, 1)


def classify_lane(obj_y: float, ego_y: float, lane_width: float) -> LaneClass:
    lane = lane_index(obj_y, lane_width)
    if lane not in TRAVEL_LANES:
        return LaneClass.OUT_OF_LANE
    return LaneClass.IN_LANE if lane == lane_index(ego_y, lane_width) else LaneClass.ADJACENT


def sensor_scan(
    ego: VehicleState,
    objects: list[ObjectState],
    sensor: SensorSpec,
    params: VehicleParams,
    lane_width: float,
) -> list[Detection]:
    """Detections for objects ahead of the front bumper inside range and cone.

    rel_dist is measured along the road axis between the ego front bumper
    and the object's near end; rel_speed is the closing rate along x.
    """
    cos_psi, sin_psi = math.cos(ego.psi), math.sin(ego.psi)
    sx = ego.x + params.len_front * cos_psi
    sy = ego.y + params.len_front * sin_psi
    ego_vx = ego.v_x * cos_psi - ego.v_y * sin_psi

    detections = []
    for obj in objects:
        rel_dist = obj.near_x - sx
        if rel_dist < 0.0:
            continue
        dy = obj.y - sy
        if math.hypot(rel_dist, dy) > sensor.range:
            continue
        bearing = math.atan2(dy, rel_dist) - ego.psi
        bearing = math.atan2(math.sin(bearing), math.cos(bearing))
        if abs(bearing) > sensor.half_angle:
            continue
        detections.append(Detection(
            object_id=obj.object_id,
            rel_dist=rel_dist,
            rel_speed=ego_vx - obj.v_x,
            lane=classify_lane(obj.y, ego.y, lane_width),
            oncoming=obj.role is Role.ONCOMING,
        ))
    return detections

"""Detections handed from the sensor to the runtime."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class LaneClass(enum.Enum):
    IN_LANE = "in_lane"
    ADJACENT = "adjacent"
    OUT_OF_LANE = "out_of_lane"


@dataclass(frozen=True, slots=True)
class Detection:
    object_id: int
    rel_dist: float  # bumper to bumper along the road axis (m)
    rel_speed: float  # closing rate, positive when the gap shrinks (m/s)
    lane: LaneClass
    oncoming: bool


def nearest_in_lane(detections: list[Detection]) -> Detection | None:
    """Closest same-direction object in the ego lane ahead."""
    candidates = [
        d for d in detections
        if d.lane is LaneClass.IN_LANE and not d.oncoming and d.rel_dist >= 0.0
    ]
    return min(candidates, key=lambda d: d.rel_dist, default=None)


def oncoming_present(detections: list[Detection]) -> bool:
    return any(d.oncoming and d.lane is not LaneClass.OUT_OF_LANE for d in detections)

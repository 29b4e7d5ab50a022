"""Oriented-rectangle contact by the separating axis theorem."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from eoam.vehicle.params import VehicleParams, VehicleState

FloatArray = npt.NDArray[np.float64]

CONTACT_TOL = 1e-9
FRONT_CONE = math.radians(45.0)


class Face(enum.Enum):
    FRONT = "front"
    SIDE = "side"
    REAR = "rear"


@dataclass(frozen=True)
class Footprint:
    corners: FloatArray  # (4, 2), counter-clockwise
    center: FloatArray
    heading: float


@dataclass(frozen=True)
class Contact:
    normal: FloatArray  # unit, pointing from ego towards the object
    penetration: float
    face: Face


def rectangle(x: float, y: float, heading: float, length: float, width: float,
              *, rear: float | None = None) -> Footprint:
    """Footprint of a box; ``rear`` is the reference-to-rear distance (default: centred)."""
    back = 0.5 * length if rear is None else rear
    front = length - back
    c, s = math.cos(heading), math.sin(heading)
    local = np.array([
        [front, -0.5 * width],
        [front, 0.5 * width],
        [-back, 0.5 * width],
        [-back, -0.5 * width],
    ])
    rot = np.array([[c, -s], [s, c]])
    corners = local @ rot.T + np.array([x, y])
    return Footprint(corners=corners, center=corners.mean(axis=0), heading=heading)


def ego_footprint(state: VehicleState, params: VehicleParams) -> Footprint:
    return rectangle(state.x, state.y, state.psi, params.length, params.wid_ego, rear=params.len_rear)


def _axes(fp: Footprint) -> FloatArray:
    c, s = math.cos(fp.heading), math.sin(fp.heading)
    return np.array([[c, s], [-s, c]])


def contact_face(normal: FloatArray, heading: float) -> Face:
    """Front/rear when the normal lies within 45° of the ego longitudinal axis."""
    along = float(normal[0] * math.cos(heading) + normal[1] * math.sin(heading))
    if along >= math.cos(FRONT_CONE):
        return Face.FRONT
    if along <= -math.cos(FRONT_CONE):
        return Face.REAR
    return Face.SIDE


def collision_check(ego: Footprint, other: Footprint, tol: float = CONTACT_TOL) -> Contact | None:
    """Contact report when no axis separates the rectangles (touching counts)."""
    best_overlap = math.inf
    best_axis: FloatArray | None = None
    for axis in np.vstack([_axes(ego), _axes(other)]):
        pa = ego.corners @ axis
        pb = other.corners @ axis
        overlap = min(pa.max(), pb.max()) - max(pa.min(), pb.min())
        if overlap < -tol:
            return None
        if overlap < best_overlap:
            best_overlap, best_axis = overlap, axis
    assert best_axis is not None
    normal = best_axis if float((other.center - ego.center) @ best_axis) >= 0 else -best_axis
    return Contact(normal=normal, penetration=max(best_overlap, 0.0), face=contact_face(normal, ego.heading))


def bounding_radius(front: float, rear: float, width: float) -> float:
    return math.hypot(max(front, rear), 0.5 * width)


def may_touch(x1: float, y1: float, r1: float, x2: float, y2: float, r2: float) -> bool:
    """Bounding-circle broad phase on plain floats."""
    return math.hypot(x2 - x1, y2 - y1) <= r1 + r2 + CONTACT_TOL

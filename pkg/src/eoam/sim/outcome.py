"""Run outcome classes and their mapping from the collision record."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from eoam.sim.collision import Face
from eoam.sim.world import Role


class Outcome(enum.Enum):
    GREEN = "green"  # no contact
    YELLOW = "yellow"  # frontal contact with the in-lane ARO
    ORANGE = "orange"  # side contact with anything
    RED = "red"  # frontal contact with the oncoming ARO

    @property
    def exit_code(self) -> int:
        return _EXIT_CODES[self]


_EXIT_CODES = {Outcome.GREEN: 0, Outcome.YELLOW: 10, Outcome.ORANGE: 20, Outcome.RED: 30}


@dataclass(frozen=True)
class CollisionRecord:
    t: float
    object_id: int
    role: Role
    face: Face
    closing_speed: float
    penetration: float
    ego_x: float
    ego_y: float


@dataclass(frozen=True)
class RunRecord:
    """What the supervisor did during one run.

    The outcome class is a function of ``collision`` alone. The other
    fields feed ``audit_run``, which checks that the class is backed by
    the intervention the supervisor was expected to make.
    """

    collision: CollisionRecord | None
    maneuvered: bool  # entered a steering mode
    return_completed: bool  # RETURN → NORMAL handback happened
    t_limit_braking: float | None = None
    t_pnr: float | None = None

    @property
    def limit_braking_commanded(self) -> bool:
        return self.t_limit_braking is not None

    @property
    def braked_before_pnr(self) -> bool:
        if self.t_limit_braking is None:
            return False
        return self.t_pnr is None or self.t_limit_braking <= self.t_pnr


def classify_outcome(record: RunRecord) -> Outcome:
    hit = record.collision
    if hit is None:
        return Outcome.GREEN
    if hit.face is Face.FRONT:
        if hit.role is Role.ONCOMING:
            return Outcome.RED
        if hit.role is Role.ARO:
            return Outcome.YELLOW
    return Outcome.ORANGE


def audit_run(record: RunRecord, outcome: Outcome) -> list[str]:
    """Problems with the intervention behind ``outcome``; empty when consistent."""
    problems = []
    if outcome is Outcome.YELLOW and not record.braked_before_pnr:
        problems.append("yellow without limit braking before the point of no return")
    if outcome is Outcome.GREEN and record.maneuvered and not record.return_completed:
        problems.append("green lane change never returned to the origin lane")
    return problems

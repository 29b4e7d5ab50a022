"""EOAM mode state machine.

NORMAL ──[sector C/D/A]──→ UPDATE_BRAKE ──[gap opening]──→ NORMAL (handback)
   │                         │      ^
   │        [sector B/F, no oncoming]  [sector A, clearing lost, |y| < y_PNR]
   │                         v      │
   ├──[sector B/F]──→ UPDATE_STEER_BRAKE ──[oncoming, |y| ≥ y_PNR]──→ ONCOMING_STEER_BRAKE
   │                    │            │                                     │
   │      [oncoming, |y| < y_PNR]   [timer ≥ T_max]              [lane change complete]
   │                    v            v                                     v
   └──[B/F + oncoming]→ ONCOMING_BRAKE      RETURN ←───────────────────────┘
                        │                      │
               [gap opening]          [back in origin lane]
                        v                      v
                      NORMAL (handback)      NORMAL (handback)
"""

from __future__ import annotations

import enum

import structlog

log = structlog.get_logger()


class EoamMode(enum.IntEnum):
    NORMAL = 0
    UPDATE_BRAKE = 1
    UPDATE_STEER_BRAKE = 2
    ONCOMING_BRAKE = 3
    ONCOMING_STEER_BRAKE = 4
    RETURN = 5

    @property
    def steering(self) -> bool:
        """Modes in which the lane-change row drives the steering and accel loops."""
        return self in (EoamMode.UPDATE_STEER_BRAKE, EoamMode.ONCOMING_STEER_BRAKE, EoamMode.RETURN)

    @property
    def limit_braking(self) -> bool:
        return self in (EoamMode.UPDATE_BRAKE, EoamMode.ONCOMING_BRAKE)


# Valid transitions: (from_mode, to_mode)
VALID_TRANSITIONS: set[tuple[EoamMode, EoamMode]] = {
    (EoamMode.NORMAL, EoamMode.UPDATE_BRAKE),
    (EoamMode.NORMAL, EoamMode.UPDATE_STEER_BRAKE),
    (EoamMode.NORMAL, EoamMode.ONCOMING_BRAKE),  # steer wanted but oncoming already seen
    (EoamMode.UPDATE_BRAKE, EoamMode.UPDATE_STEER_BRAKE),
    (EoamMode.UPDATE_BRAKE, EoamMode.ONCOMING_BRAKE),
    (EoamMode.UPDATE_BRAKE, EoamMode.NORMAL),
    (EoamMode.UPDATE_STEER_BRAKE, EoamMode.UPDATE_BRAKE),  # clearing lost before the PNR
    (EoamMode.UPDATE_STEER_BRAKE, EoamMode.ONCOMING_BRAKE),
    (EoamMode.UPDATE_STEER_BRAKE, EoamMode.ONCOMING_STEER_BRAKE),
    (EoamMode.UPDATE_STEER_BRAKE, EoamMode.RETURN),
    (EoamMode.ONCOMING_BRAKE, EoamMode.NORMAL),
    (EoamMode.ONCOMING_STEER_BRAKE, EoamMode.RETURN),
    (EoamMode.RETURN, EoamMode.NORMAL),
}


class InvalidTransition(Exception):
    """Raised when an invalid mode transition is attempted."""

    def __init__(self, from_mode: EoamMode, to_mode: EoamMode) -> None:
        self.from_mode = from_mode
        self.to_mode = to_mode
        super().__init__(f"Invalid transition: {from_mode.name} → {to_mode.name}")


def validate_transition(from_mode: EoamMode, to_mode: EoamMode) -> None:
    """Validate a mode transition, raising InvalidTransition if not allowed."""
    if (from_mode, to_mode) not in VALID_TRANSITIONS:
        raise InvalidTransition(from_mode, to_mode)


def transition(
    current: EoamMode,
    target: EoamMode,
    t: float,
    trigger: str = "",
) -> EoamMode:
    """Execute a validated mode transition, logging the change."""
    validate_transition(current, target)
    log.info(
        "mode_transition",
        t=round(t, 6),
        from_mode=current.name,
        to_mode=target.name,
        trigger=trigger,
    )
    return target

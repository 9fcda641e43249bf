"""High-level longitudinal plant.

Double-integrator kinematics advanced by explicit Euler, with the position
integrated from the pre-update speed. The motion estimator uses exactly the
same scheme, so under perfect communication the two stay bit-identical.
Commanded acceleration is tracked perfectly up to saturation; powertrain and
brake actuation are out of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NumericFault
from .types import VehicleState


@dataclass(frozen=True)
class DynamicsLimits:
    """Actuator saturation. ``decel_max`` is a magnitude (positive)."""

    accel_max: float = 3.0
    decel_max: float = 5.0
    speed_max: float = 20.0

    def __post_init__(self) -> None:
        if self.accel_max <= 0 or self.decel_max <= 0 or self.speed_max <= 0:
            raise ValueError("dynamics limits must all be strictly positive")


def step_vehicle(
    state: VehicleState,
    accel_cmd: float,
    dt: float,
    limits: DynamicsLimits,
) -> VehicleState:
    """Advance one vehicle by one step of duration ``dt``.

    The applied acceleration is the command clamped into
    [-decel_max, +accel_max]; position advances with the pre-update speed;
    the new speed is clamped into [0, speed_max].
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not math.isfinite(accel_cmd):
        raise NumericFault(f"non-finite acceleration command: {accel_cmd}")
    applied = min(max(accel_cmd, -limits.decel_max), limits.accel_max)
    new_position = state.position + state.speed * dt
    new_speed = min(max(state.speed + applied * dt, 0.0), limits.speed_max)
    return VehicleState(
        position=new_position,
        speed=new_speed,
        acceleration=applied,
        length=state.length,
        leg=state.leg,
    )

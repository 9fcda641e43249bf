"""Intersection geometry, virtual-lane projection, and crossing order.

Vehicles approach a shared crossing point from several legs. Each leg's
position is projected onto a single virtual lane by distance to the
crossing point, which turns the coordination problem into the one-lane
string the controller expects. Crossing order is first-come-first-served
by control-zone entry time, with vehicle id breaking ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import VehicleId, VehicleState


@dataclass(frozen=True)
class LegSpec:
    id: str
    approach_length: float

    def __post_init__(self) -> None:
        if self.approach_length <= 0:
            raise ValueError("approach_length must be > 0")


@dataclass(frozen=True)
class IntersectionSpec:
    """Geometry of one intersection on its own virtual lane.

    The crossing point sits at virtual coordinate ``crossing_coord`` (the
    longest approach, so every spawn point maps to a non-negative
    coordinate). ``conflict_zone_length`` is centred on the crossing point.
    """

    id: str
    legs: tuple[LegSpec, ...]
    control_zone_radius: float = 150.0
    conflict_zone_length: float = 12.0

    def __post_init__(self) -> None:
        if not self.legs:
            raise ValueError("intersection needs at least one leg")
        if self.control_zone_radius <= 0:
            raise ValueError("control_zone_radius must be > 0")
        for leg in self.legs:
            if leg.approach_length < self.control_zone_radius:
                raise ValueError(
                    f"leg {leg.id}: approach_length {leg.approach_length} shorter "
                    f"than control_zone_radius {self.control_zone_radius}"
                )

    @property
    def crossing_coord(self) -> float:
        return max(leg.approach_length for leg in self.legs)

    def leg(self, leg_id: str) -> LegSpec:
        for leg in self.legs:
            if leg.id == leg_id:
                return leg
        raise KeyError(f"unknown leg {leg_id!r}")


def project_to_virtual_lane(
    leg_position: float, leg: LegSpec, spec: IntersectionSpec
) -> float:
    """Virtual coordinate of a vehicle ``leg_position`` meters into its leg.

    Equal distances to the crossing point map to equal virtual coordinates
    regardless of leg: s = crossing_coord - (approach_length - leg_position).
    """
    distance_to_cross = leg.approach_length - leg_position
    return spec.crossing_coord - distance_to_cross


@dataclass(frozen=True)
class SpawnEvent:
    time: float
    intersection: str
    leg: str
    speed: float
    length: float = 5.0
    start_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.speed < 0:
            raise ValueError("spawn speed must be >= 0")
        if self.length <= 0:
            raise ValueError("vehicle length must be > 0")
        if self.start_offset < 0:
            raise ValueError("start_offset must be >= 0")


@dataclass(frozen=True)
class RandomSpawnSpec:
    """Seeded Poisson arrivals per leg, expanded to events at load time."""

    rate_per_leg: float
    speed_min: float
    speed_max: float
    length: float = 5.0
    max_vehicles: int | None = None

    def __post_init__(self) -> None:
        if self.rate_per_leg <= 0:
            raise ValueError("rate_per_leg must be > 0")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ValueError("need 0 <= speed_min <= speed_max")


@dataclass(frozen=True)
class SpawnPlan:
    events: tuple[SpawnEvent, ...] = ()
    random: RandomSpawnSpec | None = None
    min_spawn_gap: float = 10.0


def expand_random_spawns(
    plan: SpawnPlan,
    intersections: tuple[IntersectionSpec, ...],
    duration: float,
    seed: int,
) -> tuple[SpawnEvent, ...]:
    """Materialize the full spawn-event list, deterministic in the seed."""
    events = list(plan.events)
    spec = plan.random
    if spec is not None:
        seq = np.random.SeedSequence(entropy=seed, spawn_key=(2,))
        rng = np.random.Generator(np.random.PCG64(seq))
        generated: list[SpawnEvent] = []
        for intersection in intersections:
            for leg in intersection.legs:
                t = 0.0
                while True:
                    t += rng.exponential(1.0 / spec.rate_per_leg)
                    if t >= duration:
                        break
                    speed = rng.uniform(spec.speed_min, spec.speed_max)
                    generated.append(
                        SpawnEvent(
                            time=t,
                            intersection=intersection.id,
                            leg=leg.id,
                            speed=float(speed),
                            length=spec.length,
                        )
                    )
        generated.sort(key=lambda e: (e.time, e.intersection, e.leg))
        if spec.max_vehicles is not None:
            generated = generated[: spec.max_vehicles]
        events.extend(generated)
    # Stable by time only: simultaneous events keep their listed order, so
    # vehicle ids (and the FCFS id tie-break) follow the author's ordering.
    events.sort(key=lambda e: e.time)
    return tuple(events)


@dataclass
class CrossingSequence:
    """FCFS order of one intersection's coordinated vehicles."""

    entries: list[tuple[float, VehicleId]] = field(default_factory=list)

    def stamp(self, vehicle: VehicleId, entry_time: float) -> None:
        if any(vid == vehicle for _, vid in self.entries):
            return
        self.entries.append((entry_time, vehicle))
        self.entries.sort()

    def remove(self, vehicle: VehicleId) -> None:
        self.entries = [(t, vid) for t, vid in self.entries if vid != vehicle]

    def order(self) -> list[VehicleId]:
        return [vid for _, vid in self.entries]


def assign_targets(sequence: CrossingSequence) -> dict[VehicleId, VehicleId | None]:
    """Each vehicle's target is its immediate predecessor; the head has none."""
    order = sequence.order()
    targets: dict[VehicleId, VehicleId | None] = {}
    prev: VehicleId | None = None
    for vid in order:
        targets[vid] = prev
        prev = vid
    return targets


@dataclass(frozen=True)
class SafetyViolation:
    kind: str  # "rear_end" or "conflict_zone"
    vehicle_a: VehicleId
    vehicle_b: VehicleId
    detail: float  # bumper gap for rear_end, separation for conflict_zone


def safety_check(
    states: dict[VehicleId, VehicleState], spec: IntersectionSpec
) -> list[SafetyViolation]:
    """Flag same-leg rear-end overlaps and conflict-zone co-occupancy.

    A vehicle occupies [position - length, position]; the conflict zone is
    the interval of ``conflict_zone_length`` centred on the crossing point.
    """
    violations: list[SafetyViolation] = []
    by_leg: dict[str, list[tuple[float, VehicleId]]] = {}
    for vid, st in sorted(states.items()):
        by_leg.setdefault(st.leg, []).append((st.position, vid))
    for leg_vehicles in by_leg.values():
        leg_vehicles.sort()
        for (pos_rear, vid_rear), (pos_front, vid_front) in zip(
            leg_vehicles, leg_vehicles[1:]
        ):
            gap = pos_front - states[vid_front].length - pos_rear
            if gap < 0:
                violations.append(
                    SafetyViolation("rear_end", vid_rear, vid_front, gap)
                )
    half = spec.conflict_zone_length / 2.0
    zone_lo = spec.crossing_coord - half
    zone_hi = spec.crossing_coord + half
    occupants = [
        (vid, st)
        for vid, st in sorted(states.items())
        if st.position - st.length <= zone_hi and st.position >= zone_lo
    ]
    for i, (vid_a, st_a) in enumerate(occupants):
        for vid_b, st_b in occupants[i + 1 :]:
            if st_a.leg != st_b.leg:
                violations.append(
                    SafetyViolation(
                        "conflict_zone",
                        vid_a,
                        vid_b,
                        abs(st_a.position - st_b.position),
                    )
                )
    return violations

import pytest

from cavsim.scenario import (
    CrossingSequence,
    IntersectionSpec,
    LegSpec,
    RandomSpawnSpec,
    SpawnEvent,
    SpawnPlan,
    assign_targets,
    expand_random_spawns,
    project_to_virtual_lane,
    safety_check,
)
from cavsim.types import VehicleState

SPEC = IntersectionSpec(
    id="x",
    legs=(LegSpec("a", 500.0), LegSpec("b", 400.0)),
    control_zone_radius=150.0,
    conflict_zone_length=12.0,
)


def vs(position, leg="a", length=5.0, speed=10.0):
    return VehicleState(position=position, speed=speed, acceleration=0.0, length=length, leg=leg)


class TestProjection:
    def test_crossing_point_maps_to_crossing_coord(self):
        leg = SPEC.leg("a")
        s = project_to_virtual_lane(leg.approach_length, leg, SPEC)
        assert s == SPEC.crossing_coord

    def test_equal_distances_map_equally(self):
        a, b = SPEC.leg("a"), SPEC.leg("b")
        s_a = project_to_virtual_lane(a.approach_length - 30.0, a, SPEC)
        s_b = project_to_virtual_lane(b.approach_length - 30.0, b, SPEC)
        assert s_a == s_b

    def test_arithmetic(self):
        # d = 100 from a crossing coordinate of 500
        leg = SPEC.leg("a")
        s = project_to_virtual_lane(400.0, leg, SPEC)
        assert s == 400.0
        assert SPEC.crossing_coord == 500.0


class TestCrossingSequence:
    def test_fcfs_with_id_tiebreak(self):
        seq = CrossingSequence()
        seq.stamp(7, 1.0)
        seq.stamp(3, 0.5)
        seq.stamp(9, 1.0)
        assert seq.order() == [3, 7, 9]

    def test_stamp_is_idempotent(self):
        seq = CrossingSequence()
        seq.stamp(1, 1.0)
        seq.stamp(1, 2.0)
        assert seq.entries == [(1.0, 1)]

    def test_targets_follow_predecessor(self):
        seq = CrossingSequence()
        for t, vid in [(0.0, 3), (1.0, 7), (2.0, 1)]:
            seq.stamp(vid, t)
        targets = assign_targets(seq)
        assert targets == {3: None, 7: 3, 1: 7}

    def test_single_vehicle_is_leader(self):
        seq = CrossingSequence()
        seq.stamp(5, 0.0)
        assert assign_targets(seq) == {5: None}

    def test_contraction_retargets(self):
        seq = CrossingSequence()
        for t, vid in [(0.0, 3), (1.0, 7), (2.0, 1)]:
            seq.stamp(vid, t)
        seq.remove(7)
        assert assign_targets(seq) == {3: None, 1: 3}


class TestSafetyCheck:
    def test_positive_gap_is_safe(self):
        states = {0: vs(100.0), 1: vs(94.5)}  # bumper gap 0.5 m
        assert safety_check(states, SPEC) == []

    def test_rear_end_overlap_flagged(self):
        states = {0: vs(100.0), 1: vs(96.0)}  # follower front past leader rear
        violations = safety_check(states, SPEC)
        assert len(violations) == 1
        assert violations[0].kind == "rear_end"
        assert violations[0].detail < 0

    def test_conflict_zone_co_occupancy(self):
        cross = SPEC.crossing_coord
        states = {0: vs(cross, leg="a"), 1: vs(cross - 2.0, leg="b")}
        violations = safety_check(states, SPEC)
        assert any(v.kind == "conflict_zone" for v in violations)

    def test_same_leg_in_zone_not_conflict(self):
        cross = SPEC.crossing_coord
        states = {0: vs(cross, leg="a"), 1: vs(cross - 6.0, leg="a")}
        assert all(v.kind != "conflict_zone" for v in safety_check(states, SPEC))

    def test_outside_zone_different_legs_safe(self):
        states = {0: vs(100.0, leg="a"), 1: vs(100.0, leg="b")}
        assert safety_check(states, SPEC) == []


class TestSpawnExpansion:
    def test_explicit_events_keep_listed_order_for_ties(self):
        plan = SpawnPlan(
            events=(
                SpawnEvent(time=0.0, intersection="x", leg="b", speed=10.0),
                SpawnEvent(time=0.0, intersection="x", leg="a", speed=11.0),
            )
        )
        events = expand_random_spawns(plan, (SPEC,), 10.0, seed=1)
        assert [e.leg for e in events] == ["b", "a"]

    def test_random_expansion_is_deterministic(self):
        plan = SpawnPlan(random=RandomSpawnSpec(rate_per_leg=0.5, speed_min=8.0, speed_max=12.0))
        a = expand_random_spawns(plan, (SPEC,), 30.0, seed=9)
        b = expand_random_spawns(plan, (SPEC,), 30.0, seed=9)
        c = expand_random_spawns(plan, (SPEC,), 30.0, seed=10)
        assert a == b
        assert a != c

    def test_max_vehicles_cap(self):
        plan = SpawnPlan(
            random=RandomSpawnSpec(rate_per_leg=2.0, speed_min=8.0, speed_max=12.0, max_vehicles=5)
        )
        events = expand_random_spawns(plan, (SPEC,), 60.0, seed=3)
        assert len(events) == 5

    def test_random_speeds_within_range(self):
        plan = SpawnPlan(random=RandomSpawnSpec(rate_per_leg=1.0, speed_min=8.0, speed_max=12.0))
        events = expand_random_spawns(plan, (SPEC,), 30.0, seed=4)
        assert events
        assert all(8.0 <= e.speed <= 12.0 for e in events)


def test_intersection_validation():
    with pytest.raises(ValueError):
        IntersectionSpec(id="x", legs=(), control_zone_radius=100.0)
    with pytest.raises(ValueError):
        IntersectionSpec(
            id="x", legs=(LegSpec("a", 50.0),), control_zone_radius=100.0
        )


def test_unknown_leg_lookup():
    with pytest.raises(KeyError):
        SPEC.leg("zzz")

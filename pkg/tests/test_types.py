import math

import pytest
from hypothesis import given, strategies as st

from cavsim.errors import HorizonExhausted
from cavsim.types import Beacon, TrajectoryEstimate, VehicleState, lerp_trajectory


def make_estimate(speeds, anchor_time=10.0, step=0.1, anchor_speed=None, anchor_position=0.0):
    anchor_speed = anchor_speed if anchor_speed is not None else speeds[0]
    positions = []
    r = anchor_position
    prev = anchor_speed
    for v in speeds:
        r += prev * step
        positions.append(r)
        prev = v
    return TrajectoryEstimate(
        anchor_time=anchor_time,
        step=step,
        anchor_speed=anchor_speed,
        anchor_position=anchor_position,
        speeds=tuple(speeds),
        positions=tuple(positions),
    )


class TestLerpTrajectory:
    def test_exact_sample_hit(self):
        est = make_estimate([5.0, 6.0, 7.0])
        speed, _ = lerp_trajectory(est, 10.1)
        assert speed == 5.0

    def test_midpoint_interpolation(self):
        est = make_estimate([5.0, 6.0, 7.0])
        speed, _ = lerp_trajectory(est, 10.15)
        assert speed == pytest.approx(5.5, abs=1e-12)

    def test_beyond_horizon_raises(self):
        est = make_estimate([5.0, 6.0, 7.0])  # ends at 10.3
        with pytest.raises(HorizonExhausted):
            lerp_trajectory(est, 10.5)

    def test_query_at_anchor_rejected(self):
        est = make_estimate([5.0, 6.0, 7.0])
        with pytest.raises(ValueError):
            lerp_trajectory(est, 10.0)
        with pytest.raises(ValueError):
            lerp_trajectory(est, 9.9)

    def test_end_of_horizon_is_valid(self):
        est = make_estimate([5.0, 6.0, 7.0])
        speed, _ = lerp_trajectory(est, est.end_time)
        assert speed == 7.0

    @given(
        speeds=st.lists(st.floats(0.0, 40.0), min_size=1, max_size=30),
        k=st.integers(1, 30),
    )
    def test_exact_sample_times_return_stored_samples(self, speeds, k):
        k = min(k, len(speeds))
        est = make_estimate(speeds, anchor_speed=10.0)
        speed, position = lerp_trajectory(est, est.anchor_time + k * est.step)
        assert speed == est.speeds[k - 1]
        assert position == est.positions[k - 1]

    @given(
        speeds=st.lists(st.floats(0.0, 40.0), min_size=2, max_size=30),
        x=st.floats(0.01, 0.99),
        eps=st.floats(0.001, 0.05),
    )
    def test_continuity(self, speeds, x, eps):
        est = make_estimate(speeds, anchor_speed=12.0)
        samples = [est.anchor_speed, *est.speeds]
        max_adjacent = max(
            abs(b - a) for a, b in zip(samples, samples[1:])
        )
        t0 = est.anchor_time + (x + 0.005) * est.step * (len(speeds) - 1) + est.step * 0.001
        t0 = min(max(t0, est.anchor_time + 1e-6), est.end_time - eps * est.step)
        v0, _ = lerp_trajectory(est, t0)
        v1, _ = lerp_trajectory(est, t0 + eps * est.step)
        assert abs(v1 - v0) <= max_adjacent + 1e-9


class TestInvariants:
    def test_vehicle_state_rejects_negative_speed(self):
        with pytest.raises(ValueError):
            VehicleState(position=0.0, speed=-1.0, acceleration=0.0, length=5.0, leg="a")

    def test_vehicle_state_rejects_zero_length(self):
        with pytest.raises(ValueError):
            VehicleState(position=0.0, speed=1.0, acceleration=0.0, length=0.0, leg="a")

    def test_estimate_rejects_mismatched_arrays(self):
        with pytest.raises(ValueError):
            TrajectoryEstimate(
                anchor_time=0.0, step=0.1, anchor_speed=1.0, anchor_position=0.0,
                speeds=(1.0, 2.0), positions=(1.0,),
            )

    def test_estimate_rejects_empty_horizon(self):
        with pytest.raises(ValueError):
            TrajectoryEstimate(
                anchor_time=0.0, step=0.1, anchor_speed=1.0, anchor_position=0.0,
                speeds=(), positions=(),
            )

    def test_positions_nondecreasing_for_nonnegative_speeds(self):
        est = make_estimate([3.0, 0.0, 5.0], anchor_speed=2.0)
        assert list(est.positions) == sorted(est.positions)

    def test_beacon_rejects_future_anchor(self):
        est = make_estimate([5.0], anchor_time=10.0)
        state = VehicleState(position=0.0, speed=5.0, acceleration=0.0, length=5.0, leg="a")
        with pytest.raises(ValueError):
            Beacon(sender=0, send_time=9.0, state=state, estimate=est)

    def test_beacon_allows_anchor_at_or_before_send(self):
        est = make_estimate([5.0], anchor_time=10.0)
        state = VehicleState(position=0.0, speed=5.0, acceleration=0.0, length=5.0, leg="a")
        Beacon(sender=0, send_time=10.0, state=state, estimate=est)
        Beacon(sender=0, send_time=10.5, state=state, estimate=est)


def test_sample_accessors():
    est = make_estimate([5.0, 6.0], anchor_speed=4.0, anchor_position=100.0)
    assert est.speed_at(0) == 4.0
    assert est.speed_at(1) == 5.0
    assert est.position_at(0) == 100.0
    assert math.isclose(est.end_time, est.anchor_time + 2 * est.step)

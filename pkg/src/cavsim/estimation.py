"""Future-trajectory estimation and stale-data compensation.

Each vehicle predicts its own motion over a horizon of N samples spaced
``prediction_step`` apart and broadcasts the result. A chain leader predicts
free driving toward a preset target speed; a follower propagates the
consensus law along the horizon using its target's latest broadcast,
compensated for the age of the received horizon. When no beacon arrives,
the previous estimate is held (shifted to the new anchor), and the
follower's controller reads the target's last broadcast horizon instead of
live data.

Conventions shared with the plant: forward Euler, positions integrated from
the pre-update speed, speeds clamped at zero. The follower recursion applies
the consensus law to the previous-sample pair of both vehicles, which makes
the one-step-ahead estimate bit-identical to the plant under zero delay,
zero loss, and matching steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .control import ControlGains, consensus_accel_raw
from .dynamics import DynamicsLimits
from .errors import ColdStart, HorizonExhausted, NumericFault
from .types import (
    Beacon,
    SimTime,
    TargetView,
    TrajectoryEstimate,
    VehicleId,
    VehicleState,
    lerp_trajectory,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorParams:
    """Horizon geometry and the leader's free-driving model constants.

    When ``limits`` is set, the recursions respect the ego vehicle's own
    actuator envelope (a vehicle knows what its plant can deliver), keeping
    estimates aligned with the saturated plant. ``limits=None`` gives the
    pure unsaturated formulas.
    """

    prediction_step: float = 0.1
    horizon_len: int = 50
    a_max: float = 0.73
    sigma: float = 4.0
    v_target: float = 15.0
    implicit_solve: bool = False
    limits: DynamicsLimits | None = None

    def __post_init__(self) -> None:
        if self.prediction_step <= 0:
            raise ValueError("prediction_step must be > 0")
        if self.horizon_len < 1:
            raise ValueError("horizon_len must be >= 1")
        if self.a_max <= 0 or self.sigma <= 0 or self.v_target <= 0:
            raise ValueError("a_max, sigma, v_target must be > 0")

    def step_speed(self, v: float, accel: float) -> float:
        """One forward-Euler speed step under the configured envelope.

        Mirrors the plant's clamp expressions exactly so that estimator
        and plant transitions agree bit-for-bit.
        """
        if self.limits is None:
            return max(0.0, v + accel * self.prediction_step)
        applied = min(max(accel, -self.limits.decel_max), self.limits.accel_max)
        return min(max(v + applied * self.prediction_step, 0.0), self.limits.speed_max)


@dataclass
class EstimatorState:
    """Per-vehicle estimator memory, owned and mutated by the engine.

    ``refreshed_send_time`` is the send time of the beacon consumed by the
    last own-estimate refresh; a refresh boundary with no newer beacon in
    the inbox holds the previous estimate instead of recomputing from stale
    data.
    """

    own_estimate: TrajectoryEstimate | None = None
    last_target_beacon: Beacon | None = None
    link_up: bool = False
    horizon_exhausted: bool = False
    refreshed_send_time: SimTime | None = None

    @property
    def last_target_estimate(self) -> TrajectoryEstimate | None:
        beacon = self.last_target_beacon
        return beacon.estimate if beacon is not None else None

    def has_fresh_beacon(self) -> bool:
        """A beacon newer than the one used by the last refresh is waiting."""
        if self.last_target_beacon is None:
            return False
        return (
            self.refreshed_send_time is None
            or self.last_target_beacon.send_time > self.refreshed_send_time
        )


def idm_free_accel(v: float, params: EstimatorParams) -> float:
    """Free-road acceleration toward the preset target speed."""
    return params.a_max * (1.0 - (v / params.v_target) ** params.sigma)


def predict_leader_speed(params: EstimatorParams, v_now: float) -> list[float]:
    """Speed horizon of a vehicle with no target, converging to v_target.

    Recursion: v[k] = v[k-1] + a_max * (1 - (v[k-1]/v_target)^sigma) * dt,
    clamped at zero, with v[0] = v_now.
    """
    if v_now < 0:
        raise ValueError("v_now must be >= 0")
    a_max = params.a_max
    sigma = params.sigma
    v_target = params.v_target
    dt = params.prediction_step
    limits = params.limits
    speeds: list[float] = []
    v = v_now
    if limits is None:
        for _ in range(params.horizon_len):
            accel = a_max * (1.0 - (v / v_target) ** sigma)
            v = max(0.0, v + accel * dt)
            speeds.append(v)
    else:
        decel_max = limits.decel_max
        accel_cap = limits.accel_max
        speed_max = limits.speed_max
        for _ in range(params.horizon_len):
            accel = a_max * (1.0 - (v / v_target) ** sigma)
            applied = min(max(accel, -decel_max), accel_cap)
            v = min(max(v + applied * dt, 0.0), speed_max)
            speeds.append(v)
    return speeds


def integrate_position(
    r_now: float, v_now: float, speeds: Sequence[float], step: float
) -> list[float]:
    """Cumulative positions from a speed horizon, pre-update convention.

    r[k] = r[k-1] + v[k-1] * step with r[0] = r_now and v[0] = v_now, so the
    last horizon speed never enters the returned positions.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    positions: list[float] = []
    r = r_now
    prev_v = v_now
    for v in speeds:
        r = r + prev_v * step
        positions.append(r)
        prev_v = v
    return positions


def build_estimate(
    anchor_time: SimTime,
    state: VehicleState,
    speeds: Sequence[float],
    step: float,
) -> TrajectoryEstimate:
    """Assemble a TrajectoryEstimate anchored at a vehicle's own state."""
    return TrajectoryEstimate(
        anchor_time=anchor_time,
        step=step,
        anchor_speed=state.speed,
        anchor_position=state.position,
        speeds=tuple(speeds),
        positions=tuple(integrate_position(state.position, state.speed, speeds, step)),
    )


def compensate_delay(
    target_est: TrajectoryEstimate,
    k: int,
    tau: float,
    params: EstimatorParams,
) -> tuple[float, float]:
    """Delay-compensated target speed and position for horizon transition k.

    The transition from sample k-1 to k consumes the target's sample k-1,
    so the lookup baselines there. For tau below one prediction step the
    stale speed is held unchanged; for larger tau it is extrapolated forward
    by (tau/dt) per-step speed deltas (first-order hold). The position is
    the previous sample advanced by the compensated speed over the delay:

        r_adj = r[k-1] + v_adj * tau

    A delay exceeding k prediction steps means even the anchor predates the
    requested time; the extrapolation still runs but is logged.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if not 1 <= k <= target_est.horizon_len:
        raise ValueError(f"horizon index {k} outside 1..{target_est.horizon_len}")
    dt = target_est.step
    base = k - 1
    if tau < dt:
        v_adj = target_est.speed_at(base)
    else:
        if tau > k * dt:
            log.debug(
                "delay %.4f s predates the estimate anchor at horizon index %d; "
                "extrapolating from the oldest usable sample",
                tau,
                k,
            )
        delta = target_est.speed_at(base + 1) - target_est.speed_at(base)
        v_adj = target_est.speed_at(base) + (tau / dt) * delta
    v_adj = max(0.0, v_adj)
    r_adj = target_est.position_at(k - 1) + v_adj * tau
    return v_adj, r_adj


def predict_follower_speed(
    prev_v: float,
    prev_r: float,
    target_v_adj: float,
    target_r_adj: float,
    gains: ControlGains,
    l_target: float,
    t_gap: float,
    params: EstimatorParams,
) -> float:
    """One speed-horizon transition of a following vehicle.

    Default (explicit) form applies the consensus law to the previous-sample
    pair and steps forward by the prediction step:

        v_next = prev_v + u(prev_r, prev_v, r_adj, v_adj) * dt

    clamped at zero. The implicit variant solves the published fixed-point
    form (next speed on both sides, follower position advanced) in closed
    form; it is config-gated for comparison and off by default.
    """
    for name, value in (
        ("prev_v", prev_v),
        ("prev_r", prev_r),
        ("target_v_adj", target_v_adj),
        ("target_r_adj", target_r_adj),
    ):
        if not math.isfinite(value):
            raise NumericFault(f"non-finite estimator input {name}={value}")
    if t_gap <= 0:
        raise ValueError("t_gap must be > 0")
    dt = params.prediction_step
    if params.implicit_solve:
        a = gains.alpha * gains.k * dt
        r_next = prev_r + prev_v * dt
        numer = prev_v - a * (r_next - target_r_adj + l_target - gains.gamma * target_v_adj)
        v_solved = numer / (1.0 + a * (t_gap + gains.gamma))
        accel = (v_solved - prev_v) / dt
    else:
        accel = consensus_accel_raw(
            prev_r,
            prev_v,
            target_r_adj,
            target_v_adj,
            l_target,
            t_gap,
            gains.alpha,
            gains.k,
            gains.gamma,
        )
    v_next = params.step_speed(prev_v, accel)
    if not math.isfinite(v_next):
        raise NumericFault("follower speed prediction diverged to non-finite")
    return v_next


def _compensated_target_arrays(
    target_est: TrajectoryEstimate,
    tau: float,
    horizon_len: int,
    dt: float,
) -> tuple[list[float], list[float]]:
    """Vectorized compensate_delay over every transition index 1..horizon_len.

    Produces exactly the per-index values of ``compensate_delay``; when the
    received horizon is shorter than ours, the final sample is held and
    dead-reckoned forward. Kept bit-identical to the scalar operation (the
    test suite pins this).
    """
    n_t = target_est.horizon_len
    samples = np.empty(n_t + 1)
    samples[0] = target_est.anchor_speed
    samples[1:] = target_est.speeds
    pos = np.empty(n_t + 1)
    pos[0] = target_est.anchor_position
    pos[1:] = target_est.positions
    n = min(horizon_len, n_t)
    base_v = samples[:n]
    if tau < dt:
        v_adj = base_v.copy()
    else:
        v_adj = base_v + (tau / dt) * (samples[1 : n + 1] - base_v)
        np.maximum(v_adj, 0.0, out=v_adj)
    r_adj = pos[:n] + v_adj * tau
    if horizon_len > n_t:
        v_last = samples[n_t]
        r_last = pos[n_t]
        ks = np.arange(n_t + 1, horizon_len + 1, dtype=float)
        v_pad = np.full(horizon_len - n_t, max(0.0, v_last))
        r_pad = r_last + v_pad * ((ks - 1 - n_t) * dt + tau)
        v_adj = np.concatenate([v_adj, v_pad])
        r_adj = np.concatenate([r_adj, r_pad])
    return v_adj.tolist(), r_adj.tolist()


def follower_estimate(
    now: SimTime,
    own: VehicleState,
    beacon: Beacon,
    gains: ControlGains,
    t_gap: float,
    params: EstimatorParams,
) -> TrajectoryEstimate:
    """Full horizon of a follower from a freshly received target beacon.

    Equivalent to composing ``compensate_delay`` and
    ``predict_follower_speed`` sample by sample; the consensus arithmetic is
    inlined in the exact operation order of ``consensus_accel_raw`` and the
    plant step, so the hot loop stays bit-compatible with both.

    The compensated delay is the age of the received horizon itself,
    ``now - estimate.anchor_time``: with per-step refresh that equals the
    beacon age, while with coarse prediction steps it additionally covers
    the sender's anchor being older than the beacon.
    """
    tau = now - beacon.estimate.anchor_time
    if now - beacon.send_time < 0:
        raise ValueError("beacon from the future")
    dt = params.prediction_step
    l_target = beacon.state.length
    v_adj, r_adj = _compensated_target_arrays(
        beacon.estimate, tau, params.horizon_len, dt
    )
    alpha = float(gains.alpha)
    k_gain = gains.k
    gamma = gains.gamma
    limits = params.limits
    if params.implicit_solve:
        speeds: list[float] = []
        v = own.speed
        r = own.position
        for idx in range(params.horizon_len):
            v_next = predict_follower_speed(
                v, r, v_adj[idx], r_adj[idx], gains, l_target, t_gap, params
            )
            r = r + v * dt
            v = v_next
            speeds.append(v_next)
        return build_estimate(now, own, speeds, dt)
    speeds = []
    positions: list[float] = []
    v = own.speed
    r = own.position
    if limits is None:
        for idx in range(params.horizon_len):
            spacing = r - r_adj[idx] + l_target + v * t_gap
            accel = -alpha * k_gain * (spacing + gamma * (v - v_adj[idx]))
            r = r + v * dt
            v = max(0.0, v + accel * dt)
            speeds.append(v)
            positions.append(r)
    else:
        decel_max = limits.decel_max
        accel_max = limits.accel_max
        speed_max = limits.speed_max
        for idx in range(params.horizon_len):
            spacing = r - r_adj[idx] + l_target + v * t_gap
            accel = -alpha * k_gain * (spacing + gamma * (v - v_adj[idx]))
            applied = min(max(accel, -decel_max), accel_max)
            r = r + v * dt
            v = min(max(v + applied * dt, 0.0), speed_max)
            speeds.append(v)
            positions.append(r)
    if not math.isfinite(v):
        raise NumericFault("follower speed prediction diverged to non-finite")
    return TrajectoryEstimate(
        anchor_time=now,
        step=dt,
        anchor_speed=own.speed,
        anchor_position=own.position,
        speeds=tuple(speeds),
        positions=tuple(positions),
    )


def leader_estimate(
    now: SimTime, own: VehicleState, params: EstimatorParams
) -> TrajectoryEstimate:
    """Horizon of a vehicle with no target vehicle."""
    speeds = predict_leader_speed(params, own.speed)
    return build_estimate(now, own, speeds, params.prediction_step)


def shift_held_estimate(
    now: SimTime,
    own: VehicleState,
    previous: TrajectoryEstimate,
    params: EstimatorParams,
) -> TrajectoryEstimate:
    """Carry a follower's estimate through a step with no information update.

    Speed samples whose times have passed are dropped; the rest keep their
    absolute meaning under the advanced anchor, so the horizon end stays
    fixed on the wall clock. Positions are re-integrated from the vehicle's
    own ground truth. Once every sample has expired the vehicle falls back
    to the no-target prediction.
    """
    steps_past = round((now - previous.anchor_time) / previous.step)
    if steps_past <= 0:
        return build_estimate(now, own, previous.speeds, previous.step)
    remaining = previous.speeds[steps_past:]
    if not remaining:
        log.warning(
            "held estimate exhausted at t=%.3f; falling back to free-driving prediction",
            now,
        )
        return leader_estimate(now, own, params)
    return build_estimate(now, own, remaining, previous.step)


def update_estimates(
    fleet_order: Sequence[VehicleId],
    states: Mapping[VehicleId, EstimatorState],
    ground_truth: Mapping[VehicleId, VehicleState],
    params: EstimatorParams,
    gains: Mapping[VehicleId, ControlGains],
    t_gap: float,
    now: SimTime,
) -> dict[VehicleId, TrajectoryEstimate]:
    """One chain pass: refresh every vehicle's own estimate at time ``now``.

    ``fleet_order`` is the communication chain, leader first. Followers with
    a beacon received this step recompute from it; followers without one
    hold their previous estimate; a follower with neither raises ColdStart.
    Each vehicle's resulting estimate is written back to its state.
    """
    out: dict[VehicleId, TrajectoryEstimate] = {}
    for idx, vid in enumerate(fleet_order):
        st = states[vid]
        own = ground_truth[vid]
        if idx == 0:
            est = leader_estimate(now, own, params)
        elif st.link_up and st.last_target_beacon is not None:
            est = follower_estimate(
                now, own, st.last_target_beacon, gains[vid], t_gap, params
            )
        elif st.own_estimate is not None:
            est = shift_held_estimate(now, own, st.own_estimate, params)
        else:
            raise ColdStart(
                f"vehicle {vid} has no previous estimate and no beacon from its target"
            )
        st.own_estimate = est
        out[vid] = est
    return out


def target_motion_for_control(
    state: EstimatorState,
    now: SimTime,
    t_gap: float,
    params: EstimatorParams,
) -> TargetView:
    """Target motion fed to the consensus controller at time ``now``.

    Link up: the beacon's carried ground truth, aged forward by the measured
    beacon age (speed held below one prediction step, first-order-hold
    extrapolated above; position advanced by the compensated speed). Link
    down: the target's last broadcast horizon, interpolated at ``now``. Past
    the horizon end: final sample speed held, position extrapolated at that
    speed, and ``state.horizon_exhausted`` set for the metrics recorder.
    """
    beacon = state.last_target_beacon
    if beacon is None:
        raise ColdStart("no beacon ever received from target")
    state.horizon_exhausted = False
    dt = params.prediction_step
    est = beacon.estimate
    if state.link_up:
        tau = now - beacon.send_time
        if tau < dt:
            v_view = beacon.state.speed
        else:
            # Rate term sampled at the horizon interval containing the aged
            # time, so a transient kink right at the anchor is not amplified
            # by tau/step.
            aged = (now - est.anchor_time) / est.step
            j = min(max(math.floor(aged), 0), est.horizon_len - 1)
            delta = est.speed_at(j + 1) - est.speed_at(j)
            v_view = max(0.0, beacon.state.speed + (tau / est.step) * delta)
        r_view = beacon.state.position + v_view * tau
        return TargetView(
            position=r_view,
            speed=v_view,
            length=beacon.state.length,
            time_gap=t_gap,
        )
    try:
        v_view, r_view = lerp_trajectory(est, now)
    except HorizonExhausted:
        state.horizon_exhausted = True
        v_view = est.speed_at(est.horizon_len)
        r_view = est.position_at(est.horizon_len) + v_view * (now - est.end_time)
    return TargetView(
        position=r_view,
        speed=v_view,
        length=beacon.state.length,
        time_gap=t_gap,
    )

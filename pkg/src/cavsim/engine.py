"""Fixed-step closed-loop simulation binding plant, channel, estimator,
controller, and intersection coordination.

Per-step phase order (identical every step, deterministic given the seed):

1. spawn due vehicles (deferred while the same-leg spawn gap is blocked)
2. advance the plant one step with the previous step's commands
3. refresh crossing sequences and target associations
4. chain pass in crossing order: deliver every beacon due for the vehicle,
   refresh its own trajectory estimate (on prediction boundaries), then
   transmit its beacon to its follower; since a target always precedes its
   follower in the chain, a zero-delay channel hands each follower the
   same-step estimate exactly as the synchronous chain recursion requires
5. (deliveries are exhaustive after the chain pass; nothing left to drain)
6. each vehicle computes next step's acceleration command: consensus law
   from its delay-compensated target view when following, free driving
   toward the preset target speed otherwise
7. record trajectory, estimation error, safety, and timing metrics

Commands computed at step s therefore act on the transition into step s+1,
and no vehicle acts on same-step information it could not have received
through the channel.
"""

from __future__ import annotations

import dataclasses
import gc
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .control import ControlGains, GainTable, consensus_accel, lookup_gains
from .dynamics import DynamicsLimits, step_vehicle
from .errors import ConfigError, NumericFault
from .estimation import (
    EstimatorParams,
    EstimatorState,
    follower_estimate,
    idm_free_accel,
    leader_estimate,
    shift_held_estimate,
    target_motion_for_control,
)
from .network import ChannelModel, V2XChannel
from .scenario import (
    CrossingSequence,
    IntersectionSpec,
    SpawnEvent,
    SpawnPlan,
    assign_targets,
    expand_random_spawns,
    project_to_virtual_lane,
    safety_check,
)
from .types import Beacon, VehicleId, VehicleState

log = logging.getLogger(__name__)

FULL_STOP_SPEED = 0.5


@dataclass(frozen=True)
class EngineConfig:
    sim_step: float = 0.1
    duration: float = 30.0
    seed: int = 42
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.sim_step <= 0:
            raise ValueError("sim_step must be > 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class EstimatorSettings:
    """File-level estimator section; horizon given in seconds."""

    prediction_step: float = 0.1
    horizon_s: float = 5.0
    a_max: float = 0.73
    sigma: float = 4.0
    v_target: float = 15.0
    implicit_solve: bool = False

    def params(self, limits: DynamicsLimits | None = None) -> EstimatorParams:
        n = max(1, round(self.horizon_s / self.prediction_step))
        return EstimatorParams(
            prediction_step=self.prediction_step,
            horizon_len=n,
            a_max=self.a_max,
            sigma=self.sigma,
            v_target=self.v_target,
            implicit_solve=self.implicit_solve,
            limits=limits,
        )


@dataclass(frozen=True)
class ControlConfig:
    time_gap: float = 1.5
    gain_table: GainTable = field(default_factory=lambda: GainTable.single(0.5, 0.8))

    def __post_init__(self) -> None:
        if self.time_gap <= 0:
            raise ValueError("time_gap must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    engine: EngineConfig = field(default_factory=EngineConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    control: ControlConfig = field(default_factory=ControlConfig)
    limits: DynamicsLimits = field(default_factory=DynamicsLimits)
    intersections: tuple[IntersectionSpec, ...] = ()
    spawns: SpawnPlan = field(default_factory=SpawnPlan)

    def validate(self) -> None:
        """Cross-field checks; raises ConfigError naming the offending field."""
        dt_sim = self.engine.sim_step
        dt_pred = self.estimator.prediction_step
        ratio = dt_pred / dt_sim if dt_pred >= dt_sim else dt_sim / dt_pred
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ConfigError(
                "estimator.prediction_step: must be an integer multiple of "
                f"engine.sim_step or vice versa (got {dt_pred} vs {dt_sim})"
            )
        if not self.intersections:
            raise ConfigError("intersections: at least one intersection required")
        ids = [spec.id for spec in self.intersections]
        if len(set(ids)) != len(ids):
            raise ConfigError("intersections: duplicate intersection ids")
        known = {spec.id: spec for spec in self.intersections}
        for i, event in enumerate(self.spawns.events):
            if event.intersection not in known:
                raise ConfigError(
                    f"spawns.events[{i}].intersection: unknown id {event.intersection!r}"
                )
            spec = known[event.intersection]
            try:
                leg = spec.leg(event.leg)
            except KeyError:
                raise ConfigError(
                    f"spawns.events[{i}].leg: unknown leg {event.leg!r}"
                ) from None
            if event.start_offset >= leg.approach_length:
                raise ConfigError(
                    f"spawns.events[{i}].start_offset: beyond leg approach"
                )
            if event.speed > self.limits.speed_max:
                raise ConfigError(
                    f"spawns.events[{i}].speed: exceeds limits.speed_max"
                )


@dataclass
class _SimVehicle:
    vid: VehicleId
    intersection: str
    state: VehicleState
    spawn_time: float
    entry_time: float | None = None
    crossed: bool = False
    target: VehicleId | None = None
    gains: ControlGains | None = None
    admitted: bool = False
    est: EstimatorState = field(default_factory=EstimatorState)
    last_arrival: float = -math.inf
    pending_cmd: float = 0.0
    view_position: float | None = None
    view_speed: float | None = None
    min_speed: float = math.inf
    full_stopped: bool = False


@dataclass
class RunResult:
    """Trajectories, estimation-error records, and run-level aggregates."""

    trajectory: list[tuple] = field(default_factory=list)
    metrics: list[tuple] = field(default_factory=list)
    violations: list[tuple] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


TRAJECTORY_COLUMNS = (
    "time_s",
    "vehicle_id",
    "leg",
    "virtual_pos_m",
    "speed_mps",
    "accel_mps2",
    "est_target_pos_m",
    "pos_est_err_m",
    "link_up",
)

METRICS_COLUMNS = (
    "time_s",
    "vehicle_id",
    "target_id",
    "pos_est_err_m",
    "speed_est_err_mps",
    "link_up",
    "horizon_exhausted",
)


class SimulationEngine:
    """One closed-loop run; construct fresh per run."""

    def __init__(self, scenario: ScenarioConfig) -> None:
        scenario.validate()
        self.scenario = scenario
        self.limits = scenario.limits
        self.params = scenario.estimator.params(limits=scenario.limits)
        self.t_gap = scenario.control.time_gap
        self.dt = scenario.engine.sim_step
        channel_model = dataclasses.replace(
            scenario.channel, seed=scenario.engine.seed
        )
        self.channel = V2XChannel(channel_model)
        self.intersections = {spec.id: spec for spec in scenario.intersections}
        self.sequences = {spec.id: CrossingSequence() for spec in scenario.intersections}
        self.vehicles: dict[VehicleId, _SimVehicle] = {}
        self._pending_spawns: list[SpawnEvent] = list(
            expand_random_spawns(
                scenario.spawns,
                scenario.intersections,
                scenario.engine.duration,
                scenario.engine.seed,
            )
        )
        self._next_vid = 0
        self._followers: dict[VehicleId, VehicleId] = {}
        if self.params.prediction_step > self.dt:
            self._boundary_every = round(self.params.prediction_step / self.dt)
        else:
            self._boundary_every = 1
        # "Communication currently on" is judged on the estimation clock:
        # a link is up while the newest beacon arrived within one estimation
        # tick (never finer than a simulation step, so delay jitter between
        # consecutive beacons cannot flap the link).
        self._link_window = max(self.params.prediction_step, self.dt) + 0.5 * self.dt

    # -- phase 1 -------------------------------------------------------

    def _spawn_due(self, now: float) -> None:
        remaining: list[SpawnEvent] = []
        for event in self._pending_spawns:
            if event.time > now + 1e-12:
                remaining.append(event)
                continue
            if not self._try_spawn(event, now):
                remaining.append(event)
        self._pending_spawns = remaining

    def _try_spawn(self, event: SpawnEvent, now: float) -> bool:
        spec = self.intersections[event.intersection]
        leg = spec.leg(event.leg)
        position = project_to_virtual_lane(event.start_offset, leg, spec)
        for veh in self.vehicles.values():
            if veh.intersection != event.intersection or veh.state.leg != event.leg:
                continue
            ahead_gap = veh.state.position - veh.state.length - position
            behind_gap = position - event.length - veh.state.position
            if max(ahead_gap, behind_gap) < self.scenario.spawns.min_spawn_gap:
                return False
        vid = self._next_vid
        self._next_vid += 1
        self.vehicles[vid] = _SimVehicle(
            vid=vid,
            intersection=event.intersection,
            state=VehicleState(
                position=position,
                speed=min(event.speed, self.limits.speed_max),
                acceleration=0.0,
                length=event.length,
                leg=event.leg,
            ),
            spawn_time=now,
        )
        return True

    # -- phase 2 -------------------------------------------------------

    def _advance_plant(self, step_index: int, now: float) -> None:
        for veh in self.vehicles.values():
            try:
                veh.state = step_vehicle(veh.state, veh.pending_cmd, self.dt, self.limits)
            except NumericFault as exc:
                raise NumericFault(
                    f"step {step_index} (t={now:.3f}s) vehicle {veh.vid}: {exc}"
                ) from exc

    # -- phase 3 -------------------------------------------------------

    def _update_associations(self, now: float) -> None:
        for iid, spec in self.intersections.items():
            seq = self.sequences[iid]
            for veh in self.vehicles.values():
                if veh.intersection != iid or veh.crossed:
                    continue
                if veh.state.position > spec.crossing_coord + veh.state.length:
                    veh.crossed = True
                    seq.remove(veh.vid)
                    self._retarget(veh, None, now)
                    continue
                if veh.entry_time is None:
                    distance = spec.crossing_coord - veh.state.position
                    if distance <= spec.control_zone_radius:
                        veh.entry_time = now
                        seq.stamp(veh.vid, now)
            targets = assign_targets(seq)
            for vid, target in targets.items():
                veh = self.vehicles[vid]
                if veh.target != target:
                    self._retarget(veh, target, now)
        self._followers = {}
        for seq in self.sequences.values():
            order = seq.order()
            for target_vid, follower_vid in zip(order, order[1:]):
                self._followers[target_vid] = follower_vid

    def _retarget(self, veh: _SimVehicle, target: VehicleId | None, now: float) -> None:
        veh.target = target
        veh.est.last_target_beacon = None
        veh.est.link_up = False
        veh.est.refreshed_send_time = None
        veh.admitted = False
        veh.last_arrival = -math.inf
        if target is None:
            veh.gains = None
            return
        tgt = self.vehicles[target]
        headway = tgt.state.position - veh.state.position
        veh.gains = lookup_gains(
            self.scenario.control.gain_table,
            veh.state.speed,
            tgt.state.speed,
            headway,
        )
        log.debug(
            "t=%.2f: vehicle %d acquired target %d (gains k=%.3f gamma=%.3f)",
            now,
            veh.vid,
            target,
            veh.gains.k,
            veh.gains.gamma,
        )

    # -- phases 4 and 5 -------------------------------------------------

    def _estimation_order(self) -> list[VehicleId]:
        ordered: list[VehicleId] = []
        seen: set[VehicleId] = set()
        for iid in self.intersections:
            for vid in self.sequences[iid].order():
                ordered.append(vid)
                seen.add(vid)
        for vid in self.vehicles:
            if vid not in seen:
                ordered.append(vid)
        return ordered

    def _estimate_and_transmit(self, step_index: int, now: float) -> None:
        refresh = step_index % self._boundary_every == 0
        for vid in self._estimation_order():
            veh = self.vehicles[vid]
            arrivals = self.channel.deliver_to(vid, now)
            if veh.target is not None and veh.target in arrivals:
                veh.est.last_target_beacon = arrivals[veh.target]
                veh.last_arrival = now
                veh.admitted = True
            veh.est.link_up = now - veh.last_arrival < self._link_window
            follower = self._followers.get(vid)
            # An estimate is only consumed by a follower's inbox or by the
            # vehicle's own chain role; outside those cases skip the refresh
            # (crossed and not-yet-coordinating vehicles drive free anyway).
            needs_estimate = follower is not None or (
                veh.target is not None and veh.admitted
            )
            # First estimate is built immediately so a newly formed chain
            # does not idle until the next coarse prediction boundary.
            if needs_estimate and (refresh or veh.est.own_estimate is None):
                self._refresh_estimate(veh, now)
            if follower is not None and veh.est.own_estimate is not None:
                beacon = Beacon(
                    sender=vid,
                    send_time=now,
                    state=veh.state,
                    estimate=veh.est.own_estimate,
                )
                self.channel.send(beacon, follower, now)

    def _refresh_estimate(self, veh: _SimVehicle, now: float) -> None:
        st = veh.est
        is_follower = veh.target is not None and veh.admitted
        if not is_follower:
            st.own_estimate = leader_estimate(now, veh.state, self.params)
        elif st.has_fresh_beacon():
            assert veh.gains is not None
            beacon = st.last_target_beacon
            st.own_estimate = follower_estimate(
                now, veh.state, beacon, veh.gains, self.t_gap, self.params
            )
            st.refreshed_send_time = beacon.send_time
        elif st.own_estimate is not None:
            st.own_estimate = shift_held_estimate(now, veh.state, st.own_estimate, self.params)
        else:
            st.own_estimate = leader_estimate(now, veh.state, self.params)

    # -- phase 6 -------------------------------------------------------

    def _compute_commands(self, step_index: int, now: float) -> None:
        for veh in self.vehicles.values():
            veh.view_position = None
            veh.view_speed = None
            veh.est.horizon_exhausted = False
            try:
                if veh.target is not None and veh.admitted:
                    assert veh.gains is not None
                    view = target_motion_for_control(veh.est, now, self.t_gap, self.params)
                    veh.view_position = view.position
                    veh.view_speed = view.speed
                    veh.pending_cmd = consensus_accel(veh.state, view, veh.gains)
                else:
                    veh.pending_cmd = idm_free_accel(veh.state.speed, self.params)
            except NumericFault as exc:
                raise NumericFault(
                    f"step {step_index} (t={now:.3f}s) vehicle {veh.vid}: {exc}"
                ) from exc

    # -- phase 7 -------------------------------------------------------

    def _record(self, result: RunResult, step_index: int, now: float) -> None:
        record_rows = step_index % self.scenario.engine.record_every == 0
        for iid, spec in self.intersections.items():
            states = {
                veh.vid: veh.state
                for veh in self.vehicles.values()
                if veh.intersection == iid
            }
            for violation in safety_check(states, spec):
                result.violations.append(
                    (now, violation.kind, violation.vehicle_a, violation.vehicle_b, violation.detail)
                )
        for vid, veh in self.vehicles.items():
            spec = self.intersections[veh.intersection]
            in_zone = veh.entry_time is not None and not veh.crossed
            if in_zone:
                veh.min_speed = min(veh.min_speed, veh.state.speed)
                if veh.state.speed < FULL_STOP_SPEED:
                    veh.full_stopped = True
            err = None
            speed_err = None
            if veh.view_position is not None and veh.target is not None:
                target_state = self.vehicles[veh.target].state
                err = veh.view_position - target_state.position
                speed_err = veh.view_speed - target_state.speed
                result.metrics.append(
                    (
                        now,
                        vid,
                        veh.target,
                        err,
                        speed_err,
                        int(veh.est.link_up),
                        int(veh.est.horizon_exhausted),
                    )
                )
            if record_rows:
                result.trajectory.append(
                    (
                        now,
                        vid,
                        veh.state.leg,
                        veh.state.position,
                        veh.state.speed,
                        veh.state.acceleration,
                        veh.view_position,
                        err,
                        int(veh.est.link_up),
                    )
                )

    # -- main loop ------------------------------------------------------

    def run(self, on_step: Callable[["SimulationEngine", float], None] | None = None) -> RunResult:
        result = RunResult()
        n_steps = round(self.scenario.engine.duration / self.dt)
        step_times: list[float] = []
        # Collector pauses would dominate the per-step timing metric; the
        # loop allocates no reference cycles, so defer collection to the end.
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            for i in range(n_steps):
                t0 = time.perf_counter()
                now = i * self.dt
                self._spawn_due(now)
                if i > 0:
                    self._advance_plant(i, now)
                self._update_associations(now)
                self._estimate_and_transmit(i, now)
                self._compute_commands(i, now)
                self._record(result, i, now)
                step_times.append(time.perf_counter() - t0)
                if on_step is not None:
                    on_step(self, now)
        finally:
            if gc_was_enabled:
                gc.enable()
        self._summarize(result, step_times)
        return result

    def _summarize(self, result: RunResult, step_times: list[float]) -> None:
        errors = [row[3] for row in result.metrics]
        per_vehicle: dict[str, dict] = {}
        for vid, veh in self.vehicles.items():
            veh_errors = [row[3] for row in result.metrics if row[1] == vid]
            linked = sum(1 for row in result.metrics if row[1] == vid and row[5])
            unlinked = sum(1 for row in result.metrics if row[1] == vid and not row[5])
            exhausted = sum(1 for row in result.metrics if row[1] == vid and row[6])
            per_vehicle[str(vid)] = {
                "leg": veh.state.leg,
                "intersection": veh.intersection,
                "crossed": veh.crossed,
                "entry_time_s": veh.entry_time,
                "min_speed_in_zone_mps": None if math.isinf(veh.min_speed) else veh.min_speed,
                "full_stop": veh.full_stopped,
                "max_abs_pos_err_m": max((abs(e) for e in veh_errors), default=None),
                "rms_pos_err_m": _rms(veh_errors),
                "steps_link_up": linked,
                "steps_link_down": unlinked,
                "steps_horizon_exhausted": exhausted,
            }
        result.summary = {
            "max_abs_pos_err_m": max((abs(e) for e in errors), default=0.0),
            "rms_pos_err_m": _rms(errors) or 0.0,
            "violation_count": len(result.violations),
            "full_stop_count": sum(1 for v in self.vehicles.values() if v.full_stopped),
            "vehicle_count": len(self.vehicles),
            "steps": len(step_times),
            "mean_step_wallclock_ms": (
                1000.0 * sum(step_times) / len(step_times) if step_times else 0.0
            ),
            "per_vehicle": per_vehicle,
        }


def _rms(values: Sequence[float]) -> float | None:
    if not values:
        return None
    return math.sqrt(sum(v * v for v in values) / len(values))


def run(scenario: ScenarioConfig, on_step=None) -> RunResult:
    """Execute one deterministic closed-loop run."""
    return SimulationEngine(scenario).run(on_step=on_step)


def sweep_prediction_step(
    scenario: ScenarioConfig, steps: Sequence[float]
) -> tuple[list[dict], dict[float, RunResult]]:
    """One run per prediction step, identical seed and scenario.

    Returns the comparison table (rows in the given order) and the
    per-step RunResults.
    """
    rows: list[dict] = []
    results: dict[float, RunResult] = {}
    for dt_pred in steps:
        est = dataclasses.replace(scenario.estimator, prediction_step=dt_pred)
        run_scenario = dataclasses.replace(scenario, estimator=est)
        result = run(run_scenario)
        results[dt_pred] = result
        rows.append(
            {
                "prediction_step_s": dt_pred,
                "max_abs_pos_err_m": result.summary["max_abs_pos_err_m"],
                "rms_pos_err_m": result.summary["rms_pos_err_m"],
                "mean_step_wallclock_ms": result.summary["mean_step_wallclock_ms"],
            }
        )
    return rows, results

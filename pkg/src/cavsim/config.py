"""Scenario-file loading and validation.

Scenario files are YAML (plain JSON also parses). Every section is
optional and falls back to documented defaults, but unknown keys anywhere
in the tree are rejected with the offending path, so a typoed field can
never silently revert to a default. Unit-suffixed key names state the unit
of the stored number.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Any, Mapping

import yaml

from .control import GainTable
from .dynamics import DynamicsLimits
from .engine import ControlConfig, EngineConfig, EstimatorSettings, ScenarioConfig
from .errors import ConfigError
from .network import BurstLossModel, ChannelModel
from .scenario import (
    IntersectionSpec,
    LegSpec,
    RandomSpawnSpec,
    SpawnEvent,
    SpawnPlan,
)

_ENGINE_KEYS = {"sim_step_s", "duration_s", "seed", "record_every"}
_CHANNEL_KEYS = {
    "delay_mean_s",
    "delay_std_s",
    "loss_prob",
    "nlos_windows",
    "burst",
    "impaired_vehicles",
}
_BURST_KEYS = {"p_good_to_bad", "p_bad_to_good"}
_ESTIMATOR_KEYS = {
    "prediction_step_s",
    "horizon_s",
    "a_max",
    "sigma",
    "v_target",
    "implicit_solve",
}
_CONTROL_KEYS = {"k", "gamma", "time_gap_s", "gain_table"}
_GAIN_TABLE_KEYS = {"v_i_edges", "v_j_edges", "headway_edges", "entries"}
_DYNAMICS_KEYS = {"accel_max", "decel_max", "speed_max"}
_INTERSECTION_KEYS = {"id", "legs", "control_zone_radius_m", "conflict_zone_length_m"}
_LEG_KEYS = {"id", "approach_length_m"}
_SPAWNS_KEYS = {"events", "random", "min_spawn_gap_m"}
_EVENT_KEYS = {"time_s", "intersection", "leg", "speed_mps", "length_m", "start_offset_m"}
_RANDOM_KEYS = {"rate_per_leg", "speed_min_mps", "speed_max_mps", "length_m", "max_vehicles"}
_TOP_KEYS = {"engine", "channel", "estimator", "control", "dynamics", "intersections", "spawns"}


def _require_keys(section: Mapping[str, Any], allowed: set[str], path: str) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError(f"{path}: expected a mapping, got {type(section).__name__}")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")


def _build(cls, path: str, **kwargs):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_engine(raw: Mapping[str, Any]) -> EngineConfig:
    _require_keys(raw, _ENGINE_KEYS, "engine")
    return _build(
        EngineConfig,
        "engine",
        sim_step=float(raw.get("sim_step_s", 0.1)),
        duration=float(raw.get("duration_s", 30.0)),
        seed=int(raw.get("seed", 42)),
        record_every=int(raw.get("record_every", 1)),
    )


def _parse_channel(raw: Mapping[str, Any]) -> ChannelModel:
    _require_keys(raw, _CHANNEL_KEYS, "channel")
    windows = raw.get("nlos_windows", [])
    if not isinstance(windows, list):
        raise ConfigError("channel.nlos_windows: expected a list of [start, end]")
    parsed_windows = []
    for i, win in enumerate(windows):
        if not isinstance(win, (list, tuple)) or len(win) != 2:
            raise ConfigError(f"channel.nlos_windows[{i}]: expected [start_s, end_s]")
        parsed_windows.append((float(win[0]), float(win[1])))
    burst = None
    if raw.get("burst") is not None:
        _require_keys(raw["burst"], _BURST_KEYS, "channel.burst")
        burst = _build(
            BurstLossModel,
            "channel.burst",
            p_good_to_bad=float(raw["burst"].get("p_good_to_bad", 0.0)),
            p_bad_to_good=float(raw["burst"].get("p_bad_to_good", 1.0)),
        )
    impaired = raw.get("impaired_vehicles")
    if impaired is not None:
        if not isinstance(impaired, list):
            raise ConfigError("channel.impaired_vehicles: expected a list of vehicle ids")
        impaired = tuple(int(v) for v in impaired)
    return _build(
        ChannelModel,
        "channel",
        delay_mean=float(raw.get("delay_mean_s", 0.040)),
        delay_std=float(raw.get("delay_std_s", 0.0259)),
        loss_prob=float(raw.get("loss_prob", 0.1)),
        nlos_windows=tuple(parsed_windows),
        burst=burst,
        impaired_vehicles=impaired,
    )


def _parse_estimator(raw: Mapping[str, Any]) -> EstimatorSettings:
    _require_keys(raw, _ESTIMATOR_KEYS, "estimator")
    return _build(
        EstimatorSettings,
        "estimator",
        prediction_step=float(raw.get("prediction_step_s", 0.1)),
        horizon_s=float(raw.get("horizon_s", 5.0)),
        a_max=float(raw.get("a_max", 0.73)),
        sigma=float(raw.get("sigma", 4.0)),
        v_target=float(raw.get("v_target", 15.0)),
        implicit_solve=bool(raw.get("implicit_solve", False)),
    )


def _parse_gain_table(raw: Mapping[str, Any]) -> GainTable:
    _require_keys(raw, _GAIN_TABLE_KEYS, "control.gain_table")
    try:
        entries = tuple(
            tuple(tuple((float(pair[0]), float(pair[1])) for pair in row) for row in plane)
            for plane in raw["entries"]
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ConfigError(f"control.gain_table.entries: malformed ({exc})") from exc
    return _build(
        GainTable,
        "control.gain_table",
        v_i_edges=tuple(float(e) for e in raw.get("v_i_edges", [0.0])),
        v_j_edges=tuple(float(e) for e in raw.get("v_j_edges", [0.0])),
        headway_edges=tuple(float(e) for e in raw.get("headway_edges", [0.0])),
        entries=entries,
    )


def _parse_control(raw: Mapping[str, Any]) -> ControlConfig:
    _require_keys(raw, _CONTROL_KEYS, "control")
    k = float(raw.get("k", 0.5))
    gamma = float(raw.get("gamma", 0.8))
    if raw.get("gain_table") is not None:
        table = _parse_gain_table(raw["gain_table"])
    else:
        table = GainTable.single(k, gamma)
    return _build(
        ControlConfig,
        "control",
        time_gap=float(raw.get("time_gap_s", 1.5)),
        gain_table=table,
    )


def _parse_dynamics(raw: Mapping[str, Any]) -> DynamicsLimits:
    _require_keys(raw, _DYNAMICS_KEYS, "dynamics")
    return _build(
        DynamicsLimits,
        "dynamics",
        accel_max=float(raw.get("accel_max", 3.0)),
        decel_max=float(raw.get("decel_max", 5.0)),
        speed_max=float(raw.get("speed_max", 20.0)),
    )


def _parse_intersections(raw: Any) -> tuple[IntersectionSpec, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("intersections: expected a non-empty list")
    specs = []
    for i, item in enumerate(raw):
        path = f"intersections[{i}]"
        _require_keys(item, _INTERSECTION_KEYS, path)
        legs_raw = item.get("legs")
        if not isinstance(legs_raw, list) or not legs_raw:
            raise ConfigError(f"{path}.legs: expected a non-empty list")
        legs = []
        for j, leg in enumerate(legs_raw):
            _require_keys(leg, _LEG_KEYS, f"{path}.legs[{j}]")
            legs.append(
                _build(
                    LegSpec,
                    f"{path}.legs[{j}]",
                    id=str(leg.get("id", j)),
                    approach_length=float(leg.get("approach_length_m", 200.0)),
                )
            )
        specs.append(
            _build(
                IntersectionSpec,
                path,
                id=str(item.get("id", i)),
                legs=tuple(legs),
                control_zone_radius=float(item.get("control_zone_radius_m", 150.0)),
                conflict_zone_length=float(item.get("conflict_zone_length_m", 12.0)),
            )
        )
    return tuple(specs)


def _parse_spawns(raw: Mapping[str, Any], default_intersection: str) -> SpawnPlan:
    _require_keys(raw, _SPAWNS_KEYS, "spawns")
    events = []
    for i, item in enumerate(raw.get("events", [])):
        path = f"spawns.events[{i}]"
        _require_keys(item, _EVENT_KEYS, path)
        events.append(
            _build(
                SpawnEvent,
                path,
                time=float(item.get("time_s", 0.0)),
                intersection=str(item.get("intersection", default_intersection)),
                leg=str(item["leg"]) if "leg" in item else _missing(path, "leg"),
                speed=float(item.get("speed_mps", 10.0)),
                length=float(item.get("length_m", 5.0)),
                start_offset=float(item.get("start_offset_m", 0.0)),
            )
        )
    random_spec = None
    if raw.get("random") is not None:
        _require_keys(raw["random"], _RANDOM_KEYS, "spawns.random")
        rr = raw["random"]
        max_vehicles = rr.get("max_vehicles")
        random_spec = _build(
            RandomSpawnSpec,
            "spawns.random",
            rate_per_leg=float(rr.get("rate_per_leg", 0.1)),
            speed_min=float(rr.get("speed_min_mps", 8.0)),
            speed_max=float(rr.get("speed_max_mps", 14.0)),
            length=float(rr.get("length_m", 5.0)),
            max_vehicles=int(max_vehicles) if max_vehicles is not None else None,
        )
    return _build(
        SpawnPlan,
        "spawns",
        events=tuple(events),
        random=random_spec,
        min_spawn_gap=float(raw.get("min_spawn_gap_m", 10.0)),
    )


def _missing(path: str, key: str):
    raise ConfigError(f"{path}.{key}: required key missing")


def parse_scenario(raw: Mapping[str, Any]) -> ScenarioConfig:
    """Build and cross-validate a ScenarioConfig from a parsed mapping."""
    if not isinstance(raw, Mapping):
        raise ConfigError("top level: expected a mapping of sections")
    _require_keys(raw, _TOP_KEYS, "top level")
    intersections = _parse_intersections(raw.get("intersections", [{"id": "x", "legs": [{"id": "a"}]}]))
    scenario = ScenarioConfig(
        engine=_parse_engine(raw.get("engine", {})),
        channel=_parse_channel(raw.get("channel", {})),
        estimator=_parse_estimator(raw.get("estimator", {})),
        control=_parse_control(raw.get("control", {})),
        limits=_parse_dynamics(raw.get("dynamics", {})),
        intersections=intersections,
        spawns=_parse_spawns(raw.get("spawns", {}), intersections[0].id),
    )
    scenario.validate()
    return scenario


def load_scenario(path: str, seed_override: int | None = None) -> ScenarioConfig:
    """Load a scenario file; optionally override the seed."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    scenario = parse_scenario(raw)
    if seed_override is not None:
        scenario = dataclasses.replace(
            scenario, engine=dataclasses.replace(scenario.engine, seed=seed_override)
        )
    return scenario


def normalized_dump(scenario: ScenarioConfig) -> str:
    """Resolved effective config as stable JSON (for `validate` output)."""

    def encode(obj: Any) -> Any:
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {k: encode(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return [encode(v) for v in obj]
        if isinstance(obj, dict):
            return {k: encode(v) for k, v in obj.items()}
        return obj

    return json.dumps(encode(scenario), indent=2, sort_keys=True)

"""Consensus-controlled connected-vehicle simulator with motion estimation
under communication delay and packet loss."""

from .control import ControlGains, GainTable, consensus_accel, lookup_gains
from .dynamics import DynamicsLimits, step_vehicle
from .engine import (
    ControlConfig,
    EngineConfig,
    EstimatorSettings,
    RunResult,
    ScenarioConfig,
    run,
    sweep_prediction_step,
)
from .errors import CavSimError, ColdStart, ConfigError, HorizonExhausted, NumericFault
from .estimation import (
    EstimatorParams,
    EstimatorState,
    compensate_delay,
    integrate_position,
    predict_follower_speed,
    predict_leader_speed,
    target_motion_for_control,
    update_estimates,
)
from .network import ChannelModel, InFlightQueue, deliver_due, transmit
from .scenario import (
    CrossingSequence,
    IntersectionSpec,
    LegSpec,
    SpawnEvent,
    SpawnPlan,
    assign_targets,
    project_to_virtual_lane,
    safety_check,
)
from .types import Beacon, TargetView, TrajectoryEstimate, VehicleState, lerp_trajectory

__version__ = "0.1.0"

"""Consensus-based longitudinal motion controller.

The control law drives the ego vehicle toward a gap of
``l_target + v_ego * time_gap`` behind its target and toward the target's
speed:

    u = -alpha * k * [ (r_i - r_j + l_j + v_i * t_gap) + gamma * (v_i - v_j) ]

where (r_j, v_j) are whatever the caller supplies: delayed ground truth or
estimated motion. Gains come from a lookup table keyed on the two vehicles'
speeds and their headway at association time, and are held for the lifetime
of the association.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

from .errors import NumericFault
from .types import TargetView, VehicleState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlGains:
    k: float
    gamma: float
    alpha: int = 1

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("k must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")


def consensus_accel_raw(
    r_i: float,
    v_i: float,
    r_j: float,
    v_j: float,
    l_j: float,
    t_gap: float,
    alpha: int,
    k: float,
    gamma: float,
) -> float:
    """Scalar core of the consensus law; shared by controller and estimator."""
    if alpha == 0:
        return 0.0
    spacing = r_i - r_j + l_j + v_i * t_gap
    accel = -alpha * k * (spacing + gamma * (v_i - v_j))
    if not math.isfinite(accel):
        raise NumericFault(
            f"consensus law produced non-finite acceleration from "
            f"r_i={r_i} v_i={v_i} r_j={r_j} v_j={v_j}"
        )
    return accel


def consensus_accel(ego: VehicleState, target: TargetView, gains: ControlGains) -> float:
    """Unsaturated acceleration command; saturation is the plant's job."""
    if target.time_gap <= 0:
        raise ValueError("time_gap must be > 0")
    for name, value in (
        ("ego.position", ego.position),
        ("ego.speed", ego.speed),
        ("target.position", target.position),
        ("target.speed", target.speed),
    ):
        if not math.isfinite(value):
            raise NumericFault(f"non-finite controller input {name}={value}")
    return consensus_accel_raw(
        ego.position,
        ego.speed,
        target.position,
        target.speed,
        target.length,
        target.time_gap,
        gains.alpha,
        gains.k,
        gains.gamma,
    )


@dataclass(frozen=True)
class GainTable:
    """Gain pairs bucketed by initial ego speed, target speed, and headway.

    Edges define half-open buckets [e0, e1), ..., [e_last, inf); inputs
    below the lowest edge clamp to the first bucket with a warning.
    ``entries[i][j][h]`` is the (k, gamma) pair for ego-speed bucket i,
    target-speed bucket j, headway bucket h.
    """

    v_i_edges: tuple[float, ...]
    v_j_edges: tuple[float, ...]
    headway_edges: tuple[float, ...]
    entries: tuple[tuple[tuple[tuple[float, float], ...], ...], ...]

    def __post_init__(self) -> None:
        for name, edges in (
            ("v_i_edges", self.v_i_edges),
            ("v_j_edges", self.v_j_edges),
            ("headway_edges", self.headway_edges),
        ):
            if not edges:
                raise ValueError(f"{name} must not be empty")
            if list(edges) != sorted(edges):
                raise ValueError(f"{name} must be sorted ascending")
            if len(set(edges)) != len(edges):
                raise ValueError(f"{name} must not contain duplicates")
        if len(self.entries) != len(self.v_i_edges):
            raise ValueError("entries do not cover every v_i bucket")
        for plane in self.entries:
            if len(plane) != len(self.v_j_edges):
                raise ValueError("entries do not cover every v_j bucket")
            for row in plane:
                if len(row) != len(self.headway_edges):
                    raise ValueError("entries do not cover every headway bucket")

    @staticmethod
    def single(k: float, gamma: float) -> "GainTable":
        """Degenerate table mapping every input to one gain pair."""
        return GainTable(
            v_i_edges=(0.0,),
            v_j_edges=(0.0,),
            headway_edges=(0.0,),
            entries=((((float(k), float(gamma)),),),),
        )


def _bucket(edges: Sequence[float], x: float, what: str) -> int:
    idx = bisect_right(edges, x) - 1
    if idx < 0:
        log.warning(
            "gain lookup %s=%s below lowest bucket edge %s; clamping",
            what,
            x,
            edges[0],
        )
        return 0
    return idx


def lookup_gains(table: GainTable, v_i0: float, v_j0: float, headway0: float) -> ControlGains:
    """Resolve the gain pair for a new association.

    Inputs are the speeds of ego and target and their headway at the moment
    ego acquires the target; the returned gains are then held for the whole
    association.
    """
    i = _bucket(table.v_i_edges, v_i0, "v_i0")
    j = _bucket(table.v_j_edges, v_j0, "v_j0")
    h = _bucket(table.headway_edges, headway0, "headway0")
    k, gamma = table.entries[i][j][h]
    return ControlGains(k=k, gamma=gamma, alpha=1)

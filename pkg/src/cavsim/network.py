"""V2X channel emulation.

Beacons suffer a per-transmission stochastic delay (normal, clamped at
zero), random Bernoulli loss, and total loss inside configured
non-line-of-sight windows. An in-flight queue delivers beacons at the
correct simulated time in a globally deterministic order. Every directed
vehicle pair owns an independent RNG sub-stream derived from the scenario
seed, so drop decisions and delay draws never depend on send ordering.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .types import Beacon, SimTime, VehicleId


@dataclass(frozen=True)
class BurstLossModel:
    """Optional Gilbert-Elliott two-state loss, off by default.

    While in the bad state every packet drops; transitions are sampled per
    transmission from the link's own stream.
    """

    p_good_to_bad: float
    p_bad_to_good: float

    def __post_init__(self) -> None:
        for name, p in (
            ("p_good_to_bad", self.p_good_to_bad),
            ("p_bad_to_good", self.p_bad_to_good),
        ):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")


@dataclass(frozen=True)
class ChannelModel:
    """Stochastic delay plus a hybrid loss model.

    Delay applies to every link. Loss (random and NLOS) applies to every
    link by default; when ``impaired_vehicles`` is set it applies only to
    links touching one of those vehicles, modeling an obstructed or
    degraded radio on specific vehicles while the rest of the fleet
    communicates cleanly.
    """

    delay_mean: float = 0.040
    delay_std: float = 0.0259
    loss_prob: float = 0.1
    nlos_windows: tuple[tuple[float, float], ...] = ()
    seed: int = 0
    burst: BurstLossModel | None = None
    impaired_vehicles: tuple[VehicleId, ...] | None = None

    def __post_init__(self) -> None:
        if self.delay_mean < 0 or self.delay_std < 0:
            raise ValueError("delay parameters must be >= 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        ordered = sorted(self.nlos_windows)
        for start, end in ordered:
            if start >= end:
                raise ValueError(f"NLOS window [{start}, {end}) is empty or inverted")
        for (_, prev_end), (next_start, _) in zip(ordered, ordered[1:]):
            if next_start < prev_end:
                raise ValueError("NLOS windows must not overlap")

    def in_nlos(self, t: SimTime) -> bool:
        return any(start <= t < end for start, end in self.nlos_windows)

    def link_impaired(self, sender: VehicleId, receiver: VehicleId | None) -> bool:
        if self.impaired_vehicles is None:
            return True
        if sender in self.impaired_vehicles:
            return True
        return receiver is not None and receiver in self.impaired_vehicles


class Dropped:
    """Sentinel result of a lost transmission."""

    __slots__ = ()

    def __repr__(self) -> str:  # pragma: no cover
        return "Dropped"


DROPPED = Dropped()


@dataclass
class LinkStream:
    """Per-link randomness plus burst-loss state."""

    rng: np.random.Generator
    in_bad_state: bool = False


def link_stream(channel: ChannelModel, sender: VehicleId, receiver: VehicleId) -> LinkStream:
    seq = np.random.SeedSequence(entropy=channel.seed, spawn_key=(1, sender, receiver))
    return LinkStream(rng=np.random.Generator(np.random.PCG64(seq)))


def transmit(
    channel: ChannelModel,
    beacon: Beacon,
    now: SimTime,
    stream: LinkStream,
    receiver: VehicleId | None = None,
) -> SimTime | Dropped:
    """Decide one beacon's fate: a delivery time, or Dropped.

    On an impaired link, a send inside an NLOS window is dropped with
    certainty (consuming no randomness), and otherwise one Bernoulli draw
    decides random loss. Surviving beacons get one normal delay draw
    clamped at zero.
    """
    if channel.link_impaired(beacon.sender, receiver):
        if channel.in_nlos(now):
            return DROPPED
        if channel.burst is not None:
            if stream.in_bad_state:
                if stream.rng.uniform() < channel.burst.p_bad_to_good:
                    stream.in_bad_state = False
                else:
                    return DROPPED
            elif stream.rng.uniform() < channel.burst.p_good_to_bad:
                stream.in_bad_state = True
                return DROPPED
        if stream.rng.uniform() < channel.loss_prob:
            return DROPPED
    tau = channel.delay_mean + channel.delay_std * stream.rng.standard_normal()
    return now + max(0.0, tau)


@dataclass(order=True)
class _QueueEntry:
    sort_key: tuple[float, int, float, int]
    receiver: VehicleId = field(compare=False)
    beacon: Beacon = field(compare=False)


class InFlightQueue:
    """Beacons awaiting delivery, ordered by (delivery time, sender, send time)."""

    def __init__(self) -> None:
        self._heap: list[_QueueEntry] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, delivery_time: SimTime, receiver: VehicleId, beacon: Beacon) -> None:
        self._seq += 1
        entry = _QueueEntry(
            sort_key=(delivery_time, beacon.sender, beacon.send_time, self._seq),
            receiver=receiver,
            beacon=beacon,
        )
        heapq.heappush(self._heap, entry)

    def pop_due(self, now: SimTime) -> Iterator[tuple[VehicleId, Beacon]]:
        """Remove and yield all entries due at or before ``now``, in order."""
        while self._heap and self._heap[0].sort_key[0] <= now:
            entry = heapq.heappop(self._heap)
            yield entry.receiver, entry.beacon


def deliver_due(queue: InFlightQueue, now: SimTime) -> list[Beacon]:
    """All beacons due at or before ``now`` in deterministic order.

    Receiver-side freshest-wins filtering is applied by V2XChannel; this
    returns the raw ordered drain.
    """
    return [beacon for _, beacon in queue.pop_due(now)]


class V2XChannel:
    """Engine-facing channel: per-link streams, queue, and receiver inboxes.

    A receiver consumes at most one beacon per sender per step (the one with
    the latest send time), and beacons older than one already consumed are
    discarded so estimator state stays monotone in send time.
    """

    def __init__(self, model: ChannelModel) -> None:
        self.model = model
        self.queue = InFlightQueue()
        self._streams: dict[tuple[VehicleId, VehicleId], LinkStream] = {}
        self._last_consumed: dict[tuple[VehicleId, VehicleId], SimTime] = {}
        self._pending: dict[VehicleId, dict[VehicleId, Beacon]] = {}

    def stream_for(self, sender: VehicleId, receiver: VehicleId) -> LinkStream:
        key = (sender, receiver)
        if key not in self._streams:
            self._streams[key] = link_stream(self.model, sender, receiver)
        return self._streams[key]

    def send(self, beacon: Beacon, receiver: VehicleId, now: SimTime) -> bool:
        """Transmit to one receiver; returns False when dropped."""
        result = transmit(
            self.model, beacon, now, self.stream_for(beacon.sender, receiver), receiver
        )
        if isinstance(result, Dropped):
            return False
        self.queue.push(result, receiver, beacon)
        return True

    def deliver_to(self, receiver: VehicleId, now: SimTime) -> dict[VehicleId, Beacon]:
        """Drain deliveries due for one receiver, freshest per sender.

        Entries due for other receivers stay queued but are buffered once
        popped, so repeated calls within a step remain cheap and ordered.
        """
        for rcv, beacon in self.queue.pop_due(now):
            bucket = self._pending.setdefault(rcv, {})
            held = bucket.get(beacon.sender)
            if held is None or beacon.send_time > held.send_time:
                bucket[beacon.sender] = beacon
        out: dict[VehicleId, Beacon] = {}
        for sender, beacon in self._pending.pop(receiver, {}).items():
            last = self._last_consumed.get((sender, receiver))
            if last is not None and beacon.send_time <= last:
                continue
            self._last_consumed[(sender, receiver)] = beacon.send_time
            out[sender] = beacon
        return out

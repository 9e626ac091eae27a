"""Two-hop relay routing over a meeting schedule.

Each node keeps one FIFO source queue for its own packets and one FIFO relay
queue for every flow it is neither source nor destination of.  On a meeting
the transmitter either hands its head-of-line packet straight to its
destination, or flips a fair coin: heads pushes a source packet into the
receiver's relay queue, tails delivers a relayed packet whose destination is
the receiver.  A packet therefore takes one or two hops.
"""

from __future__ import annotations

import csv
import enum
import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigurationError, ParameterError
from .meeting import MeetingEvent, MeetingSchedule, NetworkParams, poisson_arrival_times

_COIN_TAG = 0x636F696E
_ARRIVAL_TAG = 0x61727276


def sample_derangement(n: int, seed: int) -> tuple[int, ...]:
    """Uniform random permutation of ``range(n)`` with no fixed point.

    Draws uniform permutations until one has no fixed point; the acceptance
    probability tends to 1/e so a handful of draws suffice.
    """
    if n < 2:
        raise ParameterError(f"a derangement needs n >= 2 (got {n})")
    rng = np.random.default_rng(seed)
    ids = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == ids):
            return tuple(int(x) for x in perm)


@dataclass(frozen=True)
class TrafficParams:
    """Per-node Poisson arrival rate ``lam`` and the destination map.

    ``permutation[i]`` is the destination of the flow sourced at node ``i``.
    """

    lam: float
    permutation: tuple[int, ...]
    seed: int = 0
    _sources: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"arrival rate must be positive (got {self.lam})")
        perm = tuple(int(x) for x in self.permutation)
        n = len(perm)
        if sorted(perm) != list(range(n)):
            raise ParameterError("permutation must be a bijection on the node ids")
        if any(perm[k] == k for k in range(n)):
            raise ParameterError("permutation must have no fixed point")
        inv = [0] * n
        for src, dst in enumerate(perm):
            inv[dst] = src
        object.__setattr__(self, "permutation", perm)
        object.__setattr__(self, "_sources", tuple(inv))

    @classmethod
    def at_load(cls, params: NetworkParams, rho: float, seed: int = 0, permutation=None) -> TrafficParams:
        """Traffic at load ``rho`` = lam / (n beta / 4); the permutation is drawn from ``seed`` unless given."""
        if not rho > 0:
            raise ParameterError(f"load must be positive (got {rho})")
        if permutation is None:
            permutation = sample_derangement(params.n, seed)
        return cls(lam=rho * params.n * params.beta / 4, permutation=permutation, seed=seed)

    @property
    def n(self) -> int:
        return len(self.permutation)

    def destination(self, node: int) -> int:
        return self.permutation[node]

    def source_of(self, node: int) -> int:
        """The flow (source node) whose destination is ``node``."""
        return self._sources[node]


@dataclass(slots=True, eq=False)
class Packet:
    id: int
    flow: int
    created_at: float
    left_source_at: float | None = None
    delivered_at: float | None = None
    relay: int | None = None

    @property
    def hops(self) -> int | None:
        if self.delivered_at is None:
            return None
        return 1 if self.relay is None else 2

    @property
    def delay(self) -> float | None:
        if self.delivered_at is None:
            return None
        return self.delivered_at - self.created_at


@dataclass(eq=False)
class NodeState:
    node: int
    source_queue: deque = field(default_factory=deque)
    relay_queues: dict[int, deque] = field(default_factory=dict)

    @classmethod
    def empty(cls, node: int, traffic: TrafficParams) -> NodeState:
        flows = [f for f in range(traffic.n) if f != node and traffic.destination(f) != node]
        return cls(node=node, relay_queues={f: deque() for f in flows})

    def backlog(self) -> int:
        return len(self.source_queue) + sum(len(q) for q in self.relay_queues.values())


class Outcome(enum.Enum):
    SOURCE_TO_DESTINATION = "s2d"
    SOURCE_TO_RELAY = "s2r"
    RELAY_TO_DESTINATION = "r2d"
    IDLE = "idle"


def handle_meeting(event: MeetingEvent, states, traffic: TrafficParams, heads: bool):
    """Apply one meeting to the node states; at most one packet moves.

    ``heads`` is the transmitter's coin for this meeting and is ignored when
    the receiver is the transmitter's own destination.  Returns the outcome
    and the packet that moved (``None`` when idle).
    """
    tx = event.transmitter
    rx = event.receiver
    now = event.time
    sender = states[tx]
    if rx == traffic.destination(tx):
        if not sender.source_queue:
            return Outcome.IDLE, None
        pkt = sender.source_queue.popleft()
        pkt.left_source_at = now
        pkt.delivered_at = now
        return Outcome.SOURCE_TO_DESTINATION, pkt
    if heads:
        if not sender.source_queue:
            return Outcome.IDLE, None
        pkt = sender.source_queue.popleft()
        pkt.left_source_at = now
        pkt.relay = rx
        states[rx].relay_queues[tx].append(pkt)
        return Outcome.SOURCE_TO_RELAY, pkt
    queue = sender.relay_queues[traffic.source_of(rx)]
    if not queue:
        return Outcome.IDLE, None
    pkt = queue.popleft()
    pkt.delivered_at = now
    return Outcome.RELAY_TO_DESTINATION, pkt


@dataclass(eq=False)
class SimulationStats:
    """Everything recorded by one run.

    Per-packet columns are indexed by packet id (arrival order).  Rates and
    delays are taken over the measurement window ``[warmup, horizon]``;
    delays only count packets created inside the window.
    """

    n: int
    lam: float
    warmup: float
    horizon: float
    permutation: tuple[int, ...]
    traffic_seed: int
    coin_seed: int | None
    backend: str
    created_at: np.ndarray
    flow: np.ndarray
    left_source_at: np.ndarray
    delivered_at: np.ndarray
    relay: np.ndarray
    counters: np.ndarray
    direct_opportunities: np.ndarray
    relay_opportunities: np.ndarray
    relay_inputs: np.ndarray
    source_backlog: np.ndarray
    relay_backlog: np.ndarray
    occupancy: np.ndarray

    @property
    def window(self) -> float:
        return self.horizon - self.warmup

    @property
    def generated(self) -> int:
        return len(self.created_at)

    @property
    def delivered_mask(self) -> np.ndarray:
        return ~np.isnan(self.delivered_at)

    @property
    def delivered(self) -> int:
        return int(self.delivered_mask.sum())

    @property
    def hops(self) -> np.ndarray:
        """1 or 2 for delivered packets, 0 otherwise."""
        h = np.where(self.relay >= 0, 2, 1)
        return np.where(self.delivered_mask, h, 0)

    @property
    def source_to_destination(self) -> int:
        return int(self.counters[0])

    @property
    def source_to_relay(self) -> int:
        return int(self.counters[1])

    @property
    def relay_to_destination(self) -> int:
        return int(self.counters[2])

    @property
    def idle(self) -> int:
        return int(self.counters[3])

    @property
    def total_meetings(self) -> int:
        return int(self.counters.sum())

    def delivered_in_window(self, flow=None) -> int:
        m = self.delivered_mask.copy()
        m[m] = self.delivered_at[m] >= self.warmup
        if flow is not None:
            m &= self.flow == flow
        return int(m.sum())

    def delivered_per_flow(self) -> np.ndarray:
        m = self.delivered_mask.copy()
        m[m] = self.delivered_at[m] >= self.warmup
        return np.bincount(self.flow[m], minlength=self.n)

    def delays(self, flow=None) -> np.ndarray:
        """End-to-end delays of delivered packets created at or after warmup."""
        m = self.delivered_mask & (self.created_at >= self.warmup)
        if flow is not None:
            m &= self.flow == flow
        return self.delivered_at[m] - self.created_at[m]

    def mean_delay(self, flow=None) -> float:
        d = self.delays(flow)
        return float(d.mean()) if len(d) else float("nan")

    def backlog(self) -> int:
        return int(self.source_backlog.sum() + self.relay_backlog.sum())

    def mean_occupancy(self) -> np.ndarray:
        """Time-averaged number of packets in the network per time bin."""
        return self.occupancy / (self.horizon / len(self.occupancy))

    def summary(self) -> dict:
        thr = measured_throughput(self, flow=None)
        return {
            "backend": self.backend,
            "n": self.n,
            "lambda": self.lam,
            "horizon": self.horizon,
            "warmup": self.warmup,
            "traffic_seed": self.traffic_seed,
            "coin_seed": self.coin_seed,
            "permutation": " ".join(map(str, self.permutation)),
            "generated": self.generated,
            "delivered": self.delivered,
            "delivered_in_window": self.delivered_in_window(),
            "source_to_destination": self.source_to_destination,
            "source_to_relay": self.source_to_relay,
            "relay_to_destination": self.relay_to_destination,
            "idle_meetings": self.idle,
            "total_meetings": self.total_meetings,
            "throughput_per_flow": thr,
            "mean_delay": self.mean_delay(),
            "delay_samples": len(self.delays()),
            "backlog_at_horizon": self.backlog(),
        }


def simulate(
    params: NetworkParams,
    traffic: TrafficParams,
    schedule: MeetingSchedule,
    warmup: float | None = None,
    *,
    coin_seed: int | None = None,
    backend: str | None = None,
    n_bins: int = 20,
) -> SimulationStats:
    """Run two-hop relay routing over ``schedule`` with Poisson arrivals.

    Arrivals and meetings are processed in global time order; an arrival tied
    with a meeting goes first.  ``warmup`` defaults to a tenth of the
    horizon.  Relay coins come from a stream keyed on ``coin_seed`` (default:
    the schedule seed), independent of the traffic seed.
    """
    if schedule.n != params.n:
        raise ConfigurationError(f"schedule has n={schedule.n} but params have n={params.n}")
    if traffic.n != params.n:
        raise ConfigurationError(f"permutation covers {traffic.n} nodes, params have n={params.n}")
    horizon = schedule.horizon
    if warmup is None:
        warmup = 0.1 * horizon
    if not 0 <= warmup < horizon:
        raise ParameterError(f"warmup must lie in [0, horizon) (got {warmup})")
    if n_bins < 1:
        raise ParameterError("n_bins must be positive")

    n = params.n
    streams = np.random.SeedSequence([traffic.seed, _ARRIVAL_TAG]).spawn(n)
    per_node = [poisson_arrival_times(traffic.lam, horizon, np.random.default_rng(s)) for s in streams]
    a_time = np.concatenate(per_node)
    a_node = np.concatenate([np.full(len(t), k, dtype=np.int32) for k, t in enumerate(per_node)])
    order = np.lexsort((a_node, a_time))
    a_time = np.ascontiguousarray(a_time[order])
    a_node = np.ascontiguousarray(a_node[order])

    if coin_seed is None:
        coin_seed = schedule.seed if schedule.seed is not None else traffic.seed
    coin_rng = np.random.default_rng(np.random.SeedSequence([coin_seed, _COIN_TAG]))
    heads = coin_rng.integers(0, 2, size=len(schedule), dtype=np.int8)

    kernels = _backend.get(backend)
    out = kernels.route(
        n,
        np.asarray(traffic.permutation, dtype=np.int32),
        a_time,
        a_node,
        schedule.time,
        schedule.tx,
        schedule.rx,
        heads,
        float(warmup),
        float(horizon),
        int(n_bins),
    )
    return SimulationStats(
        n=n,
        lam=traffic.lam,
        warmup=float(warmup),
        horizon=float(horizon),
        permutation=traffic.permutation,
        traffic_seed=traffic.seed,
        coin_seed=coin_seed,
        backend=backend or _backend.NAME,
        created_at=a_time,
        flow=a_node,
        **out,
    )


def measured_throughput(stats: SimulationStats, flow: int | None = 0) -> float:
    """Delivered packets per second over the measurement window.

    ``flow=None`` averages over all flows.
    """
    if not stats.window > 0:
        raise ParameterError("measurement window must be positive")
    if flow is None:
        return stats.delivered_in_window() / stats.n / stats.window
    return stats.delivered_in_window(flow) / stats.window


def write_report(stats: SimulationStats, dest) -> None:
    """Flat ``key = value`` text report."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w") as fh:
            write_report(stats, fh)
        return
    for key, value in stats.summary().items():
        if isinstance(value, float):
            value = repr(value)
        dest.write(f"{key} = {value}\n")


def write_delays_csv(stats: SimulationStats, dest) -> None:
    """One row per generated packet; delivery fields are empty while in transit."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            write_delays_csv(stats, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["packet_id", "flow", "created_at", "delivered_at", "hops"])
    hops = stats.hops
    for pid, (flow, created, delivered) in enumerate(
        zip(stats.flow.tolist(), stats.created_at.tolist(), stats.delivered_at.tolist())
    ):
        if delivered != delivered:
            w.writerow([pid, flow, repr(created), "", ""])
        else:
            w.writerow([pid, flow, repr(created), repr(delivered), int(hops[pid])])

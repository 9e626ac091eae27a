"""Pairwise meeting processes.

Every unordered node pair meets according to its own homogeneous Poisson
process.  A meeting is an instantaneous contact carrying one packet
transmission opportunity; one of the two nodes, chosen by a fair coin, is the
transmitter.  :class:`MeetingSchedule` is the common event stream consumed by
the routing simulator, whether it was sampled here or extracted from mobility
traces.

Node ids are 0-based throughout.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ParameterError, TraceParseError

SCHEDULE_MAGIC = "icmn-meetings"
SCHEDULE_VERSION = "v1"


@dataclass(frozen=True)
class NetworkParams:
    """Node count ``n``, region side ``L`` (m), range ``d`` (m), pairwise meeting rate ``beta`` (1/s)."""

    n: int
    beta: float
    L: float = 2000.0
    d: float = 20.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ParameterError(f"n must be an integer >= 3 (got {self.n})")
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive (got {self.beta})")
        if not self.L > 0:
            raise ParameterError(f"L must be positive (got {self.L})")
        if not 0 <= self.d < self.L:
            raise ParameterError(f"need 0 <= d < L (got d={self.d}, L={self.L})")
        object.__setattr__(self, "n", int(self.n))

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2


class MeetingEvent(NamedTuple):
    time: float
    pair: tuple[int, int]
    transmitter: int
    seq: int

    @property
    def receiver(self) -> int:
        i, j = self.pair
        return j if self.transmitter == i else i


@dataclass(frozen=True, eq=False)
class MeetingSchedule:
    """Time-ordered meeting events stored column-wise.

    ``i < j`` holds for every stored pair; ``tx`` is either ``i`` or ``j``.
    The sequence number of an event is its row index.
    """

    n: int
    horizon: float
    time: np.ndarray
    i: np.ndarray
    j: np.ndarray
    tx: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"schedule needs at least two nodes (got n={self.n})")
        if not self.horizon > 0:
            raise ParameterError(f"horizon must be positive (got {self.horizon})")
        t = np.ascontiguousarray(self.time, dtype=np.float64)
        a = np.ascontiguousarray(self.i, dtype=np.int32)
        b = np.ascontiguousarray(self.j, dtype=np.int32)
        tx = np.ascontiguousarray(self.tx, dtype=np.int32)
        if not (len(t) == len(a) == len(b) == len(tx)):
            raise ParameterError("schedule columns have different lengths")
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        if len(t):
            if t[0] < 0 or t[-1] > self.horizon:
                raise ParameterError("event times must lie in [0, horizon]")
            if np.any(np.diff(t) < 0):
                raise ParameterError("event times must be non-decreasing")
            if np.any(lo == hi) or lo.min() < 0 or hi.max() >= self.n:
                raise ParameterError("event pairs must be two distinct valid node ids")
            if np.any((tx != lo) & (tx != hi)):
                raise ParameterError("transmitter must belong to the meeting pair")
        for name, arr in (("time", t), ("i", lo), ("j", hi), ("tx", tx)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.time)

    def __iter__(self) -> Iterator[MeetingEvent]:
        for k in range(len(self.time)):
            yield self.event(k)

    def event(self, k: int) -> MeetingEvent:
        return MeetingEvent(float(self.time[k]), (int(self.i[k]), int(self.j[k])), int(self.tx[k]), k)

    @property
    def events(self) -> list[MeetingEvent]:
        return list(self)

    @property
    def rx(self) -> np.ndarray:
        return np.where(self.tx == self.i, self.j, self.i).astype(np.int32)

    def pair_counts(self) -> np.ndarray:
        """Symmetric ``n x n`` matrix of meeting counts per pair."""
        counts = np.zeros((self.n, self.n), dtype=np.int64)
        np.add.at(counts, (self.i, self.j), 1)
        return counts + counts.T

    def pair_times(self, a: int, b: int) -> np.ndarray:
        lo, hi = min(a, b), max(a, b)
        return self.time[(self.i == lo) & (self.j == hi)]

    def inter_meeting_times(self, a: int, b: int) -> np.ndarray:
        return np.diff(self.pair_times(a, b))

    def same_events(self, other: MeetingSchedule) -> bool:
        return (
            self.n == other.n
            and self.horizon == other.horizon
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.i, other.i)
            and np.array_equal(self.j, other.j)
            and np.array_equal(self.tx, other.tx)
        )


def total_meeting_rate(n: int, beta: float) -> float:
    """Aggregate meeting rate over all n(n-1)/2 pairs."""
    if n < 2:
        raise ParameterError(f"need at least two nodes (got n={n})")
    if not beta > 0:
        raise ParameterError(f"beta must be positive (got {beta})")
    return n * (n - 1) * beta / 2


def sample_inter_meeting(beta: float, rng: np.random.Generator) -> float:
    if not beta > 0:
        raise ParameterError(f"beta must be positive (got {beta})")
    return float(rng.exponential(1.0 / beta))


def poisson_arrival_times(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Event times of a rate-``rate`` Poisson process on ``[0, horizon]``.

    Built by accumulating exponential gaps, drawn in blocks from ``rng``.
    """
    if not rate > 0:
        raise ParameterError(f"rate must be positive (got {rate})")
    mean = rate * horizon
    block = int(mean + 6 * np.sqrt(mean) + 16)
    gaps = rng.exponential(1.0 / rate, size=block)
    times = np.cumsum(gaps)
    while times[-1] <= horizon:
        more = np.cumsum(rng.exponential(1.0 / rate, size=block)) + times[-1]
        times = np.concatenate([times, more])
    return times[: np.searchsorted(times, horizon, side="right")]


def merge_pair_events(n, horizon, times, i, j, coins, seed=None) -> MeetingSchedule:
    """Order raw per-pair events by (time, i, j) and resolve transmitters.

    ``coins`` is 0 when ``i`` transmits and 1 when ``j`` does.
    """
    times = np.asarray(times, dtype=np.float64)
    i = np.asarray(i, dtype=np.int32)
    j = np.asarray(j, dtype=np.int32)
    order = np.lexsort((j, i, times))
    i, j = i[order], j[order]
    tx = np.where(np.asarray(coins)[order] == 0, i, j)
    return MeetingSchedule(n=n, horizon=float(horizon), time=times[order], i=i, j=j, tx=tx, seed=seed)


def generate_schedule(params: NetworkParams, horizon: float, seed: int) -> MeetingSchedule:
    """Sample independent rate-beta Poisson meetings for every node pair.

    Each pair draws its own exponential gaps and transmitter coins from a
    stream spawned off ``seed``, so the same seed always gives the same
    schedule and pairs never share randomness.
    """
    if not isinstance(params, NetworkParams):
        raise ParameterError("params must be a NetworkParams instance")
    if not horizon > 0:
        raise ParameterError(f"horizon must be positive (got {horizon})")
    n = params.n
    streams = np.random.SeedSequence(seed).spawn(params.n_pairs)
    chunks_t, chunks_i, chunks_j, chunks_c = [], [], [], []
    k = 0
    for a in range(n):
        for b in range(a + 1, n):
            rng = np.random.default_rng(streams[k])
            k += 1
            t = poisson_arrival_times(params.beta, horizon, rng)
            chunks_t.append(t)
            chunks_i.append(np.full(len(t), a, dtype=np.int32))
            chunks_j.append(np.full(len(t), b, dtype=np.int32))
            chunks_c.append(rng.integers(0, 2, size=len(t), dtype=np.int8))
    return merge_pair_events(
        n,
        horizon,
        np.concatenate(chunks_t),
        np.concatenate(chunks_i),
        np.concatenate(chunks_j),
        np.concatenate(chunks_c),
        seed=seed,
    )


def write_schedule(schedule: MeetingSchedule, dest) -> None:
    """Write the line-oriented ``icmn-meetings v1`` format to a path or text stream."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w") as fh:
            write_schedule(schedule, fh)
        return
    seed = "none" if schedule.seed is None else str(schedule.seed)
    dest.write(f"{SCHEDULE_MAGIC} {SCHEDULE_VERSION} n={schedule.n} horizon={schedule.horizon!r} seed={seed}\n")
    rows = [
        f"{t!r} {a} {b} {x}"
        for t, a, b, x in zip(
            schedule.time.tolist(), schedule.i.tolist(), schedule.j.tolist(), schedule.tx.tolist()
        )
    ]
    if rows:
        dest.write("\n".join(rows))
        dest.write("\n")


def dumps_schedule(schedule: MeetingSchedule) -> str:
    buf = io.StringIO()
    write_schedule(schedule, buf)
    return buf.getvalue()


def _parse_header(line, magic, keys):
    parts = line.split()
    if len(parts) < 2 or parts[0] != magic or parts[1] != SCHEDULE_VERSION:
        raise TraceParseError(1, f"expected header '{magic} {SCHEDULE_VERSION} ...'")
    fields = {}
    for token in parts[2:]:
        key, sep, value = token.partition("=")
        if not sep or key not in keys:
            raise TraceParseError(1, f"unexpected header field {token!r}")
        fields[key] = value
    missing = [k for k in keys if k not in fields]
    if missing:
        raise TraceParseError(1, f"header is missing {', '.join(missing)}")
    return fields


def read_schedule(src) -> MeetingSchedule:
    if isinstance(src, (str, os.PathLike)):
        with open(src) as fh:
            return read_schedule(fh)
    lines = src.read().splitlines()
    if not lines:
        raise TraceParseError(1, "empty schedule file")
    hdr = _parse_header(lines[0], SCHEDULE_MAGIC, ("n", "horizon", "seed"))
    try:
        n = int(hdr["n"])
        horizon = float(hdr["horizon"])
        seed = None if hdr["seed"] == "none" else int(hdr["seed"])
    except ValueError as exc:
        raise TraceParseError(1, str(exc)) from None
    m = len(lines) - 1
    t = np.empty(m)
    a = np.empty(m, dtype=np.int32)
    b = np.empty(m, dtype=np.int32)
    tx = np.empty(m, dtype=np.int32)
    k = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceParseError(lineno, "expected '<time> <i> <j> <transmitter>'")
        try:
            t[k] = float(parts[0])
            a[k], b[k], tx[k] = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
        if tx[k] not in (a[k], b[k]):
            raise TraceParseError(lineno, "transmitter is not one of the pair")
        k += 1
    try:
        return MeetingSchedule(n=n, horizon=horizon, time=t[:k], i=a[:k], j=b[:k], tx=tx[:k], seed=seed)
    except ParameterError as exc:
        raise TraceParseError(1, str(exc)) from None

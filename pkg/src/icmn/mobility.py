"""Random waypoint / random direction traces and geometric meeting extraction.

A :class:`Trace` stores, for every node, waypoints ``(t, x, y)`` joined by
straight constant-speed moves.  Two consecutive waypoints with the same time
mark a jump (used by wrap-around boundaries).  :func:`extract_meetings` turns
a trace into a :class:`~icmn.meeting.MeetingSchedule` by solving the
pairwise distance quadratic exactly on every common linear piece.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _backend
from .errors import ApproximationWarning, LowSampleWarning, ParameterError
from .meeting import MeetingSchedule, merge_pair_events

# Random-waypoint meeting-rate constant for a square region.
C1 = 1.3683

_TRACE_TAG = 0x74726163


@dataclass(frozen=True)
class SpeedModel:
    """Constant speed (``v_min == v_max``) or uniform on ``(v_min, v_max)``, in m/s."""

    v_min: float
    v_max: float

    def __post_init__(self):
        if not self.v_min > 0:
            raise ParameterError(f"speeds must be strictly positive (got v_min={self.v_min})")
        if self.v_max < self.v_min:
            raise ParameterError(f"v_max < v_min ({self.v_max} < {self.v_min})")

    @classmethod
    def constant(cls, v: float) -> SpeedModel:
        return cls(v, v)

    @classmethod
    def uniform(cls, v_min: float, v_max: float) -> SpeedModel:
        return cls(v_min, v_max)

    @property
    def is_constant(self) -> bool:
        return self.v_min == self.v_max

    def sample(self, rng, size):
        if self.is_constant:
            return np.full(size, float(self.v_min))
        return rng.uniform(self.v_min, self.v_max, size)


@dataclass(frozen=True)
class Fixed:
    value: float = 0.0

    def __post_init__(self):
        if self.value < 0:
            raise ParameterError("durations must be non-negative")

    def sample(self, rng, size):
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if self.low < 0 or self.high < self.low:
            raise ParameterError(f"invalid uniform duration range ({self.low}, {self.high})")

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)


@dataclass(frozen=True)
class Exponential:
    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise ParameterError(f"exponential mean must be positive (got {self.mean})")

    def sample(self, rng, size):
        return rng.exponential(self.mean, size)


@dataclass(eq=False)
class Trace:
    n: int
    L: float
    horizon: float
    t: list
    x: list
    y: list

    def __post_init__(self):
        if len(self.t) != self.n or len(self.x) != self.n or len(self.y) != self.n:
            raise ParameterError("trace must hold one waypoint array per node")
        if not self.horizon > 0:
            raise ParameterError("trace horizon must be positive")
        tol = 1e-9 * self.L
        for k in range(self.n):
            t = self.t[k] = np.ascontiguousarray(self.t[k], dtype=np.float64)
            x = self.x[k] = np.ascontiguousarray(self.x[k], dtype=np.float64)
            y = self.y[k] = np.ascontiguousarray(self.y[k], dtype=np.float64)
            if not (len(t) == len(x) == len(y)) or len(t) < 2:
                raise ParameterError(f"node {k}: need at least two waypoints with matching columns")
            if t[0] != 0 or t[-1] != self.horizon:
                raise ParameterError(f"node {k}: waypoints must span exactly [0, horizon]")
            if np.any(np.diff(t) < 0):
                raise ParameterError(f"node {k}: waypoint times must be non-decreasing")
            if min(x.min(), y.min()) < -tol or max(x.max(), y.max()) > self.L + tol:
                raise ParameterError(f"node {k}: waypoint outside [0, L]^2")

    def segment_speeds(self, node: int) -> np.ndarray:
        """Speed on each positive-duration segment of ``node``."""
        t, x, y = self.t[node], self.x[node], self.y[node]
        dt = np.diff(t)
        keep = dt > 0
        return np.hypot(np.diff(x), np.diff(y))[keep] / dt[keep]

    def positions_at(self, times) -> np.ndarray:
        """Array of shape ``(n, len(times), 2)``."""
        times = np.asarray(times, dtype=np.float64)
        out = np.empty((self.n, len(times), 2))
        for k in range(self.n):
            out[k, :, 0] = np.interp(times, self.t[k], self.x[k])
            out[k, :, 1] = np.interp(times, self.t[k], self.y[k])
        return out

    @property
    def n_waypoints(self) -> int:
        return sum(len(t) for t in self.t)


def _node_streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence([seed, _TRACE_TAG]).spawn(n)]


def _check_common(n, L, horizon):
    if int(n) != n or n < 1:
        raise ParameterError(f"need at least one node (got n={n})")
    if not L > 0:
        raise ParameterError(f"L must be positive (got {L})")
    if not horizon > 0:
        raise ParameterError(f"horizon must be positive (got {horizon})")


def _truncate(t, x, y, horizon):
    """Cut a waypoint path at ``horizon``, interpolating the last position."""
    k = int(np.searchsorted(t, horizon, side="left"))
    if k == len(t):
        return np.append(t, horizon), np.append(x, x[-1]), np.append(y, y[-1])
    if t[k] == horizon:
        return t[: k + 1], x[: k + 1], y[: k + 1]
    frac = (horizon - t[k - 1]) / (t[k] - t[k - 1])
    xe = x[k - 1] + frac * (x[k] - x[k - 1])
    ye = y[k - 1] + frac * (y[k] - y[k - 1])
    return (
        np.append(t[:k], horizon),
        np.append(x[:k], xe),
        np.append(y[:k], ye),
    )


def rwp_path(start, destinations, speeds, pauses, horizon=None):
    """Waypoints of one random-waypoint node given its drawn legs.

    Each leg goes straight to ``destinations[k]`` at ``speeds[k]`` and then
    holds for ``pauses[k]``.
    """
    dest = np.asarray(destinations, dtype=np.float64).reshape(-1, 2)
    speeds = np.asarray(speeds, dtype=np.float64)
    pauses = np.asarray(pauses, dtype=np.float64)
    px = np.concatenate([[start[0]], dest[:, 0]])
    py = np.concatenate([[start[1]], dest[:, 1]])
    travel = np.hypot(np.diff(px), np.diff(py)) / speeds
    m = len(dest)
    # waypoint sequence per leg: arrival, then end of pause
    steps = np.empty(2 * m)
    steps[0::2] = travel
    steps[1::2] = pauses
    t = np.concatenate([[0.0], np.cumsum(steps)])
    x = np.concatenate([[px[0]], np.repeat(px[1:], 2)])
    y = np.concatenate([[py[0]], np.repeat(py[1:], 2)])
    keep = np.ones(len(t), dtype=bool)
    keep[2::2] = pauses > 0
    t, x, y = t[keep], x[keep], y[keep]
    if horizon is not None:
        t, x, y = _truncate(t, x, y, horizon)
    return t, x, y


def generate_rwp(n, L, speed: SpeedModel, horizon, seed, pause=None) -> Trace:
    """Random waypoint: uniform start, uniform destinations, one speed per leg.

    ``pause`` is any duration distribution with ``sample(rng, size)``;
    default is no pause.
    """
    _check_common(n, L, horizon)
    if not isinstance(speed, SpeedModel):
        raise ParameterError("speed must be a SpeedModel")
    pause = Fixed(0.0) if pause is None else pause
    ts, xs, ys = [], [], []
    mean_leg = 0.5214 * L / (0.5 * (speed.v_min + speed.v_max))
    for rng in _node_streams(seed, n):
        start = rng.uniform(0, L, 2)
        block = int(horizon / mean_leg * 1.05) + 16
        t = x = y = None
        while t is None or t[-1] < horizon:
            dest = rng.uniform(0, L, (block, 2))
            v = speed.sample(rng, block)
            p = pause.sample(rng, block)
            bt, bx, by = rwp_path(start, dest, v, p)
            if t is None:
                t, x, y = bt, bx, by
            else:
                t = np.concatenate([t, bt[1:] + t[-1]])
                x = np.concatenate([x, bx[1:]])
                y = np.concatenate([y, by[1:]])
            start = (x[-1], y[-1])
        t, x, y = _truncate(t, x, y, horizon)
        ts.append(t)
        xs.append(x)
        ys.append(y)
    return Trace(n=n, L=float(L), horizon=float(horizon), t=ts, x=xs, y=ys)


def _fold(u, L, boundary):
    if boundary == "wrap":
        return np.mod(u, L)
    m = np.mod(u, 2 * L)
    return np.where(m <= L, m, 2 * L - m)


def _crossings(t, u, L):
    """Times where the unfolded coordinate ``u`` passes a multiple of ``L``.

    Returns (times, multiple index, moving up) for crossings strictly inside
    the pieces of the polyline ``(t, u)``.
    """
    u0, u1 = u[:-1], u[1:]
    lo = np.minimum(u0, u1)
    hi = np.maximum(u0, u1)
    first = np.floor(lo / L).astype(np.int64) + 1
    last = np.ceil(hi / L).astype(np.int64) - 1
    count = np.maximum(last - first + 1, 0)
    seg = np.repeat(np.arange(len(u0)), count)
    offset = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
    up = u1[seg] > u0[seg]
    c = np.where(up, first[seg] + offset, last[seg] - offset)
    frac = (c * L - u0[seg]) / (u1[seg] - u0[seg])
    times = t[seg] + frac * (t[seg + 1] - t[seg])
    return times, c, up


def rd_path(start, directions, speeds, durations, pauses, L, boundary="reflect", horizon=None):
    """Waypoints of one random-direction node given its drawn legs.

    Directions are headings inside the region at the start of each leg.
    Reflection mirrors the heading at a wall; wrap re-enters on the opposite
    side (recorded as two waypoints at the same time).
    """
    if boundary not in ("reflect", "wrap"):
        raise ParameterError(f"boundary must be 'reflect' or 'wrap' (got {boundary!r})")
    directions = np.asarray(directions, dtype=np.float64)
    speeds = np.asarray(speeds, dtype=np.float64)
    durations = np.asarray(durations, dtype=np.float64)
    pauses = np.asarray(pauses, dtype=np.float64)
    m = len(directions)
    dx = speeds * durations * np.cos(directions)
    dy = speeds * durations * np.sin(directions)

    # unfolded coordinates: straight lines, folded back into [0, L] afterwards
    ux = np.empty(m + 1)
    uy = np.empty(m + 1)
    ux[0], uy[0] = start
    if boundary == "wrap":
        ux[1:] = ux[0] + np.cumsum(dx)
        uy[1:] = uy[0] + np.cumsum(dy)
    else:
        two_l = 2 * L
        cx, cy = float(ux[0]), float(uy[0])
        dxl, dyl = dx.tolist(), dy.tolist()
        for k in range(m):
            # inside an odd reflection cell the real heading is mirrored
            cx += dxl[k] if (cx % two_l) < L else -dxl[k]
            cy += dyl[k] if (cy % two_l) < L else -dyl[k]
            ux[k + 1] = cx
            uy[k + 1] = cy

    steps = np.empty(2 * m)
    steps[0::2] = durations
    steps[1::2] = pauses
    bt = np.concatenate([[0.0], np.cumsum(steps)])
    bx = np.concatenate([[ux[0]], np.repeat(ux[1:], 2)])
    by = np.concatenate([[uy[0]], np.repeat(uy[1:], 2)])
    keep = np.ones(len(bt), dtype=bool)
    keep[2::2] = pauses > 0
    keep[1::2] &= durations > 0
    bt, bx, by = bt[keep], bx[keep], by[keep]
    if horizon is not None:
        bt, bx, by = _truncate(bt, bx, by, horizon)

    tx, cx_, upx = _crossings(bt, bx, L)
    ty, cy_, upy = _crossings(bt, by, L)
    x_at_ty = _fold(np.interp(ty, bt, bx), L, boundary)
    y_at_tx = _fold(np.interp(tx, bt, by), L, boundary)
    fx = _fold(bx, L, boundary)
    fy = _fold(by, L, boundary)

    # (time, rank, x, y): rank orders the pre-jump waypoint before the post-jump one
    parts_t = [bt]
    parts_r = [np.zeros(len(bt))]
    parts_x = [fx]
    parts_y = [fy]
    if boundary == "reflect":
        parts_t += [tx, ty]
        parts_r += [np.zeros(len(tx)), np.zeros(len(ty))]
        parts_x += [np.where(cx_ % 2 == 0, 0.0, L), x_at_ty]
        parts_y += [y_at_tx, np.where(cy_ % 2 == 0, 0.0, L)]
    else:
        parts_t += [tx, tx, ty, ty]
        parts_r += [np.zeros(len(tx)), np.ones(len(tx)), np.zeros(len(ty)), np.ones(len(ty))]
        parts_x += [np.where(upx, L, 0.0), np.where(upx, 0.0, L), x_at_ty, x_at_ty]
        parts_y += [y_at_tx, y_at_tx, np.where(upy, L, 0.0), np.where(upy, 0.0, L)]
    t = np.concatenate(parts_t)
    r = np.concatenate(parts_r)
    order = np.lexsort((r, t))
    return t[order], np.concatenate(parts_x)[order], np.concatenate(parts_y)[order]


def generate_rd(
    n,
    L,
    speed: SpeedModel,
    horizon,
    seed,
    pause=None,
    travel_time=None,
    boundary="reflect",
) -> Trace:
    """Random direction: uniform start, then (heading, speed, travel time) legs.

    Headings are uniform on [0, 2pi); travel time defaults to exponential
    with mean 100 s and pause to zero.
    """
    _check_common(n, L, horizon)
    if not isinstance(speed, SpeedModel):
        raise ParameterError("speed must be a SpeedModel")
    if boundary not in ("reflect", "wrap"):
        raise ParameterError(f"boundary must be 'reflect' or 'wrap' (got {boundary!r})")
    pause = Fixed(0.0) if pause is None else pause
    travel_time = Exponential(100.0) if travel_time is None else travel_time
    ts, xs, ys = [], [], []
    for rng in _node_streams(seed, n):
        start = rng.uniform(0, L, 2)
        legs = []
        elapsed = 0.0
        block = 1024
        while elapsed < horizon:
            theta = rng.uniform(0, 2 * np.pi, block)
            v = speed.sample(rng, block)
            tau = travel_time.sample(rng, block)
            p = pause.sample(rng, block)
            legs.append((theta, v, tau, p))
            elapsed += float(tau.sum() + p.sum())
            block = min(2 * block, 1 << 20)
        theta, v, tau, p = (np.concatenate(c) for c in zip(*legs))
        t, x, y = rd_path(start, theta, v, tau, p, L, boundary, horizon)
        ts.append(t)
        xs.append(np.clip(x, 0.0, L))
        ys.append(np.clip(y, 0.0, L))
    return Trace(n=n, L=float(L), horizon=float(horizon), t=ts, x=xs, y=ys)


def pair_contact_times(trace: Trace, a: int, b: int, d: float, backend=None) -> np.ndarray:
    """Entry times of every contact between nodes ``a`` and ``b``."""
    k = _backend.get(backend)
    return np.asarray(
        k.pair_contacts(trace.t[a], trace.x[a], trace.y[a], trace.t[b], trace.x[b], trace.y[b], float(d), trace.horizon)
    )


def extract_meetings(trace: Trace, d: float, seed: int = 0, backend=None) -> MeetingSchedule:
    """Meetings implied by ``trace`` at transmission range ``d``.

    One event per contact, at the instant the pair distance drops below
    ``d`` (or at t = 0 for pairs that start in range).  Transmitters are
    chosen by fair coins drawn from ``seed`` in schedule order.
    """
    if not d > 0:
        raise ParameterError(f"transmission range must be positive (got {d})")
    times, ii, jj = [], [], []
    for a in range(trace.n):
        for b in range(a + 1, trace.n):
            t = pair_contact_times(trace, a, b, d, backend)
            times.append(t)
            ii.append(np.full(len(t), a, dtype=np.int32))
            jj.append(np.full(len(t), b, dtype=np.int32))
    times = np.concatenate(times) if times else np.empty(0)
    ii = np.concatenate(ii) if ii else np.empty(0, dtype=np.int32)
    jj = np.concatenate(jj) if jj else np.empty(0, dtype=np.int32)
    order = np.lexsort((jj, ii, times))
    coins = np.empty(len(times), dtype=np.int8)
    coins[order] = np.random.default_rng(seed).integers(0, 2, size=len(times), dtype=np.int8)
    return merge_pair_events(max(trace.n, 2), trace.horizon, times, ii, jj, coins, seed=seed)


def estimate_beta(schedule: MeetingSchedule) -> float:
    """Per-pair meeting rate 2|E| / (n(n-1)T)."""
    if not schedule.horizon > 0:
        raise ParameterError("schedule horizon must be positive")
    n = schedule.n
    if len(schedule) == 0:
        warnings.warn("no meetings in schedule; beta estimate is 0", LowSampleWarning, stacklevel=2)
        return 0.0
    return 2 * len(schedule) / (n * (n - 1) * schedule.horizon)


def expected_relative_speed(speed: SpeedModel, epsrel: float = 1e-6) -> float:
    """E|V1 - V2| for independent uniform headings and speeds from ``speed``.

    Adaptive quadrature over the heading difference (folded onto [0, pi])
    and, for a speed range, over both speeds.
    """

    def norm(theta, v1, v2):
        return math.sqrt(max(v1 * v1 + v2 * v2 - 2 * v1 * v2 * math.cos(theta), 0.0))

    if speed.is_constant:
        v = speed.v_min
        val, _ = integrate.quad(norm, 0.0, math.pi, args=(v, v), epsabs=0, epsrel=epsrel)
        return val / math.pi
    lo, hi = speed.v_min, speed.v_max
    val, _ = integrate.nquad(
        norm,
        [(0.0, math.pi), (lo, hi), (lo, hi)],
        opts={"epsabs": 0, "epsrel": epsrel},
    )
    return val / (math.pi * (hi - lo) ** 2)


def _check_range(L, d):
    if not L > 0:
        raise ParameterError(f"L must be positive (got {L})")
    if d < 0:
        raise ParameterError(f"d must be non-negative (got {d})")
    if d / L > 0.1:
        warnings.warn(f"d/L = {d / L:.3g} is not small; the meeting-rate formula degrades", ApproximationWarning, stacklevel=3)


def beta_rwp(L: float, d: float, ev: float) -> float:
    """Random-waypoint pairwise meeting rate, 2 C1 d E[V*] / L^2."""
    _check_range(L, d)
    return 2 * C1 * d * ev / L**2


def beta_rd(L: float, d: float, ev: float) -> float:
    """Random-direction pairwise meeting rate, 2 d E[V*] / L^2."""
    _check_range(L, d)
    return 2 * d * ev / L**2

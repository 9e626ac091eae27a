"""Trace files: the native ``icmn-trace v1`` format and NS-2 setdest scripts."""

from __future__ import annotations

import math
import os
import re

import numpy as np

from .errors import ParameterError, TraceParseError
from .meeting import _parse_header
from .mobility import Trace, _truncate

TRACE_MAGIC = "icmn-trace"


def write_trace(trace: Trace, dest) -> None:
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w") as fh:
            write_trace(trace, fh)
        return
    dest.write(f"{TRACE_MAGIC} v1 n={trace.n} L={trace.L!r} horizon={trace.horizon!r}\n")
    for k in range(trace.n):
        rows = [f"{k} {t!r} {x!r} {y!r}" for t, x, y in zip(trace.t[k].tolist(), trace.x[k].tolist(), trace.y[k].tolist())]
        dest.write("\n".join(rows))
        dest.write("\n")


def read_trace(src) -> Trace:
    if isinstance(src, (str, os.PathLike)):
        with open(src) as fh:
            return read_trace(fh)
    lines = src.read().splitlines()
    if not lines:
        raise TraceParseError(1, "empty trace file")
    hdr = _parse_header(lines[0], TRACE_MAGIC, ("n", "L", "horizon"))
    try:
        n, L, horizon = int(hdr["n"]), float(hdr["L"]), float(hdr["horizon"])
    except ValueError as exc:
        raise TraceParseError(1, str(exc)) from None
    cols = [([], [], []) for _ in range(n)]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceParseError(lineno, "expected '<node> <t> <x> <y>'")
        try:
            k = int(parts[0])
            t, x, y = float(parts[1]), float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
        if not 0 <= k < n:
            raise TraceParseError(lineno, f"node id {k} out of range")
        if cols[k][0] and t < cols[k][0][-1]:
            raise TraceParseError(lineno, f"waypoint time goes backwards for node {k}")
        cols[k][0].append(t)
        cols[k][1].append(x)
        cols[k][2].append(y)
    try:
        return Trace(
            n=n,
            L=L,
            horizon=horizon,
            t=[c[0] for c in cols],
            x=[c[1] for c in cols],
            y=[c[2] for c in cols],
        )
    except ParameterError as exc:
        raise TraceParseError(len(lines), str(exc)) from None


_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
_SET = re.compile(r"^\$node_\((\d+)\)\s+set\s+([XYZ])_\s+" + _NUM + r"$")
_SETDEST = re.compile(
    r'^\$ns_\s+at\s+' + _NUM + r'\s+"\$node_\((\d+)\)\s+setdest\s+' + _NUM + r"\s+" + _NUM + r"\s+" + _NUM + r'"$'
)


def import_ns2(src, L: float | None = None, horizon: float | None = None) -> Trace:
    """Read an NS-2 setdest movement script.

    Accepts ``$node_(i) set X_/Y_/Z_ <v>`` initial positions (Z is ignored),
    ``$ns_ at <t> "$node_(i) setdest <x> <y> <speed>"`` commands, blank lines
    and ``#`` comments.  Anything else raises :class:`TraceParseError`.  A
    new ``setdest`` interrupts the move in progress.  ``L`` defaults to the
    largest coordinate seen, ``horizon`` to the last arrival time.
    """
    if isinstance(src, (str, os.PathLike)):
        with open(src) as fh:
            return import_ns2(fh, L=L, horizon=horizon)
    init: dict[int, dict[str, float]] = {}
    moves: dict[int, list] = {}
    for lineno, raw in enumerate(src.read().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SET.match(line)
        if m:
            node, axis, value = int(m.group(1)), m.group(2), float(m.group(3))
            init.setdefault(node, {})[axis] = value
            continue
        m = _SETDEST.match(line)
        if m:
            t = float(m.group(1))
            node = int(m.group(2))
            x, y, v = float(m.group(3)), float(m.group(4)), float(m.group(5))
            if t < 0 or v < 0:
                raise TraceParseError(lineno, "negative time or speed in setdest")
            moves.setdefault(node, []).append((t, lineno, x, y, v))
            continue
        raise TraceParseError(lineno, f"unsupported statement: {line[:60]!r}")

    nodes = sorted(set(init) | set(moves))
    if not nodes:
        raise TraceParseError(1, "no nodes defined")
    n = nodes[-1] + 1
    for k in range(n):
        if k not in init or "X" not in init[k] or "Y" not in init[k]:
            raise TraceParseError(1, f"node {k} has no initial X_/Y_ position")

    paths = []
    for k in range(n):
        t_pts = [0.0]
        x_pts = [init[k]["X"]]
        y_pts = [init[k]["Y"]]
        # pending arrival (t, x, y) of the move in progress
        target = None
        for t, _, x, y, v in sorted(moves.get(k, []), key=lambda r: (r[0], r[1])):
            if target is not None:
                if target[0] <= t:
                    t_pts.append(target[0])
                    x_pts.append(target[1])
                    y_pts.append(target[2])
                else:
                    frac = (t - t_pts[-1]) / (target[0] - t_pts[-1])
                    t_pts.append(t)
                    x_pts.append(x_pts[-1] + frac * (target[1] - x_pts[-1]))
                    y_pts.append(y_pts[-1] + frac * (target[2] - y_pts[-1]))
                target = None
            if t > t_pts[-1]:
                t_pts.append(t)
                x_pts.append(x_pts[-1])
                y_pts.append(y_pts[-1])
            dist = math.hypot(x - x_pts[-1], y - y_pts[-1])
            if dist > 0 and v > 0:
                target = (t + dist / v, x, y)
        if target is not None:
            t_pts.append(target[0])
            x_pts.append(target[1])
            y_pts.append(target[2])
        paths.append((np.array(t_pts), np.array(x_pts), np.array(y_pts)))

    end = max(p[0][-1] for p in paths) if horizon is None else float(horizon)
    if not end > 0:
        raise TraceParseError(1, "trace has zero duration; pass a horizon")
    if L is None:
        L = max(max(p[1].max(), p[2].max()) for p in paths)
    ts, xs, ys = [], [], []
    for t, x, y in paths:
        t, x, y = _truncate(t, x, y, end)
        ts.append(t)
        xs.append(x)
        ys.append(y)
    try:
        return Trace(n=n, L=float(L), horizon=float(end), t=ts, x=xs, y=ys)
    except ParameterError as exc:
        raise TraceParseError(1, str(exc)) from None

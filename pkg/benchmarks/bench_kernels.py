"""Time the compiled and pure-Python kernels on identical inputs.

    python benchmarks/bench_kernels.py [--horizon 1e6] [--repeat 3]

Both backends must produce identical results; the script checks that
before reporting timings.
"""

import argparse
import time

import numpy as np

from icmn import _backend
from icmn.meeting import NetworkParams, generate_schedule
from icmn.mobility import SpeedModel, generate_rwp
from icmn.routing import TrafficParams, simulate


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_route(horizon, repeat):
    params = NetworkParams(n=20, beta=6.96e-4)
    schedule = generate_schedule(params, horizon, seed=1)
    traffic = TrafficParams.at_load(params, 0.8, seed=1)
    results = {}
    for name in _backend.BACKENDS:
        results[name] = best_of(lambda: simulate(params, traffic, schedule, backend=name), repeat)
    delivered = {name: r[1].delivered_at for name, r in results.items()}
    ref = next(iter(delivered.values()))
    for name, d in delivered.items():
        assert np.array_equal(d, ref, equal_nan=True), f"{name} route output differs"
    return len(schedule), {name: r[0] for name, r in results.items()}


def bench_contacts(horizon, repeat):
    trace = generate_rwp(2, 2000.0, SpeedModel.constant(40.0), horizon, seed=1)
    args = (trace.t[0], trace.x[0], trace.y[0], trace.t[1], trace.x[1], trace.y[1], 50.0, trace.horizon)
    results = {name: best_of(lambda: np.asarray(k.pair_contacts(*args)), repeat) for name, k in _backend.BACKENDS.items()}
    ref = next(iter(results.values()))[1]
    for name, (_, out) in results.items():
        assert np.array_equal(out, ref), f"{name} pair_contacts output differs"
    return trace.n_waypoints, {name: r[0] for name, r in results.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=1e6)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if len(_backend.BACKENDS) < 2:
        print("compiled kernels not built; only the python backend is available")

    for label, fn, unit in (
        ("route", bench_route, "meetings"),
        ("pair_contacts", bench_contacts, "waypoints"),
    ):
        size, timings = fn(args.horizon, args.repeat)
        print(f"{label} ({size} {unit})")
        for name, secs in timings.items():
            print(f"  {name:<8} {secs * 1e3:10.1f} ms")
        if "cython" in timings and "python" in timings:
            print(f"  speedup  {timings['python'] / timings['cython']:10.1f}x")


if __name__ == "__main__":
    main()

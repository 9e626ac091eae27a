"""Command-line front end: ``icmn simulate | sweep | trace ... | calc ...``.

Exit status is 0 on success, 1 for bad parameters or configuration and 2
for I/O or trace-format problems.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import analysis
from .errors import ICMNError, TraceParseError
from .experiment import ExperimentConfig, emit_report, load_config, parse_config, run_experiment
from .meeting import NetworkParams, generate_schedule, read_schedule, write_schedule
from .mobility import (
    Exponential,
    Fixed,
    SpeedModel,
    estimate_beta,
    expected_relative_speed,
    extract_meetings,
    generate_rd,
    generate_rwp,
)
from .routing import (
    TrafficParams,
    measured_throughput,
    sample_derangement,
    simulate,
    write_delays_csv,
    write_report,
)
from .traceio import import_ns2, read_trace, write_trace


def _add_network(p, beta=True):
    p.add_argument("--n", type=int, default=20, help="number of nodes (default 20)")
    if beta:
        p.add_argument("--beta", type=float, help="pairwise meeting rate (default 6.96e-4, or derived from mobility)")


def _add_mobility(p):
    p.add_argument("--L", type=float, default=2000.0, help="side of the square area in metres")
    p.add_argument("--d", type=float, default=20.0, help="transmission range in metres")
    p.add_argument("--v-min", type=float, default=40.0)
    p.add_argument("--v-max", type=float, default=None, help="defaults to --v-min (constant speed)")
    p.add_argument("--ev", type=float, default=None, help="override E[V*] instead of computing it")


def _add_motion(p):
    p.add_argument("--pause", type=float, default=0.0)
    p.add_argument("--travel-time", type=float, default=100.0, help="mean leg duration for rd")
    p.add_argument("--boundary", choices=("reflect", "wrap"), default="reflect")


def _speed(args) -> SpeedModel:
    v_max = args.v_min if args.v_max is None else args.v_max
    return SpeedModel(args.v_min, v_max)


def _ev(args) -> float:
    return args.ev if args.ev is not None else expected_relative_speed(_speed(args))


def _beta(args) -> float:
    if getattr(args, "beta", None) is not None:
        return args.beta
    mobility = getattr(args, "mobility", "poisson")
    if mobility in ("rwp", "rd"):
        return analysis.meeting_rate(mobility, args.L, args.d, _ev(args))
    return 6.96e-4


def _generate_trace(args, model, seed):
    speed = _speed(args)
    if model == "rwp":
        return generate_rwp(args.n, args.L, speed, args.horizon, seed, pause=Fixed(args.pause))
    return generate_rd(
        args.n,
        args.L,
        speed,
        args.horizon,
        seed,
        pause=Fixed(args.pause),
        travel_time=Exponential(args.travel_time),
        boundary=args.boundary,
    )


def cmd_simulate(args):
    if args.schedule:
        schedule = read_schedule(args.schedule)
        beta = args.beta if args.beta is not None else estimate_beta(schedule)
    elif args.trace:
        schedule = extract_meetings(read_trace(args.trace), args.d, seed=args.seed)
        beta = _beta(args)
    elif args.mobility == "poisson":
        beta = _beta(args)
        schedule = generate_schedule(NetworkParams(n=args.n, beta=beta), args.horizon, args.seed)
    else:
        schedule = extract_meetings(_generate_trace(args, args.mobility, args.seed), args.d, seed=args.seed)
        beta = _beta(args)
    params = NetworkParams(n=schedule.n, beta=beta, L=args.L, d=args.d)
    if args.lam is not None:
        traffic = TrafficParams(lam=args.lam, permutation=sample_derangement(params.n, args.seed), seed=args.seed)
    else:
        traffic = TrafficParams.at_load(params, args.rho, seed=args.seed)
    stats = simulate(params, traffic, schedule, warmup=args.warmup_fraction * schedule.horizon)
    mu = analysis.capacity(params.n, beta)
    print(f"beta            {beta!r}")
    print(f"capacity        {mu!r}")
    print(f"lambda          {traffic.lam!r}  (rho = {traffic.lam / mu:.4g})")
    print(f"throughput      {measured_throughput(stats, flow=None)!r}")
    print(f"mean delay      {stats.mean_delay()!r}")
    if traffic.lam < mu:
        print(f"theory delay    {analysis.expected_delay(params.n, beta, traffic.lam)!r}")
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        write_report(stats, os.path.join(args.output, "report.txt"))
        write_delays_csv(stats, os.path.join(args.output, "delays.csv"))
        print(f"wrote {args.output}/report.txt and delays.csv")
    return 0


_CONFIG_FLAGS = dataclasses.fields(ExperimentConfig)


def cmd_sweep(args):
    overrides = {}
    for f in _CONFIG_FLAGS:
        value = getattr(args, f.name)
        if value is not None:
            overrides[f.name] = value
    if args.config:
        config = load_config(args.config, **overrides)
    else:
        config = parse_config("", **overrides)
    rows = run_experiment(config)
    paths = emit_report(rows, config)
    for r in rows:
        sim = "" if r.sim_mean is None else f"  sim {r.sim_mean:.6g} +/- {r.sim_stderr:.2g} ({r.runs} runs)"
        theory = "unstable" if r.theory is None else f"{r.theory:.6g}"
        print(f"{r.sweep:<10g} theory {theory}{sim}")
    print(f"wrote {paths['csv']}")
    return 0


def cmd_trace_gen(args):
    trace = _generate_trace(args, args.model, args.seed)
    write_trace(trace, args.output)
    print(f"wrote {trace.n} nodes, {trace.n_waypoints} waypoints to {args.output}")
    return 0


def cmd_trace_extract(args):
    schedule = extract_meetings(read_trace(args.trace), args.d, seed=args.seed)
    write_schedule(schedule, args.output)
    print(f"{len(schedule)} meetings, beta ~= {estimate_beta(schedule)!r}; wrote {args.output}")
    return 0


def cmd_trace_import(args):
    trace = import_ns2(args.source, L=args.L, horizon=args.horizon)
    write_trace(trace, args.output)
    print(f"imported {trace.n} nodes over {trace.horizon!r} s; wrote {args.output}")
    return 0


def cmd_calc(args):
    what = args.quantity
    if what == "beta":
        ev = _ev(args)
        print(f"E[V*]   {ev!r}")
        print(f"beta    {analysis.meeting_rate(args.mobility, args.L, args.d, ev)!r}")
        return 0
    beta = _beta(args)
    if what == "capacity":
        print(repr(analysis.capacity(args.n, beta)))
    elif what == "bound":
        print(repr(analysis.tradeoff_bound(args.n, beta)))
    else:
        mu = analysis.capacity(args.n, beta)
        lam = args.lam if args.lam is not None else args.rho * mu
        print(repr(analysis.expected_delay(args.n, beta, lam)))
    return 0


class _Parser(argparse.ArgumentParser):
    # usage mistakes are parameter errors (1); 2 is reserved for I/O
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icmn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one routing run")
    _add_network(p)
    _add_mobility(p)
    _add_motion(p)
    p.add_argument("--mobility", choices=("poisson", "rwp", "rd"), default="poisson")
    p.add_argument("--schedule", help="read meetings from a schedule file instead")
    p.add_argument("--trace", help="extract meetings from a trace file instead")
    load = p.add_mutually_exclusive_group()
    load.add_argument("--rho", type=float, default=0.8)
    load.add_argument("--lam", type=float)
    p.add_argument("--horizon", type=float, default=1.0e7)
    p.add_argument("--warmup-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--output", "-o", help="directory for report.txt and delays.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a parameter sweep from a config file")
    p.add_argument("config", nargs="?", help="key = value config file")
    for f in _CONFIG_FLAGS:
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_sweep)

    trace = sub.add_parser("trace", help="mobility traces").add_subparsers(dest="trace_cmd", required=True)
    p = trace.add_parser("gen", help="generate a mobility trace")
    p.add_argument("model", choices=("rwp", "rd"))
    _add_network(p, beta=False)
    _add_mobility(p)
    _add_motion(p)
    p.add_argument("--horizon", type=float, default=1.0e7)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_trace_gen)

    p = trace.add_parser("extract", help="extract meetings from a trace")
    p.add_argument("trace")
    p.add_argument("--d", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0, help="seed for transmitter coins")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_trace_extract)

    p = trace.add_parser("import-ns2", help="convert an NS-2 setdest script")
    p.add_argument("source")
    p.add_argument("--L", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_trace_import)

    p = sub.add_parser("calc", help="closed-form quantities")
    p.add_argument("quantity", choices=("capacity", "delay", "bound", "beta"))
    _add_network(p)
    _add_mobility(p)
    p.add_argument("--mobility", choices=("poisson", "rwp", "rd"), default="poisson")
    load = p.add_mutually_exclusive_group()
    load.add_argument("--rho", type=float, default=0.8)
    load.add_argument("--lam", type=float)
    p.set_defaults(func=cmd_calc)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # --help and usage errors; hand the status back instead of exiting
        return exc.code
    if args.command == "calc" and args.quantity == "beta" and args.mobility == "poisson":
        print("icmn: calc beta needs --mobility rwp or rd", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (OSError, TraceParseError) as exc:
        print(f"icmn: {exc}", file=sys.stderr)
        return 2
    except (ICMNError, ValueError) as exc:
        print(f"icmn: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Parameter sweeps comparing simulation against the closed forms.

A sweep is described by a flat ``key = value`` config file (see
:class:`ExperimentConfig` for keys and defaults) and produces one
:class:`ExperimentRow` per sweep value.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .errors import ConfigurationError, InstabilityError, ParameterError
from .meeting import NetworkParams, generate_schedule
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
from .routing import TrafficParams, measured_throughput, simulate

SCENARIOS = (
    "throughput-vs-load",
    "delay-vs-load",
    "capacity-vs-speed",
    "delay-vs-speed",
    "capacity-vs-d",
    "delay-vs-d",
    "validate-beta",
)
MOBILITIES = ("poisson", "rwp", "rd")
THEORY_ONLY = ("capacity-vs-speed", "delay-vs-speed", "capacity-vs-d", "delay-vs-d")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    sweep: tuple[float, ...]
    mobility: str = "poisson"
    n: int = 20
    beta: float = 6.96e-4
    L: float = 2000.0
    d: float = 20.0
    v_min: float = 40.0
    v_max: float = 40.0
    ev: float = 0.0
    rho: float = 0.8
    horizon: float = 1.0e7
    warmup_fraction: float = 0.1
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    flow: str = "0"
    boundary: str = "reflect"
    travel_time: float = 100.0
    pause: float = 0.0
    workers: int = 1
    output: str = "results"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        if self.mobility not in MOBILITIES:
            raise ConfigurationError(f"unknown mobility {self.mobility!r}")
        if not self.sweep:
            raise ConfigurationError("sweep must contain at least one value")
        if list(self.sweep) != sorted(self.sweep):
            raise ConfigurationError("sweep values must be sorted ascending")
        if self.scenario.endswith("-load") and min(self.sweep) <= 0:
            raise ConfigurationError("load values must be positive")
        if self.scenario in THEORY_ONLY and self.mobility == "poisson":
            raise ConfigurationError(f"{self.scenario} needs mobility rwp or rd")
        if self.scenario == "validate-beta" and self.mobility == "poisson":
            raise ConfigurationError("validate-beta needs mobility rwp or rd")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigurationError("warmup_fraction must lie in [0, 1)")
        if self.flow != "all":
            try:
                k = int(self.flow)
            except ValueError:
                raise ConfigurationError(f"flow must be a node id or 'all' (got {self.flow!r})") from None
            if not 0 <= k < self.n:
                raise ConfigurationError(f"flow {k} is not a node id")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    @property
    def speed(self) -> SpeedModel:
        return SpeedModel(self.v_min, self.v_max)

    @property
    def relative_speed(self) -> float:
        """E[V*] used for theory: ``ev`` if set, else computed from the speed model."""
        return self.ev if self.ev > 0 else expected_relative_speed(self.speed)


@dataclass(frozen=True)
class ExperimentRow:
    sweep: float
    theory: float | None
    sim_mean: float | None = None
    sim_stderr: float | None = None
    runs: int = 0
    stable: bool = True
    samples: tuple[float, ...] = field(default=(), repr=False)


def _convert(name, raw):
    kind = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}[name]
    try:
        if kind == "tuple[float, ...]":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind == "tuple[int, ...]":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, value.strip())
    for key, value in overrides.items():
        if key not in known:
            raise ConfigurationError(f"unknown key {key!r}")
        values[key] = _convert(key, value) if isinstance(value, str) else value
    if "scenario" not in values or "sweep" not in values:
        raise ConfigurationError("config needs at least 'scenario' and 'sweep'")
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)


def format_config(config: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def _theory_beta(config: ExperimentConfig, d: float) -> float:
    if config.mobility == "poisson":
        return config.beta
    return analysis.meeting_rate(config.mobility, config.L, d, config.relative_speed)


def _meetings(config: ExperimentConfig, seed: int, d: float, trace=None):
    if config.mobility == "poisson":
        return generate_schedule(NetworkParams(n=config.n, beta=config.beta), config.horizon, seed)
    if trace is None:
        trace = _trace(config, seed)
    return extract_meetings(trace, d, seed=seed)


def _trace(config: ExperimentConfig, seed: int):
    pause = Fixed(config.pause)
    if config.mobility == "rwp":
        return generate_rwp(config.n, config.L, config.speed, config.horizon, seed, pause=pause)
    return generate_rd(
        config.n,
        config.L,
        config.speed,
        config.horizon,
        seed,
        pause=pause,
        travel_time=Exponential(config.travel_time),
        boundary=config.boundary,
    )


def _run_seed(config: ExperimentConfig, seed: int) -> list[float | None]:
    """Simulated metric for every sweep value under one seed (None where skipped)."""
    if config.scenario == "validate-beta":
        trace = _trace(config, seed)
        return [estimate_beta(extract_meetings(trace, d, seed=seed)) for d in config.sweep]

    beta = _theory_beta(config, config.d)
    params = NetworkParams(n=config.n, beta=beta, L=config.L, d=config.d)
    schedule = _meetings(config, seed, config.d)
    flow = None if config.flow == "all" else int(config.flow)
    out = []
    for rho in config.sweep:
        if config.scenario == "delay-vs-load" and rho >= 1:
            out.append(None)
            continue
        traffic = TrafficParams.at_load(params, rho, seed=seed)
        stats = simulate(params, traffic, schedule, warmup=config.warmup_fraction * config.horizon)
        if config.scenario == "throughput-vs-load":
            out.append(measured_throughput(stats, flow=flow))
        else:
            out.append(stats.mean_delay(flow))
    return out


def _theory(config: ExperimentConfig, x: float) -> float | None:
    s = config.scenario
    if s == "validate-beta":
        return _theory_beta(config, x)
    if s.endswith("-load"):
        mu = analysis.capacity(config.n, _theory_beta(config, config.d))
        if s == "throughput-vs-load":
            return min(x, 1.0) * mu
        try:
            return analysis.expected_delay(config.n, _theory_beta(config, config.d), x * mu)
        except InstabilityError:
            return None
    ev = x if s.endswith("-speed") else config.relative_speed
    d = x if s.endswith("-d") else config.d
    beta = analysis.meeting_rate(config.mobility, config.L, d, ev)
    mu = analysis.capacity(config.n, beta)
    if s.startswith("capacity"):
        return mu
    return analysis.expected_delay(config.n, beta, config.rho * mu)


def run_experiment(config: ExperimentConfig) -> list[ExperimentRow]:
    """Evaluate theory and (where applicable) simulation at every sweep value.

    Trace-driven sweeps build one trace per seed and reuse it for every
    sweep value.  Results do not depend on ``workers``.
    """
    theory = [_theory(config, x) for x in config.sweep]
    if config.scenario in THEORY_ONLY:
        return [ExperimentRow(sweep=x, theory=t, runs=0) for x, t in zip(config.sweep, theory)]

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_seed = list(pool.map(_run_seed, [config] * len(config.seeds), config.seeds))
    else:
        per_seed = [_run_seed(config, s) for s in config.seeds]

    rows = []
    for k, x in enumerate(config.sweep):
        stable = not (config.scenario.endswith("-load") and x >= 1)
        samples = [run[k] for run in per_seed if run[k] is not None and not math.isnan(run[k])]
        if not samples:
            rows.append(ExperimentRow(sweep=x, theory=theory[k], runs=0, stable=stable))
            continue
        arr = np.asarray(samples)
        err = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        rows.append(
            ExperimentRow(
                sweep=x,
                theory=theory[k],
                sim_mean=float(arr.mean()),
                sim_stderr=err,
                runs=len(arr),
                stable=stable,
                samples=tuple(samples),
            )
        )
    return rows


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PLOT_SCRIPT = '''"""Plot theory against simulation from results.csv (written by icmn sweep)."""
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "results.csv")) as fh:
    rows = list(csv.DictReader(fh))

x = [float(r["sweep"]) for r in rows]
theory = [(float(r["sweep"]), float(r["theory"])) for r in rows if r["theory"]]
sim = [(float(r["sweep"]), float(r["sim_mean"]), float(r["sim_stderr"])) for r in rows if r["sim_mean"]]

fig, ax = plt.subplots(figsize=(5, 3.5))
if theory:
    ax.plot(*zip(*theory), "--", label="theory")
if sim:
    sx, sy, se = zip(*sim)
    ax.errorbar(sx, sy, yerr=se, fmt="o", capsize=3, label="simulation")
ax.set_xlabel({xlabel!r})
ax.set_ylabel({ylabel!r})
ax.set_title({title!r})
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "plot.png"), dpi=150)
'''

_LABELS = {
    "throughput-vs-load": ("system load rho", "throughput (packets/s)"),
    "delay-vs-load": ("system load rho", "mean end-to-end delay (s)"),
    "capacity-vs-speed": ("E[V*] (m/s)", "capacity (packets/s)"),
    "delay-vs-speed": ("E[V*] (m/s)", "mean end-to-end delay (s)"),
    "capacity-vs-d": ("transmission range d (m)", "capacity (packets/s)"),
    "delay-vs-d": ("transmission range d (m)", "mean end-to-end delay (s)"),
    "validate-beta": ("transmission range d (m)", "pairwise meeting rate (1/s)"),
}


def emit_report(rows, config: ExperimentConfig, out_dir=None) -> dict:
    """Write ``results.csv``, ``config.echo`` and ``plot.py``; return their paths."""
    if not rows:
        raise ParameterError("no rows to report")
    out_dir = config.output if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "results.csv"),
        "config": os.path.join(out_dir, "config.echo"),
        "plot": os.path.join(out_dir, "plot.py"),
    }
    with open(paths["csv"], "w") as fh:
        fh.write("sweep,theory,sim_mean,sim_stderr,runs,stable\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in (r.sweep, r.theory, r.sim_mean, r.sim_stderr, r.runs, r.stable)) + "\n")
    with open(paths["config"], "w") as fh:
        fh.write(format_config(config))
        if config.mobility != "poisson" and config.scenario not in THEORY_ONLY:
            fh.write("# mobility traces are regenerated per seed and shared across sweep values\n")
    xlabel, ylabel = _LABELS[config.scenario]
    with open(paths["plot"], "w") as fh:
        fh.write(_PLOT_SCRIPT.format(xlabel=xlabel, ylabel=ylabel, title=f"{config.scenario} ({config.mobility})"))
    return paths

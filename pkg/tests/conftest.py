import functools
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from icmn.meeting import NetworkParams, generate_schedule  # noqa: E402
from icmn.mobility import SpeedModel, extract_meetings, generate_rd, generate_rwp  # noqa: E402

BASE = NetworkParams(n=20, beta=6.96e-4)
HORIZON = 1.0e7

_acceptance = pytest.StashKey[dict]()


@functools.lru_cache(maxsize=None)
def poisson_schedule(seed, horizon=HORIZON):
    return generate_schedule(BASE, horizon, seed)


@functools.lru_cache(maxsize=None)
def mobility_trace(model, seed, horizon=HORIZON):
    speed = SpeedModel.constant(40.0)
    if model == "rwp":
        return generate_rwp(20, 2000.0, speed, horizon, seed)
    return generate_rd(20, 2000.0, speed, horizon, seed)


@functools.lru_cache(maxsize=None)
def mobility_schedule(model, d, seed, horizon=HORIZON):
    return extract_meetings(mobility_trace(model, seed, horizon), d, seed=seed)


@pytest.fixture(scope="session")
def base_schedule():
    return poisson_schedule(1)


def pytest_configure(config):
    config.stash[_acceptance] = {}


@pytest.fixture
def record(request):
    """Record one acceptance check; prints a PASS/FAIL line and returns ``ok``."""
    store = request.config.stash[_acceptance]

    def rec(criterion, label, ok, detail=""):
        ok = bool(ok)
        store.setdefault(criterion, []).append((label, ok, detail))
        print(f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {label}  {detail}")
        return ok

    return rec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_acceptance, {})
    if not store:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(store):
        checks = store[criterion]
        failed = [label for label, ok, _ in checks if not ok]
        status = "PASS" if not failed else "FAIL"
        note = f"  ({len(checks) - len(failed)}/{len(checks)} checks; failed: {', '.join(failed)})" if failed else f"  ({len(checks)} checks)"
        tr.write_line(f"{status}  criterion {criterion}{note}")
        for label, ok, detail in checks:
            tr.write_line(f"      {'ok  ' if ok else 'FAIL'}  {label}  {detail}")

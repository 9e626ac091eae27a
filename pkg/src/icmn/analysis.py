"""Closed-form capacity, delay and delay/throughput results."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InstabilityError, ParameterError
from .mobility import C1, beta_rd, beta_rwp

LOG2_GAP = 1.0 - math.log(2.0)


def _check_n_beta(n, beta, n_min):
    if int(n) != n or n < n_min:
        raise ParameterError(f"n must be an integer >= {n_min} (got {n})")
    if not beta > 0:
        raise ParameterError(f"beta must be positive (got {beta})")


def capacity(n: int, beta: float) -> float:
    """Throughput capacity n * beta / 4 (packets/s per flow)."""
    _check_n_beta(n, beta, 3)
    return n * beta / 4


def source_service_rates(n: int, beta: float) -> tuple[float, float]:
    """Rates at which a source is served directly and via a relay.

    They sum to :func:`capacity`.
    """
    _check_n_beta(n, beta, 3)
    return beta / 2, (n - 2) * beta / 4


def relay_service_rate(beta: float) -> float:
    if not beta > 0:
        raise ParameterError(f"beta must be positive (got {beta})")
    return beta / 4


def mm1_expected_delay(lam: float, mu: float) -> float:
    """Mean sojourn time 1 / (mu - lam) of a stable M/M/1 queue."""
    if not lam > 0 or not mu > 0:
        raise ParameterError(f"rates must be positive (got lam={lam}, mu={mu})")
    if lam >= mu:
        raise InstabilityError(f"arrival rate {lam} >= service rate {mu}")
    return 1.0 / (mu - lam)


def delay_stages(n: int, beta: float, lam: float) -> tuple[float, float]:
    """(source-queue delay, relay-queue delay) of the two-stage tandem."""
    mu = capacity(n, beta)
    if not lam > 0:
        raise ParameterError(f"lam must be positive (got {lam})")
    if lam >= mu:
        raise InstabilityError(f"lam = {lam} is not below capacity {mu}")
    return mm1_expected_delay(lam, mu), mm1_expected_delay(lam / n, relay_service_rate(beta))


def expected_delay(n: int, beta: float, lam: float) -> float:
    """Mean end-to-end delay (n - 1) / (mu - lam) under two-hop relay routing."""
    mu = capacity(n, beta)
    if not lam > 0:
        raise ParameterError(f"lam must be positive (got {lam})")
    if lam >= mu:
        raise InstabilityError(f"lam = {lam} is not below capacity {mu}; delay is unbounded")
    return (n - 1) / (mu - lam)


def tradeoff_bound(n: int, beta: float) -> float:
    """Lower bound on E[D] / lam valid for any stabilising routing scheme."""
    _check_n_beta(n, beta, 2)
    return LOG2_GAP / (2 * (n - 1) * beta**2)


@dataclass(frozen=True)
class AnalyticalResult:
    n: int
    beta: float
    mu: float
    tradeoff_bound: float
    lam: float | None = None
    expected_delay: float | None = None

    @property
    def rho(self) -> float | None:
        return None if self.lam is None else self.lam / self.mu


def analyze(n: int, beta: float, lam: float | None = None) -> AnalyticalResult:
    mu = capacity(n, beta)
    delay = None
    if lam is not None:
        if not lam > 0:
            raise ParameterError(f"lam must be positive (got {lam})")
        if lam < mu:
            delay = expected_delay(n, beta, lam)
    return AnalyticalResult(
        n=n, beta=beta, mu=mu, tradeoff_bound=tradeoff_bound(n, beta), lam=lam, expected_delay=delay
    )


def meeting_rate(mobility: str, L: float, d: float, ev: float) -> float:
    if mobility == "rwp":
        return beta_rwp(L, d, ev)
    if mobility == "rd":
        return beta_rd(L, d, ev)
    raise ParameterError(f"mobility must be 'rwp' or 'rd' (got {mobility!r})")


def case_study(mobility: str, L: float, d: float, ev: float, n: int, lam: float | None = None) -> AnalyticalResult:
    """Capacity, delay and bound with beta taken from the mobility approximation.

    For constant node speed v pass ``ev = 4 * v / pi``.
    """
    return analyze(n, meeting_rate(mobility, L, d, ev), lam)


def constant_speed_shortcuts(mobility: str, n: int, L: float, d: float, v: float) -> dict:
    """Constant-speed closed forms as they are usually quoted, for display.

    The random-direction shortcuts drop the 1/pi of E[V*] = 4v/pi, so they
    disagree with :func:`case_study` (capacity by pi, bound by pi^2).  Use
    :func:`case_study` for numbers.
    """
    if mobility == "rwp":
        return {
            "beta": 8 * C1 * d * v / (math.pi * L**2),
            "mu": 2 * C1 * n * d * v / (math.pi * L**2),
            "bound": LOG2_GAP * math.pi**2 * L**4 / (128 * (n - 1) * (C1 * d * v) ** 2),
        }
    if mobility == "rd":
        return {
            "beta": 8 * d * v / L**2,
            "mu": 2 * n * d * v / L**2,
            "bound": LOG2_GAP * L**4 / (128 * (n - 1) * (d * v) ** 2),
        }
    raise ParameterError(f"mobility must be 'rwp' or 'rd' (got {mobility!r})")

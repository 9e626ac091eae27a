"""Standalone M/M/1 FIFO queue simulation, used to check the queueing formulas."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class MM1Run:
    arrivals: np.ndarray
    departures: np.ndarray

    @property
    def sojourn(self) -> np.ndarray:
        return self.departures - self.arrivals

    def mean_sojourn(self, skip: float = 0.1) -> float:
        k = int(skip * len(self.arrivals))
        return float(self.sojourn[k:].mean())

    def inter_departures(self, skip: float = 0.1) -> np.ndarray:
        k = int(skip * len(self.departures))
        return np.diff(self.departures[k:])


def simulate_mm1(lam: float, mu: float, n_arrivals: int, seed: int) -> MM1Run:
    """Simulate ``n_arrivals`` customers through a FIFO M/M/1 queue.

    Uses the closed form of the Lindley recursion,
    ``D_k = S_1..k + max_{j<=k}(A_j - S_1..j-1)``, so no event loop is needed.
    """
    if not lam > 0 or not mu > 0:
        raise ParameterError("rates must be positive")
    if n_arrivals < 1:
        raise ParameterError("need at least one arrival")
    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / lam, n_arrivals))
    work = np.cumsum(rng.exponential(1.0 / mu, n_arrivals))
    before = np.concatenate([[0.0], work[:-1]])
    departures = work + np.maximum.accumulate(arrivals - before)
    return MM1Run(arrivals=arrivals, departures=departures)

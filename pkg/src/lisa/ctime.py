"""Continuous-time embedding: every particle gives birth at unit rate.

With n particles alive the next birth comes after an Exp(n) holding time and
its parent is uniform among the n (lack of memory), so the discrete engine is
reused with one extra exponential draw per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import DisplacementLaw, constants
from .engine import ModelSpec, Simulation, Trace

POPULATION_CAP = 10_000_000
MIN_REPLICAS = 100


class PopulationCapError(RuntimeError):
    pass


class InsufficientReplicasError(ValueError):
    pass


@dataclass
class TimedTrace:
    birth_times: np.ndarray
    discrete: Trace
    horizon: float

    @property
    def count(self) -> int:
        return len(self.birth_times)

    def count_at(self, t) -> np.ndarray:
        return np.searchsorted(self.birth_times, np.asarray(t, dtype=float), side="right")

    def dstar_at(self, times) -> np.ndarray:
        """Maximal spacing of the configuration alive at each time."""
        ds = self.discrete.records.dstar
        if ds is None:
            raise ValueError("trace was run without the 'dstar' recorder")
        n0 = self.discrete.model.n0
        d0 = self.discrete.summary.get("dstar0")
        k = self.count_at(times) - n0  # steps completed by each time
        path = np.concatenate([[d0], ds])
        return path[k]


def yule_run(model: ModelSpec, T: float, seed: int = 0, replica: int = 0,
             recorders=("dstar",), cap: int = POPULATION_CAP) -> TimedTrace:
    if not T >= 0:
        raise ValueError("horizon must be non-negative")
    sim = Simulation(model, seed, replica, recorders, timed=True)
    d0 = sim.max_spacing() if len(sim.config) >= 2 else np.inf
    if T > 0 and not sim.advance_until(T, cap):
        raise PopulationCapError(f"population exceeded {cap} before time {T}")
    tr = sim.trace()
    tr.summary["dstar0"] = d0
    return TimedTrace(sim.config.births.copy(), tr, float(T))


def spacing_decay_fit(traces, law: DisplacementLaw, times) -> float:
    """Least-squares slope of log(mean d*_t) against t.

    The expected bound decays like exp(-(1 - C_hat - C) t); callers compare
    the slope with that rate.
    """
    traces = list(traces)
    if len(traces) < MIN_REPLICAS:
        raise InsufficientReplicasError(f"need at least {MIN_REPLICAS} replicas, got {len(traces)}")
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        raise ValueError("need at least two times for a slope")
    c = constants(law)
    if c.C + c.C_hat >= 1:
        raise ValueError("decay rate needs C + C_hat < 1")
    mean = np.mean([tr.dstar_at(times) for tr in traces], axis=0)
    return float(np.polyfit(times, np.log(mean), 1)[0])


def decay_rate_bound(law: DisplacementLaw) -> float:
    c = constants(law)
    return -(1.0 - c.C_hat - c.C)


def dstar_increases(tt: TimedTrace) -> int:
    """Number of steps at which the maximal spacing went up."""
    ds = tt.discrete.records.dstar
    path = np.concatenate([[tt.discrete.summary["dstar0"]], ds])
    return int(np.sum(np.diff(path) > 0))

"""Exact event-driven simulation of an M/G/inf queue started empty.

Customers are the points ``(arrival, service)`` of a Poisson process on
the quarter plane with intensity ``lam dt x dF_S(u)``; a customer is in the
system during ``[arrival, arrival + service)``.  Arrivals are produced in
fixed-size chunks from one random stream and services from another, both
spawned from the seed, so a longer horizon extends a path instead of
redrawing it.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .laws import ServiceLaw

CHUNK = 4096
DEFAULT_MAX_EVENTS = 20_000_000


class SimulationOverflow(RuntimeError):
    """Too many events for an in-memory trajectory."""


@dataclass(frozen=True)
class QueueConfig:
    lam: float
    law: ServiceLaw
    horizon: float
    seed: int = 0
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("arrival rate must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def with_seed(self, seed: int) -> "QueueConfig":
        return QueueConfig(self.lam, self.law, self.horizon, seed, self.max_events)

    def with_horizon(self, horizon: float) -> "QueueConfig":
        return QueueConfig(self.lam, self.law, horizon, self.seed, self.max_events)


@dataclass
class Trajectory:
    """Jump times and post-jump values of ``Y``; ``Y = 0`` before the first jump.

    ``initial`` is the number of customers present at time 0 (zero for the
    queue as defined; nonzero only for coupling experiments).
    """

    times: np.ndarray
    values: np.ndarray
    horizon: float
    initial: int = 0

    @property
    def n_events(self) -> int:
        return len(self.times)

    def value_at(self, t):
        """``Y_t`` (right-continuous) for scalar or array ``t``."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        vals = np.where(idx >= 0, self.values[np.maximum(idx, 0)] if self.n_events else 0,
                        self.initial)
        return int(vals) if np.ndim(t) == 0 else vals

    def pieces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constant pieces ``[start, end)`` with their values, covering ``[0, T]``."""
        starts = np.concatenate(([0.0], self.times))
        ends = np.concatenate((self.times, [self.horizon]))
        vals = np.concatenate(([self.initial], self.values))
        return starts, ends, vals

    def check(self) -> None:
        """Raise if the path is not a legal +-1 path in [0, T]."""
        if self.n_events == 0:
            return
        if np.any(np.diff(self.times) < 0):
            raise ValueError("event times are not ordered")
        if self.times[0] < 0 or self.times[-1] > self.horizon:
            raise ValueError("event outside [0, horizon]")
        steps = np.diff(np.concatenate(([self.initial], self.values)))
        if not np.all(np.abs(steps) == 1):
            raise ValueError("path has a step other than +-1")
        if np.any(self.values < 0):
            raise ValueError("negative queue length")

    def to_csv(self) -> str:
        """CSV ``t,y``: the initial state at 0 followed by one row per event."""
        buf = io.StringIO()
        buf.write("t,y\n")
        buf.write(f"{0.0!r},{self.initial}\n")
        for t, y in zip(self.times.tolist(), self.values.tolist()):
            buf.write(f"{t!r},{y}\n")
        return buf.getvalue()


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    arrivals, services = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(arrivals)), np.random.Generator(np.random.PCG64(services))


def sample_customers(config: QueueConfig) -> tuple[np.ndarray, np.ndarray]:
    """Arrival times in ``[0, T]`` and their service durations."""
    rng_a, rng_s = _streams(config.seed)
    lam, horizon = config.lam, config.horizon
    arrivals: list[np.ndarray] = []
    services: list[np.ndarray] = []
    last = 0.0
    count = 0
    while True:
        gaps = -np.log1p(-rng_a.random(CHUNK)) / lam
        times = last + np.cumsum(gaps)
        serv = config.law.sample(rng_s.random(CHUNK))
        keep = int(np.searchsorted(times, horizon, side="right"))
        arrivals.append(times[:keep])
        services.append(serv[:keep])
        count += keep
        if 2 * count > config.max_events:
            raise SimulationOverflow(
                f"more than {config.max_events} events up to horizon {horizon}; "
                "shorten the horizon or raise max_events")
        if keep < CHUNK:
            break
        last = float(times[-1])
    return np.concatenate(arrivals), np.concatenate(services)


def simulate(config: QueueConfig, initial_remaining: Sequence[float] = ()) -> Trajectory:
    """Simulate ``Y`` on ``[0, T]``.

    Events are merged in time order; on exact ties arrivals come first,
    which keeps every step +-1 and the path nonnegative.
    ``initial_remaining`` adds customers present at time 0 with the given
    remaining service times; they do not touch the random streams.
    """
    arr, serv = sample_customers(config)
    deps = arr + serv
    extra = np.asarray(initial_remaining, dtype=float)
    deps = np.concatenate((deps, extra))
    deps = deps[deps <= config.horizon]
    times = np.concatenate((arr, deps))
    kind = np.concatenate((np.zeros(len(arr), np.int8), np.ones(len(deps), np.int8)))
    order = np.lexsort((kind, times))
    steps = np.where(kind[order] == 0, 1, -1).astype(np.int64)
    values = len(extra) + np.cumsum(steps)
    return Trajectory(times[order], values, float(config.horizon), len(extra))


@dataclass
class OccupationRecord:
    """Time spent in each state on ``[0, T]``; states above ``k_max`` pool into ``overflow``."""

    per_state: np.ndarray
    overflow: float
    horizon: float
    late_min: int
    final_value: int

    @property
    def k_max(self) -> int:
        return len(self.per_state) - 1

    def total(self) -> float:
        return math.fsum(self.per_state.tolist()) + self.overflow

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,time\n")
        for k, v in enumerate(self.per_state.tolist()):
            buf.write(f"{k},{v!r}\n")
        buf.write(f">{self.k_max},{self.overflow!r}\n")
        return buf.getvalue()


def occupation(traj: Trajectory, k_max: int) -> OccupationRecord:
    """Occupation times ``|{t <= T : Y_t = k}|`` and the late-window minimum.

    ``late_min`` is the minimum of ``Y`` over ``[T/2, T]``.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    starts, ends, vals = traj.pieces()
    dur = ends - starts
    if np.any(dur < 0):
        raise ValueError("malformed trajectory")
    clipped = np.minimum(vals, k_max + 1)
    buckets = np.bincount(clipped, weights=dur, minlength=k_max + 2)
    half = 0.5 * traj.horizon
    # Pieces meeting [T/2, T]; one ending exactly at T/2 is excluded because
    # Y is right-continuous.
    late_min = int(vals[ends > half].min())
    return OccupationRecord(buckets[:k_max + 1].copy(), float(buckets[k_max + 1]),
                            traj.horizon, late_min, int(vals[-1]))

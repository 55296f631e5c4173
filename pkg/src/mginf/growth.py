"""Lower-growth checks: Poisson lower-tail (Chernoff) bound and the set H_q.

``H_q`` is the set of times where ``Y_t < q * lam * m(t)``.  Since ``Y_t`` is
Poisson with mean ``lam * m(t)``, the Chernoff bound gives

    E|H_q ^ [0, T]| <= int_0^T exp(-gamma_q * lam * m(t)) dt,

with ``gamma_q = 1 - q - q ln(1/q)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .laws import ServiceLaw
from .quadrature import DEFAULT_REL_TOL, IntegralEstimate, integrate_finite, integrate_semi_infinite
from .simulator import QueueConfig, Trajectory


def gamma_q(q: float) -> float:
    """Chernoff exponent ``1 - q - q ln(1/q)`` for ``q`` in ``(0, 1)``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    return 1.0 - q + q * math.log(q)


def chernoff_poisson_bound(mu: float, q: float) -> float:
    """Upper bound ``exp(-gamma_q mu)`` on ``P[Poisson(mu) <= q mu]``."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    return math.exp(-gamma_q(q) * mu)


def poisson_cdf(k: int, mu: float) -> float:
    """``P[Poisson(mu) <= k]`` by direct summation of the probabilities."""
    if k < 0:
        return 0.0
    if mu == 0:
        return 1.0
    log_terms = [j * math.log(mu) - mu - math.lgamma(j + 1) for j in range(int(k) + 1)]
    return min(1.0, math.fsum(math.exp(x) for x in log_terms))


def growth_bound_integral(law: ServiceLaw, lam: float, q: float, horizon: float,
                          rel_tol: float = DEFAULT_REL_TOL) -> IntegralEstimate:
    """``int_0^T exp(-gamma_q lam m(t)) dt``."""
    g = gamma_q(q)
    return integrate_finite(lambda t: np.exp(-g * lam * law.m(t)), 0.0, horizon, rel_tol,
                            breakpoints=law.kinks)


def growth_condition(law: ServiceLaw, lam: float, q: float,
                     rel_tol: float = DEFAULT_REL_TOL) -> IntegralEstimate:
    """``int_0^inf exp(-gamma_q lam m(t)) dt``; finite means ``H_q`` is a.s. bounded."""
    g = gamma_q(q)
    return integrate_semi_infinite(lambda t: np.exp(-g * lam * law.m(t)), 0.0, rel_tol,
                                   decay_hint="polynomial")


@dataclass
class GrowthReport:
    q: float
    t_min: float
    h_q_measure: float
    bound_value: float
    first_violation_after: Optional[float]
    last_violation: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "t_min": self.t_min,
            "h_q_measure": self.h_q_measure,
            "bound_value": self.bound_value,
            "first_violation_after": self.first_violation_after,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def threshold_crossings(law: ServiceLaw, level: np.ndarray, horizon: float,
                        tol: Optional[float] = None) -> np.ndarray:
    """``inf{t : m(t) > level}`` for each level, ``inf`` if not reached by ``horizon``.

    Vectorised bisection on the nondecreasing ``m``; accurate to ``tol``
    (default ``1e-10 * horizon``) in time.
    """
    level = np.asarray(level, dtype=float)
    tol = 1e-10 * horizon if tol is None else tol
    out = np.full(level.shape, np.inf)
    reach = np.asarray(law.m(np.full(level.shape, horizon)), dtype=float) > level
    if not reach.any():
        return out
    lv = level[reach]
    lo = np.zeros_like(lv)
    hi = np.full_like(lv, horizon)
    # m(0) = 0, so level < 0 is crossed at 0.
    done = lv < 0
    while True:
        active = (hi - lo > tol) & ~done
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        above = np.asarray(law.m(mid), dtype=float) > lv
        hi = np.where(active & above, mid, hi)
        lo = np.where(active & ~above, mid, lo)
    res = np.where(done, 0.0, hi)
    # Level 0 is crossed immediately when P[S > 0] > 0.
    zero = (lv == 0) & (float(np.asarray(law.tail(np.array([0.0])))[0]) > 0)
    res = np.where(zero, 0.0, res)
    out[reach] = res
    return out


def growth_check(traj: Trajectory, config: QueueConfig, q: float, t_min: Optional[float] = None,
                 bound_value: Optional[float] = None) -> GrowthReport:
    """Measure of ``{t in [t_min, T] : Y_t < q lam m(t)}`` for one path.

    On a piece where ``Y = c`` the threshold is exceeded exactly after the
    crossing time of ``m`` through ``c / (q lam)``.  ``t_min`` defaults to
    ``T / 10``.  ``bound_value`` may be passed in to skip recomputing the
    quadrature when checking many paths of one configuration.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    horizon = traj.horizon
    t_min = 0.1 * horizon if t_min is None else float(t_min)
    if t_min < 0:
        raise ValueError("t_min must be >= 0")
    if bound_value is None:
        bound_value = growth_bound_integral(config.law, config.lam, q, horizon).value

    starts, ends, vals = traj.pieces()
    levels, inverse = np.unique(vals, return_inverse=True)
    cross = threshold_crossings(config.law, levels / (q * config.lam), horizon)[inverse]
    lo = np.maximum(np.maximum(starts, t_min), cross)
    hi = np.minimum(ends, horizon)
    length = np.where(hi > lo, hi - lo, 0.0)
    hit = length > 0
    measure = math.fsum(length[hit].tolist())
    first = float(lo[hit][0]) if hit.any() else None
    last = float(hi[hit][-1]) if hit.any() else None
    return GrowthReport(q, t_min, measure, float(bound_value), first, last)

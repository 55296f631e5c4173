"""Monte Carlo replication and comparison against quadrature.

Replica ``i`` of an experiment uses seed ``seed + i``.  Per-replica results
are folded into :class:`Accumulator` objects holding plain sums, so batches
can be merged in any order.
"""
from __future__ import annotations

import io
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .classifier import ClassificationResult, occupation_integrand
from .growth import GrowthReport, growth_bound_integral, growth_check
from .laws import ServiceLaw
from .quadrature import DEFAULT_REL_TOL, integrate_finite
from .simulator import QueueConfig, SimulationOverflow, occupation, simulate


def theory_occupation(law: ServiceLaw, lam: float, horizon: float, k: int,
                      rel_tol: float = DEFAULT_REL_TOL) -> float:
    """``E|{t <= T : Y_t = k}| = lam**k / k! * int_0^T m^k exp(-lam m) dt``."""
    est = integrate_finite(occupation_integrand(law, lam, k), 0.0, horizon, rel_tol,
                           breakpoints=law.kinks)
    return math.exp(k * math.log(lam) - math.lgamma(k + 1)) * est.value


@dataclass
class Accumulator:
    """Sums over replicas of per-state occupation times and late minima."""

    k_max: int
    n: int = 0
    failed: int = 0
    sums: np.ndarray = None
    sumsq: np.ndarray = None
    late_min: Counter = field(default_factory=Counter)

    def __post_init__(self):
        if self.sums is None:
            self.sums = np.zeros(self.k_max + 1)
        if self.sumsq is None:
            self.sumsq = np.zeros(self.k_max + 1)

    def add(self, per_state: np.ndarray, late_min: int) -> None:
        self.n += 1
        self.sums += per_state
        self.sumsq += per_state ** 2
        self.late_min[int(late_min)] += 1

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.k_max != self.k_max:
            raise ValueError("cannot merge accumulators with different k_max")
        return Accumulator(self.k_max, self.n + other.n, self.failed + other.failed,
                           self.sums + other.sums, self.sumsq + other.sumsq,
                           self.late_min + other.late_min)


@dataclass
class MonteCarloSummary:
    n_replicas: int
    failed: int
    horizon: float
    lam: float
    law: str
    per_state_mean_occ: dict[int, tuple[float, float]]
    late_min_histogram: dict[int, int]
    theory_occ: dict[int, float]
    z_scores: dict[int, float]

    def fraction_late_min_at_most(self, j: int) -> float:
        hits = sum(c for v, c in self.late_min_histogram.items() if v <= j)
        return hits / self.n_replicas

    def late_min_quantile(self, p: float) -> int:
        """Smallest value ``v`` with at least a fraction ``p`` of replicas at or below ``v``."""
        need = p * self.n_replicas
        run = 0
        for v in sorted(self.late_min_histogram):
            run += self.late_min_histogram[v]
            if run >= need:
                return v
        return max(self.late_min_histogram)

    def late_min_mode(self) -> int:
        return max(sorted(self.late_min_histogram), key=lambda v: self.late_min_histogram[v])

    def to_dict(self) -> dict:
        return {
            "law": self.law,
            "lambda": self.lam,
            "horizon": self.horizon,
            "n_replicas": self.n_replicas,
            "failed_replicas": self.failed,
            "states": [
                {"k": k, "mc_mean": m, "mc_stderr": s, "theory": self.theory_occ[k],
                 "z": self.z_scores[k]}
                for k, (m, s) in sorted(self.per_state_mean_occ.items())
            ],
            "late_min_histogram": {str(k): v for k, v in sorted(self.late_min_histogram.items())},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,mc_mean,mc_stderr,theory,z\n")
        for k, (m, s) in sorted(self.per_state_mean_occ.items()):
            buf.write(f"{k},{m!r},{s!r},{self.theory_occ[k]!r},{self.z_scores[k]!r}\n")
        return buf.getvalue()


def summarize(acc: Accumulator, config: QueueConfig,
              rel_tol: float = DEFAULT_REL_TOL) -> MonteCarloSummary:
    n = acc.n
    if n < 2:
        raise ValueError("need at least two successful replicas")
    mean = acc.sums / n
    var = np.maximum(acc.sumsq - n * mean ** 2, 0.0) / (n - 1)
    se = np.sqrt(var / n)
    per_state, theory, z = {}, {}, {}
    for k in range(acc.k_max + 1):
        per_state[k] = (float(mean[k]), float(se[k]))
        theory[k] = theory_occupation(config.law, config.lam, config.horizon, k, rel_tol)
        diff = mean[k] - theory[k]
        z[k] = float(diff / se[k]) if se[k] > 0 else (0.0 if abs(diff) <= 1e-9 * config.horizon else math.inf)
    return MonteCarloSummary(n, acc.failed, config.horizon, config.lam, config.law.name, per_state,
                             dict(sorted(acc.late_min.items())), theory, z)


def _replica(config: QueueConfig, k_max: int):
    try:
        rec = occupation(simulate(config), k_max)
    except SimulationOverflow:
        return None
    return rec.per_state, rec.late_min


def accumulate(config: QueueConfig, seeds: Iterable[int], k_max: int,
               workers: int = 1) -> Accumulator:
    """Fold replicas with the given seeds; replicas that overflow count as failed."""
    acc = Accumulator(k_max)
    seeds = list(seeds)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda s: _replica(config.with_seed(s), k_max), seeds))
    else:
        results = [_replica(config.with_seed(s), k_max) for s in seeds]
    # Fold in seed order so the sums do not depend on the worker count.
    for res in results:
        if res is None:
            acc.failed += 1
        else:
            acc.add(*res)
    return acc


def run_experiment(config: QueueConfig, n_replicas: int, k_max: int, workers: int = 1,
                   rel_tol: float = DEFAULT_REL_TOL) -> MonteCarloSummary:
    """Occupation statistics over seeds ``config.seed + i`` with quadrature theory."""
    if n_replicas < 2:
        raise ValueError("n_replicas must be >= 2")
    seeds = range(config.seed, config.seed + n_replicas)
    return summarize(accumulate(config, seeds, k_max, workers), config, rel_tol)


# --- liminf ----------------------------------------------------------------

@dataclass
class LiminfReport:
    horizons: list[float]
    modes: list[int]
    lower_deciles: list[int]
    below_k0_fraction: list[Optional[float]]
    stabilized: Optional[int]
    k0: float
    status: str  # "agree", "consistent", "disagree", "horizon too small"
    notes: list[str]

    def to_dict(self) -> dict:
        return {
            "horizons": self.horizons,
            "modes": self.modes,
            "lower_deciles": self.lower_deciles,
            "fraction_below_k0": self.below_k0_fraction,
            "stabilized_lower_value": self.stabilized,
            "k0": "inf" if math.isinf(self.k0) else int(self.k0),
            "status": self.status,
            "notes": self.notes,
        }


def liminf_estimate(summaries: Sequence[MonteCarloSummary], classification: ClassificationResult,
                    min_fraction: float = 0.8) -> LiminfReport:
    """Compare the late-window minima across horizons with the classifier's ``k0``.

    Per horizon the mode and the lower decile of ``late_min`` are reported.
    The lower value is "stabilized" when the lower deciles at the two largest
    horizons coincide.

    * ``k0 = inf``: agreement means lower deciles that keep rising.
    * ``k0 = 0``: agreement means a stabilized lower value of 0.
    * ``0 < k0 < inf``: the states below ``k0`` are visited finitely often,
      but the approach of the liminf from above is far too slow to observe.
      The report is "consistent" when the fraction of replicas with
      ``late_min < k0`` decreases strictly with the horizon and at least
      ``min_fraction`` of replicas sit at or above ``k0`` at the top horizon.
    """
    if len(summaries) < 3:
        raise ValueError("need at least three horizons")
    summaries = sorted(summaries, key=lambda s: s.horizon)
    horizons = [s.horizon for s in summaries]
    ratios = np.diff(np.log(horizons))
    notes: list[str] = []
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        notes.append("horizons are not geometrically spaced")
    modes = [s.late_min_mode() for s in summaries]
    deciles = [s.late_min_quantile(0.1) for s in summaries]
    k0 = classification.k0
    stabilized = deciles[-1] if deciles[-1] == deciles[-2] else None
    if math.isinf(k0) or k0 == 0:
        below = [None] * len(summaries)
    else:
        below = [s.fraction_late_min_at_most(int(k0) - 1) for s in summaries]

    mode_drop = any(b < a for a, b in zip(modes, modes[1:]))
    if math.isinf(k0):
        rising = all(b >= a for a, b in zip(deciles, deciles[1:])) and deciles[-1] > deciles[0]
        status = "agree" if rising and not mode_drop else "disagree"
        if status == "agree":
            notes.append("lower decile rises with the horizon: consistent with k0 = inf")
    elif k0 == 0:
        status = "agree" if stabilized == 0 else "disagree"
    else:
        decreasing = all(b < a for a, b in zip(below, below[1:]))
        top_ok = 1.0 - below[-1] >= min_fraction
        if stabilized == k0:
            status = "agree"
        elif decreasing and top_ok:
            status = "consistent"
        else:
            status = "disagree"
    if mode_drop and status != "agree":
        status = "horizon too small"
        notes.append("mode of late_min decreases with the horizon")
    return LiminfReport(horizons, modes, deciles, below, stabilized, k0, status, notes)


# --- growth ----------------------------------------------------------------

@dataclass
class GrowthSummary:
    q: float
    t_min: float
    horizon: float
    n_replicas: int
    failed: int
    mean_h_q: float
    stderr_h_q: float
    bound_value: float
    reports: list[GrowthReport]

    @property
    def bound_respected(self) -> bool:
        """One-sided check: mean measure within three standard errors below the bound."""
        return self.mean_h_q <= self.bound_value + 3 * self.stderr_h_q

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "t_min": self.t_min,
            "horizon": self.horizon,
            "n_replicas": self.n_replicas,
            "failed_replicas": self.failed,
            "mean_h_q_measure": self.mean_h_q,
            "stderr_h_q_measure": self.stderr_h_q,
            "bound_value": self.bound_value,
            "bound_respected": self.bound_respected,
            "replicas": [r.to_dict() for r in self.reports],
        }


def run_growth(config: QueueConfig, n_replicas: int, q: float, t_min: Optional[float] = None,
               workers: int = 1, rel_tol: float = DEFAULT_REL_TOL) -> GrowthSummary:
    if n_replicas < 2:
        raise ValueError("n_replicas must be >= 2")
    t_min = 0.1 * config.horizon if t_min is None else t_min
    bound = growth_bound_integral(config.law, config.lam, q, config.horizon, rel_tol).value

    def one(seed: int) -> Optional[GrowthReport]:
        cfg = config.with_seed(seed)
        try:
            return growth_check(simulate(cfg), cfg, q, t_min, bound)
        except SimulationOverflow:
            return None

    seeds = range(config.seed, config.seed + n_replicas)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    reports = [r for r in results if r is not None]
    if len(reports) < 2:
        raise ValueError("need at least two successful replicas")
    h = np.array([r.h_q_measure for r in reports])
    return GrowthSummary(q, t_min, config.horizon, len(reports), n_replicas - len(reports),
                         float(h.mean()), float(h.std(ddof=1) / math.sqrt(len(h))), bound, reports)


# --- Poisson marginal --------------------------------------------------------

@dataclass
class MarginalCheck:
    t: float
    mu: float
    mean: float
    var: float
    z_mean: float
    z_var: float
    chi2_pvalue: float

    def passed(self, z_max: float = 4.0, p_min: float = 1e-3) -> bool:
        return abs(self.z_mean) <= z_max and abs(self.z_var) <= z_max and self.chi2_pvalue > p_min


def marginal_samples(config: QueueConfig, times: Sequence[float], n_replicas: int) -> np.ndarray:
    """``Y_t`` at each of ``times`` for seeds ``seed .. seed + n - 1``; shape (n, len(times))."""
    cfg = config.with_horizon(max(times))
    out = np.empty((n_replicas, len(times)), dtype=np.int64)
    for i in range(n_replicas):
        out[i] = simulate(cfg.with_seed(config.seed + i)).value_at(np.asarray(times, dtype=float))
    return out


def poisson_marginal_check(samples: np.ndarray, mu: float, t: float) -> MarginalCheck:
    """Mean, variance and chi-square agreement of ``samples`` with Poisson(``mu``).

    Standard errors use the Poisson moments: ``Var(mean) = mu / n`` and
    ``Var(s^2) ~ (mu + 2 mu^2) / n``.  Chi-square cells are pooled so every
    expected count is at least 5.
    """
    samples = np.asarray(samples)
    n = len(samples)
    mean = float(samples.mean())
    var = float(samples.var(ddof=1))
    z_mean = (mean - mu) / math.sqrt(mu / n)
    z_var = (var - mu) / math.sqrt((mu + 2 * mu * mu) / n)

    top = int(samples.max())
    probs = stats.poisson.pmf(np.arange(top + 1), mu)
    counts = np.bincount(samples, minlength=top + 1).astype(float)
    # Pool into cells with expected count >= 5, the last cell taking the upper tail.
    cells_o, cells_e = [], []
    acc_o = acc_e = 0.0
    for c, p in zip(counts, probs):
        acc_o += c
        acc_e += n * p
        if acc_e >= 5:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
            acc_o = acc_e = 0.0
    tail_e = n * stats.poisson.sf(top, mu)
    acc_e += tail_e
    if cells_e:
        cells_o[-1] += acc_o
        cells_e[-1] += acc_e
    else:
        cells_o, cells_e = [acc_o], [acc_e]
    if len(cells_e) < 2:
        pvalue = 1.0
    else:
        pvalue = float(stats.chisquare(cells_o, cells_e).pvalue)
    return MarginalCheck(t, mu, mean, var, z_mean, z_var, pvalue)


def write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Figures written next to the CSV/JSON outputs (PNG, non-interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Strip the timestamp/version metadata so reruns give identical files.
_PNG_META = {"Software": None}


def _axes(xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_trajectory(traj, law, lam: float, path, q: float | None = None) -> None:
    """Step plot of ``Y_t`` against its Poisson mean ``lam m(t)``."""
    starts, ends, vals = traj.pieces()
    fig, ax = _axes("t", "customers in system")
    ax.step(np.append(starts, traj.horizon), np.append(vals, vals[-1]), where="post",
            lw=0.8, color="0.2", label="$Y_t$")
    grid = np.linspace(0.0, traj.horizon, 400)
    mean = lam * np.asarray(law.m(grid))
    ax.plot(grid, mean, color="tab:blue", label=r"$\lambda\,E(S\wedge t)$")
    if q is not None:
        ax.plot(grid, q * mean, color="tab:red", ls="--", label=fr"$q={q}$ threshold")
    ax.set_title(law.name)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_occupancy(summary, path) -> None:
    """Monte Carlo occupation means with 2-sigma bars against quadrature values."""
    ks = sorted(summary.per_state_mean_occ)
    mc = np.array([summary.per_state_mean_occ[k][0] for k in ks])
    se = np.array([summary.per_state_mean_occ[k][1] for k in ks])
    th = np.array([summary.theory_occ[k] for k in ks])
    fig, ax = _axes("state k", "time in state k")
    ax.bar(ks, th, color="0.85", label="quadrature")
    ax.errorbar(ks, mc, yerr=2 * se, fmt="o", color="tab:blue", ms=4, label="Monte Carlo ±2 s.e.")
    ax.set_title(f"{summary.law}, T={summary.horizon:g}, n={summary.n_replicas}")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_growth(growth_summary, path) -> None:
    """Histogram of per-replica ``|H_q|`` with the mean and the Chernoff bound."""
    h = np.array([r.h_q_measure for r in growth_summary.reports])
    fig, ax = _axes(r"$|H_q \cap [t_{min}, T]|$", "replicas")
    ax.hist(h, bins=40, color="0.7")
    ax.axvline(growth_summary.mean_h_q, color="tab:blue", label="mean")
    ax.axvline(growth_summary.bound_value, color="tab:red", ls="--", label="bound")
    ax.set_title(f"q={growth_summary.q}, T={growth_summary.horizon:g}")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_liminf(summaries, path) -> None:
    """Distribution of the late-window minimum for each horizon."""
    fig, ax = _axes("min of Y over [T/2, T]", "fraction of replicas")
    width = 0.8 / max(1, len(summaries))
    for i, s in enumerate(sorted(summaries, key=lambda s: s.horizon)):
        vals = np.array(sorted(s.late_min_histogram))
        freq = np.array([s.late_min_histogram[v] for v in vals]) / s.n_replicas
        ax.bar(vals + i * width, freq, width=width, label=f"T={s.horizon:g}")
    ax.legend(frameon=False)
    _save(fig, path)

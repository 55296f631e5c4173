"""End-to-end acceptance criteria, each at its stated tolerance and time budget.

Every test records a PASS/FAIL line that is printed in the terminal summary.
"""
import json
import math
import time

import numpy as np
from mginf.analysis import (accumulate, liminf_estimate, marginal_samples, poisson_marginal_check,
                            run_experiment, run_growth, summarize, theory_occupation)
from mginf.classifier import classify, classify_numeric, classify_symbolic
from mginf.cli import EXIT_OK, main
from mginf.growth import gamma_q, growth_condition
from mginf.laws import BUILTIN_SPECS, parse_law
from mginf.simulator import QueueConfig

# Laws and rates checked by the numeric/symbolic cross-validation.  Integer b
# for the strange family sits on the convergence boundary, where a finite
# horizon cannot separate the two answers, so it is left out.
BUILTIN_MATRIX = [(spec, 1.0) for spec in BUILTIN_SPECS] + [
    ("strange(b=0.5)", 1.0), ("strange(b=1.5)", 1.0),
    ("pareto(alpha=1.0,scale=1.0)", 0.5), ("pareto(alpha=1.0,scale=1.0)", 2.0),
]


def test_k0_reproduction(capsys, acceptance_line):
    expected = {0.5: 0, 1.0: 0, 1.5: 1, 2.0: 1, 2.5: 2, 3.0: 2, 3.7: 3}
    got, slowest = {}, 0.0
    for b, k0 in expected.items():
        start = time.perf_counter()
        code = main(["classify", "--law", f"strange(b={b})", "--lambda", "1"])
        slowest = max(slowest, time.perf_counter() - start)
        doc = json.loads(capsys.readouterr().out)
        assert code == EXIT_OK
        got[b] = doc["k0"]
    ok = got == expected and all(k == math.ceil(b) - 1 for b, k in got.items()) and slowest < 1.0
    acceptance_line("1 k0 reproduction", ok, f"k0={list(got.values())}, slowest {slowest:.3f}s")
    assert ok


def test_regime_coverage(acceptance_line):
    start = time.perf_counter()
    exp_law = parse_law("exp(mean=1)")
    occ0 = [theory_occupation(exp_law, 1.0, T, 0) for T in (1e2, 1e3, 1e4)]
    growing = occ0[0] < occ0[1] < occ0[2]
    recurrent = classify(exp_law, 1.0).regime == "Recurrent"

    par = parse_law("pareto(alpha=0.5)")
    transient = classify(par, 1.0).regime == "Transient"
    cauchy = {}
    for k in range(5):
        T, prev = 2.0 ** 10, theory_occupation(par, 1.0, 2.0 ** 10, k)
        for _ in range(40):
            T *= 2
            cur = theory_occupation(par, 1.0, T, k)
            if abs(cur - prev) <= 1e-6 * abs(cur):
                break
            prev = cur
        cauchy[k] = abs(cur - prev) <= 1e-6 * abs(cur)
    elapsed = time.perf_counter() - start
    ok = growing and recurrent and transient and all(cauchy.values()) and elapsed < 10
    acceptance_line("2 regime coverage", ok,
                    f"exp occ0={[round(x, 2) for x in occ0]}, pareto Cauchy k<=4 {all(cauchy.values())}, "
                    f"{elapsed:.1f}s")
    assert ok


def test_poisson_marginal(acceptance_line):
    start = time.perf_counter()
    times = (1.0, 5.0, 20.0)
    failures, worst_z, worst_p = [], 0.0, 1.0
    for spec in BUILTIN_SPECS:
        law = parse_law(spec)
        samples = marginal_samples(QueueConfig(1.0, law, 20.0, seed=0), times, 10_000)
        for j, t in enumerate(times):
            mu = float(law.m(t))
            check = poisson_marginal_check(samples[:, j], mu, t)
            worst_z = max(worst_z, abs(check.z_mean), abs(check.z_var))
            worst_p = min(worst_p, check.chi2_pvalue)
            if not check.passed(4.0, 1e-3):
                failures.append((spec, t))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    acceptance_line("3 Poisson marginal", ok,
                    f"max|z|={worst_z:.2f}, min p={worst_p:.3g}, failures={failures}, {elapsed:.1f}s")
    assert ok


def test_occupation_identity(acceptance_line):
    start = time.perf_counter()
    summary = run_experiment(QueueConfig(1.0, parse_law("exp(mean=1)"), 50.0, seed=0), 2000, k_max=6)
    zs = [summary.z_scores[k] for k in range(7)]

    T = 50.0
    det = run_experiment(QueueConfig(1.0, parse_law("det(value=1.0)"), T, seed=0), 2000, k_max=0)
    closed = (1 - math.exp(-1)) + (T - 1) * math.exp(-1)
    mc, se = det.per_state_mean_occ[0]
    z_det = (mc - closed) / se
    elapsed = time.perf_counter() - start
    ok = all(abs(z) <= 4 for z in zs) and abs(z_det) <= 4 and elapsed < 120
    acceptance_line("4 occupation identity", ok,
                    f"exp z={[round(z, 2) for z in zs]}, det z={z_det:.2f}, {elapsed:.1f}s")
    assert ok


def _exact_poisson_cdf(k, mu):
    # 50-digit arithmetic, far beyond the gaps being tested.
    import mpmath

    mpmath.mp.dps = 50
    mu = mpmath.mpf(mu)
    return mpmath.fsum(mpmath.exp(-mu) * mu ** j / mpmath.factorial(j) for j in range(k + 1))


def test_chernoff_dominance(acceptance_line):
    import mpmath

    start = time.perf_counter()
    bad = []
    for mu in (0.5, 1, 2, 5, 10, 50):
        for q in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
            k = math.floor(q * mu)
            qm, mum = mpmath.mpf(q), mpmath.mpf(mu)
            bound = mpmath.exp(-(1 - qm + qm * mpmath.log(qm)) * mum)
            if not _exact_poisson_cdf(k, mu) <= bound:
                bad.append((mu, q))
            assert math.isclose(gamma_q(q), float(1 - qm + qm * mpmath.log(qm)), rel_tol=1e-14)
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 1.0
    acceptance_line("5 Chernoff dominance", ok, f"54 pairs, violations={bad}, {elapsed:.3f}s")
    assert ok


def test_growth_bound(acceptance_line):
    start = time.perf_counter()
    law = parse_law("pareto(alpha=0.5)")
    res = run_growth(QueueConfig(1.0, law, 1e3, seed=0), 500, q=0.5)
    cond = growth_condition(law, 1.0, 0.5)
    elapsed = time.perf_counter() - start
    ok = res.bound_respected and res.failed == 0 and cond.converged and elapsed < 120
    acceptance_line("6 growth bound", ok,
                    f"mean={res.mean_h_q:.3f} se={res.stderr_h_q:.3f} bound={res.bound_value:.3f}, "
                    f"condition integral {cond.value:.3f} ({cond.status}), {elapsed:.1f}s")
    assert ok


def test_liminf_trend(acceptance_line):
    start = time.perf_counter()
    horizons = (1e2, 1e3, 1e4)
    strange = parse_law("strange(b=2.5)")
    summaries = [run_experiment(QueueConfig(1.0, strange, T, seed=1), 500, k_max=4) for T in horizons]
    low = [s.fraction_late_min_at_most(1) for s in summaries]
    decreasing = all(a > b for a, b in zip(low, low[1:]))
    at_least_two = 1.0 - low[-1]
    report = liminf_estimate(summaries, classify(strange, 1.0))

    exp_law = parse_law("exp(mean=1)")
    exp_zero = [run_experiment(QueueConfig(1.0, exp_law, T, seed=1), 500, k_max=0)
                .fraction_late_min_at_most(0) for T in horizons]
    elapsed = time.perf_counter() - start
    ok = decreasing and at_least_two >= 0.8 and all(f >= 0.95 for f in exp_zero) and elapsed < 600
    acceptance_line("7 liminf trend", ok,
                    f"P[late_min<=1]={[round(x, 3) for x in low]}, P[late_min>=2 @1e4]={at_least_two:.3f}, "
                    f"exp P[late_min=0]={exp_zero}, k0 status {report.status}, {elapsed:.1f}s")
    assert ok


def test_determinism_and_aggregation(tmp_path, acceptance_line):
    start = time.perf_counter()
    argv = ["occupancy", "--law", "strange(b=2.5)", "--lambda", "1", "--horizon", "200",
            "--replicas", "100", "--k-max", "5", "--seed", "11"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--out", str(tmp_path / "b"), "--workers", "4"]) == EXIT_OK
    sim = ["simulate", "--law", "pareto(alpha=0.5)", "--lambda", "1", "--horizon", "500", "--seed", "5"]
    assert main(sim + ["--out", str(tmp_path / "c")]) == EXIT_OK
    assert main(sim + ["--out", str(tmp_path / "d")]) == EXIT_OK
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("occupancy.csv", "occupancy.json", "manifest.json"))
    same &= all((tmp_path / "c" / f).read_bytes() == (tmp_path / "d" / f).read_bytes()
                for f in ("trajectory.csv", "occupation.csv", "manifest.json"))

    config = QueueConfig(1.0, parse_law("strange(b=2.5)"), 200.0, seed=0)
    whole = accumulate(config, range(120), k_max=5)
    parts = [accumulate(config, range(a, a + 40), k_max=5) for a in (80, 0, 40)]
    merged = parts[0].merge(parts[1]).merge(parts[2])
    a, b = summarize(whole, config), summarize(merged, config)
    rel = max(abs(a.per_state_mean_occ[k][i] - b.per_state_mean_occ[k][i])
              / max(abs(a.per_state_mean_occ[k][i]), 1e-300) for k in range(6) for i in (0, 1))
    agg_ok = rel <= 1e-9 and a.late_min_histogram == b.late_min_histogram and a.n_replicas == b.n_replicas
    elapsed = time.perf_counter() - start
    ok = same and agg_ok and elapsed < 30
    acceptance_line("8 determinism & aggregation", ok,
                    f"byte-identical={same}, max rel diff={rel:.2e}, {elapsed:.1f}s")
    assert ok


def test_classifier_cross_validation(acceptance_line):
    start = time.perf_counter()
    disagreements = []
    for spec, lam in BUILTIN_MATRIX:
        law = parse_law(spec)
        num = classify_numeric(law, lam, k_max=4)
        sym = classify_symbolic(law.profile, lam, k_max=4)
        expected = sym.k0 if sym.k0 <= 4 else math.inf
        if num.k0 != expected or any("disagrees" in w for w in num.warnings):
            disagreements.append((spec, lam, num.k0, sym.k0))
    elapsed = time.perf_counter() - start
    ok = not disagreements and elapsed < 60
    acceptance_line("9 classifier cross-validation", ok,
                    f"{len(BUILTIN_MATRIX)} cases, disagreements={disagreements}, {elapsed:.1f}s")
    assert ok

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mginf.growth import (chernoff_poisson_bound, gamma_q, growth_bound_integral, growth_check,
                          growth_condition, poisson_cdf, threshold_crossings)
from mginf.laws import make_exponential_law, make_pareto_law, make_strange_law
from mginf.simulator import QueueConfig, Trajectory, simulate

PARETO_HALF = make_pareto_law(0.5, 1.0)


def test_gamma_half():
    assert gamma_q(0.5) == pytest.approx(0.5 - 0.5 * math.log(2), rel=1e-15)
    assert gamma_q(0.5) == pytest.approx(0.15343, abs=1e-5)
    with pytest.raises(ValueError):
        gamma_q(1.0)


def test_chernoff_examples():
    assert chernoff_poisson_bound(0.0, 0.3) == 1.0
    assert chernoff_poisson_bound(10.0, 0.5) == pytest.approx(math.exp(-1.5343), rel=1e-4)
    assert chernoff_poisson_bound(10.0, 0.5) == pytest.approx(0.2157, abs=1e-4)
    assert poisson_cdf(5, 10.0) == pytest.approx(0.0671, abs=1e-4)
    assert poisson_cdf(5, 10.0) <= chernoff_poisson_bound(10.0, 0.5)
    assert chernoff_poisson_bound(50.0, 1 - 1e-9) == pytest.approx(1.0, abs=1e-12)


def exact_cdf(k, mu):
    mu = mpmath.mpf(mu)
    return mpmath.fsum(mpmath.exp(-mu) * mu ** j / mpmath.factorial(j) for j in range(k + 1))


@pytest.mark.parametrize("mu", [0.5, 1, 2, 5, 10, 50])
@pytest.mark.parametrize("q", [round(0.1 * i, 1) for i in range(1, 10)])
def test_chernoff_dominates_exact_cdf(mu, q):
    with mpmath.workdps(50):
        exact = exact_cdf(math.floor(q * mu), mu)
        bound = mpmath.exp(-(1 - mpmath.mpf(q) + mpmath.mpf(q) * mpmath.log(q)) * mu)
        assert exact <= bound
    assert poisson_cdf(math.floor(q * mu), mu) == pytest.approx(float(exact), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(mu=st.floats(0, 200), q=st.floats(0.01, 0.99))
def test_chernoff_dominance_property(mu, q):
    assert poisson_cdf(math.floor(q * mu), mu) <= chernoff_poisson_bound(mu, q) * (1 + 1e-12)


def test_zero_path_violates_everywhere():
    traj = Trajectory(np.array([]), np.array([], dtype=np.int64), 100.0)
    cfg = QueueConfig(1.0, PARETO_HALF, 100.0)
    rep = growth_check(traj, cfg, 0.5, t_min=0.0)
    assert rep.h_q_measure == 100.0
    assert rep.first_violation_after == 0.0
    assert 0 <= rep.h_q_measure <= 100.0 - rep.t_min


def test_crossing_inversion():
    law = make_exponential_law(1.0)
    # m(t) = 1 - e^-t crosses 0.5 at ln 2; never reaches 1.
    out = threshold_crossings(law, np.array([0.5, 1.0, 0.0]), 100.0)
    assert out[0] == pytest.approx(math.log(2), abs=1e-8)
    assert math.isinf(out[1]) and out[2] == 0.0


def test_measure_against_hand_computation():
    # Pareto(1/2): m(t) = 2 sqrt(t) - 1 for t >= 1.  With q = 1/2, lam = 1,
    # Y = c is violated once 2 sqrt(t) - 1 > 2c, i.e. t > ((2c + 1)/2)**2.
    traj = Trajectory(np.array([1.0, 5.0, 9.0]), np.array([1, 2, 1]), 20.0)
    cfg = QueueConfig(1.0, PARETO_HALF, 20.0)
    rep = growth_check(traj, cfg, 0.5, t_min=0.0)
    c1, c2 = 1.5 ** 2, 2.5 ** 2
    # Y = 0 on [0, 1) is violated throughout.
    expected = 1.0 + (5.0 - c1) + max(0.0, 9.0 - c2) + (20.0 - 9.0)
    assert rep.h_q_measure == pytest.approx(expected, abs=1e-7)
    assert rep.first_violation_after == 0.0
    rep2 = growth_check(traj, cfg, 0.5, t_min=4.0)
    assert rep2.h_q_measure == pytest.approx(1.0 + max(0.0, 9.0 - c2) + 11.0, abs=1e-7)
    assert rep2.first_violation_after == pytest.approx(4.0)


def test_q_outside_unit_interval_rejected():
    traj = Trajectory(np.array([]), np.array([], dtype=np.int64), 1.0)
    with pytest.raises(ValueError):
        growth_check(traj, QueueConfig(1.0, PARETO_HALF, 1.0), 1.0)


def test_bound_integral_and_condition():
    est = growth_bound_integral(PARETO_HALF, 1.0, 0.5, 1000.0)
    assert est.converged and est.value > 0
    cond = growth_condition(PARETO_HALF, 1.0, 0.5)
    assert cond.status == "converged"
    # Closed form: int_0^1 e^{-g t} dt + int_1^inf e^{-g(2 sqrt t - 1)} dt with g = gamma_1/2.
    g = gamma_q(0.5)
    closed = (1 - math.exp(-g)) / g + math.exp(g) * (1 + 2 * g) * math.exp(-2 * g) / (2 * g * g)
    assert cond.value == pytest.approx(closed, rel=1e-7)
    assert est.value <= cond.value


def test_condition_fails_for_recurrent_law():
    cond = growth_condition(make_strange_law(2.5), 1.0, 0.5)
    assert cond.status == "divergence-suspected"


def test_growth_on_simulated_paths_stays_below_bound():
    cfg = QueueConfig(1.0, PARETO_HALF, 1000.0)
    bound = growth_bound_integral(PARETO_HALF, 1.0, 0.5, 1000.0).value
    for t_min in (0.0, 100.0):
        h = np.array([growth_check(simulate(cfg.with_seed(s)), cfg, 0.5, t_min, bound).h_q_measure
                      for s in range(100)])
        assert h.mean() <= bound + 3 * h.std(ddof=1) / 10
        assert np.all((h >= 0) & (h <= 1000.0 - t_min))


def test_report_json_schema():
    traj = Trajectory(np.array([]), np.array([], dtype=np.int64), 10.0)
    rep = growth_check(traj, QueueConfig(1.0, PARETO_HALF, 10.0), 0.5)
    assert set(rep.to_dict()) == {"q", "t_min", "h_q_measure", "bound_value", "first_violation_after"}
    assert rep.t_min == 1.0

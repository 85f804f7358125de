import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trotterkit.bounds import (TREND_FACTOR, check_defect_linear, check_lambda_alpha,
                               check_TkA_bound, check_Zbeta, default_tau_grid, gronwall_probe,
                               harmonic_sum_checks, harmonic_sweep)
from trotterkit.errors import InsufficientSamplingError, PreconditionError
from trotterkit.generators import Generator, TimeFamily, constant_family
from trotterkit.linops import holomorphic_bound_probe

A1 = Generator(np.array([[1.0]]))
LINEAR = TimeFamily(1.0, lambda t: np.array([[t]]), dim=1)
ZERO1 = constant_family([[0.0]])


def test_default_tau_grid_skips_damped_regime():
    assert default_tau_grid(1.0)[0] == 1.0
    g = default_tau_grid(1.0, Generator(np.array([[10.0]])))
    assert g[0] * 10.0 <= 0.5 and g[0] * 2 * 10.0 > 0.5
    assert len(g) == 9 and np.all(np.diff(g) < 0)


# -- Lambda_alpha -------------------------------------------------------------------

@pytest.mark.parametrize("lam,alpha", [(1.0, 0.5), (4.0, 0.25)])
def test_lambda_alpha_free_scalar(lam, alpha):
    A = Generator(np.array([[lam]]))
    taus = np.linspace(0.02, 0.9, 45)
    rep = check_lambda_alpha(A, ZERO1, alpha, taus, t_points=3)
    probe = holomorphic_bound_probe(A.op, alpha, taus)
    assert rep.fitted_constant == pytest.approx(probe.M_alpha_est, rel=1e-9)
    assert rep.fitted_constant <= (alpha / math.e) ** alpha + 1e-12
    assert rep.satisfied


def test_lambda_alpha_zero_exponent_is_stability_constant():
    taus = [0.5, 0.25, 0.125]
    rep = check_lambda_alpha(A1, LINEAR, 0.0, taus, t_points=5)
    # U(t, t - tau) = exp(-tau - (t^2 - (t-tau)^2)/2) is largest at the earliest start
    expected = max(math.exp(-tau - tau ** 2 / 2) for tau in taus)
    assert rep.fitted_constant == pytest.approx(expected, rel=1e-9)


# -- T(tau)^k A ---------------------------------------------------------------------

def test_TkA_nilpotent_regime():
    rep = check_TkA_bound(A1, ZERO1, [0.5, 0.25], k_list=[2, 4, 8])
    rows = {(tau, k): v for tau, k, v in rep.profile}
    assert rows[(0.5, 2)] == 0.0 and rows[(0.25, 4)] == 0.0 and rows[(0.25, 8)] == 0.0


def test_TkA_scalar_single_step():
    taus = np.linspace(0.05, 0.95, 19)
    rep = check_TkA_bound(A1, ZERO1, taus, k_list=[1], alpha=0.5)
    for tau, k, v in rep.profile:
        assert v == pytest.approx(math.exp(-tau), rel=1e-14)
    # the reported constants dominate every measurement
    c1, c2 = rep.constants["c1"], rep.constants["c2"]
    for tau, k, v in rep.profile:
        assert v <= (c1 / tau ** 0.5 + c2 / (k * tau)) * (1 + 1e-12)
    # e^-tau <= c2 / tau holds with c2 = sup tau e^-tau = 1/e
    assert all(math.exp(-tau) <= (1 / math.e) / tau for tau in taus)
    assert rep.satisfied


def test_TkA_finite_for_heat(heat_default):
    problem, _ = heat_default
    rep = check_TkA_bound(problem.A, problem.fam, alpha=problem.alpha)
    assert rep.satisfied and math.isfinite(rep.constants["c1"]) and math.isfinite(
        rep.constants["c2"])


# -- defects --------------------------------------------------------------------------

def test_defect_zero_family():
    A = Generator(np.array([[2.0, 1.0], [0.0, 3.0]]))
    rep = check_defect_linear(A, constant_family(np.zeros((2, 2))), 0.5, [0.5, 0.25, 0.125],
                              t_points=3)
    assert rep.fitted_constant <= 1e-9 and rep.satisfied


def test_defect_commuting():
    A = Generator(np.diag([1.0, 3.0]))
    rep = check_defect_linear(A, constant_family(np.diag([2.0, 0.5])), 0.5, [0.5, 0.25],
                              t_points=3)
    assert rep.fitted_constant <= 1e-8


def test_defect_scalar_second_order():
    taus = [2.0 ** -k for k in range(1, 8)]
    rep = check_defect_linear(A1, LINEAR, 0.5, taus, t_points=5)
    assert rep.satisfied and math.isfinite(rep.fitted_constant)
    raw = [row[1] for row in rep.profile]
    # local defect of a first-order splitting is O(tau^2): halving tau quarters it
    ratios = [a / b for a, b in zip(raw, raw[1:])]
    assert all(3.0 < r < 5.0 for r in ratios[2:])


def test_Zbeta_trivial_cases():
    taus = [0.5, 0.25, 0.125, 0.0625]
    zero = check_Zbeta(A1, ZERO1, 0.2, 0.7, taus, t_points=3)
    assert zero.fitted_constant <= 1e-9
    const = check_Zbeta(A1, constant_family([[2.0]]), 0.2, 1.0, taus, t_points=3)
    assert const.satisfied


def test_Zbeta_requires_ordering():
    with pytest.raises(PreconditionError):
        check_Zbeta(A1, LINEAR, 0.5, 0.4)


def test_Zbeta_coarsening_monotone():
    A = Generator(np.array([[3.0, 1.0], [0.0, 2.0]]))
    fam = TimeFamily(1.0, lambda t: np.array([[t ** 0.75, 0.0], [0.0, 1.0]]), dim=2)
    fine = [2.0 ** -k for k in range(1, 9)]
    coarse = fine[::2]
    z_fine = check_Zbeta(A, fam, 0.25, 0.75, fine, t_points=5).fitted_constant
    z_coarse = check_Zbeta(A, fam, 0.25, 0.75, coarse, t_points=5).fitted_constant
    assert z_coarse <= z_fine


def test_reports_are_reproducible():
    taus = [0.5, 0.25, 0.125]
    a = check_defect_linear(A1, LINEAR, 0.5, taus, t_points=4)
    b = check_defect_linear(A1, LINEAR, 0.5, taus, t_points=4)
    assert a.fitted_constant == b.fitted_constant and a.grid == b.grid


def test_trend_rule_catches_divergence():
    # a defect that only decays like tau^0.5 makes ratio / tau blow up
    A = Generator(np.array([[1.0]]))
    rough = TimeFamily(1.0, lambda t: np.array([[50.0 * abs(t - 0.5) ** 0.05]]), dim=1)
    rep = check_Zbeta(A, rough, 0.1, 1.0, [2.0 ** -k for k in range(1, 12)], t_points=9)
    informative = [r for _, d, r in rep.profile if d > 1e-9]
    assert rep.satisfied == (informative[-1] <= TREND_FACTOR * informative[0] + 1e-300)


# -- Gronwall-type probe --------------------------------------------------------------

def test_gronwall_exact_singular_profile():
    ts = np.geomspace(1e-4, 0.2, 40)
    res = gronwall_probe((ts, 2.0 * ts ** -0.3), c1=2.0, c2=1e-6, alpha=0.3)
    assert res.holds and res.hypothesis_holds
    assert res.bound == 4.0


def test_gronwall_zero():
    ts = np.geomspace(1e-4, 0.2, 40)
    res = gronwall_probe(dict(zip(ts, np.zeros_like(ts))), c1=1.0, c2=1.0, alpha=0.5)
    assert res.holds and res.empirical_t0 == ts[-1]


def test_gronwall_horizon_formula():
    ts = np.geomspace(1e-5, 0.01, 30)
    res = gronwall_probe((ts, np.ones_like(ts)), c1=1.0, c2=4.0, alpha=0.5, sigma_alpha=0.25)
    assert res.t0 == pytest.approx(0.25 * min(0.25, 0.25 ** 2))


def test_gronwall_insufficient_sampling():
    with pytest.raises(InsufficientSamplingError):
        gronwall_probe((np.linspace(0.5, 1, 20), np.ones(20)), c1=1.0, c2=1.0, alpha=0.5)


def test_gronwall_on_heat_lambda_profile(heat_default):
    problem, ref = heat_default
    taus = np.geomspace(1e-3, 0.2, 16)
    rep = check_lambda_alpha(problem.A, problem.fam, problem.alpha, taus, t_points=3,
                             reference=ref)
    samples = {tau: v / tau ** problem.alpha for tau, v in rep.profile}
    res = gronwall_probe(samples, c1=rep.fitted_constant, c2=1.0, alpha=problem.alpha)
    assert res.holds


# -- harmonic sums ---------------------------------------------------------------------

def test_harmonic_examples():
    r = harmonic_sum_checks(2, 0.0)
    assert r.ineq1 == (1.0, 2.0)
    r = harmonic_sum_checks(4, 0.5)
    assert r.ineq1[0] == pytest.approx(1 + 2 ** -0.5 + 3 ** -0.5, rel=1e-15)
    assert r.ineq1[0] == pytest.approx(2.2845, abs=1e-4)
    assert r.ineq1[1] == pytest.approx(4.0)
    r = harmonic_sum_checks(3, 0.5)
    assert r.ineq2[0] == pytest.approx(0.5 + 2 ** -0.5, rel=1e-15)
    assert r.ineq2[0] == pytest.approx(1.2071, abs=1e-4)
    assert r.ineq2[1] == pytest.approx(2.9437, abs=1e-4)
    assert r.both_hold


@given(st.integers(2, 3000), st.floats(0.0, 0.99))
def test_harmonic_always_holds(n, beta):
    assert harmonic_sum_checks(n, beta).both_hold


def test_harmonic_sweep_matches_direct_sums():
    sweep = harmonic_sweep(n_max=300, betas=[0.3])
    assert sweep["violations"] == 0
    direct = min(min((r.ineq1[1] - r.ineq1[0]) / r.ineq1[1], (r.ineq2[1] - r.ineq2[0]) / r.ineq2[1])
                 for r in (harmonic_sum_checks(n, 0.3) for n in range(2, 301)))
    assert sweep["min_relative_margin"] == pytest.approx(direct, rel=1e-9)

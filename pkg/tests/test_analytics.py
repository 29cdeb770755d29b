import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcombine.analytics import (
    ScalarScenario,
    alternative_factor_is_closed_form,
    bias_factor_alternative,
    bias_factor_alternative_mc,
    bias_factor_current,
    bias_report,
    conditional_mean_given_y,
    conditional_variance_given_s,
    exponential_conditional_mean,
    gauss_legendre,
    mean_variance_gap,
    relbias_alternative,
    relbias_current,
    synthesis_input_variance_gap,
    target_variance,
    var_of_sample_variance_normal,
    vardiff_sample_variances,
)
from mcombine.exceptions import DomainError
from mcombine.models import ADDITIVE, EXPONENTIAL, MULTIPLICATIVE, PHASE, Normal, TwoPoint, Uniform
from mcombine.rng import RngStream

STD_NORMAL = Normal(mean=[0.0], cov=[[1.0]])


def scenario(kernel, y_dist, s_dist, j=4, q=10):
    return ScalarScenario(kernel=kernel, y_dist=y_dist, s_dist=s_dist, j=j, q=q)


def mult_standard(j=4, q=10):
    return scenario(MULTIPLICATIVE, STD_NORMAL, STD_NORMAL, j, q)


def phase_extremal(j=4, q=50):
    return scenario(
        PHASE,
        TwoPoint(a=[-math.pi / 2.0], b=[math.pi / 2.0], p=0.5),
        Uniform(lo=[-math.pi], hi=[math.pi]),
        j,
        q,
    )


def exponential_scenario(a=0.0, b=8.0, alpha=0.95, j=4, q=10):
    return scenario(
        EXPONENTIAL, Uniform(lo=[a], hi=[b]), Uniform(lo=[1.0 - alpha], hi=[1.0 + alpha]), j, q
    )


# --------------------------------------------------------------------------
# numeric oracles used below (trapezoid grids, no shared code paths)


def _trapz_uniform_moments(fn, lo, hi, n=200_001):
    xs = np.linspace(lo, hi, n)
    vals = fn(xs)
    mean = np.trapezoid(vals, xs) / (hi - lo)
    var = np.trapezoid((vals - mean) ** 2, xs) / (hi - lo)
    return mean, var


def _exponential_k_by_integration(y, alpha, n=20_001):
    ss = np.linspace(1.0 - alpha, 1.0 + alpha, n)
    return np.trapezoid(np.power(y, ss), ss) / (2.0 * alpha)


# --------------------------------------------------------------------------
# current-construction bias factor


def test_psi_zero_for_additive_and_multiplicative():
    assert bias_factor_current(scenario(ADDITIVE, STD_NORMAL, STD_NORMAL)) == 0.0
    assert bias_factor_current(mult_standard()) == 0.0


def test_psi_phase_extremal_is_one():
    # delta = pi kills the conditional mean entirely, leaving V[sin Y] = 1
    assert math.isclose(bias_factor_current(phase_extremal()), 1.0, rel_tol=1e-14)


def test_psi_phase_uniform_matches_trapezoid_oracle():
    y = Uniform(lo=[-1.0], hi=[2.0])
    delta = 0.8
    s = scenario(PHASE, y, Uniform(lo=[-delta], hi=[delta]))
    _, var_sin = _trapz_uniform_moments(np.sin, -1.0, 2.0)
    shrink = math.sin(delta) / delta
    expected = (1.0 - shrink**2) * var_sin
    assert math.isclose(bias_factor_current(s), expected, rel_tol=1e-7)


def test_psi_exponential_matches_double_trapezoid_oracle():
    a, b, alpha = 0.5, 4.0, 0.95
    s = exponential_scenario(a, b, alpha)
    ys = np.linspace(a, b, 4_001)
    ss = np.linspace(1.0 - alpha, 1.0 + alpha, 4_001)
    k_vals = np.trapezoid(np.power(ys[:, None], ss[None, :]), ss, axis=1) / (2.0 * alpha)
    k_mean = np.trapezoid(k_vals, ys) / (b - a)
    k_var = np.trapezoid((k_vals - k_mean) ** 2, ys) / (b - a)
    expected = (b - a) ** 2 / 12.0 - k_var
    assert math.isclose(bias_factor_current(s), expected, rel_tol=1e-5)


def test_psi_exponential_can_take_both_signs():
    # small supports push the bias factor positive, large ones negative
    assert bias_factor_current(exponential_scenario(0.0, 1.0)) > 0.0
    assert bias_factor_current(exponential_scenario(0.0, 8.0)) < 0.0


def test_psi_degenerate_data_support_is_zero():
    assert bias_factor_current(exponential_scenario(2.0, 2.0)) == 0.0


# --------------------------------------------------------------------------
# alternative-construction bias factor


def test_phi_zero_for_additive():
    assert bias_factor_alternative(scenario(ADDITIVE, STD_NORMAL, STD_NORMAL)) == 0.0


def test_phi_multiplicative_product_of_variances():
    y = Normal(mean=[2.0], cov=[[3.0]])
    s = Normal(mean=[1.0], cov=[[0.5]])
    assert math.isclose(
        bias_factor_alternative(scenario(MULTIPLICATIVE, y, s)), 3.0 * 0.5, rel_tol=1e-14
    )


def test_phi_phase_extremal_is_half():
    # E_S[V[sin(Y+s)|s]] = E_S[cos^2 s] = 1/2 and the conditional-mean term dies
    value, se = bias_factor_alternative_mc(phase_extremal(), RngStream(17), draws=400_000)
    assert abs(value - 0.5) < 3.0 * se


def test_phi_mc_fallback_is_deterministic_and_nonnegative():
    s = exponential_scenario(0.5, 3.0)
    a = bias_factor_alternative(s)
    b = bias_factor_alternative(s)
    assert a == b
    value, se = bias_factor_alternative_mc(s, RngStream(23), draws=200_000)
    assert value >= -3.0 * se  # scalar alternative bias factor is nonnegative


def test_phi_closed_form_flag():
    assert alternative_factor_is_closed_form(ADDITIVE)
    assert alternative_factor_is_closed_form(MULTIPLICATIVE)
    assert not alternative_factor_is_closed_form(PHASE)
    assert not alternative_factor_is_closed_form(EXPONENTIAL)


# --------------------------------------------------------------------------
# target variance


def test_target_additive_closed_form():
    y = Normal(mean=[0.0], cov=[[2.0]])
    s = Uniform(lo=[-1.0], hi=[1.0])
    got = target_variance(scenario(ADDITIVE, y, s, j=5))
    assert math.isclose(got, 2.0 / 5.0 + 1.0 / 3.0, rel_tol=1e-14)


def test_target_multiplicative_standard_normal_quarter():
    assert math.isclose(target_variance(mult_standard(j=4)), 0.25, rel_tol=1e-14)


def test_target_multiplicative_general_closed_form():
    y = Normal(mean=[2.0], cov=[[1.5]])
    s = Normal(mean=[-1.0], cov=[[0.25]])
    got = target_variance(scenario(MULTIPLICATIVE, y, s, j=3))
    expected = (1.5 / 3.0) * (0.25 + 1.0) + 0.25 * 4.0
    assert math.isclose(got, expected, rel_tol=1e-14)


def test_target_phase_extremal_value():
    for j in (2, 4, 8):
        got = target_variance(phase_extremal(j=j))
        assert math.isclose(got, 1.0 / (2.0 * j), rel_tol=1e-12)


def test_target_phase_matches_brute_force_grid():
    # independent oracle: V[Fbar] = V[f]/J + (J-1)/J Cov over a dense (y,s) grid
    c, d, delta, j = -0.5, 1.5, 1.2, 3
    y = Uniform(lo=[c], hi=[d])
    s = scenario(PHASE, y, Uniform(lo=[-delta], hi=[delta]), j=j)
    ss = np.linspace(-delta, delta, 4_001)
    ys = np.linspace(c, d, 4_001)
    f = np.sin(ys[:, None] + ss[None, :])
    m1 = np.trapezoid(f, ys, axis=0) / (d - c)  # E_Y[f | s]
    m2 = np.trapezoid(f**2, ys, axis=0) / (d - c)
    e_m1 = np.trapezoid(m1, ss) / (2 * delta)
    var_f = np.trapezoid(m2, ss) / (2 * delta) - e_m1**2
    cov_ff = np.trapezoid(m1**2, ss) / (2 * delta) - e_m1**2
    expected = var_f / j + (j - 1) / j * cov_ff
    assert math.isclose(target_variance(s), expected, rel_tol=1e-6)


def test_target_exponential_matches_brute_force_grid():
    a, b, alpha, j = 0.5, 3.0, 0.95, 4
    s = exponential_scenario(a, b, alpha, j=j)
    ss = np.linspace(1.0 - alpha, 1.0 + alpha, 3_001)
    ys = np.linspace(a, b, 3_001)
    f = np.power(ys[:, None], ss[None, :])
    m1 = np.trapezoid(f, ys, axis=0) / (b - a)
    m2 = np.trapezoid(f**2, ys, axis=0) / (b - a)
    e_m1 = np.trapezoid(m1, ss) / (2 * alpha)
    var_f = np.trapezoid(m2, ss) / (2 * alpha) - e_m1**2
    cov_ff = np.trapezoid(m1**2, ss) / (2 * alpha) - e_m1**2
    expected = var_f / j + (j - 1) / j * cov_ff
    assert math.isclose(target_variance(s), expected, rel_tol=1e-6)


def test_degenerate_target_is_zero_and_relbias_rejects_it():
    d = Uniform(lo=[1.0], hi=[1.0])
    s = scenario(ADDITIVE, d, d)
    assert target_variance(s) == 0.0
    with pytest.raises(DomainError):
        relbias_current(s)
    with pytest.raises(DomainError):
        relbias_alternative(s)


# --------------------------------------------------------------------------
# relative biases and the gap


def test_relbias_current_phase_extremal_is_two():
    # the relative bias is 2 regardless of J: (psi/J) over 1/(2J)
    for j in (2, 4, 8):
        assert math.isclose(relbias_current(phase_extremal(j=j)), 2.0, rel_tol=1e-12)


def test_relbias_alternative_standard_multiplicative_is_one_over_q():
    for q in (3, 10, 100):
        assert math.isclose(relbias_alternative(mult_standard(q=q)), 1.0 / q, rel_tol=1e-14)


@given(
    st.floats(min_value=-2, max_value=2),
    st.floats(min_value=0.1, max_value=3),
    st.floats(min_value=-2, max_value=2),
    st.floats(min_value=0.1, max_value=3),
    st.integers(min_value=2, max_value=12),
    st.integers(min_value=2, max_value=300),
)
@settings(max_examples=80, deadline=None)
def test_relbias_alternative_bounds_multiplicative(mu, sig2, nu, tau2, j, q):
    # the alternative construction's relative bias always sits in [0, 1/Q]
    s = scenario(
        MULTIPLICATIVE, Normal(mean=[mu], cov=[[sig2]]), Normal(mean=[nu], cov=[[tau2]]), j, q
    )
    rb = relbias_alternative(s)
    assert 0.0 <= rb <= 1.0 / q + 1e-15


def test_relbias_alternative_additive_is_zero():
    assert relbias_alternative(scenario(ADDITIVE, STD_NORMAL, STD_NORMAL)) == 0.0


def test_relbias_alternative_nonzero_means_below_bound():
    # unit means and variances: phi = 1, target = (1/J)(1+1) + 1 = 1.5
    s = scenario(MULTIPLICATIVE, Normal(mean=[1.0], cov=[[1.0]]), Normal(mean=[1.0], cov=[[1.0]]), 4, 100)
    rb = relbias_alternative(s)
    assert rb < 1.0 / 100.0
    assert math.isclose(rb, (1.0 / 400.0) / 1.5, rel_tol=1e-14)


def test_mean_variance_gap_values():
    # multiplicative standard normal J=4 Q=10: 0 - phi/(J Q^2) = -1/400
    assert math.isclose(mean_variance_gap(mult_standard(j=4, q=10)), -1.0 / 400.0, rel_tol=1e-14)
    assert mean_variance_gap(scenario(ADDITIVE, STD_NORMAL, STD_NORMAL)) == 0.0


def test_mean_variance_gap_combines_both_factors():
    s = phase_extremal(j=4, q=50)
    psi = bias_factor_current(s)
    phi_val = bias_factor_alternative(s)
    got = mean_variance_gap(s)
    assert math.isclose(got, psi / (4 * 50) - phi_val / (4 * 50 * 50), rel_tol=1e-12)


# --------------------------------------------------------------------------
# variance-of-sample-variance pieces


def test_var_of_sample_variance_normal_known_values():
    assert var_of_sample_variance_normal(1.0, 0.0, 2) == 2.0
    assert math.isclose(var_of_sample_variance_normal(1.0, 2.0, 11), 1.0, rel_tol=1e-14)
    # general formula: 2 sigma^4/(n-1) + 4 sigma^2 u^2/(n-1)
    assert math.isclose(
        var_of_sample_variance_normal(2.0, 0.5, 5), (2.0 * 4.0 + 4.0 * 2.0 * 0.5) / 4.0, rel_tol=1e-14
    )
    # constants carry no sampling noise regardless of mean dispersion
    assert var_of_sample_variance_normal(0.0, 3.0, 7) == 0.0


def test_var_of_sample_variance_needs_two_observations():
    with pytest.raises(DomainError):
        var_of_sample_variance_normal(1.0, 0.0, 1)


def test_vardiff_bracket_standard_normal_is_four_over_q_squared():
    for q in (5, 50, 500):
        got = synthesis_input_variance_gap(mult_standard(j=4, q=q))
        assert math.isclose(got, 4.0 / q**2, rel_tol=1e-12)


def test_vardiff_scaling_by_j_squared():
    s = mult_standard(j=4, q=10)
    assert math.isclose(
        vardiff_sample_variances(s), synthesis_input_variance_gap(s) / 16.0, rel_tol=1e-15
    )


def test_vardiff_additive_zero():
    assert vardiff_sample_variances(scenario(ADDITIVE, STD_NORMAL, STD_NORMAL)) == 0.0


def test_vardiff_rejects_other_kernels():
    with pytest.raises(DomainError):
        vardiff_sample_variances(phase_extremal())


def test_vardiff_bracket_nonzero_error_mean():
    # with nu != 0 the 1/Q term dominates: check the closed form term by term
    y = Normal(mean=[1.0], cov=[[2.0]])
    s_dist = Normal(mean=[0.5], cov=[[0.25]])
    s = scenario(MULTIPLICATIVE, y, s_dist, j=4, q=100)
    sigma2, tau2, nu, qq, jj = 2.0, 0.25, 0.5, 100.0, 4.0
    phi4 = 3.0 * sigma2**2  # normal fourth central moment
    psi4 = 3.0 * tau2**2
    var_sbar2 = 4 * nu**2 * tau2 / qq + 2 * tau2**2 / qq**2 + (psi4 - 3 * tau2**2) / qq**3
    e_sbar4_minus = 6 * nu**2 * tau2 / qq + 3 * tau2**2 / qq**2 + (psi4 - 3 * tau2**2) / qq**3
    var_s2y = (phi4 - sigma2**2) / jj + 2 * sigma2**2 / (jj * (jj - 1))
    expected = sigma2**2 * var_sbar2 + e_sbar4_minus * var_s2y
    assert math.isclose(synthesis_input_variance_gap(s), expected, rel_tol=1e-12)


# --------------------------------------------------------------------------
# conditional moments


def test_conditional_mean_given_y_phase():
    s = scenario(PHASE, STD_NORMAL, Uniform(lo=[-0.9], hi=[0.9]))
    ys = np.array([-1.0, 0.3, 2.0])
    got = conditional_mean_given_y(s, ys)
    assert np.allclose(got, np.sin(ys) * math.sin(0.9) / 0.9, rtol=1e-14)


def test_conditional_mean_given_y_exponential_vs_integration():
    s = exponential_scenario(0.5, 3.0, 0.7)
    ys = np.array([0.6, 1.0, 2.5])
    got = conditional_mean_given_y(s, ys)
    want = [_exponential_k_by_integration(y, 0.7) for y in ys]
    assert np.allclose(got, want, rtol=1e-7)


def test_conditional_variance_given_s_multiplicative():
    y = Normal(mean=[1.0], cov=[[2.0]])
    s = scenario(MULTIPLICATIVE, y, STD_NORMAL)
    vals = conditional_variance_given_s(s, np.array([0.0, 1.0, -2.0]))
    assert np.allclose(vals, [0.0, 2.0, 8.0], rtol=1e-14)


def test_conditional_variance_given_s_phase_vs_grid():
    c, d = -0.5, 1.5
    s = scenario(PHASE, Uniform(lo=[c], hi=[d]), Uniform(lo=[-1.0], hi=[1.0]))
    shift = 0.4
    ys = np.linspace(c, d, 200_001)
    vals = np.sin(ys + shift)
    want = np.trapezoid(vals**2, ys) / (d - c) - (np.trapezoid(vals, ys) / (d - c)) ** 2
    got = conditional_variance_given_s(s, np.array([shift]))[0]
    assert math.isclose(got, want, rel_tol=1e-9)


# --------------------------------------------------------------------------
# exponential conditional mean (the k function)


def test_exponential_k_spec_value():
    assert math.isclose(
        exponential_conditional_mean(math.e, 1.0), math.e * math.sinh(1.0), rel_tol=1e-15
    )


def test_exponential_k_at_one():
    assert exponential_conditional_mean(1.0, 0.5) == 1.0


def test_exponential_k_series_branch_is_smooth():
    # straddle the series/formula switch at |ln y| = 1e-6
    alpha = 0.95
    ys = np.array([1.0 - 2e-6, 1.0 - 5e-7, 1.0, 1.0 + 5e-7, 1.0 + 2e-6])
    vals = exponential_conditional_mean(ys, alpha)
    brute = [_exponential_k_by_integration(float(y), alpha, 40_001) for y in ys]
    assert np.allclose(vals, brute, rtol=1e-10)


def test_exponential_k_matches_integration_broadly():
    alpha = 0.6
    ys = np.geomspace(0.05, 50.0, 9)
    got = exponential_conditional_mean(ys, alpha)
    want = [_exponential_k_by_integration(float(y), alpha, 100_001) for y in ys]
    assert np.allclose(got, want, rtol=1e-8)


def test_exponential_k_rejects_bad_domain():
    with pytest.raises(DomainError):
        exponential_conditional_mean(-1.0, 0.5)
    with pytest.raises(DomainError):
        exponential_conditional_mean(2.0, 1.5)


# --------------------------------------------------------------------------
# quadrature


def test_gauss_legendre_weights_sum_to_length():
    _, w = gauss_legendre(-2.0, 5.0, 64)
    assert math.isclose(w.sum(), 7.0, rel_tol=1e-14)


def test_gauss_legendre_exact_for_polynomials():
    # n nodes integrate polynomials up to degree 2n-1 exactly
    x, w = gauss_legendre(0.0, 2.0, 3)
    got = float(w @ x**5)
    assert math.isclose(got, 2.0**6 / 6.0, rel_tol=1e-13)


def test_node_doubling_stability_exponential_integrals():
    # the values that feed psi and the target variance must be stable in n
    s = exponential_scenario(0.25, 6.0, 0.95)
    v128 = bias_factor_current(s, nodes=128)
    v256 = bias_factor_current(s, nodes=256)
    v512 = bias_factor_current(s, nodes=512)
    assert abs(v256 - v512) <= 1e-8 * max(1.0, abs(v512))
    assert abs(v128 - v512) <= 1e-8 * max(1.0, abs(v512))


# --------------------------------------------------------------------------
# report assembly and validation


def test_bias_report_consistency():
    rep = bias_report(mult_standard(j=4, q=10))
    assert rep.alternative_method == "closed-form"
    assert math.isclose(rep.relbias_alternative, 0.1, rel_tol=1e-12)
    assert rep.bias_factor_current == 0.0
    assert math.isclose(rep.target_var, 0.25, rel_tol=1e-14)
    assert math.isclose(rep.mean_var_gap, -1.0 / 400.0, rel_tol=1e-12)


def test_bias_report_mc_method_flag():
    rep = bias_report(phase_extremal(), stream=RngStream(31), draws=50_000)
    assert rep.alternative_method == "monte-carlo"
    assert rep.bias_factor_alternative >= 0.0


def test_scenario_validation():
    with pytest.raises(DomainError):
        ScalarScenario(kernel=ADDITIVE, y_dist=STD_NORMAL, s_dist=STD_NORMAL, j=1, q=10)
    with pytest.raises(DomainError):
        ScalarScenario(kernel=ADDITIVE, y_dist=STD_NORMAL, s_dist=STD_NORMAL, j=4, q=0)
    with pytest.raises(DomainError):
        ScalarScenario(
            kernel=ADDITIVE,
            y_dist=Normal(mean=[0.0, 0.0], cov=np.eye(2)),
            s_dist=STD_NORMAL,
            j=4,
            q=10,
        )


def test_exponential_requires_unit_mean_errors():
    bad = scenario(EXPONENTIAL, Uniform(lo=[0.5], hi=[2.0]), Uniform(lo=[0.0], hi=[1.0]))
    with pytest.raises(DomainError):
        bias_factor_current(bad)


def test_exponential_requires_nonnegative_support():
    bad = exponential_scenario(-1.0, 2.0)
    with pytest.raises(DomainError):
        bias_factor_current(bad)

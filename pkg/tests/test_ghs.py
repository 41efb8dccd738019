import math

import numpy as np
import pytest
from scipy import special, stats

from lpcw.ghs import (AdditiveProcessConfig, GhsDensity, TruncationError, ghs_identity_check,
                      ks_critical_two_sample, log_gamma_cdf, product_identity_check,
                      sample_u, sample_y_increment, sample_y_marginal, sample_y_path,
                      theta_mellin)
from lpcw.numerics import SeededStream
from oracles import gamma_moment, nu_sq, theta24_normalized, theta24_stated

GENERIC = AdditiveProcessConfig(fast_path=False)


# -- density -----------------------------------------------------------------

def test_theta24_value_at_one():
    dens = GhsDensity(2, 4)
    val = theta_mellin(dens, 1.0)
    assert val == pytest.approx(theta24_normalized(1.0), abs=1e-9)
    # the stated constant is off by exactly a factor 2
    assert val / theta24_stated(1.0) == pytest.approx(2.0, rel=1e-9)


@pytest.mark.parametrize("x", [0.5, 1.5, 2.5])
def test_theta24_pointwise(x):
    r = GhsDensity(2, 4).mellin(x)
    assert r.value == pytest.approx(theta24_normalized(x), abs=1e-6)
    assert r.imag_residual < 1e-8


@pytest.mark.parametrize("x", [0.3, 1.0, 2.0])
def test_rayleigh_case(x):
    dens = GhsDensity(1, 2)
    assert dens.mellin_eval(x) == pytest.approx(x * math.exp(-x * x / 2), abs=1e-8)


@pytest.mark.parametrize("qp", [(2, 4), (2, 3), (1, 2), (2, 6), (1.5, 3)])
def test_mass_and_positivity(qp):
    dens = GhsDensity(*qp)
    assert dens.mass() == pytest.approx(1.0, abs=1e-6)
    for x in (0.05, 0.5, 1.0, 2.0, 3.0):
        assert dens.theta(x) > 0


@pytest.mark.parametrize("qp", [(2, 4), (2, 3)])
def test_tail_slope(qp):
    dens = GhsDensity(*qp)
    xs = np.linspace(3, 8, 11)
    ys = np.log(-dens.log_theta(xs))
    slope = np.polyfit(np.log(xs), ys, 1)[0]
    assert slope == pytest.approx(dens.tail_exponent, rel=0.05)
    assert dens.tail_constant == pytest.approx((qp[1] - qp[0]) / (qp[0] * qp[1]))


def test_tail_slope_needs_larger_x_for_rayleigh():
    # log theta = log x - x^2/2: the log x term still bends the fit on [3, 8]
    dens = GhsDensity(1, 2)
    xs = np.linspace(3, 8, 11)
    slope = np.polyfit(np.log(xs), np.log(-dens.log_theta(xs)), 1)[0]
    assert 2.0 < slope < 2.3
    xs = np.linspace(30, 80, 11)
    exact = np.log(xs ** 2 / 2 - np.log(xs))
    slope = np.polyfit(np.log(xs), exact, 1)[0]
    assert slope == pytest.approx(2.0, rel=0.05)


def test_domain_guards():
    for q, p in [(2, 2), (3, 2), (0, 2)]:
        with pytest.raises(ValueError):
            GhsDensity(q, p)
    with pytest.raises(ValueError):
        GhsDensity(2, 4).mellin(0.0)


# -- additive process --------------------------------------------------------

@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_marginal_matches_t_log_gamma(t):
    y = sample_y_marginal(t, 100_000, SeededStream(11), GENERIC)
    ks = stats.kstest(y, log_gamma_cdf(t))
    assert ks.statistic < special.kolmogi(1e-3) / math.sqrt(y.size)


def test_characteristic_function():
    t = 0.5
    y = sample_y_marginal(t, 200_000, SeededStream(12), GENERIC)
    for xi in (0.5, 1.0, 2.0):
        # E exp(i xi Y_t) with Y_t = t log G, G ~ Gamma(t)
        ref = np.exp(special.loggamma(t + 1j * xi * t) - special.loggamma(t))
        emp = np.exp(1j * xi * y)
        se = math.sqrt(emp.real.var() / y.size + emp.imag.var() / y.size)
        assert abs(emp.mean() - ref) < 4 * se


def test_independent_increments():
    n = 100_000
    path = sample_y_path([0.25, 0.5, 1.0], n, SeededStream(13), GENERIC)
    d1, d2 = path[:, 1] - path[:, 0], path[:, 2] - path[:, 1]
    assert abs(np.corrcoef(d1, d2)[0, 1]) < 4 / math.sqrt(n)


def test_increment_law_matches_difference_of_marginals():
    inc = sample_y_increment(0.25, 0.5, 50_000, SeededStream(14), GENERIC)
    a = sample_y_marginal(0.25, 50_000, SeededStream(15), GENERIC)
    b = sample_y_marginal(0.5, 50_000, SeededStream(16), GENERIC)
    # means of increments add up exactly in law
    se = math.sqrt(inc.var() / inc.size + a.var() / a.size + b.var() / b.size)
    assert abs(inc.mean() - (b.mean() - a.mean())) < 4 * se


def test_truncation_config():
    with pytest.raises(TruncationError):
        AdditiveProcessConfig(truncation_m=0)
    cfg = AdditiveProcessConfig()
    m = cfg.resolve_m(1.0)
    assert abs(cfg.residual_third_cumulant(1.0, m)) <= cfg.cumulant_tol
    assert AdditiveProcessConfig(truncation_m=7, cumulant_tol=0.1).resolve_m(1.0) == 7
    with pytest.raises(TruncationError):
        AdditiveProcessConfig(truncation_m=7).resolve_m(1.0)


# -- multiplier --------------------------------------------------------------

def test_u_generic_matches_closed_form_cdf():
    dens = GhsDensity(2, 4)
    u = sample_u(GENERIC, 2, 4, SeededStream(17), 200_000)
    assert np.all(u > 0)
    ks = stats.kstest(u, dens.closed_form_cdf)
    assert ks.statistic < special.kolmogi(1e-3) / math.sqrt(u.size)


def test_u_fast_path_matches_closed_form_cdf():
    u = sample_u(AdditiveProcessConfig(), 2, 4, SeededStream(18), 10 ** 6)
    ks = stats.kstest(u, GhsDensity(2, 4).closed_form_cdf)
    assert ks.statistic < special.kolmogi(1e-3) / math.sqrt(u.size)


@pytest.mark.parametrize("config", [GENERIC, AdditiveProcessConfig()], ids=["generic", "fast"])
def test_u_moment_transport(config):
    u = sample_u(config, 2, 4, SeededStream(19), 400_000)
    for ell in (2, 4):
        target = gamma_moment(2, ell) / gamma_moment(4, ell)
        x = u ** ell
        assert abs(x.mean() - target) < 4 * x.std() / math.sqrt(x.size)
    assert gamma_moment(2, 2) / gamma_moment(4, 2) == pytest.approx(1 / nu_sq(4), rel=1e-13)


def test_u_generic_pair_moments():
    u = sample_u(GENERIC, 1.5, 3, SeededStream(20), 200_000)
    for ell in (2, 4):
        target = gamma_moment(1.5, ell) / gamma_moment(3, ell)
        x = u ** ell
        assert abs(x.mean() - target) < 4 * x.std() / math.sqrt(x.size)


def test_product_identity_gaussian():
    rep = product_identity_check(2, 4, SeededStream(7), 10 ** 6)
    assert rep.passed
    assert rep.ks_pvalue > 1e-3


def test_product_identity_laplace():
    rep = product_identity_check(1, 2, SeededStream(8), 10 ** 6)
    assert rep.ks_pvalue > 1e-3
    assert rep.passed


def test_product_identity_guard():
    with pytest.raises(ValueError):
        product_identity_check(4, 4, SeededStream(0), 100)


def test_ks_critical_value():
    n = 10 ** 6
    assert ks_critical_two_sample(n, n) == pytest.approx(1.9495 * math.sqrt(2 / n), rel=1e-3)


# -- integral identity -------------------------------------------------------

def test_identity_trivial_and_classical():
    assert ghs_identity_check(4, 0.0, 1.7) < 1e-10
    assert ghs_identity_check(2, 0.7, 1.0) < 1e-8


def test_identity_p4_closed_form_and_mellin():
    assert ghs_identity_check(4, 1.1, 2.3, method="closed_form") < 1e-6
    assert ghs_identity_check(4, 1.1, 2.3, method="mellin") < 1e-6


def test_identity_p3_mellin():
    assert ghs_identity_check(3, 0.8, 1.5) < 1e-6


def test_identity_monte_carlo():
    assert ghs_identity_check(4, 0.6, 1.2, method="mc", stream=SeededStream(3),
                              n_draws=100_000) < 1e-2


def test_identity_domain():
    with pytest.raises(ValueError):
        ghs_identity_check(1.5, 0.3, 1.0)
    with pytest.raises(ValueError):
        ghs_identity_check(4, 0.3, 0.0)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpcw.numerics import SeededStream, integrate
from lpcw.rho_dist import (CumulantDomainError, DivergentIntegralError, PExponent, Regime, RhoP,
                           abs_moment, moment_ratio_check, psi_bivariate, psi_p,
                           rademacher_measure, rho_p_measure, sample_rho_p, sampled_measure)
from oracles import gamma_moment, nu_sq


def test_regimes():
    assert PExponent(0.5).regime is Regime.SUB_LINEAR
    assert PExponent(1.0).regime is Regime.SELF_NORMALIZED
    assert PExponent(1.5).regime is Regime.SELF_NORMALIZED
    assert PExponent(2.0).regime is Regime.BOUNDARY
    assert PExponent(2.5).regime is Regime.GHS_TRACTABLE
    for bad in (0, -1, math.inf, math.nan):
        with pytest.raises(ValueError):
            PExponent(bad)


@pytest.mark.parametrize("p", [0.5, 1, 1.5, 2, 3, 4, 8, 16])
def test_normalization_and_pth_moment(p):
    d = RhoP.of(p)
    # large p gives a flat top with a steep edge near |x| = 1
    pts = (0.0,) if p <= 4 else (-1.5, -1.0, 0.0, 1.0, 1.5)
    mass, _ = integrate(d.pdf, -math.inf, math.inf, points=pts)
    assert mass == pytest.approx(1.0, abs=1e-10)
    with np.errstate(divide="ignore", over="ignore"):
        # |x|^p rho_p(x) in log form, so the far tail stays finite
        g = lambda x: np.exp(p * np.log(np.abs(x)) - np.abs(x) ** p / p + d.log_c_p)
        mp_, _ = integrate(g, -math.inf, math.inf, points=pts)
    assert mp_ == pytest.approx(1.0, abs=1e-10)
    assert d.c_p == pytest.approx(p ** (-1 / p) / (2 * math.gamma(1 + 1 / p)), rel=1e-13)


@pytest.mark.parametrize("p", [1, 1.5, 2, 3, 4, 8])
@pytest.mark.parametrize("ell", [1, 2, 3, 4, 6])
def test_gamma_moment_identity(p, ell):
    d = RhoP.of(p)
    q, _ = integrate(lambda x: 2 * x ** ell * d.pdf(x), 0, math.inf)
    assert abs_moment(p, ell) == pytest.approx(gamma_moment(p, ell), rel=1e-12)
    assert q == pytest.approx(gamma_moment(p, ell), rel=1e-8)


def test_nu_sq_monotone_and_boundary():
    assert RhoP.of(2).nu_p_sq == pytest.approx(1.0, abs=1e-14)
    grid = np.linspace(2, 64, 63)
    vals = [RhoP.of(p).nu_p_sq for p in grid]
    assert np.all(np.diff(vals) < 0)
    for p in (3, 4, 8):
        assert RhoP.of(p).nu_p_sq == pytest.approx(nu_sq(p), rel=1e-13)


# -- sampler -----------------------------------------------------------------

def _within(sample, target, k=4.0):
    se = sample.std(ddof=1) / math.sqrt(sample.size)
    return abs(sample.mean() - target) < k * se


def test_sampler_gaussian_case():
    x = sample_rho_p(RhoP.of(2), SeededStream(1), 10 ** 6)
    assert _within(x, 0.0)
    assert _within(x * x, 1.0)


def test_sampler_exponential_case():
    x = sample_rho_p(RhoP.of(1), SeededStream(2), 10 ** 6)
    assert _within(np.abs(x), 1.0)


def test_sampler_fourth_moment_p4():
    x = sample_rho_p(RhoP.of(4), SeededStream(3), 10 ** 6)
    assert _within(x ** 4, gamma_moment(4, 4))


def test_sampler_symmetry_and_reproducibility():
    d = RhoP.of(3)
    a = sample_rho_p(d, SeededStream(9), 2 * 10 ** 5)
    b = sample_rho_p(d, SeededStream(9), 2 * 10 ** 5)
    assert np.array_equal(a, b)
    from scipy.stats import ks_2samp
    assert ks_2samp(a, -sample_rho_p(d, SeededStream(10), 2 * 10 ** 5)).pvalue > 1e-3


# -- psi_p -------------------------------------------------------------------

def test_psi_trivial_values():
    assert psi_p(RhoP.of(4), 0.0) == 0.0
    assert psi_p(RhoP.of(2), 1.3) == pytest.approx(0.845, abs=1e-12)


def test_psi_p4_bracket_at_one():
    nu2 = nu_sq(4)
    v = psi_p(RhoP.of(4), 1.0)
    assert math.log(math.cosh(math.sqrt(nu2))) <= v <= nu2 / 2


@pytest.mark.parametrize("p", [2, 2.5, 3, 4, 6, 10])
def test_psi_mgf_sandwich(p):
    d = RhoP.of(p)
    nu = math.sqrt(d.nu_p_sq)
    for t in np.linspace(0.05, 6, 12):
        v = d.psi(t)
        assert v <= d.nu_p_sq * t * t / 2 + 1e-8
        assert v >= math.log(math.cosh(nu * t)) - 1e-8


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 30), p=st.sampled_from([1.2, 1.5, 2.0, 3.0, 4.0]))
def test_psi_even_exactly(t, p):
    d = RhoP.of(p)
    assert d.psi(t) == d.psi(-t)


def test_psi_divergence_for_small_p():
    with pytest.raises(DivergentIntegralError):
        RhoP.of(0.5).psi(0.1)
    with pytest.raises(DivergentIntegralError):
        RhoP.of(1).psi(1.0)
    assert RhoP.of(0.5).psi(0.0) == 0.0


def test_psi_derivatives_match_finite_differences():
    d = RhoP.of(3)
    t, h = 0.8, 1e-4
    v, d1, d2 = d.psi_derivatives(t)
    assert d1 == pytest.approx((d.psi(t + h) - d.psi(t - h)) / (2 * h), rel=1e-6)
    assert d2 == pytest.approx((d.psi(t + h) - 2 * v + d.psi(t - h)) / h ** 2, rel=1e-4)


def test_psi_large_argument_asymptotics():
    # psi_p(t) ~ (p-1)/p t^{p/(p-1)} plus lower order terms
    d = RhoP.of(1.5)
    t = 1e4
    lead = (1.5 - 1) / 1.5 * t ** 3
    assert d.psi(t) / lead == pytest.approx(1.0, rel=1e-9)


# -- bivariate cumulants -----------------------------------------------------

def test_bivariate_basic_properties():
    m = rho_p_measure(4)
    cum = m.cumulant
    assert cum(0.0, 0.0) == 0.0
    rng = np.random.default_rng(0)
    for _ in range(10):
        u1, u2 = rng.uniform(-2, 2, 2)
        v1, v2 = rng.uniform(-1, 0.2, 2)
        assert cum(u1, v1) == pytest.approx(cum(-u1, v1), abs=1e-12)
        mid = cum((u1 + u2) / 2, (v1 + v2) / 2)
        assert mid <= (cum(u1, v1) + cum(u2, v2)) / 2 + 1e-9


def test_bivariate_rademacher():
    m = rademacher_measure(4)
    for u, v in [(0.3, -0.2), (2.0, 1.0), (-1.1, 0.0)]:
        assert psi_bivariate(m, u, v) == pytest.approx(math.log(math.cosh(u)) + v, abs=1e-14)


def test_bivariate_exponential_closed_form():
    m = rho_p_measure(1)
    u, v = 0.3, -0.2
    closed = math.log((1 - v) / ((1 - v) ** 2 - u ** 2))
    assert psi_bivariate(m, u, v) == pytest.approx(closed, abs=1e-10)
    with pytest.raises(CumulantDomainError):
        psi_bivariate(m, 0.9, 0.2)


def test_bivariate_gradient_hessian():
    cum = rho_p_measure(3).cumulant
    u, v, h = 0.7, -0.3, 1e-4
    val, g, hess = cum.grad_hess(u, v)
    assert val == pytest.approx(cum(u, v), abs=1e-13)
    assert g[0] == pytest.approx((cum(u + h, v) - cum(u - h, v)) / (2 * h), rel=1e-6)
    assert g[1] == pytest.approx((cum(u, v + h) - cum(u, v - h)) / (2 * h), rel=1e-6)
    gu = lambda vv: (cum(u + h, vv) - cum(u - h, vv)) / (2 * h)
    assert hess[0, 1] == pytest.approx((gu(v + h) - gu(v - h)) / (2 * h), rel=1e-3)


def test_sampled_measure_tracks_exact_cumulant():
    x = sample_rho_p(RhoP.of(4), SeededStream(5), 400_000)
    m = sampled_measure(x, 4.0, se_target=2e-3)
    exact = rho_p_measure(4).cumulant
    for u, v in [(0.5, -0.1), (1.0, 0.0), (0.0, -0.5)]:
        se = m.cumulant.std_error(u, v)
        assert abs(m.cumulant(u, v) - exact(u, v)) < 5 * se + 1e-3
    assert m.p_moment == 1.0
    with pytest.raises(ValueError):
        sampled_measure(np.array([0.0, 1.0]), 2.0)


def test_base_measure_symmetry_and_moment():
    m = rho_p_measure(3)
    x = m.sample(SeededStream(4), 2 * 10 ** 5)
    assert _within(np.abs(x) ** 3, 1.0)
    assert m.beta_c == pytest.approx(1 / nu_sq(3), rel=1e-12)


# -- moment ratio ------------------------------------------------------------

def test_moment_ratio_examples():
    assert moment_ratio_check(3, 3, 4)
    assert moment_ratio_check(4, 2, 4)
    assert moment_ratio_check(6, 3, 6)
    # normalized 4th moment of rho_4 below the Gaussian value 3
    assert gamma_moment(4, 4) / nu_sq(4) ** 2 < 3.0

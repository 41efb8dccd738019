"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary by ``conftest.py``.
"""

import math

import numpy as np
import pytest
from scipy import special, stats

from lpcw.free_energy import (b_np, beta_c, ld_free_energy, legendre_rate,
                              limiting_free_energy_p_ge_2, optimal_t_star, p_threshold,
                              rate_function_rho1, tau)
from lpcw.ghs import (AdditiveProcessConfig, GhsDensity, ghs_identity_check, ks_critical_two_sample,
                      log_gamma_cdf, product_identity_check, sample_u, sample_y_marginal,
                      sample_y_path)
from lpcw.numerics import SeededStream
from lpcw.oracle import bnp_bruteforce, grid_oracle_1d, partition_quadrature
from lpcw.rho_dist import RhoP, moment_ratio_check, rho_p_measure, sample_rho_p
from lpcw.sphere_mc import GibbsParams, magnetization_stats
from oracles import theta24_normalized, theta24_stated

RESULTS = {}


def record(number, ok, detail):
    RESULTS[number] = (bool(ok), detail)
    assert ok, detail


def test_criterion_01_beta_c():
    grid = np.arange(2, 65)
    vals = np.array([beta_c(p) for p in grid])
    errs = (abs(beta_c(2) - 1.0), abs(beta_c(1) - 0.5))
    ok = (max(errs) <= 1e-12 and np.all(np.diff(vals) > 0) and 2.5 < beta_c(64) < 3.0
          and abs(beta_c(1e4) - 3.0) < 0.01)
    record(1, ok, f"|beta_c(2)-1|={errs[0]:.1e}, |beta_c(1)-1/2|={errs[1]:.1e}, "
                  f"beta_c(64)={beta_c(64):.4f}, beta_c(1e4)={beta_c(1e4):.4f}")


def test_criterion_02_product_identity():
    n = 10 ** 6
    stream = SeededStream(2026)
    prod = sample_rho_p(RhoP.of(4), stream.child(0), n) * sample_u(AdditiveProcessConfig(), 2, 4,
                                                                    stream.child(1), n)
    direct = sample_rho_p(RhoP.of(2), stream.child(2), n)
    ks = stats.ks_2samp(prod, direct).statistic
    crit = ks_critical_two_sample(n, n)
    zs = []
    for k, target in ((2, 1.0), (4, 3.0)):
        x = prod ** k
        zs.append((x.mean() - target) / (x.std(ddof=1) / math.sqrt(n)))
    rep = product_identity_check(2, 4, SeededStream(2027), n)
    ok = ks < crit and all(abs(z) < 4 for z in zs) and rep.passed
    record(2, ok, f"KS={ks:.2e} < {crit:.2e}, moment z (2,4)=({zs[0]:+.2f}, {zs[1]:+.2f})")


@pytest.mark.xfail(strict=True, reason="the stated prefactor integrates to 1/2; "
                                       "see test_criterion_03_normalized_companion")
def test_criterion_03_mellin_vs_stated_closed_form():
    dens = GhsDensity(2, 4)
    us = np.arange(0.25, 3.0 + 1e-9, 0.25)
    err = max(abs(dens.mellin(u).value - theta24_stated(u)) for u in us)
    record(3, err < 1e-6, f"max |theta_mellin - stated form| = {err:.3e} (tolerance 1e-6)")


def test_criterion_03_normalized_companion():
    dens = GhsDensity(2, 4)
    us = np.arange(0.25, 3.0 + 1e-9, 0.25)
    err = max(abs(dens.mellin(u).value - theta24_normalized(u)) for u in us)
    ratio = dens.mellin(1.0).value / theta24_stated(1.0)
    assert err < 1e-6
    assert ratio == pytest.approx(2.0, rel=1e-8)


def test_criterion_04_additive_process():
    n = 10 ** 5
    cfg = AdditiveProcessConfig(fast_path=False)
    crit = special.kolmogi(1e-3) / math.sqrt(n)
    ks = []
    for i, t in enumerate((0.25, 0.5, 1.0)):
        y = sample_y_marginal(t, n, SeededStream(40 + i), cfg)
        ks.append(stats.kstest(y, log_gamma_cdf(t)).statistic)
    path = sample_y_path([0.25, 0.5, 1.0], n, SeededStream(43), cfg)
    d = np.diff(path, axis=1)
    rho = np.corrcoef(d[:, 0], d[:, 1])[0, 1]
    first = np.corrcoef(path[:, 0], d[:, 0])[0, 1]
    ok = max(ks) < crit and abs(rho) < 4 / math.sqrt(n) and abs(first) < 4 / math.sqrt(n)
    record(4, ok, f"max KS={max(ks):.2e} < {crit:.2e}, increment corr={rho:+.1e}, {first:+.1e}")


def test_criterion_05_integral_identity():
    xs, ys = (0.3, 0.7, 1.1), (0.5, 1.0, 2.3)
    r4 = max(ghs_identity_check(4, x, y) for x in xs for y in ys)
    r2 = max(ghs_identity_check(2, x, y) for x in xs for y in ys)
    record(5, r4 < 1e-6 and r2 < 1e-8, f"p=4 residual {r4:.1e}, p=2 residual {r2:.1e}")


def test_criterion_06_phase_transition():
    parts, ok = [], True
    for p in (3, 4, 8):
        lo = limiting_free_energy_p_ge_2(p, 0.5 * beta_c(p))
        hi = limiting_free_energy_p_ge_2(p, 3.0 * beta_c(p))
        gap = max(lo.extras["form_gap"], hi.extras["form_gap"])
        ok &= abs(lo.value) <= 1e-8 and hi.value > 1e-4 and gap <= 1e-6
        parts.append(f"p={p}: {lo.value:.1e} / {hi.value:.4f} (gap {gap:.0e})")
    record(6, ok, "; ".join(parts))


def test_criterion_07_large_deviation_consistency():
    beta = 3.0 * beta_c(4)
    ld = ld_free_energy(rho_p_measure(4), beta).value
    g = limiting_free_energy_p_ge_2(4, beta).value
    record(7, abs(ld - g) < 1e-4, f"sup(F - I)={ld:.8f}, sup G={g:.8f}, diff={abs(ld - g):.1e}")


def test_criterion_08_clt():
    beta = 0.5 * beta_c(4)
    st = magnetization_stats(GibbsParams(2000, 4, beta), SeededStream(8), 200_000)
    target = 1.0 / (beta_c(4) - beta)
    rel = abs(st.var_sqrt_n_m / target - 1.0)
    kz = (st.kurtosis - 3.0) / st.kurtosis_se
    record(8, rel < 0.05 and abs(kz) < 4,
           f"var={st.var_sqrt_n_m:.4f} vs {target:.4f} (rel {rel:.3f}), kurtosis z={kz:+.2f}")


def test_criterion_09_bimodality():
    st = magnetization_stats(GibbsParams(500, 4, 3.0 * beta_c(4)), SeededStream(9), 100_000)
    mass = st.mass_below(0.05)
    record(9, mass < 0.10, f"Gibbs mass of |m| < 0.05 = {mass:.2e}, ESS {st.ess:.0f}")


def test_criterion_10_rho1_closed_form():
    m = rho_p_measure(1)
    pts = [(0.0, 1.0), (0.3, 1.0), (-0.5, 1.2), (0.9, 1.5), (0.1, 0.4),
           (1.0, 2.0), (-1.5, 2.5), (0.05, 0.1), (2.0, 3.0), (0.7, 0.8)]
    rate_err = max(abs(legendre_rate(m, x, y) - rate_function_rho1(x, y)) for x, y in pts)
    t_err = 0.0
    for beta in (0.6, 1.0, 2.0):
        f = lambda t: beta * t * t / 2 + np.log((1 + np.sqrt(np.clip(1 - t * t, 0, None))) / 2)
        t_err = max(t_err, abs(optimal_t_star(beta) - grid_oracle_1d(f, (0.0, 1.0), 1e-6).argmax[0]))
    zero = all(optimal_t_star(b) == 0.0 for b in (0.0, 0.25, 0.5))
    record(10, rate_err < 1e-6 and t_err < 1e-5 and zero,
           f"rate error {rate_err:.1e}, t_* error {t_err:.1e}, t_*=0 for beta<=1/2: {zero}")


def test_criterion_11_sub_linear():
    cont = max(abs(tau(p_threshold(k))[1] - tau(math.nextafter(p_threshold(k), 1.0))[1])
               for k in (2, 3, 4))
    bnp_ok, worst = True, 0.0
    for n in (2, 3, 4):
        for p in (0.3, 0.6, 0.9):
            ref = bnp_bruteforce(n, p, resolution=0.01)
            val = b_np(n, p)
            gap = (val - ref.value) / val
            worst = max(worst, gap)
            bnp_ok &= -1e-12 <= gap <= 5 * ref.resolution
    beta, p = 1.0, 0.5
    scaled = [n ** (1 - 2 / p) * math.log(partition_quadrature(n, p, beta).value) for n in (2, 3)]
    limit = 0.5 * beta * tau(p)[1]
    order_ok = (all(math.isfinite(s) for s in scaled) and 0 < scaled[0] < scaled[1] <= limit
                and all(s <= beta * b_np(n, p) for s, n in zip(scaled, (2, 3))))
    record(11, cont < 1e-10 and bnp_ok and order_ok,
           f"tau jump {cont:.1e}, B(n,p) rel gap <= {worst:.1e}, "
           f"n^(1-2/p) log Z = {scaled[0]:.4f}, {scaled[1]:.4f} <= {limit:.4f}")


def test_criterion_12_moment_bounds():
    ps = (2, 3, 4, 6)
    ratios = all(moment_ratio_check(p, q, ell) for p in ps for q in ps if p >= q
                 for ell in (2, 4, 6))
    worst = math.inf
    for p in (2, 2.5, 3, 4, 6, 8):
        d = RhoP.of(p)
        for t in np.linspace(0.1, 5.0, 10):
            v = d.psi(t)
            worst = min(worst, d.nu_p_sq * t * t / 2 - v, v - math.log(math.cosh(math.sqrt(d.nu_p_sq) * t)))
    record(12, ratios and worst >= -1e-8, f"moment ratios hold: {ratios}, min bound slack {worst:.1e}")

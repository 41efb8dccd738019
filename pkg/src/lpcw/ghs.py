"""Generalized Hubbard-Stratonovich machinery.

U_{p,q} (q < p) is the positive multiplier, independent of Z_p, with
Z_p * U_{p,q} equal in law to Z_q.  It is realized as a scaled exponential
of an increment of the additive process Y_t (Y_t ~ t log Gamma(t, 1)):

    U_{p,q} = (q^{1/q} / p^{1/p}) * exp(Y_{1/q} - Y_{1/p}).

Its Mellin transform is the moment ratio E|Z_q|^s / E|Z_p|^s, which gives
the density by contour inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special, stats
from scipy.interpolate import CubicSpline

from .numerics import QuadratureSpec, SeededStream, integrate, log_gamma
from .rho_dist import RhoP, sample_rho_p

__all__ = [
    "GhsDensity",
    "MellinDiagnosticError",
    "TruncationError",
    "AdditiveProcessConfig",
    "theta_mellin",
    "log_gamma_cdf",
    "sample_y_marginal",
    "sample_y_increment",
    "sample_y_path",
    "sample_u",
    "ProductIdentityReport",
    "product_identity_check",
    "ghs_identity_check",
]


class MellinDiagnosticError(RuntimeError):
    """The truncated contour integral failed its accuracy checks."""


class TruncationError(ValueError):
    """The requested truncation cannot meet the declared tolerance."""


def _check_pair(q: float, p: float):
    if not (0 < q < p and math.isfinite(p)):
        raise ValueError(f"need 0 < q < p, got q={q}, p={p}")


# ---------------------------------------------------------------------------
# Density of U_{p,q}
# ---------------------------------------------------------------------------

def _closed_form(q: float, p: float):
    """(log-density, cdf) where a closed form is known, else None."""
    if (q, p) == (2.0, 4.0):
        # U^4 / 4 ~ Gamma(3/4)
        log_k = 0.5 * math.log(2.0) - log_gamma(0.75)
        return (lambda u: log_k + 2.0 * np.log(u) - u ** 4 / 4.0,
                lambda u: special.gammainc(0.75, np.asarray(u, float) ** 4 / 4.0))
    if (q, p) == (1.0, 2.0):
        # Rayleigh: a Laplace variable is a Gaussian scale mixture
        return (lambda u: np.log(u) - u * u / 2.0,
                lambda u: -np.expm1(-np.asarray(u, float) ** 2 / 2.0))
    return None


@dataclass(frozen=True)
class MellinResult:
    value: float
    log_value: float
    imag_residual: float
    richardson_gap: float
    contour_shift: float
    half_width: float
    n_nodes: int


@dataclass
class GhsDensity:
    """Density theta of U_{p,q} on (0, inf)."""

    q: float
    p: float
    step: float = 0.01
    imag_tol: float = 1e-8

    def __post_init__(self):
        self.q, self.p = float(self.q), float(self.p)
        _check_pair(self.q, self.p)
        cf = _closed_form(self.q, self.p)
        self._closed_log, self._closed_cdf = cf if cf else (None, None)

    @property
    def tail_exponent(self) -> float:
        return self.p * self.q / (self.p - self.q)

    @property
    def tail_constant(self) -> float:
        return (self.p - self.q) / (self.p * self.q)

    @property
    def scale(self) -> float:
        q, p = self.q, self.p
        return q ** (1 / q) / p ** (1 / p)

    @property
    def has_closed_form(self) -> bool:
        return self._closed_log is not None

    def closed_form(self, x):
        if self._closed_log is None:
            return None
        x = np.asarray(x, dtype=float)
        return np.exp(self._closed_log(x))

    def closed_form_cdf(self, x):
        if self._closed_cdf is None:
            return None
        return self._closed_cdf(x)

    # -- Mellin transform E U^s ----------------------------------------------

    def log_moment(self, s):
        """log E U^s, analytic for Re s > -1 - q (complex input allowed)."""
        q, p = self.q, self.p
        s = np.asarray(s)
        lg = special.loggamma if np.iscomplexobj(s) else special.gammaln
        return (s / q * math.log(q) + lg((s + 1) / q) - lg(1 / q)
                - s / p * math.log(p) - lg((s + 1) / p) + lg(1 / p))

    def _saddle(self, logx: float) -> float:
        q, p = self.q, self.p

        def slope(c):
            return (math.log(q) / q + special.digamma((c + 1) / q) / q
                    - math.log(p) / p - special.digamma((c + 1) / p) / p - logx)

        lo = -1.0 - 0.95 * q
        if slope(lo) >= 0:
            return lo
        hi = 1.0
        while slope(hi) < 0:
            hi *= 2.0
            if hi > 1e12:
                raise MellinDiagnosticError("saddle point search diverged")
        c = optimize.brentq(slope, lo, hi, xtol=1e-10)
        # c = -1 is a removable singularity of the digamma difference only
        if abs(c + 1.0) < 1e-3:
            c = -1.0 + 1e-3
        return c

    def mellin(self, x: float) -> MellinResult:
        if not x > 0:
            raise ValueError("x must be positive")
        q, p = self.q, self.p
        logx = math.log(x)
        c = self._saddle(logx)
        curv = (special.polygamma(1, (c + 1) / q) / q ** 2
                - special.polygamma(1, (c + 1) / p) / p ** 2)
        width = 1.0 / math.sqrt(max(curv, 1e-300))
        # fine step for narrow saddles, ~100 nodes per half-width for wide ones
        h = min(width / 8.0, max(self.step, width / 100.0))
        l0 = complex(self.log_moment(complex(c, 0.0)))

        def g(t):
            return np.exp(self.log_moment(c + 1j * t) - l0 - 1j * t * logx)

        # decay is Gaussian near 0, then exponential with rate pi (1/q - 1/p) / 2
        T = max(12.0 * width, 20.0)
        while abs(g(np.array([T]))[0]) > 1e-17 or abs(g(np.array([1.25 * T]))[0]) > 1e-17:
            T *= 1.5
            if T > 1e7:
                raise MellinDiagnosticError("contour integrand does not decay")
        n_half = int(math.ceil(T / h))
        n_half += n_half % 2
        t = np.arange(-n_half, n_half + 1) * h
        vals = g(t)
        integral = h * vals.sum()
        coarse = 2 * h * vals[::2].sum()
        re = integral.real / (2 * math.pi)
        im = abs(integral.imag) / (2 * math.pi)
        if not re > 0:
            raise MellinDiagnosticError(f"non-positive density estimate {re!r} at x={x}")
        imag_residual = im / re
        gap = abs(integral.real - coarse.real) / abs(integral.real)
        if imag_residual > self.imag_tol:
            raise MellinDiagnosticError(f"imaginary residual {imag_residual:.3g} above tolerance")
        log_val = l0.real - (1.0 + c) * logx + math.log(re)
        return MellinResult(math.exp(log_val), log_val, imag_residual, gap, c, T, t.size)

    def mellin_eval(self, x: float) -> float:
        return self.mellin(x).value

    def log_theta(self, x):
        """log density by contour inversion (stable far into the tails)."""
        if np.ndim(x):
            return np.array([self.mellin(float(xi)).log_value for xi in np.ravel(x)]).reshape(np.shape(x))
        return self.mellin(float(x)).log_value

    def theta(self, x):
        return np.exp(self.log_theta(x))

    def mass(self, spec: Optional[QuadratureSpec] = None) -> float:
        spec = spec or QuadratureSpec(abs_tol=1e-9, rel_tol=1e-9)
        # beyond x_max the tail law puts theta far below double underflow
        x_max = 2.0 * (800.0 / self.tail_constant) ** (1.0 / self.tail_exponent)
        val, _ = integrate(self.theta, 0.0, x_max, spec, points=(self.scale,))
        return val


def theta_mellin(density: GhsDensity, x: float) -> float:
    return density.mellin_eval(x)


# ---------------------------------------------------------------------------
# Additive process Y_t ~ t log Gamma(t)
# ---------------------------------------------------------------------------

def log_gamma_cdf(t: float):
    """CDF of t log X with X ~ Gamma(t, 1)."""
    return lambda y: special.gammainc(t, np.exp(np.asarray(y, float) / t))


@dataclass(frozen=True)
class AdditiveProcessConfig:
    """Truncation of the sum over k of the compensated jump processes V^(k).

    Summands k > truncation_m are replaced by a Gaussian with the exact
    residual variance.  What is left out is then the residual third
    cumulant, bounded by ``cumulant_tol``.  With truncation_m=None the
    smallest admissible m is chosen.
    """

    truncation_m: Optional[int] = None
    cumulant_tol: float = 1e-4
    fast_path: bool = True
    chunk: int = 50_000

    def __post_init__(self):
        if self.truncation_m is not None and self.truncation_m < 1:
            raise TruncationError("truncation_m must be >= 1")
        if not self.cumulant_tol > 0:
            raise ValueError("cumulant_tol must be positive")

    def residual_third_cumulant(self, t: float, m: int) -> float:
        # sum_{k>m} 2 f(t/k)^3 with f(x) = x / (1 + x)
        return -t ** 3 * float(special.polygamma(2, m + 1 + t))

    def resolve_m(self, t_max: float) -> int:
        if self.truncation_m is not None:
            m = self.truncation_m
            res = self.residual_third_cumulant(t_max, m)
            if res > self.cumulant_tol:
                raise TruncationError(
                    f"truncation_m={m} leaves third cumulant {res:.3g} > {self.cumulant_tol:.3g}")
            return m
        m = 1
        while self.residual_third_cumulant(t_max, m) > self.cumulant_tol:
            m *= 2
        lo, hi = m // 2, m
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.residual_third_cumulant(t_max, mid) > self.cumulant_tol:
                lo = mid
            else:
                hi = mid
        return max(hi, 1)


def _centering(t):
    # t Gamma'(t+1) / Gamma(t+1)
    return t * special.digamma(t + 1.0)


def _residual_var(t: float, m: int) -> float:
    # sum_{k>m} f(t/k)^2
    return t * t * float(special.polygamma(1, m + 1 + t))


def _chunks(n: int, size: int):
    start = 0
    while start < n:
        yield start, min(n, start + size)
        start += size


def sample_y_marginal(t: float, n: int, stream: SeededStream,
                      config: AdditiveProcessConfig = AdditiveProcessConfig()) -> np.ndarray:
    """Y_t = -U_t - Y + t Gamma'(t+1)/Gamma(t+1), with V_t^(k) ~ Exp(mean f(t/k))."""
    if not t > 0:
        raise ValueError("t must be positive")
    m = config.resolve_m(t)
    rng = stream.rng
    k = np.arange(1, m + 1)
    means = t / (k + t)
    sd_res = math.sqrt(_residual_var(t, m))
    out = np.empty(n)
    for a, b in _chunks(n, max(1, config.chunk * 8 // max(m, 1))):
        v = rng.standard_exponential((b - a, m)) @ means
        u_t = v - means.sum() + sd_res * rng.standard_normal(b - a)
        out[a:b] = -u_t - rng.standard_exponential(b - a) + _centering(t)
    return out


def _jump_increment(t1: float, t2: float, m: int, n: int, rng) -> np.ndarray:
    """Sum over k <= m of the compensated jumps of V^(k) on (t1, t2]."""
    k = np.arange(1, m + 1, dtype=float)
    # mass of the intensity 1/x - 1/(k+x) on (t1, t2]
    lam = math.log(t2 / t1) - np.log((k + t2) / (k + t1))
    total = lam.sum()
    cum = np.cumsum(lam) / total
    counts = rng.poisson(total, size=n)
    owner = np.repeat(np.arange(n), counts)
    n_pts = owner.size
    kk = k[np.minimum(np.searchsorted(cum, rng.random(n_pts), side="right"), m - 1)]
    # exact inverse CDF of the normalized intensity on (t1, t2]
    r = np.exp(rng.random(n_pts) * lam[(kk - 1).astype(int)])
    x = r * t1 * kk / (kk + t1 - r * t1)
    marks = x / (kk + x) * rng.standard_exponential(n_pts)
    jumps = np.bincount(owner, weights=marks, minlength=n)
    drift = np.sum(t2 / (k + t2) - t1 / (k + t1))
    return jumps - drift


def sample_y_increment(t1: float, t2: float, n: int, stream: SeededStream,
                       config: AdditiveProcessConfig = AdditiveProcessConfig()) -> np.ndarray:
    """Y_{t2} - Y_{t1} from the marked Poisson construction, 0 < t1 < t2."""
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    m = config.resolve_m(t2)
    rng = stream.rng
    sd_res = math.sqrt(max(_residual_var(t2, m) - _residual_var(t1, m), 0.0))
    shift = _centering(t2) - _centering(t1)
    out = np.empty(n)
    for a, b in _chunks(n, config.chunk):
        du = _jump_increment(t1, t2, m, b - a, rng) + sd_res * rng.standard_normal(b - a)
        out[a:b] = shift - du
    return out


def sample_y_path(times, n: int, stream: SeededStream,
                  config: AdditiveProcessConfig = AdditiveProcessConfig()) -> np.ndarray:
    """Y at increasing times, shape (n, len(times)): marginal at the first
    time, independent Poisson increments afterwards."""
    times = [float(t) for t in times]
    if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be positive and strictly increasing")
    out = np.empty((n, len(times)))
    out[:, 0] = sample_y_marginal(times[0], n, stream.child(0), config)
    for j in range(1, len(times)):
        out[:, j] = out[:, j - 1] + sample_y_increment(times[j - 1], times[j], n,
                                                       stream.child(j), config)
    return out


def sample_u(config: AdditiveProcessConfig, q: float, p: float, stream: SeededStream,
             n: int) -> np.ndarray:
    """Draws of U_{p,q}, i.e. Z_p * U equals Z_q in law."""
    _check_pair(q, p)
    if n < 1:
        raise ValueError("n must be >= 1")
    if config.fast_path and (q, p) == (2.0, 4.0):
        return (4.0 * stream.rng.standard_gamma(0.75, size=n)) ** 0.25
    dy = sample_y_increment(1.0 / p, 1.0 / q, n, stream, config)
    return (q ** (1 / q) / p ** (1 / p)) * np.exp(dy)


# ---------------------------------------------------------------------------
# Checks of the decomposition and of the integral identity
# ---------------------------------------------------------------------------

@dataclass
class ProductIdentityReport:
    q: float
    p: float
    n: int
    ks_statistic: float
    ks_critical: float
    ks_pvalue: float
    moment_z: dict = field(default_factory=dict)
    alpha: float = 1e-3

    @property
    def passed(self) -> bool:
        return (self.ks_statistic < self.ks_critical
                and all(abs(z) < 4.0 for z in self.moment_z.values()))

    def to_dict(self) -> dict:
        return {"q": self.q, "p": self.p, "n": self.n, "ks_statistic": self.ks_statistic,
                "ks_critical": self.ks_critical, "ks_pvalue": self.ks_pvalue,
                "moment_z": {str(k): v for k, v in self.moment_z.items()}, "passed": self.passed}


def ks_critical_two_sample(n: int, m: int, alpha: float = 1e-3) -> float:
    return float(special.kolmogi(alpha)) * math.sqrt((n + m) / (n * m))


def _moment_z(a: np.ndarray, b: np.ndarray, order: int) -> float:
    xa, xb = a ** order, b ** order
    se = math.sqrt(xa.var(ddof=1) / a.size + xb.var(ddof=1) / b.size)
    return float((xa.mean() - xb.mean()) / se)


def product_identity_check(q: float, p: float, stream: SeededStream, n: int,
                           config: AdditiveProcessConfig = AdditiveProcessConfig(),
                           alpha: float = 1e-3) -> ProductIdentityReport:
    """Compare Z_p * U_{p,q} with direct draws of Z_q."""
    _check_pair(q, p)
    z = sample_rho_p(RhoP.of(p), stream.child(0), n)
    u = sample_u(config, q, p, stream.child(1), n)
    direct = sample_rho_p(RhoP.of(q), stream.child(2), n)
    prod = z * u
    ks = stats.ks_2samp(prod, direct)
    zs = {k: _moment_z(prod, direct, k) for k in (2, 4, 6, 8)}
    return ProductIdentityReport(q, p, n, float(ks.statistic), ks_critical_two_sample(n, n, alpha),
                                 float(ks.pvalue), zs, alpha)


def _psi_table(dist: RhoP, s_max: float, nodes: int = 400) -> Callable:
    s = np.linspace(0.0, s_max, nodes)
    return CubicSpline(s, dist.psi(s))


def ghs_identity_check(p: float, x: float, y: float, method: str = "auto",
                       stream: Optional[SeededStream] = None, n_draws: int = 100_000,
                       config: AdditiveProcessConfig = AdditiveProcessConfig()) -> float:
    """Relative residual of y^{-1/p} exp(x^2 y^{-2/p}) = c_p E_U int exp(sqrt2 x z U - y|z|^p/p) dz.

    The inner z-integral is y^{-1/p} exp(psi_p(sqrt2 x y^{-1/p} U)) / c_p after
    rescaling.  The U-average is done by quadrature against the closed-form
    density ("closed_form"), the contour-inverted density ("mellin"), or
    Monte Carlo over U draws ("mc").  For p = 2 the multiplier is 1.
    """
    if p < 2:
        raise ValueError("the integral identity needs p >= 2")
    if not y > 0:
        raise ValueError("y must be positive")
    dist = RhoP.of(p)
    lhs = -math.log(y) / p + x * x * y ** (-2.0 / p)
    s = math.sqrt(2.0) * x * y ** (-1.0 / p)
    if p == 2:
        rhs = -math.log(y) / p + dist.psi(s)
        return abs(math.expm1(rhs - lhs))

    if method == "auto":
        method = "closed_form" if (2.0, float(p)) == (2.0, 4.0) else "mellin"
    dens = GhsDensity(2.0, p)
    if method in ("closed_form", "mellin"):
        if method == "closed_form":
            if not dens.has_closed_form:
                raise ValueError(f"no closed-form multiplier density for p={p}")
            log_theta = dens._closed_log
        else:
            log_theta = dens.log_theta
        spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12)
        # beyond u_max the multiplier density is below e^{-2000}
        u_max = 2.0 * (2000.0 / dens.tail_constant) ** (1.0 / dens.tail_exponent)
        ratio, _ = integrate(lambda u: np.exp(log_theta(u) + dist.psi(s * u) - s * s / 2.0),
                             0.0, u_max, spec, points=(1.0,))
        return abs(ratio - 1.0)
    if method == "mc":
        stream = stream or SeededStream(0)
        u = sample_u(config, 2.0, p, stream, n_draws)
        table = _psi_table(dist, s * float(u.max()) * 1.001 + 1e-12)
        ratio = float(np.mean(np.exp(table(s * u) - s * s / 2.0)))
        return abs(ratio - 1.0)
    raise ValueError(f"unknown method {method!r}")

"""The generalized-Gaussian family rho_p(x) = c_p exp(-|x|^p / p) and the
pluggable symmetric base measures used by the self-scaled model."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import QuadratureSpec, SeededStream, integrate, log_gamma

__all__ = [
    "Regime",
    "PExponent",
    "RhoP",
    "BivariateCumulant",
    "BaseMeasure",
    "DivergentIntegralError",
    "CumulantDomainError",
    "rho_p_measure",
    "gaussian_measure",
    "rademacher_measure",
    "sampled_measure",
    "sample_rho_p",
    "psi_p",
    "psi_bivariate",
    "abs_moment",
    "moment_ratio_check",
]


class DivergentIntegralError(ValueError):
    """The moment generating integral diverges at the requested argument."""


class CumulantDomainError(ValueError):
    """(u, v) lies outside the declared finite domain of the cumulant."""


class Regime(enum.Enum):
    SUB_LINEAR = "sub-linear"            # 0 < p < 1
    SELF_NORMALIZED = "self-normalized"  # 1 <= p < 2
    BOUNDARY = "boundary"                # p == 2
    GHS_TRACTABLE = "ghs-tractable"      # p > 2


@dataclass(frozen=True)
class PExponent:
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (p > 0 and math.isfinite(p)):
            raise ValueError(f"exponent p must be a positive finite real, got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def regime(self) -> Regime:
        if self.p < 1:
            return Regime.SUB_LINEAR
        if self.p < 2:
            return Regime.SELF_NORMALIZED
        if self.p == 2:
            return Regime.BOUNDARY
        return Regime.GHS_TRACTABLE


def _as_exponent(p) -> PExponent:
    return p if isinstance(p, PExponent) else PExponent(p)


# ---------------------------------------------------------------------------
# rho_p
# ---------------------------------------------------------------------------

def abs_moment(p: float, ell: float) -> float:
    """E|Z_p|^ell = p^(ell/p) Gamma((ell+1)/p) / Gamma(1/p)."""
    return math.exp(ell / p * math.log(p) + log_gamma((ell + 1) / p) - log_gamma(1 / p))


@dataclass(frozen=True)
class RhoP:
    """Density c_p exp(-|x|^p/p) with E|Z_p|^p = 1."""

    exponent: PExponent
    quad: QuadratureSpec = field(default_factory=QuadratureSpec, compare=False, repr=False)

    @classmethod
    def of(cls, p) -> "RhoP":
        return cls(_as_exponent(p))

    @property
    def p(self) -> float:
        return self.exponent.p

    @property
    def log_c_p(self) -> float:
        p = self.p
        return -math.log(p) / p - math.log(2.0) - log_gamma(1.0 + 1.0 / p)

    @property
    def c_p(self) -> float:
        return math.exp(self.log_c_p)

    @property
    def nu_p_sq(self) -> float:
        """Variance of Z_p."""
        p = self.p
        return math.exp(2.0 / p * math.log(p) + log_gamma(1.0 + 3.0 / p)
                        - math.log(3.0) - log_gamma(1.0 + 1.0 / p))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return np.exp(self.log_c_p - np.abs(x) ** self.p / self.p)

    def abs_moment(self, ell: float) -> float:
        return abs_moment(self.p, ell)

    def sample(self, stream: SeededStream, n: int) -> np.ndarray:
        return sample_rho_p(self, stream, n)

    # -- cumulant of X --------------------------------------------------------

    def _tilted_integrals(self, t: float, orders=((0, True),)):
        """Scaled integrals of x^k (e^{tx} +/- e^{-tx}) e^{-x^p/p} over (0, inf).

        ``orders`` holds (k, even) pairs: even=True takes the cosh
        combination (the integral of |x|^k e^{tx} rho_p), even=False the sinh
        combination (x^k with k odd).  Returns (log_scale, [I_k]) with the
        true integral equal to exp(log_scale) * I_k.
        """
        p = self.p
        t = abs(t)
        if p > 1:
            peak = t ** (1.0 / (p - 1.0)) if t > 0 else 0.0
            shift = t * peak - peak ** p / p
        elif p == 1:
            if t >= 1:
                raise DivergentIntegralError(f"E exp(tX) diverges for p=1, |t|={t} >= 1")
            peak, shift = 0.0, 0.0
        else:
            if t != 0:
                raise DivergentIntegralError("E exp(tX) diverges for p<1 and t != 0")
            peak, shift = 0.0, 0.0

        out = []
        for k, even in orders:
            sign = 1.0 if even else -1.0

            def g(x, k=k, sign=sign):
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    if peak >= 1.0:
                        # t x - x^p/p - shift = -peak^p ((1+s)^p - 1 - p s)/p, x = peak (1+s),
                        # written without cancelling large terms
                        s = (x - peak) / peak
                        hi = -peak ** p * (np.expm1(p * np.log1p(s)) - p * s) / p
                        hi = np.nan_to_num(hi, nan=-np.inf)
                    else:
                        hi = t * x - x ** p / p - shift
                    val = np.exp(hi) + sign * np.exp(hi - 2.0 * t * x)
                return val * x ** k if k else val

            pts = ()
            if peak > 0:
                # curvature scale of the log integrand at its peak
                width = 1.0 / math.sqrt((p - 1.0) * peak ** (p - 2.0)) if p > 1 else peak
                # small peaks leave the untilted unit scale in charge
                width = min(width, 1.0 + peak)
                pts = tuple(x for x in (peak - 30.0 * width, peak, peak + 30.0 * width) if x > 0)
            val, _ = integrate(g, 0.0, math.inf, self.quad, points=pts)
            out.append(val)
        return shift, out

    def psi(self, t):
        """Cumulant generating function log E exp(tX); even in t."""
        if np.ndim(t):
            return np.vectorize(self._psi_scalar, otypes=[float])(t)
        return self._psi_scalar(t)

    def _psi_scalar(self, t: float) -> float:
        t = abs(float(t))
        if t == 0.0:
            return 0.0
        shift, (i0,) = self._tilted_integrals(t)
        return self.log_c_p + shift + math.log(i0)

    def psi_derivatives(self, t: float) -> tuple[float, float, float]:
        """(psi, psi', psi'') at t; the derivatives are the tilted mean and variance."""
        t = float(t)
        if t == 0.0:
            return 0.0, 0.0, self.nu_p_sq
        shift, (i0, i1, i2) = self._tilted_integrals(t, ((0, True), (1, False), (2, True)))
        mean = i1 / i0
        var = i2 / i0 - mean * mean
        return self.log_c_p + shift + math.log(i0), math.copysign(mean, t), var

    def cumulant(self) -> "BivariateCumulant":
        p = self.p

        def domain(u, v):
            if not v < 1.0 / p:
                return False
            if p == 1:
                return abs(u) < 1.0 - v
            if p < 1:
                return u == 0
            return True

        def ev(u, v):
            if not domain(u, v):
                raise CumulantDomainError(f"(u, v)=({u}, {v}) outside the domain of psi_rho")
            r = 1.0 - p * v
            return -math.log(r) / p + self._psi_scalar(u * r ** (-1.0 / p))

        def grad_hess(u, v):
            if not domain(u, v):
                raise CumulantDomainError(f"(u, v)=({u}, {v}) outside the domain of psi_rho")
            r = 1.0 / (1.0 - p * v)
            a = r ** (1.0 / p)
            s = u * a
            f0, f1, f2 = self.psi_derivatives(s)
            val = math.log(r) / p + f0
            g = np.array([a * f1, r * (1.0 + s * f1)])
            h_uv = a * r * (f1 + s * f2)
            h = np.array([[a * a * f2, h_uv],
                          [h_uv, p * r * r * (1.0 + s * f1) + r * r * s * (f1 + s * f2)]])
            return val, g, h

        return BivariateCumulant(ev, domain, grad_hess=grad_hess, label=f"rho_{p:g}")


def sample_rho_p(dist: RhoP, stream: SeededStream, n: int) -> np.ndarray:
    """Exact draws via |Z|^p / p ~ Gamma(1/p, 1) and an independent sign."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = dist.p
    rng = stream.rng
    g = rng.standard_gamma(1.0 / p, size=n)
    signs = rng.integers(0, 2, size=n) * 2 - 1
    return signs * (p * g) ** (1.0 / p)


def psi_p(dist: RhoP, t):
    return dist.psi(t)


# ---------------------------------------------------------------------------
# General base measures
# ---------------------------------------------------------------------------

@dataclass
class BivariateCumulant:
    """psi_rho(u, v) = log E exp(uX + v|X|^p) together with its domain.

    ``grad_hess`` is optional; when present it returns (value, gradient,
    Hessian) and lets Legendre transforms use Newton steps.
    """

    eval: Callable[[float, float], float]
    domain: Callable[[float, float], bool]
    grad_hess: Optional[Callable] = None
    label: str = ""
    std_error: Optional[Callable[[float, float], float]] = None

    def __call__(self, u, v):
        return self.eval(u, v)


@dataclass
class BaseMeasure:
    """A symmetric law for X with E|X|^p = 1, exposed through a sampler and
    the bivariate cumulant of (X, |X|^p)."""

    p: float
    sampler: Callable[[SeededStream, int], np.ndarray]
    cumulant: BivariateCumulant
    p_moment: float = 1.0
    second_moment: float = 1.0
    name: str = "custom"
    neg_moment_alpha: Optional[float] = None
    # Existential in the theory; recorded as declared, never verified.
    exp_moment_theta: Optional[float] = None

    def sample(self, stream: SeededStream, n: int) -> np.ndarray:
        return self.sampler(stream, n)

    @property
    def beta_c(self) -> float:
        """1 / E[X^2]."""
        return 1.0 / self.second_moment


def rho_p_measure(p) -> BaseMeasure:
    dist = RhoP.of(p)
    return BaseMeasure(
        p=dist.p,
        sampler=lambda stream, n: sample_rho_p(dist, stream, n),
        cumulant=dist.cumulant(),
        p_moment=1.0,
        second_moment=dist.nu_p_sq,
        name=f"rho_{dist.p:g}",
        neg_moment_alpha=0.5,
    )


def gaussian_measure() -> BaseMeasure:
    m = rho_p_measure(2.0)
    m.name = "gaussian"
    return m


def rademacher_measure(p: float) -> BaseMeasure:
    """(delta_1 + delta_{-1}) / 2, normalized for every p since |X| = 1."""

    def sampler(stream, n):
        return (stream.rng.integers(0, 2, size=n) * 2 - 1).astype(float)

    def ev(u, v):
        au = abs(u)
        return au + math.log1p(math.exp(-2.0 * au)) - math.log(2.0) + v

    cum = BivariateCumulant(ev, lambda u, v: True, label="rademacher")
    return BaseMeasure(p=float(p), sampler=sampler, cumulant=cum, p_moment=1.0,
                       second_moment=1.0, name="rademacher", neg_moment_alpha=math.inf)


def sampled_measure(samples: np.ndarray, p: float, *, symmetrize: bool = True,
                    se_target: float = 1e-3, batch: int = 4096, name: str = "sampled",
                    seed: int = 0) -> BaseMeasure:
    """Empirical base measure from a sample of X (e.g. read from a file).

    The sample is symmetrized and rescaled so that its empirical p-th
    absolute moment equals one.  The cumulant is a Monte Carlo average over
    batches that double until the delta-method standard error drops below
    ``se_target`` or the pool is exhausted.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0 or np.any(x == 0):
        raise ValueError("samples must be non-empty with no atom at 0")
    if symmetrize:
        x = np.concatenate([x, -x])
    x = x / np.mean(np.abs(x) ** p) ** (1.0 / p)
    xp = np.abs(x) ** p
    order = np.random.Generator(np.random.PCG64(seed)).permutation(x.size)
    x, xp = x[order], xp[order]

    def _estimate(u, v):
        size = min(batch, x.size)
        while True:
            a = u * x[:size] + v * xp[:size]
            amax = a.max()
            if not np.isfinite(amax):
                raise CumulantDomainError("overflow in the empirical cumulant")
            w = np.exp(a - amax)
            mean = w.mean()
            se = w.std(ddof=1) / math.sqrt(size) / mean if size > 1 else math.inf
            if se <= se_target or size == x.size:
                return amax + math.log(mean), se
            size = min(2 * size, x.size)

    def ev(u, v):
        return _estimate(u, v)[0]

    cum = BivariateCumulant(ev, lambda u, v: True, label=name,
                            std_error=lambda u, v: _estimate(u, v)[1])

    def sampler(stream, n):
        return x[stream.rng.integers(0, x.size, size=n)]

    return BaseMeasure(p=float(p), sampler=sampler, cumulant=cum, p_moment=1.0,
                       second_moment=float(np.mean(x * x)), name=name)


def psi_bivariate(measure: BaseMeasure, u: float, v: float) -> float:
    """log E exp(uX + v|X|^p) under ``measure``."""
    cum = measure.cumulant
    if not cum.domain(u, v):
        raise CumulantDomainError(f"(u, v)=({u}, {v}) outside the domain of psi_rho")
    return cum.eval(u, v)


def moment_ratio_check(p: float, q: float, ell: float, tol: float = 1e-8) -> bool:
    """Whether nu_p^-ell E|Z_p|^ell <= nu_q^-ell E|Z_q|^ell (p >= q), both
    sides by quadrature, up to a relative tolerance ``tol``."""
    if not (p >= q > 0 and ell >= 2):
        raise ValueError("need p >= q > 0 and ell >= 2")

    def normalized(r):
        dist = RhoP.of(r)
        m_ell, _ = integrate(lambda x: x ** ell * dist.pdf(x), 0.0, math.inf)
        m_2, _ = integrate(lambda x: x * x * dist.pdf(x), 0.0, math.inf)
        return (2 * m_ell) / (2 * m_2) ** (ell / 2)

    lhs, rhs = normalized(p), normalized(q)
    return lhs <= rhs * (1 + tol)

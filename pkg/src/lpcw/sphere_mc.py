"""Monte Carlo for the l^p-constrained Curie-Weiss model.

Spins live on S_{n,p} = {sigma : (1/n) sum |sigma_i|^p = 1}.  A uniform point
is X / ||X||_{n,p} with X_i i.i.d. rho_p, so every Gibbs expectation is an
expectation over i.i.d. rho_p vectors.  Gibbs averages are importance
sampled: either straight from rho_p^n, or from a symmetric mixture of
exponentially tilted products, whose density ratio to rho_p^n depends on X
only through S = sum X_i and T = sum |X_i|^p.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .numerics import SeededStream
from .rho_dist import PExponent, RhoP, sample_rho_p

__all__ = [
    "SpinConfig",
    "GibbsParams",
    "McEstimate",
    "TiltMixture",
    "sample_tilted",
    "MagnetizationStats",
    "CltReport",
    "sample_sphere",
    "hamiltonian",
    "estimate_partition",
    "magnetization_stats",
    "clt_test",
    "HIST_EDGES",
]

HIST_EDGES = np.linspace(-1.5, 1.5, 202)


def _threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("LPCW_THREADS", "1") or 1)
    return max(1, threads)


def _map_chunks(fn, n_items: int, chunk: int, stream: SeededStream, threads=None) -> list:
    """Run fn(stream.child(i), size) over fixed chunks; results in chunk order."""
    sizes = [min(chunk, n_items - a) for a in range(0, n_items, chunk)]
    jobs = [(stream.child(i), s) for i, s in enumerate(sizes)]
    nt = _threads(threads)
    if nt == 1 or len(jobs) == 1:
        return [fn(st, s) for st, s in jobs]
    with ThreadPoolExecutor(max_workers=nt) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class SpinConfig:
    sigma: np.ndarray
    p: PExponent

    @property
    def n(self) -> int:
        return self.sigma.shape[-1]

    def constraint_gap(self) -> float:
        return float(np.max(np.abs(np.mean(np.abs(self.sigma) ** self.p.p, axis=-1) - 1.0)))

    @property
    def magnetization(self):
        return self.sigma.mean(axis=-1)


@dataclass(frozen=True)
class GibbsParams:
    n: int
    p: PExponent
    beta: float

    def __post_init__(self):
        if not isinstance(self.p, PExponent):
            object.__setattr__(self, "p", PExponent(self.p))
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")


@dataclass
class McEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    log_value: float = float("nan")
    rel_error: float = float("nan")

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_samples": self.n_samples,
                "seed": self.seed, "log_value": self.log_value, "rel_error": self.rel_error}


def _estimate_from_logs(logw: np.ndarray, seed: int) -> McEstimate:
    if np.isnan(logw).any():
        raise FloatingPointError("NaN in log weights")
    n = logw.size
    top = float(logw.max())
    w = np.exp(logw - top)
    mean = float(w.mean())
    rel = float(w.std(ddof=1) / math.sqrt(n) / mean) if n > 1 else float("inf")
    log_value = top + math.log(mean)
    value = math.exp(log_value) if log_value < 709.0 else float("inf")
    return McEstimate(value, value * rel, n, seed, log_value, rel)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_sphere(n: int, p, stream: SeededStream, size: Optional[int] = None) -> SpinConfig:
    """Uniform point(s) on S_{n,p}; ``size`` stacks independent configurations."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = p if isinstance(p, PExponent) else PExponent(p)
    rows = 1 if size is None else size
    x = sample_rho_p(RhoP(p), stream, rows * n).reshape(rows, n)
    norm = np.mean(np.abs(x) ** p.p, axis=1, keepdims=True) ** (1.0 / p.p)
    sigma = x / norm
    return SpinConfig(sigma[0] if size is None else sigma, p)


def hamiltonian(sigma: np.ndarray) -> np.ndarray:
    """(1/n) sum_{i<j} sigma_i sigma_j along the last axis."""
    n = sigma.shape[-1]
    s = sigma.sum(axis=-1)
    return (s * s - np.sum(sigma * sigma, axis=-1)) / (2.0 * n)


def _sums(x: np.ndarray, p: float):
    """S, sum x^2 and T/n for rows of i.i.d. draws."""
    return x.sum(axis=1), np.einsum("ij,ij->i", x, x), np.mean(np.abs(x) ** p, axis=1)


def _log_gibbs_weight(s, sq, tn, n, p, beta):
    # beta H_n(X / ||X||_{n,p}), H_n = (S^2 - sum x^2) / (2n) on the sphere
    scale = tn ** (-2.0 / p)
    return beta * (s * s - sq) * scale / (2.0 * n)


def _tangent_envelope(p: float, h: float):
    """Three-piece exponential hull of the concave log density l(x) = h x - |x|^p/p.

    Tangents at the points where l has dropped by one from its mode, joined by
    the flat tangent at the mode.  Returns the pieces' breakpoints, slopes and
    heights plus their normalized masses.
    """
    def ell(x):
        return h * x - abs(x) ** p / p

    def slope(x):
        return h - math.copysign(abs(x) ** (p - 1.0), x)

    mode = math.copysign(abs(h) ** (1.0 / (p - 1.0)), h) if h else 0.0
    top = ell(mode)
    target = top - 1.0
    span = 1.0
    while ell(mode - span) > target or ell(mode + span) > target:
        span *= 2.0
    xl = optimize.brentq(lambda x: ell(x) - target, mode - span, mode)
    xr = optimize.brentq(lambda x: ell(x) - target, mode, mode + span)
    sl, sr = slope(xl), slope(xr)
    z1 = xl + (top - ell(xl)) / sl
    z2 = xr + (top - ell(xr)) / sr
    masses = np.array([math.exp(ell(xl) + sl * (z1 - xl) - top) / sl,
                       z2 - z1,
                       math.exp(ell(xr) + sr * (z2 - xr) - top) / -sr])
    return (xl, sl, xr, sr, z1, z2, top), masses / masses.sum()


def sample_tilted(dist: RhoP, h: float, shape, rng) -> np.ndarray:
    """Exact draws from e^{hx} rho_p(x) / E e^{hX} for p >= 1.

    The tilted density is log-concave, so rejection from a tangent hull
    accepts a large, h-independent fraction of proposals.
    """
    p = dist.p
    size = int(np.prod(shape))
    if h == 0:
        return sample_rho_p(dist, _RngStream(rng), size).reshape(shape)
    if p < 1:
        raise ValueError("exponential tilts need p >= 1")
    if p == 1:
        a_h = abs(h)
        if a_h >= 1:
            raise ValueError("tilt must satisfy |h| < 1 for p = 1")
        pos = rng.random(size) < (1.0 + a_h) / 2.0
        rate = np.where(pos, 1.0 - a_h, 1.0 + a_h)
        x = np.where(pos, 1.0, -1.0) * rng.standard_exponential(size) / rate
        return (math.copysign(1.0, h) * x).reshape(shape)
    (xl, sl, xr, sr, z1, z2, top), probs = _tangent_envelope(p, h)
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        k = todo.size
        piece = np.searchsorted(np.cumsum(probs)[:-1], rng.random(k), side="right")
        e = rng.standard_exponential(k)
        x = np.where(piece == 0, z1 - e / sl,
                     np.where(piece == 2, z2 - e / sr, z1 + (z2 - z1) * rng.random(k)))
        hull = np.where(piece == 0, sl * (x - z1), np.where(piece == 2, sr * (x - z2), 0.0))
        log_acc = h * x - np.abs(x) ** p / p - top - hull
        ok = np.log(rng.random(k)) < log_acc
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out.reshape(shape)


class _RngStream:
    """Adapter so rho_dist samplers can draw from a bare Generator."""

    def __init__(self, rng):
        self.rng = rng


@dataclass
class TiltMixture:
    """Symmetric mixture of tilted product laws
    sum_j w_j prod_i exp(u_j x_i + v_j |x_i|^p - psi(u_j, v_j)) rho_p(x_i).

    Component j is a rescaled tilt a_j Y, Y ~ e^{h_j y} rho_p(y).  Choosing
    v_j = -h_j psi_p'(h_j) / p makes it flat under X -> lambda X to first
    order (since E_h |Y|^p = 1 + h psi_p'(h)), so importance weights depend
    on X essentially through its direction, as the target does.  Then
    a_j = (1 + h_j psi_p'(h_j))^{-1/p}, E|X|^p = 1, u_j = h_j / a_j and
    psi(u_j, v_j) = psi_p(h_j) - log(1 + h_j psi_p'(h_j)) / p.
    """

    p: float
    n: int
    h: np.ndarray
    log_w: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.log_w = np.asarray(self.log_w, dtype=float)
        self.log_w = self.log_w - logsumexp(self.log_w)
        dist = RhoP.of(self.p)
        cache = {}
        for hj in np.unique(np.abs(self.h)):
            cache[hj] = dist.psi_derivatives(hj)
        psi = np.array([cache[abs(hj)][0] for hj in self.h])
        big_h = np.array([abs(hj) * cache[abs(hj)][1] for hj in self.h])
        self.scale = (1.0 + big_h) ** (-1.0 / self.p)
        self.u = self.h / self.scale
        self.v = -big_h / self.p
        self.psi = psi - np.log1p(big_h) / self.p
        # each component has E|X|^p = 1; its typical magnetization and spread
        self.typical_m = np.array([math.copysign(cache[abs(hj)][1], hj) for hj in self.h]) * self.scale
        self.spread_m = np.sqrt([cache[abs(hj)][2] for hj in self.h]) * self.scale

    @classmethod
    def gaussian(cls, p: float, n: int, target_var: float, inflate: float = 1.25) -> "TiltMixture":
        """Tilts spreading S/sqrt(n) to roughly N(0, inflate * target_var)."""
        nu2 = RhoP.of(p).nu_p_sq
        extra = max(inflate * target_var - nu2, 0.0)
        tau = math.sqrt(extra / (n * nu2 * nu2))
        if tau == 0:
            return cls(p, n, [0.0], [0.0])
        step = 0.5 / (math.sqrt(n * nu2))
        k = int(math.ceil(5.0 * tau / step))
        h = np.arange(-k, k + 1) * step
        return cls(p, n, h, -0.5 * (h / tau) ** 2)

    @classmethod
    def spread(cls, p: float, n: int, m_max: float = 0.95, defensive: float = 0.1) -> "TiltMixture":
        """Tilts whose typical magnetizations cover [-m_max, m_max] evenly,
        plus an untilted defensive component."""
        dist = RhoP.of(p)

        def stats_at(h):
            _, d1, d2 = dist.psi_derivatives(h)
            a = (1.0 + h * d1) ** (-1.0 / p)
            return d1 * a, math.sqrt(d2) * a

        cap = 0.999 if p == 1 else 1e4
        h_top = 0.25
        while stats_at(h_top)[0] < m_max and h_top < cap:
            h_top = min(2.0 * h_top, cap)
        pos = [0.0]
        while pos[-1] < h_top:
            m0, sd0 = stats_at(pos[-1])
            m1, _ = stats_at(pos[-1] + 1e-4)
            slope = max((m1 - m0) / 1e-4, 1e-6)
            # move the typical magnetization by about half its standard deviation
            pos.append(min(pos[-1] + 0.5 * sd0 / math.sqrt(n) / slope, h_top))
        pos = np.array(pos[1:])
        h = np.concatenate([-pos[::-1], [0.0], pos])
        w = np.full(h.size, (1.0 - defensive) / (h.size - 1))
        w[pos.size] = defensive
        return cls(p, n, h, np.log(w))

    def sample(self, rows: int, rng) -> np.ndarray:
        dist = RhoP.of(self.p)
        comp = rng.choice(self.h.size, size=rows, p=np.exp(self.log_w))
        x = np.empty((rows, self.n))
        for j in np.unique(comp):
            idx = np.flatnonzero(comp == j)
            x[idx] = self.scale[j] * sample_tilted(dist, float(self.h[j]), (idx.size, self.n), rng)
        return x

    def log_ratio(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """log of (proposal density / rho_p^n) given S = sum x_i, T = sum |x_i|^p."""
        a = (self.log_w[None, :] + np.outer(s, self.u) + np.outer(t, self.v)
             - self.n * self.psi[None, :])
        return logsumexp(a, axis=1)


# ---------------------------------------------------------------------------
# Partition function
# ---------------------------------------------------------------------------

def _chunk_rows(n: int) -> int:
    return max(1, (1 << 20) // n)


def estimate_partition(params: GibbsParams, stream: SeededStream, n_samples: int,
                       reweighted: bool = False, threads: Optional[int] = None) -> McEstimate:
    """Z_{n,p}(beta) = E exp(beta H_n(X / ||X||_{n,p})), or with ``reweighted``
    the variant E[(T/n)^{-1/p} exp(beta S^2 (T/n)^{-2/p} / (2n))]."""
    n, p, beta = params.n, params.p.p, params.beta
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    dist = RhoP(params.p)

    def work(st, rows):
        x = sample_rho_p(dist, st, rows * n).reshape(rows, n)
        s, sq, tn = _sums(x, p)
        if reweighted:
            return -np.log(tn) / p + beta * s * s * tn ** (-2.0 / p) / (2.0 * n)
        return _log_gibbs_weight(s, sq, tn, n, p, beta)

    logw = np.concatenate(_map_chunks(work, n_samples, _chunk_rows(n), stream, threads))
    return _estimate_from_logs(logw, stream.seed)


# ---------------------------------------------------------------------------
# Magnetization
# ---------------------------------------------------------------------------

@dataclass
class MagnetizationStats:
    n: int
    p: float
    beta: float
    n_samples: int
    seed: int
    mean_m: float
    var_sqrt_n_m: float
    kurtosis: float
    kurtosis_se: float
    ess: float
    low_ess: bool
    log_partition: float
    proposal: str
    histogram: np.ndarray = field(repr=False)
    _m: np.ndarray = field(repr=False, default=None)
    _w: np.ndarray = field(repr=False, default=None)

    def mass_below(self, threshold: float) -> float:
        """Gibbs mass of |m| < threshold."""
        return float(self._w[np.abs(self._m) < threshold].sum())

    def to_dict(self) -> dict:
        return {
            "n": self.n, "p": self.p, "beta": self.beta, "n_samples": self.n_samples,
            "seed": self.seed, "mean_m": self.mean_m, "var_sqrt_n_m": self.var_sqrt_n_m,
            "kurtosis": self.kurtosis, "kurtosis_se": self.kurtosis_se, "ess": self.ess,
            "low_ess": self.low_ess, "log_partition": self.log_partition,
            "proposal": self.proposal, "mass_abs_m_below_0.05": self.mass_below(0.05),
            "histogram": {"edges": HIST_EDGES.tolist(), "mass": self.histogram.tolist()},
        }


def _auto_proposal(params: GibbsParams, proposal):
    """(mixture or None, label, adapt) for the requested proposal."""
    if isinstance(proposal, TiltMixture):
        return proposal, "tilted", False
    p, beta, n = params.p.p, params.beta, params.n
    if proposal == "uniform" or (proposal == "auto" and (beta == 0 or p < 1)):
        return None, "uniform", False
    if proposal not in ("auto", "tilted"):
        raise ValueError(f"unknown proposal {proposal!r}")
    if p < 1:
        raise ValueError("tilted proposals need p >= 1")
    beta_c = 1.0 / RhoP.of(p).nu_p_sq
    if beta < 0.9 * beta_c:
        return TiltMixture.gaussian(p, n, 1.0 / (beta_c - beta)), "tilted", False
    return TiltMixture.spread(p, n), "tilted-adaptive", True


def _draw_weighted(params: GibbsParams, mix, stream: SeededStream, n_samples: int, threads):
    """Magnetizations and log importance weights of n_samples proposal draws."""
    n, p, beta = params.n, params.p.p, params.beta
    dist = RhoP(params.p)

    def work(st, rows):
        if mix is None:
            x = sample_rho_p(dist, st, rows * n).reshape(rows, n)
        else:
            x = mix.sample(rows, st.rng)
        s, sq, tn = _sums(x, p)
        logw = _log_gibbs_weight(s, sq, tn, n, p, beta)
        if mix is not None:
            logw = logw - mix.log_ratio(s, n * tn)
        return s / (n * tn ** (1.0 / p)), logw

    parts = _map_chunks(work, n_samples, _chunk_rows(n), stream, threads)
    return np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts])


def _adapt(mix: TiltMixture, m: np.ndarray, logw: np.ndarray, defensive: float = 0.1) -> TiltMixture:
    """Reweight components by the pilot's Gibbs mass near their typical magnetization."""
    w = np.exp(logw - logw.max())
    w /= w.sum()
    m = np.concatenate([m, -m])
    w = np.concatenate([w, w]) / 2.0
    sd = mix.spread_m / math.sqrt(mix.n)
    mass = np.array([np.sum(w * np.exp(-0.5 * ((m - t) / s) ** 2)) for t, s in zip(mix.typical_m, sd)])
    if not mass.sum() > 0:
        return mix
    new_w = (1.0 - defensive) * mass / mass.sum() + defensive * np.exp(mix.log_w)
    return TiltMixture(mix.p, mix.n, mix.h, np.log(new_w))


def magnetization_stats(params: GibbsParams, stream: SeededStream, n_samples: int,
                        proposal="auto", threads: Optional[int] = None,
                        ess_warn_fraction: float = 0.01) -> MagnetizationStats:
    """Importance-sampled Gibbs statistics of m = (1/n) sum sigma_i.

    Every proposal draw X is used together with its mirror -X, so odd
    moments of m vanish exactly; ``n_samples`` counts distinct draws.  Near
    and above the critical point the tilt mixture is first adapted on a
    pilot run whose draws are then discarded.
    """
    n = params.n
    mix, label, adapt = _auto_proposal(params, proposal)
    if adapt:
        pilot = _draw_weighted(params, mix, stream.child(2**32), max(2000, n_samples // 10), threads)
        mix = _adapt(mix, *pilot)
    m, logw = _draw_weighted(params, mix, stream, n_samples, threads)
    if np.isnan(logw).any():
        raise FloatingPointError("NaN in importance weights")
    top = logw.max()
    w = np.exp(logw - top)
    log_partition = float(top + math.log(w.mean()))
    w = w / w.sum()
    ess = float(1.0 / np.sum(w * w))

    # antithetic mirror: the pair (m, -m) shares its weight
    mean_m = float(np.sum(w * (m + (-m))) / 2.0)
    x2 = n * m * m
    var = float(np.sum(w * x2))
    kurt = float(np.sum(w * x2 * x2) / var ** 2)
    hist = (np.histogram(m, HIST_EDGES, weights=w)[0] + np.histogram(-m, HIST_EDGES, weights=w)[0]) / 2.0
    low = ess < ess_warn_fraction * n_samples
    if low:
        warnings.warn(f"effective sample size {ess:.1f} below {ess_warn_fraction:.0%} of {n_samples}",
                      RuntimeWarning, stacklevel=2)
    return MagnetizationStats(n, params.p.p, params.beta, n_samples, stream.seed, mean_m, var, kurt,
                              math.sqrt(24.0 / ess), ess, low, log_partition, label, hist,
                              np.concatenate([m, -m]), np.concatenate([w, w]) / 2.0)


@dataclass
class CltReport:
    p: float
    beta: float
    target_var: float
    rows: list

    @property
    def passed(self) -> bool:
        return all(r["var_rel_err"] < 0.05 and abs(r["kurtosis_z"]) < 4.0 for r in self.rows)

    def to_dict(self) -> dict:
        return {"p": self.p, "beta": self.beta, "target_var": self.target_var,
                "rows": self.rows, "passed": self.passed}


def clt_test(params: GibbsParams, stream: SeededStream, n_grid: Sequence[int],
             n_samples: int = 50_000, threads: Optional[int] = None) -> CltReport:
    """Variance of sqrt(n) m against 1/(beta_c - beta) and a kurtosis z-score, per n."""
    p, beta = params.p.p, params.beta
    if p < 2:
        raise ValueError("the Gaussian limit is stated for p >= 2")
    beta_c = 1.0 / RhoP.of(p).nu_p_sq
    if not beta < beta_c:
        raise ValueError("need beta < beta_c(p)")
    target = 1.0 / (beta_c - beta)
    rows = []
    for i, n in enumerate(n_grid):
        st = magnetization_stats(GibbsParams(n, params.p, beta), stream.child(i), n_samples,
                                 threads=threads)
        rows.append({"n": n, "var": st.var_sqrt_n_m, "var_rel_err": abs(st.var_sqrt_n_m / target - 1.0),
                     "kurtosis": st.kurtosis, "kurtosis_z": (st.kurtosis - 3.0) / st.kurtosis_se,
                     "ess": st.ess})
    return CltReport(p, beta, target, rows)

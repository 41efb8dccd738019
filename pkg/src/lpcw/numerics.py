"""Shared numerical kernels: log-Gamma, double-exponential quadrature,
seeded random streams and a grid-plus-simplex maximizer."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "OptimizerSpec",
    "EmptyDomainError",
    "SeededStream",
    "VariationalSolution",
    "log_gamma",
    "integrate",
    "maximize",
    "minimize_scalar_golden",
]


# ---------------------------------------------------------------------------
# log-Gamma
# ---------------------------------------------------------------------------

def log_gamma(z):
    """Principal branch of log Gamma(z) for Re(z) > 0.

    Accepts scalars or arrays, real or complex.  Real input gives real output.
    """
    arr = np.asarray(z)
    if np.any(np.real(arr) <= 0) or np.any(np.isnan(arr)):
        raise ValueError("log_gamma: domain is Re(z) > 0")
    if np.iscomplexobj(arr):
        out = special.loggamma(arr.astype(complex))
    else:
        out = special.gammaln(arr.astype(float))
    if np.ndim(out) == 0:
        return out.item()
    return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for :func:`integrate`.

    ``max_subdivisions`` caps the number of abscissae evaluated on one
    sub-interval (each refinement level halves the trapezoid step).
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureSpec()


class QuadratureError(RuntimeError):
    """Raised when the quadrature fails to meet its tolerance.

    The partial estimate and the last error estimate are kept on the
    exception so callers can decide whether to use them anyway.
    """

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


_HALF_PI = 0.5 * math.pi
_T_FINITE = 3.2
_T_INFINITE = 4.5


def _abscissae(kind, t, a, b):
    """Nodes and weights of the double-exponential map at parameters ``t``."""
    s = _HALF_PI * np.sinh(t)
    ds = _HALF_PI * np.cosh(t)
    with np.errstate(over="ignore"):
        if kind == "tanh":                      # (a, b)
            half = 0.5 * (b - a)
            x = 0.5 * (a + b) + half * np.tanh(s)
            w = half * ds / np.cosh(s) ** 2
            keep = (x > a) & (x < b)
        elif kind == "exp":                     # (a, inf)
            u = np.exp(s)
            x, w = a + u, ds * u
            keep = x > a
        elif kind == "exp_neg":                 # (-inf, b)
            u = np.exp(s)
            x, w = b - u, ds * u
            keep = x < b
        else:                                   # (-inf, inf)
            x = np.sinh(s)
            w = ds * np.cosh(s)
            keep = np.ones_like(x, dtype=bool)
    keep &= np.isfinite(x) & np.isfinite(w) & (w > 0)
    return x[keep], w[keep]


def _de_rule(f, kind, a, b, spec):
    """Level-doubling trapezoid rule on a double-exponential map."""
    tmax = _T_FINITE if kind == "tanh" else _T_INFINITE

    def weighted_sum(t):
        x, w = _abscissae(kind, t, a, b)
        if x.size == 0:
            return 0.0
        fx = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
        prod = fx * w
        if not np.all(np.isfinite(prod)):
            raise QuadratureError("non-finite integrand value", math.nan, math.inf)
        return math.fsum(prod)

    h = 1.0
    kmax = math.floor(tmax)
    t0 = np.arange(-kmax, kmax + 1, dtype=float)
    total = weighted_sum(t0)
    n_eval = t0.size
    estimate = h * total
    err = math.inf
    level = 0
    while True:
        level += 1
        h *= 0.5
        m = math.floor(tmax / h)
        t_new = np.arange(-m, m + 1, dtype=float)
        t_new = t_new[(t_new.astype(np.int64) % 2) != 0] * h
        n_eval += t_new.size
        if n_eval > spec.max_subdivisions:
            raise QuadratureError("quadrature did not converge", estimate, err)
        total += weighted_sum(t_new)
        prev, estimate = estimate, h * total
        err = abs(estimate - prev)
        if level >= 3 and err <= max(spec.abs_tol, spec.rel_tol * abs(estimate)):
            return estimate, err


def integrate(f: Callable, lo: float, hi: float, spec: QuadratureSpec | None = None,
              points: Sequence[float] = ()) -> tuple[float, float]:
    """Integrate a vectorized ``f`` over ``(lo, hi)``.

    Infinite endpoints are handled with exp-sinh / sinh-sinh maps, finite
    intervals with tanh-sinh.  ``points`` are interior breakpoints (kinks,
    peaks) at which the range is split.  Returns ``(value, error_estimate)``.
    """
    spec = spec or DEFAULT_QUAD
    if lo == hi:
        return 0.0, 0.0
    if lo > hi:
        v, e = integrate(f, hi, lo, spec, points)
        return -v, e
    cuts = [lo] + sorted(p for p in points if lo < p < hi) + [hi]
    value = 0.0
    error = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        a_inf, b_inf = math.isinf(a), math.isinf(b)
        if a_inf and b_inf:
            v, e = _de_rule(f, "sinh", a, b, spec)
        elif b_inf:
            v, e = _de_rule(f, "exp", a, b, spec)
        elif a_inf:
            v, e = _de_rule(f, "exp_neg", a, b, spec)
        else:
            v, e = _de_rule(f, "tanh", a, b, spec)
        value += v
        error += e
    return value, error


def minimize_scalar_golden(f: Callable[[float], float], lo: float, hi: float,
                           tol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    """Golden-section search for a unimodal ``f`` on ``[lo, hi]``.

    Returns ``(x_min, f_min)``; the endpoints are also compared so a minimum
    sitting on the boundary is reported exactly.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    best = min([(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)], key=lambda r: r[0])
    return best[1], best[0]


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass
class SeededStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    The stream is single-owner: the underlying generator is created once and
    advanced by every draw.  Use :meth:`child` to hand independent streams to
    parallel workers.
    """

    seed: int = 0
    stream_id: int = 0
    path: tuple = ()
    _rng: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
            self._rng = np.random.Generator(np.random.PCG64(ss))
        return self._rng

    def child(self, index: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_id, self.path + (int(index),))


# ---------------------------------------------------------------------------
# Maximization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerSpec:
    domain_box: tuple
    grid_points_per_axis: int = 64
    refine_iterations: int = 200
    value_tol: float = 1e-10

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.domain_box)
        object.__setattr__(self, "domain_box", box)
        if self.grid_points_per_axis < 2:
            raise ValueError("grid_points_per_axis must be >= 2")
        if any(not lo < hi for lo, hi in box):
            raise ValueError("each axis needs lo < hi")
        if not self.value_tol > 0:
            raise ValueError("value_tol must be positive")


class EmptyDomainError(ValueError):
    """Every grid point evaluated to -inf (or nan)."""


@dataclass
class VariationalSolution:
    value: float
    argmax: tuple
    grid_gap: float
    refine_steps: int
    n_evals: int
    converged: bool
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "value": self.value,
            "argmax": list(self.argmax),
            "grid_gap": self.grid_gap,
            "refine_steps": self.refine_steps,
            "n_evals": self.n_evals,
            "converged": self.converged,
            **{k: v for k, v in self.extras.items()},
        }


def _clean(v):
    v = float(v)
    return -math.inf if math.isnan(v) else v


def maximize(f: Callable[..., float], spec: OptimizerSpec) -> VariationalSolution:
    """Grid scan over ``spec.domain_box`` followed by a bounded Nelder-Mead
    refinement started from the best grid point.

    ``f`` takes one positional argument per axis.  nan and -inf mark points
    outside the effective domain.  Grid ties go to the lexicographically
    smallest coordinate.
    """
    box = spec.domain_box
    dim = len(box)
    axes = [np.linspace(lo, hi, spec.grid_points_per_axis) for lo, hi in box]
    best_val = -math.inf
    runner = -math.inf
    best_x = None
    n_evals = 0
    for pt in itertools.product(*axes):
        v = _clean(f(*pt))
        n_evals += 1
        if v > best_val:
            runner = best_val
            best_val, best_x = v, pt
        elif v > runner:
            runner = v
    if best_x is None:
        raise EmptyDomainError("empty effective domain: f is -inf on the whole grid")
    grid_gap = best_val - runner

    lo_b = np.array([b[0] for b in box])
    hi_b = np.array([b[1] for b in box])
    steps = (hi_b - lo_b) / (spec.grid_points_per_axis - 1)

    def g(x):
        nonlocal n_evals
        n_evals += 1
        return -_clean(f(*np.clip(x, lo_b, hi_b)))

    x0 = np.array(best_x, dtype=float)
    simplex = [x0]
    for i in range(dim):
        e = x0.copy()
        e[i] = e[i] + 0.5 * steps[i] if e[i] + 0.5 * steps[i] <= hi_b[i] else e[i] - 0.5 * steps[i]
        simplex.append(e)
    simplex = np.array(simplex)
    fs = np.array([-best_val] + [g(s) for s in simplex[1:]])
    xtol = 1e-12 * (1.0 + np.max(np.abs(hi_b - lo_b)))
    it = 0
    converged = False
    for it in range(1, spec.refine_iterations + 1):
        order = np.argsort(fs, kind="stable")
        simplex, fs = simplex[order], fs[order]
        spread = fs[-1] - fs[0]
        diam = np.max(np.abs(simplex[1:] - simplex[0]))
        if (np.isfinite(spread) and spread <= spec.value_tol) or diam <= xtol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = np.clip(centroid + (centroid - simplex[-1]), lo_b, hi_b)
        fr = g(xr)
        if fr < fs[0]:
            xe = np.clip(centroid + 2.0 * (centroid - simplex[-1]), lo_b, hi_b)
            fe = g(xe)
            if fe < fr:
                simplex[-1], fs[-1] = xe, fe
            else:
                simplex[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            simplex[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (simplex[-1] - centroid)
            fc = g(xc)
            if fc < min(fr, fs[-1]):
                simplex[-1], fs[-1] = xc, fc
            else:
                for j in range(1, dim + 1):
                    simplex[j] = simplex[0] + 0.5 * (simplex[j] - simplex[0])
                    fs[j] = g(simplex[j])
    order = np.argsort(fs, kind="stable")
    x_best = np.clip(simplex[order[0]], lo_b, hi_b)
    v_best = -fs[order[0]]
    if v_best < best_val:       # never worse than the grid
        x_best, v_best = x0, best_val
    return VariationalSolution(
        value=float(v_best),
        argmax=tuple(float(c) for c in x_best),
        grid_gap=float(grid_gap),
        refine_steps=it,
        n_evals=n_evals,
        converged=converged,
    )

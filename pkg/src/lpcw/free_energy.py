"""Limiting free energies of the l^p-constrained Curie-Weiss model and of its
self-scaled generalizations, plus the explicit constants around them.

Variational problems are solved by grid scan plus bounded Nelder-Mead
(``numerics.maximize``) on a box that doubles along any axis whose upper
edge carries the maximizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .numerics import (OptimizerSpec, QuadratureError, VariationalSolution, log_gamma, maximize,
                       minimize_scalar_golden)
from .rho_dist import BaseMeasure, CumulantDomainError, RhoP, rho_p_measure

__all__ = [
    "BoundaryActiveError",
    "InnerMinimizationError",
    "beta_c",
    "limiting_free_energy_p_ge_2",
    "limiting_free_energy_p2",
    "limiting_free_energy_p_in_1_2",
    "self_normalized_upper_bound",
    "self_normalized_duality",
    "tau",
    "p_threshold",
    "b_np",
    "b_np_symmetric",
    "super_linear_constant",
    "rate_function_rho1",
    "optimal_t_star",
    "RateFunction",
    "legendre_rate",
    "ld_free_energy",
    "classical_cw_free_energy",
]


class BoundaryActiveError(RuntimeError):
    """The maximizer stayed on the search box edge after all allowed growth."""


class InnerMinimizationError(RuntimeError):
    """The inner infimum could not be resolved."""


def beta_c(p: float) -> float:
    """1 / nu_p^2 = 3 Gamma(1 + 1/p) / (p^{2/p} Gamma(1 + 3/p))."""
    if not p > 0:
        raise ValueError("p must be positive")
    return 3.0 * math.exp(log_gamma(1.0 + 1.0 / p) - log_gamma(1.0 + 3.0 / p) - 2.0 / p * math.log(p))


# ---------------------------------------------------------------------------
# Box growth around numerics.maximize
# ---------------------------------------------------------------------------

def _solve(f: Callable, box, growable, grid: int = 64, max_growth: int = 4,
           value_tol: float = 1e-12, refine: int = 400) -> VariationalSolution:
    box = [tuple(b) for b in box]
    for attempt in range(max_growth + 1):
        spec = OptimizerSpec(tuple(box), grid_points_per_axis=grid, refine_iterations=refine,
                             value_tol=value_tol)
        sol = maximize(f, spec)
        active = [i for i in growable
                  if sol.argmax[i] >= box[i][1] - (box[i][1] - box[i][0]) / (grid - 1)]
        if not active:
            sol.extras["box"] = [list(b) for b in box]
            sol.extras["box_doublings"] = attempt
            return sol
        for i in active:
            box[i] = (box[i][0], 2.0 * box[i][1])
    raise BoundaryActiveError(f"maximizer on the box edge after {max_growth} doublings: {sol.argmax}")


# ---------------------------------------------------------------------------
# p >= 2
# ---------------------------------------------------------------------------

def _check_beta(beta):
    if not beta >= 0:
        raise ValueError("beta must be >= 0")


def limiting_free_energy_p_ge_2(p: float, beta: float, measure: Optional[BaseMeasure] = None,
                                grid: int = 64, cross_check: bool = True,
                                tol: float = 1e-6) -> VariationalSolution:
    """sup_{z,w >= 0} psi_rho(sqrt(beta) z w, -z^p/p) - (p-2)/(2p) w^{2p/(p-2)}.

    For rho_p the equivalent form
        sup_{0<=u<1, v>=0} psi_p(sqrt(beta u^2 v^{p-2})) + log(1 - u^p)/p - (p-2)/(2p) v^p
    is solved independently and the two values are required to agree.
    For p close to 2 the w-axis is traded for v = w^{2/(p-2)}.
    """
    if p == 2:
        return limiting_free_energy_p2(beta, measure, grid=grid)
    if not p > 2:
        raise ValueError("need p > 2 (p = 2 has its own formula)")
    _check_beta(beta)
    measure = measure or rho_p_measure(p)
    cum = measure.cumulant
    sb = math.sqrt(beta)
    a = (p - 2.0) / (2.0 * p)
    near_two = p < 2.05

    def g_zw(z, w):
        try:
            return cum(sb * z * w, -z ** p / p) - a * w ** (2.0 * p / (p - 2.0))
        except (CumulantDomainError, OverflowError):
            return -math.inf

    def g_zv(z, v):
        try:
            return cum(sb * z * v ** ((p - 2.0) / 2.0), -z ** p / p) - a * v ** p
        except (CumulantDomainError, OverflowError):
            return -math.inf

    if near_two:
        sol = _solve(g_zv, [(0.0, 8.0), (0.0, 3.0)], growable=(0, 1), grid=grid)
        z, v = sol.argmax
        sol.extras["coordinates"] = "z,v"
        sol.extras["zw_argmax"] = [z, v ** ((p - 2.0) / 2.0)]
    else:
        sol = _solve(g_zw, [(0.0, 8.0), (0.0, 3.0)], growable=(0, 1), grid=grid)
        sol.extras["coordinates"] = "z,w"

    if cross_check and measure.name.startswith("rho_"):
        dist = RhoP.of(p)

        def g_uv(u, v):
            if u >= 1.0:
                return -math.inf
            return (dist.psi(math.sqrt(beta * u * u * v ** (p - 2.0)))
                    + math.log1p(-u ** p) / p - a * v ** p)

        alt = _solve(g_uv, [(0.0, 1.0), (0.0, 3.0)], growable=(1,), grid=grid)
        gap = abs(alt.value - sol.value)
        sol.extras["uv_value"] = alt.value
        sol.extras["uv_argmax"] = list(alt.argmax)
        sol.extras["form_gap"] = gap
        if gap > tol:
            raise RuntimeError(f"variational forms disagree by {gap:.3g} > {tol:.3g}")
    return sol


def limiting_free_energy_p2(beta: float, measure: Optional[BaseMeasure] = None,
                            grid: int = 256) -> VariationalSolution:
    """sup_{z >= 0} psi_rho(sqrt(beta) z, -z^2/2)."""
    _check_beta(beta)
    measure = measure or rho_p_measure(2.0)
    cum = measure.cumulant
    sb = math.sqrt(beta)

    def g(z):
        try:
            return cum(sb * z, -z * z / 2.0)
        except (CumulantDomainError, OverflowError):
            return -math.inf

    return _solve(g, [(0.0, 8.0)], growable=(0,), grid=grid)


def classical_cw_free_energy(beta: float, grid: int = 256) -> VariationalSolution:
    """sup_y -y^2/2 + log cosh(sqrt(beta) y)."""
    _check_beta(beta)
    sb = math.sqrt(beta)

    def g(y):
        t = abs(sb * y)
        return -y * y / 2.0 + t + math.log1p(math.exp(-2.0 * t)) - math.log(2.0)

    return _solve(g, [(0.0, 8.0)], growable=(0,), grid=grid)


# ---------------------------------------------------------------------------
# 1 < p < 2
# ---------------------------------------------------------------------------

def _inner_inf(fn: Callable[[float], float], lo: float = 1e-8, hi: float = 1e5,
               tol: float = 1e-6) -> tuple[float, float]:
    """inf over t >= 0 of a convex fn, by bounded Brent search on log t plus t = 0."""
    res = optimize.minimize_scalar(lambda s: fn(math.exp(s)), bounds=(math.log(lo), math.log(hi)),
                                   method="bounded", options={"xatol": tol})
    s, val = float(res.x), float(res.fun)
    at0 = fn(0.0)
    if not math.isfinite(val) and not math.isfinite(at0):
        raise InnerMinimizationError("inner objective is not finite")
    if at0 <= val:
        return 0.0, at0
    if s >= math.log(hi) - 1e-6:
        # still decreasing at the far end: the infimum is -inf
        return math.inf, -math.inf
    return math.exp(s), val


def limiting_free_energy_p_in_1_2(p: float, beta: float, measure: Optional[BaseMeasure] = None,
                                  grid: int = 16, check_bound: bool = True) -> VariationalSolution:
    """sup_{y,c >= 0} inf_{t >= 0} beta y^2/2 + psi_rho(c t, -t y/p) - (p-1)/p t y c^{p/(p-1)}.

    For y > 1 the inner infimum is -inf, so y ranges over [0, 1].
    """
    if not 1 < p < 2:
        raise ValueError("need 1 < p < 2")
    _check_beta(beta)
    measure = measure or rho_p_measure(p)
    cum = measure.cumulant
    q = p / (p - 1.0)

    def outer(y, c):
        def inner(t):
            try:
                return 0.5 * beta * y * y + cum(c * t, -t * y / p) - t * y * c ** q / q
            except (CumulantDomainError, OverflowError, QuadratureError):
                return math.inf
        return _inner_inf(inner)[1]

    sol = _solve(outer, [(0.0, 1.0), (0.0, 8.0)], growable=(1,), grid=grid, value_tol=1e-10)
    if check_bound:
        bound = self_normalized_upper_bound(p, beta, measure)
        sol.extras["upper_bound"] = bound.value
        if sol.value > bound.value + 1e-6:
            raise RuntimeError(f"value {sol.value} exceeds the upper bound {bound.value}")
    return sol


def _compact_z(cum, p, scale):
    """z -> psi_rho(scale z, -z^p/p) pulled back to u = z (1 + z^p)^{-1/p} in [0, 1)."""
    def g(u):
        if u >= 1.0:
            return -math.inf
        z = u * (-math.expm1(p * math.log(u)) if u > 0 else 1.0) ** (-1.0 / p)
        try:
            return cum(scale * z, -z ** p / p)
        except (CumulantDomainError, OverflowError, QuadratureError):
            return -math.inf
    return g


def self_normalized_upper_bound(p: float, beta: float, measure: Optional[BaseMeasure] = None,
                                n_w: int = 33) -> VariationalSolution:
    """inf_{w > 0} sup_{z >= 0} psi_rho(sqrt(beta) z w, -z^p/p) + (2-p)/(2p) w^{-2p/(2-p)}."""
    if not 1 < p < 2:
        raise ValueError("need 1 < p < 2")
    measure = measure or rho_p_measure(p)
    cum = measure.cumulant
    sb = math.sqrt(beta)
    a = (2.0 - p) / (2.0 * p)
    e = 2.0 * p / (2.0 - p)

    def inner(w):
        g = _compact_z(cum, p, sb * w)
        return _solve(g, [(0.0, 1.0)], growable=(), grid=32).value + a * w ** (-e)

    logs = np.linspace(math.log(1e-2), math.log(1e3), n_w)
    vals = [inner(math.exp(s)) for s in logs]
    i = int(np.argmin(vals))
    lo, hi = logs[max(i - 1, 0)], logs[min(i + 1, n_w - 1)]
    s, val = minimize_scalar_golden(lambda s: inner(math.exp(s)), lo, hi, tol=1e-6)
    if vals[i] < val:
        s, val = logs[i], vals[i]
    return VariationalSolution(val, (math.exp(s),), 0.0, 0, n_w, True, {"kind": "inf-sup bound"})


def self_normalized_duality(p: float, y: float, measure: Optional[BaseMeasure] = None,
                            n_x: int = 6, grid: int = 8) -> tuple[float, float]:
    """Both sides of
        sup_z psi_rho(sqrt(y) z, -|z|^p/p) = sup_{x >= 0} E(x y) - (2-p)/(2p) x^{p/(2-p)}
    with E the limiting free energy.  Since 0 <= E(beta) <= beta/2, the
    right side only needs x up to where x y / 2 meets the penalty.
    """
    if not 1 < p < 2:
        raise ValueError("need 1 < p < 2")
    measure = measure or rho_p_measure(p)
    cum = measure.cumulant
    lhs = _solve(_compact_z(cum, p, math.sqrt(y)), [(0.0, 1.0)], growable=(), grid=64).value
    a = (2.0 - p) / (2.0 * p)
    r = p / (2.0 - p)
    x_max = (y / (2.0 * a)) ** (1.0 / (r - 1.0))

    def h(x):
        if x == 0:
            return 0.0
        sol = limiting_free_energy_p_in_1_2(p, x * y, measure, grid=grid, check_bound=False)
        return sol.value - a * x ** r

    xs = np.linspace(0.0, x_max, n_x)
    vals = [h(x) for x in xs]
    i = int(np.argmax(vals))
    rhs = vals[i]
    if 0 < i < n_x - 1:
        res = optimize.minimize_scalar(lambda x: -h(x), bounds=(xs[i - 1], xs[i + 1]),
                                       method="bounded", options={"xatol": 1e-4})
        rhs = max(rhs, -float(res.fun))
    return lhs, rhs


# ---------------------------------------------------------------------------
# 0 < p < 1
# ---------------------------------------------------------------------------

def p_threshold(k: int) -> float:
    """p_k = 2 log(1 + 1/k) / log(1 + 2/(k-1)) for k >= 2."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return 2.0 * math.log1p(1.0 / k) / math.log1p(2.0 / (k - 1))


def tau(p: float) -> tuple[int, float]:
    """(k, k^{1-2/p} (k-1)) with k the smallest integer >= 2 such that p <= p_k."""
    if not 0 < p < 1:
        raise ValueError("need 0 < p < 1")
    k = 2
    while p > p_threshold(k):
        k += 1
    return k, k ** (1.0 - 2.0 / p) * (k - 1)


def b_np_symmetric(n: int, p: float) -> float:
    """Pair sum at equal mass on all n coordinates: n^{1-2/p} (n-1) / 2."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return 0.5 * n ** (1.0 - 2.0 / p) * (n - 1)


def b_np(n: int, p: float) -> float:
    """max of sum_{i<j} x_i x_j over x >= 0 with sum x_i^p = 1.

    The maximum puts equal mass on some number j of coordinates, so it is
    max_{2<=j<=n} j^{1-2/p} (j-1) / 2.  For small p this is attained with
    j < n and exceeds the all-equal value ``b_np_symmetric``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 < p < 1:
        raise ValueError("need 0 < p < 1")
    return max(b_np_symmetric(j, p) for j in range(2, n + 1))


def super_linear_constant(p: float, beta: float) -> float:
    """lim n^{1-2/p} log Z_{n,p}(beta) = beta tau(p) / 2."""
    _check_beta(beta)
    return 0.5 * beta * tau(p)[1]


# ---------------------------------------------------------------------------
# Rate functions
# ---------------------------------------------------------------------------

def rate_function_rho1(x: float, y: float) -> float:
    """Rate function of (X, |X|) for the two-sided exponential law rho_1."""
    if not (y > 0 and abs(x) < y):
        raise ValueError("need |x| < y")
    t = x / y
    return y - 1.0 - math.log(y) - math.log(0.5 * (1.0 + math.sqrt(1.0 - t * t)))


def optimal_t_star(beta: float) -> float:
    """Maximizer over [0, 1] of beta t^2/2 + log((1 + sqrt(1 - t^2))/2)."""
    _check_beta(beta)
    if beta == 0:
        return 0.0
    num = 2.0 * max(2.0 - 1.0 / beta, 0.0)
    return math.sqrt(num / (math.sqrt(beta * beta + 4.0 * beta) + 2.0 - beta))


@dataclass
class RateFunction:
    """I(x, y) = sup_{u,v} u x + v y - psi_rho(u, v) for a base measure.

    Uses damped Newton when the cumulant provides derivatives and a
    grid-and-refine search otherwise; each solve starts from the previous
    optimum when that lies in the cumulant's domain.
    """

    measure: BaseMeasure
    grad_tol: float = 1e-10
    max_iter: int = 200
    diverge: float = 1e7
    _warm: tuple = field(default=(0.0, 0.0), repr=False)

    @property
    def p(self) -> float:
        return self.measure.p

    def domain(self, x: float, y: float) -> bool:
        return y >= 0 and abs(x) <= y ** (1.0 / self.p)

    def __call__(self, x: float, y: float) -> float:
        return self.eval(x, y)

    def eval(self, x: float, y: float) -> float:
        if not self.domain(x, y):
            return math.inf
        if y == 0 or abs(x) == y ** (1.0 / self.p):
            return math.inf
        cum = self.measure.cumulant
        if cum.grad_hess is not None:
            return self._newton(x, y)
        return self._search(x, y)

    def _newton(self, x: float, y: float) -> float:
        cum = self.measure.cumulant
        target = np.array([x, y])
        start = self._warm if cum.domain(*self._warm) else (0.0, 0.0)
        uv = np.array(start, dtype=float)
        val, g, h = cum.grad_hess(*uv)
        j = uv @ target - val
        for _ in range(self.max_iter):
            grad = target - g
            if np.max(np.abs(grad)) <= self.grad_tol * (1.0 + np.max(np.abs(target))):
                self._warm = tuple(uv)
                return float(j)
            try:
                step = np.linalg.solve(h, grad)
            except np.linalg.LinAlgError:
                step = grad
            if not np.all(np.isfinite(step)):
                step = grad
            alpha = 1.0
            while alpha > 1e-12:
                cand = uv + alpha * step
                if cum.domain(*cand):
                    cv, cg, ch = cum.grad_hess(*cand)
                    cj = cand @ target - cv
                    # accept ascent up to the quadrature noise in psi
                    if cj >= j - 1e-12 * (1.0 + abs(j)):
                        break
                alpha *= 0.5
            else:
                break
            moved = alpha * np.max(np.abs(step))
            uv, val, g, h, j = cand, cv, cg, ch, cj
            if moved <= 1e-12 * (1.0 + np.max(np.abs(uv))):
                break
            if np.max(np.abs(uv)) > self.diverge:
                return math.inf
        if np.max(np.abs(uv)) > 0.1 * self.diverge:
            return math.inf
        self._warm = tuple(uv)
        return float(j)

    def _search(self, x: float, y: float) -> float:
        cum = self.measure.cumulant

        def j(u, v):
            if not cum.domain(u, v):
                return -math.inf
            try:
                return u * x + v * y - cum(u, v)
            except (CumulantDomainError, OverflowError):
                return -math.inf

        u0, v0 = self._warm
        half = 4.0
        for _ in range(12):
            spec = OptimizerSpec(((u0 - half, u0 + half), (v0 - half, v0 + half)),
                                 grid_points_per_axis=17, refine_iterations=400, value_tol=1e-13)
            sol = maximize(j, spec)
            u, v = sol.argmax
            edge = max(abs(u - u0), abs(v - v0)) >= half * (1.0 - 1.0 / 8.0)
            if not edge:
                self._warm = (u, v)
                return sol.value
            u0, v0, half = u, v, 2.0 * half
            if half > self.diverge:
                break
        return math.inf


def legendre_rate(measure: BaseMeasure, x: float, y: float) -> float:
    """I(x, y) for ``measure``; +inf outside the closure of the mean range."""
    return RateFunction(measure).eval(x, y)


def ld_free_energy(measure: BaseMeasure, beta: float, grid: int = 24) -> VariationalSolution:
    """sup over 0 <= |x| <= y^{1/p} of beta x^2 y^{-2/p} / 2 - I(x, y).

    Parametrized as x = r y^{1/p} with r in [0, 1], so the interaction term
    is beta r^2 / 2.
    """
    _check_beta(beta)
    rate = RateFunction(measure)
    p = measure.p

    def g(r, y):
        if y <= 0:
            return -math.inf
        i = rate.eval(r * y ** (1.0 / p), y)
        return 0.5 * beta * r * r - i

    sol = _solve(g, [(0.0, 1.0), (0.0, 3.0)], growable=(1,), grid=grid, value_tol=1e-12)
    r, y = sol.argmax
    sol.extras["xy_argmax"] = [r * y ** (1.0 / p), y]
    return sol

"""Deterministic brute-force oracles for validating the main code paths.

Everything here uses fixed Gauss-Legendre rules or exhaustive grids; no
adaptive quadrature, no optimizer and no random numbers.  Only log-Gamma
is shared with the rest of the package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gammainccinv

from .numerics import log_gamma

__all__ = [
    "OracleRefusal",
    "OracleReport",
    "partition_quadrature",
    "grid_oracle_1d",
    "grid_oracle_2d",
    "bnp_bruteforce",
    "psi_p_table",
    "g_surface",
    "rho_log_norm",
]


class OracleRefusal(ValueError):
    """The oracle cannot deliver its accuracy guarantee for these inputs."""


@dataclass
class OracleReport:
    value: float
    resolution: float
    method: str
    argmax: tuple = ()
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")

    def to_dict(self) -> dict:
        return {"value": self.value, "resolution": self.resolution, "method": self.method,
                "argmax": list(self.argmax), **self.extras}


def rho_log_norm(p: float) -> float:
    """log c_p, with c_p the normalizer of exp(-|x|^p/p)."""
    return -(math.log(2.0) + (1.0 / p - 1.0) * math.log(p) + log_gamma(1.0 / p))


def _graded_rule(hi: float, order: int = 24, levels: int = 14, uniform: int = 24):
    """Composite Gauss-Legendre nodes on [0, hi], geometrically graded toward 0."""
    t, w = np.polynomial.legendre.leggauss(order)
    inner = hi / uniform
    edges = [0.0] + [inner * 2.0 ** -k for k in range(levels, 0, -1)]
    edges += list(np.linspace(inner, hi, uniform + 1))
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _max_pair_ratio(n: int, p: float) -> float:
    """Upper bound on (S^2 - sum x^2) / (2n) * (T/n)^{-2/p} over all x."""
    # sum_{i<j} x_i x_j <= (n-1)/2 * sum x^2 and sum x^2 <= n^{max(0, 1-2/p)} T^{2/p}
    return (n - 1.0) / n * n ** (2.0 / p) * n ** max(0.0, 1.0 - 2.0 / p)


def partition_quadrature(n: int, p: float, beta: float, tail_mass: float = 1e-10,
                         order: Optional[int] = None) -> OracleReport:
    """Z_{n,p}(beta) = E exp(beta (S^2 - sum x^2)/(2n) (T/n)^{-2/p}) over iid rho_p.

    Tensor Gauss-Legendre on [0, L]^n summed over sign patterns; L is set so
    the rho_p tail beyond it, inflated by the largest possible weight, is
    below ``tail_mass``.
    """
    if n not in (1, 2, 3):
        raise OracleRefusal("tensor quadrature is limited to n <= 3")
    if not p > 0 or not beta >= 0:
        raise ValueError("need p > 0 and beta >= 0")
    if n == 1:
        return OracleReport(1.0, tail_mass, "trivial", extras={"log_value": 0.0})
    log_w_max = beta * _max_pair_ratio(n, p)
    q = tail_mass * math.exp(-log_w_max) / n
    if not q > 1e-300:
        raise OracleRefusal(f"weight bound exp({log_w_max:.3g}) leaves no usable tail budget")
    L = (p * gammainccinv(1.0 / p, q)) ** (1.0 / p)
    if not math.isfinite(L):
        raise OracleRefusal("tail cutoff is not finite")
    order = order or (24 if n == 2 else 16)
    x, w = _graded_rule(L, order=order, levels=14 if n == 2 else 10,
                        uniform=24 if n == 2 else 12)
    logc = rho_log_norm(p)
    w = w * np.exp(logc - x ** p / p)
    signs = [s for s in itertools.product((1.0, -1.0), repeat=n) if s[0] > 0]
    total = 0.0
    if n == 2:
        x1, x2 = x[:, None], x[None, :]
        w12 = w[:, None] * w[None, :]
        t = x1 ** p + x2 ** p
        for s in signs:
            pair = s[0] * s[1] * x1 * x2
            total += np.sum(w12 * np.exp(beta * pair / 2.0 * (t / 2.0) ** (-2.0 / p)))
    else:
        x1, x2 = x[:, None], x[None, :]
        w12 = w[:, None] * w[None, :]
        xp1, xp2 = x1 ** p, x2 ** p
        for k in range(x.size):
            x3, w3 = x[k], w[k]
            t = xp1 + xp2 + x3 ** p
            for s in signs:
                pair = s[0] * s[1] * x1 * x2 + s[0] * s[2] * x1 * x3 + s[1] * s[2] * x2 * x3
                total += w3 * np.sum(w12 * np.exp(beta * pair / 3.0 * (t / 3.0) ** (-2.0 / p)))
    # each pattern and its negation give the same integrand
    value = float(total * 2.0)
    return OracleReport(value, tail_mass, f"gauss-legendre tensor, {x.size} nodes/axis",
                        extras={"log_value": math.log(value), "cutoff": float(L)})


def _as_vectorized(f: Callable) -> Callable:
    def g(*args):
        try:
            out = np.asarray(f(*args), dtype=float)
            if out.shape == np.broadcast(*args).shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.vectorize(f, otypes=[float])(*args)
    return g


def grid_oracle_1d(f: Callable, box: Sequence[float], step: float,
                   chunk: int = 1 << 20) -> OracleReport:
    """Exhaustive grid maximum of f on [lo, hi]; no refinement."""
    if not step > 0:
        raise ValueError("step must be positive")
    lo, hi = box
    fv = _as_vectorized(f)
    m = int(math.floor((hi - lo) / step + 1e-9)) + 1
    best, arg = -math.inf, lo
    for start in range(0, m, chunk):
        xs = lo + step * np.arange(start, min(m, start + chunk))
        vals = fv(xs)
        vals = np.where(np.isnan(vals), -np.inf, vals)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, arg = float(vals[i]), float(xs[i])
    return OracleReport(best, step, "grid-1d", argmax=(arg,))


def grid_oracle_2d(f: Callable, box: Sequence[Sequence[float]], step: float,
                   rows: int = 64) -> OracleReport:
    """Exhaustive grid maximum of f(x, y) over a rectangle; no refinement."""
    if not step > 0:
        raise ValueError("step must be positive")
    (x0, x1), (y0, y1) = box
    fv = _as_vectorized(f)
    mx = int(math.floor((x1 - x0) / step + 1e-9)) + 1
    my = int(math.floor((y1 - y0) / step + 1e-9)) + 1
    ys = y0 + step * np.arange(my)
    best, arg = -math.inf, (x0, y0)
    for start in range(0, mx, rows):
        xs = x0 + step * np.arange(start, min(mx, start + rows))
        vals = fv(xs[:, None], ys[None, :])
        vals = np.where(np.isnan(vals), -np.inf, vals)
        i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[i, j] > best:
            best, arg = float(vals[i, j]), (float(xs[i]), float(ys[j]))
    return OracleReport(best, step, "grid-2d", argmax=arg)


def psi_p_table(p: float, t_max: float, step: float = 1e-3, order: int = 48):
    """Cubic spline of log E exp(tX) for X ~ rho_p on [0, t_max], p > 1.

    Values come from fixed Gauss-Legendre panels in u with x = hi u^2, which
    smooths the |x|^p cusp at 0 when p < 2.
    """
    if not p > 1:
        raise ValueError("need p > 1")
    ts = np.arange(0.0, t_max + step, step)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    logc = rho_log_norm(p)
    out = np.empty_like(ts)
    for k0 in range(0, ts.size, 512):
        t = ts[k0:k0 + 512, None]
        peak = t ** (1.0 / (p - 1.0))
        shift = t * peak - peak ** p / p
        width = np.maximum(peak, 1.0) ** (1.0 - p / 2.0) / math.sqrt(p - 1.0)
        hi = peak + 40.0 * width + 4.0 * 40.0 ** (1.0 / p)
        # 16 panels in u on [0, 1]
        edges = np.linspace(0.0, 1.0, 17)
        acc = np.zeros_like(t)
        for a, b in zip(edges[:-1], edges[1:]):
            u = 0.5 * (b - a) * nodes[None, :] + 0.5 * (a + b)
            x = hi * u * u
            wx = 2.0 * hi * u * 0.5 * (b - a) * weights[None, :]
            base = -x ** p / p - shift
            acc += np.sum(wx * (np.exp(t * x + base) + np.exp(-t * x + base)), axis=1, keepdims=True)
        out[k0:k0 + 512] = (logc + shift + np.log(acc))[:, 0]
    return CubicSpline(ts, out)


def g_surface(p: float, beta: float, z_max: float = 8.0, w_max: float = 3.0,
              step: float = 1e-3) -> Callable:
    """Vectorized G(z, w) for rho_p, p > 2, backed by an oracle psi_p table."""
    if not p > 2:
        raise ValueError("need p > 2")
    sb = math.sqrt(beta)
    table = psi_p_table(p, sb * z_max * w_max + 1.0, step=step)
    a = (p - 2.0) / (2.0 * p)
    e = 2.0 * p / (p - 2.0)

    def g(z, w):
        zp = z ** p
        arg = sb * z * w * (1.0 + zp) ** (-1.0 / p)
        return table(arg) - np.log1p(zp) / p - a * w ** e

    return g


def bnp_bruteforce(n: int, p: float, resolution: float = 0.01) -> OracleReport:
    """max of sum_{i<j} x_i x_j over x >= 0, sum x_i^p = 1, by two methods.

    The full grid writes x_i = y_i^{1/p} with y on a simplex lattice of step
    1/N.  The two-value method scans vectors taking only values a and b.
    Reports the full-grid value; the two-value result sits in ``extras``.
    """
    if n not in (2, 3, 4):
        raise ValueError("n must be 2, 3 or 4")
    if not 0 < p < 1:
        raise ValueError("need 0 < p < 1")
    N = int(round(1.0 / resolution))
    grid = np.arange(N + 1) / N
    best, arg = -math.inf, ()
    for head in itertools.product(range(N + 1), repeat=n - 2):
        rest = N - sum(head)
        if rest < 0:
            continue
        y_head = np.array(head, dtype=float) / N
        y1 = grid[: rest + 1]
        y2 = rest / N - y1
        cols = [np.full_like(y1, v) for v in y_head] + [y1, y2]
        x = [c ** (1.0 / p) for c in cols]
        s1 = sum(x)
        s2 = sum(c * c for c in x)
        vals = 0.5 * (s1 * s1 - s2)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, arg = float(vals[i]), tuple(float(c[i]) for c in cols)

    fine = np.linspace(0.0, 1.0, 20 * N + 1)
    best2 = -math.inf
    for k in range(1, n + 1):
        # k entries equal a, n - k equal b, k a^p + (n-k) b^p = 1
        a = (fine / k) ** (1.0 / p)
        b = ((1.0 - fine) / (n - k)) ** (1.0 / p) if k < n else np.zeros_like(a)
        if k == n:
            a = np.array([(1.0 / n) ** (1.0 / p)])
            b = np.zeros(1)
        vals = (k * (k - 1) / 2.0 * a * a + (n - k) * (n - k - 1) / 2.0 * b * b
                + k * (n - k) * a * b)
        best2 = max(best2, float(np.max(vals)))
    return OracleReport(best, 1.0 / N, "simplex-grid", argmax=arg,
                        extras={"two_value": best2})

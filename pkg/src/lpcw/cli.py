"""Command-line front end: ``lpcw <subcommand> [options]``.

Every subcommand prints JSON (default) or CSV to stdout or ``--out``.
Exit status is 0 on success, 1 when an embedded check fails and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Iterable, Optional

import numpy as np

from . import free_energy as fe
from . import ghs, oracle, sphere_mc
from .numerics import SeededStream
from .rho_dist import (PExponent, Regime, gaussian_measure, rademacher_measure,
                       rho_p_measure, sampled_measure)

DEFAULT_SEED = 0


class UsageError(ValueError):
    pass


class CheckFailed(RuntimeError):
    def __init__(self, payload):
        super().__init__("check failed")
        self.payload = payload


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _scalar(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return [_scalar(x) for x in v]
    if isinstance(v, list):
        return [_scalar(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _scalar(x) for k, x in v.items()}
    return v


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return str(v)


def render(payload, fmt: str) -> str:
    """JSON of any payload; CSV of a list of flat rows or of one flat dict."""
    payload = _scalar(payload)
    if fmt == "json":
        return json.dumps(payload, indent=2) + "\n"
    rows = payload if isinstance(payload, list) else [payload]
    cols: list = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt_cell(r.get(c, "")) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------

def parse_grid(text: str) -> np.ndarray:
    """'lo:hi:num' -> linspace(lo, hi, num)."""
    try:
        lo, hi, num = text.split(":")
        num = int(num)
        lo, hi = float(lo), float(hi)
    except ValueError:
        raise UsageError(f"grid must look like lo:hi:num, got {text!r}")
    if num < 1:
        raise UsageError("grid needs at least one point")
    return np.linspace(lo, hi, num)


def _p_values(args) -> list:
    if args.p_grid is not None:
        return [float(x) for x in parse_grid(args.p_grid)]
    if args.p:
        return list(args.p)
    raise UsageError("give --p or --p-grid")


def _beta(args, p: float) -> float:
    if args.beta is None and args.beta_rel is None:
        raise UsageError("give --beta or --beta-rel")
    beta = args.beta if args.beta is not None else args.beta_rel * fe.beta_c(p)
    if not beta >= 0:
        raise UsageError("beta must be >= 0")
    return beta


def _threads(args) -> Optional[int]:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("LPCW_THREADS")
    return int(env) if env else None


def _measure(name: str, p: float, path: Optional[str], seed: int):
    if name == "rho_p":
        return rho_p_measure(p)
    if name == "rho_1":
        if p != 1:
            raise UsageError("rho_1 needs --p 1")
        return rho_p_measure(1.0)
    if name == "gaussian":
        if p != 2:
            raise UsageError("the Gaussian base measure needs --p 2")
        return gaussian_measure()
    if name == "rademacher":
        return rademacher_measure(p)
    if name == "file":
        if not path:
            raise UsageError("--measure file needs --measure-file")
        data = np.load(path) if path.endswith(".npy") else np.loadtxt(path)
        return sampled_measure(data, p, name=os.path.basename(path), seed=seed)
    raise UsageError(f"unknown measure {name!r}")


def _common(sp, beta: bool = False, p_many: bool = False):
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--out", default=None, help="output file (default stdout)")
    sp.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: $LPCW_THREADS or 1)")
    if p_many:
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--p", type=float, nargs="+")
        g.add_argument("--p-grid", default=None, help="lo:hi:num")
    if beta:
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--beta", type=float, default=None)
        g.add_argument("--beta-rel", type=float, default=None, help="beta as a multiple of beta_c(p)")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_beta_c(args):
    rows = []
    for p in _p_values(args):
        if not p > 0:
            raise UsageError("p must be positive")
        rows.append({"p": p, "beta_c": fe.beta_c(p)})
    return rows


def cmd_free_energy(args):
    p = args.p
    exp = PExponent(p)
    beta = _beta(args, p)
    measure = _measure(args.measure, p, args.measure_file, args.seed)
    regime = exp.regime
    out = {"p": p, "beta": beta, "measure": measure.name, "regime": regime.value}
    if regime is Regime.SUB_LINEAR:
        raise UsageError("for p < 1 the free energy scales as n^{2/p - 1}; use the 'tau' subcommand")
    if regime is Regime.GHS_TRACTABLE:
        sol = fe.limiting_free_energy_p_ge_2(p, beta, measure,
                                             cross_check=args.measure == "rho_p")
    elif regime is Regime.BOUNDARY:
        sol = fe.limiting_free_energy_p2(beta, measure)
    elif p == 1:
        sol = fe.ld_free_energy(measure, beta)
    else:
        sol = fe.limiting_free_energy_p_in_1_2(p, beta, measure)
    out.update(sol.to_dict())
    return out


def cmd_surface(args):
    p = args.p
    if not p > 2:
        raise UsageError("the G(z, w) surface needs p > 2")
    beta = _beta(args, p)
    cum = rho_p_measure(p).cumulant
    a = (p - 2.0) / (2.0 * p)
    sb = math.sqrt(beta)
    rows = []
    for z in np.linspace(0.0, args.z_max, args.nz):
        for w in np.linspace(0.0, args.w_max, args.nw):
            g = cum(sb * z * w, -z ** p / p) - a * w ** (2.0 * p / (p - 2.0))
            rows.append({"z": float(z), "w": float(w), "G": float(g)})
    if args.format == "json":
        return {"p": p, "beta": beta, "rows": rows}
    return rows


def cmd_tau(args):
    rows = []
    for p in _p_values(args):
        if not 0 < p < 1:
            raise UsageError("tau is defined for 0 < p < 1")
        k, t = fe.tau(p)
        row = {"p": p, "k": k, "tau": t}
        if args.n is not None:
            row.update({"n": args.n, "b_np": fe.b_np(args.n, p),
                        "b_np_symmetric": fe.b_np_symmetric(args.n, p)})
        rows.append(row)
    return rows


def cmd_rate(args):
    p = args.p
    measure = _measure(args.measure, p, args.measure_file, args.seed)
    rate = fe.RateFunction(measure)
    xs = parse_grid(args.x_grid) if args.x_grid else [args.x]
    ys = parse_grid(args.y_grid) if args.y_grid else [args.y]
    if xs[0] is None or ys[0] is None:
        raise UsageError("give --x/--y or --x-grid/--y-grid")
    rows = []
    for y in ys:
        for x in xs:
            row = {"x": float(x), "y": float(y), "I": rate.eval(float(x), float(y))}
            if p == 1 and args.measure in ("rho_p", "rho_1") and 0 < y and abs(x) < y:
                row["I_closed_form"] = fe.rate_function_rho1(float(x), float(y))
            rows.append(row)
    return rows


def cmd_sample(args):
    if args.n < 2:
        raise UsageError("n must be >= 2")
    if args.samples < 2:
        raise UsageError("samples must be >= 2")
    params = sphere_mc.GibbsParams(args.n, args.p, _beta(args, args.p))
    st = sphere_mc.magnetization_stats(params, SeededStream(args.seed), args.samples,
                                       proposal=args.proposal, threads=_threads(args))
    out = st.to_dict()
    if args.format == "csv":
        out.pop("histogram")
    return out


def cmd_partition(args):
    if args.n < 1:
        raise UsageError("n must be >= 1")
    beta = _beta(args, args.p)
    out = {"n": args.n, "p": args.p, "beta": beta}
    if args.method in ("mc", "both"):
        if args.n < 2:
            out["mc"] = {"value": 1.0, "std_error": 0.0}
        else:
            params = sphere_mc.GibbsParams(args.n, args.p, beta)
            est = sphere_mc.estimate_partition(params, SeededStream(args.seed), args.samples,
                                               reweighted=args.reweighted, threads=_threads(args))
            out["mc"] = est.to_dict()
    if args.method in ("quadrature", "both"):
        if args.n > 3:
            raise UsageError("quadrature is limited to n <= 3")
        out["quadrature"] = oracle.partition_quadrature(args.n, args.p, beta).to_dict()
    if args.method == "both" and args.n >= 2:
        z = (out["mc"]["value"] - out["quadrature"]["value"]) / out["mc"]["std_error"]
        out["z_score"] = z
        if abs(z) > 4:
            raise CheckFailed(out)
    if args.format == "csv":
        flat = {k: v for k, v in out.items() if not isinstance(v, dict)}
        for key in ("mc", "quadrature"):
            if key in out:
                flat[f"{key}_value"] = out[key]["value"]
        if "mc" in out:
            flat["mc_std_error"] = out["mc"]["std_error"]
        return flat
    return out


def cmd_clt(args):
    p = args.p
    params = sphere_mc.GibbsParams(max(args.n), p, _beta(args, p))
    rep = sphere_mc.clt_test(params, SeededStream(args.seed), args.n, n_samples=args.samples,
                             threads=_threads(args))
    out = rep.to_dict()
    if not rep.passed:
        raise CheckFailed(out if args.format == "json" else rep.rows)
    return out if args.format == "json" else rep.rows


def cmd_ghs_check(args):
    if args.n < 2:
        raise UsageError("n must be >= 2")
    rep = ghs.product_identity_check(args.q, args.p, SeededStream(args.seed), args.n)
    out = rep.to_dict()
    if args.format == "csv":
        out.update({f"moment_z_{k}": v for k, v in out.pop("moment_z").items()})
    if not rep.passed:
        raise CheckFailed(out)
    return out


def cmd_ghs_density(args):
    dens = ghs.GhsDensity(args.q, args.p)
    us = parse_grid(args.u_grid) if args.u_grid else np.asarray(args.u, dtype=float)
    rows = []
    for u in us:
        r = dens.mellin(float(u))
        row = {"u": float(u), "theta": r.value, "imag_residual": r.imag_residual,
               "richardson_gap": r.richardson_gap}
        if dens.has_closed_form:
            row["closed_form"] = float(dens.closed_form(float(u)))
        rows.append(row)
    return rows


def cmd_oracle(args):
    if args.kind == "partition":
        if args.p is None or args.beta is None:
            raise UsageError("partition oracle needs --p and --beta")
        return oracle.partition_quadrature(args.n, args.p, args.beta).to_dict()
    if args.kind == "bnp":
        if args.p is None:
            raise UsageError("bnp oracle needs --p")
        rep = oracle.bnp_bruteforce(args.n, args.p, args.resolution).to_dict()
        rep["closed_form"] = fe.b_np(args.n, args.p)
        return rep
    if args.kind == "classical-cw":
        if args.beta is None:
            raise UsageError("classical-cw oracle needs --beta")
        sb = math.sqrt(args.beta)
        return oracle.grid_oracle_1d(
            lambda y: -y * y / 2.0 + np.logaddexp(sb * y, -sb * y) - math.log(2.0),
            (0.0, 5.0), args.resolution).to_dict()
    raise UsageError(f"unknown oracle {args.kind!r}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpcw", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("beta-c", help="critical inverse temperature")
    _common(sp, p_many=True)
    sp.set_defaults(func=cmd_beta_c)

    measures = ("rho_p", "rho_1", "gaussian", "rademacher", "file")
    sp = sub.add_parser("free-energy", help="limiting free energy")
    _common(sp, beta=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--measure", choices=measures, default="rho_p")
    sp.add_argument("--measure-file", default=None, help=".npy or text file of samples of X")
    sp.set_defaults(func=cmd_free_energy)

    sp = sub.add_parser("surface", help="G(z, w) on a grid, for plotting")
    _common(sp, beta=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--z-max", type=float, default=8.0)
    sp.add_argument("--w-max", type=float, default=3.0)
    sp.add_argument("--nz", type=int, default=81)
    sp.add_argument("--nw", type=int, default=31)
    sp.set_defaults(func=cmd_surface)

    sp = sub.add_parser("tau", help="sub-linear constant tau(p), optionally B(n, p)")
    _common(sp, p_many=True)
    sp.add_argument("--n", type=int, default=None)
    sp.set_defaults(func=cmd_tau)

    sp = sub.add_parser("rate", help="rate function I(x, y)")
    _common(sp)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--measure", choices=measures, default="rho_p")
    sp.add_argument("--measure-file", default=None)
    sp.add_argument("--x", type=float, default=None)
    sp.add_argument("--y", type=float, default=None)
    sp.add_argument("--x-grid", default=None)
    sp.add_argument("--y-grid", default=None)
    sp.set_defaults(func=cmd_rate)

    sp = sub.add_parser("sample", help="importance-sampled magnetization statistics")
    _common(sp, beta=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--samples", type=int, default=20000)
    sp.add_argument("--proposal", choices=("auto", "uniform", "tilted"), default="auto")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("partition", help="partition function by Monte Carlo and/or quadrature")
    _common(sp, beta=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--samples", type=int, default=100000)
    sp.add_argument("--method", choices=("mc", "quadrature", "both"), default="mc")
    sp.add_argument("--reweighted", action="store_true")
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("clt", help="variance and kurtosis of sqrt(n) m below beta_c")
    _common(sp, beta=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--n", type=int, nargs="+", required=True)
    sp.add_argument("--samples", type=int, default=50000)
    sp.set_defaults(func=cmd_clt)

    sp = sub.add_parser("ghs-check", help="Z_p U_{p,q} against Z_q")
    _common(sp)
    sp.add_argument("--q", type=float, default=2.0)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--n", type=int, default=1000000)
    sp.set_defaults(func=cmd_ghs_check)

    sp = sub.add_parser("ghs-density", help="density of U_{p,q}")
    _common(sp)
    sp.add_argument("--q", type=float, default=2.0)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--u", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.0])
    sp.add_argument("--u-grid", default=None)
    sp.set_defaults(func=cmd_ghs_density)

    sp = sub.add_parser("oracle", help="brute-force reference values")
    _common(sp)
    sp.add_argument("kind", choices=("partition", "bnp", "classical-cw"))
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--resolution", type=float, default=1e-3)
    sp.set_defaults(func=cmd_oracle)
    return ap


def _write(text: str, path: Optional[str]):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: Optional[Iterable[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(None if argv is None else list(argv))
    except SystemExit as e:
        return int(e.code or 0)
    try:
        payload = args.func(args)
    except CheckFailed as e:
        _write(render(e.payload, args.format), args.out)
        print("check failed", file=sys.stderr)
        return 1
    except (UsageError, ValueError) as e:
        print(f"lpcw {args.command}: error: {e}", file=sys.stderr)
        return 2
    _write(render(payload, args.format), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())

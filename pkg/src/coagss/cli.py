"""Command-line interface: ``coagss {solve,analyze,verify,sweep}``.

Exit status is 0 on success, 1 on error and 2 when a run completed but
raised flags (non-convergence, failed diagnostics). Errors are reported as
one ``error: <Type>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import laplace, tail_analysis as ta
from .discretization import SampledFunction, build_grid
from .errors import CoagssError, PositivityError, RangeError, TailNotExponentialError
from .io import read_profile_csv, report_text, write_profile_csv
from .kernels import KernelSpec
from .solver import Profile, SolveOptions, solve_selfsimilar
from .verify import run_verify

EXIT_OK, EXIT_ERROR, EXIT_FLAGS = 0, 1, 2
DEFAULT_SWEEP = (0.01, 0.05, 0.1)

# report keys name the statement each diagnostic checks
KEYS = {
    "sandwich": "theorem1.sandwich",
    "astar": "theorem2.astar",
    "doubling": "lemma_doubling.margin",
    "flatness": "lemma_flatness.gap",
    "positivity": "lemma_auxiliary.positivity_radius",
    "prefactor": "eq_udef.prefactor",
    "averages": "lemma_uupperbound.averages",
    "nonintegrable": "lemma_unonintegrable.xu_growth",
    "mu0": "theorem4.mu0",
    "mu_residual": "eq_muequation.residual",
    "moments": "eq_ublargex2.moments",
    "A_fit": "eq_ublargex3.A_fit",
    "neg_moment": "lemma2_2.negative_moment",
    "dyadic": "lemma2_1.dyadic_sup",
    "band": "lemma_uupperbound.U_band",
    "V_bound": "eq_vestimate.V_bound",
    "nu_norm": "eq_normdef.nu_norm",
    "monotone": "laplace.U_monotone",
}


@dataclass(frozen=True)
class RunConfig:
    kernel: KernelSpec
    x_min: float = 1e-4
    x_max: float = 60.0
    ppd: int = 32
    tol: float = 1e-10
    damping: float = 1.0
    max_iter: int = 200

    @classmethod
    def from_args(cls, ns) -> "RunConfig":
        return cls(kernel=make_kernel(ns.kernel, ns.eps, ns.alpha), x_min=ns.xmin,
                   x_max=ns.xmax, ppd=ns.ppd, tol=ns.tol, damping=ns.damping,
                   max_iter=ns.max_iter)

    @property
    def grid(self):
        return build_grid(self.x_min, self.x_max, self.ppd)

    @property
    def options(self) -> SolveOptions:
        return SolveOptions(damping=self.damping, tol=self.tol, max_iter=self.max_iter)

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.to_dict(), "x_min": self.x_min, "x_max": self.x_max,
                "ppd": self.ppd, "tol": self.tol, "damping": self.damping,
                "max_iter": self.max_iter}


def make_kernel(name: str, eps: float, alpha: float) -> KernelSpec:
    if name == "constant":
        return KernelSpec.constant()
    if name == "brownian":
        return KernelSpec.brownian()
    return KernelSpec.perturbed(eps, alpha)


# -- analysis --------------------------------------------------------------

def analyze_profile(p: Profile, flatness_delta: float = 0.5, A: float = 2.0,
                    threads=None) -> tuple[dict, list]:
    """Every tail, moment and Laplace diagnostic as a report dict plus flags."""
    rep, flags = {}, []
    radius, degenerate = ta.positivity_radius(p)
    rep[KEYS["positivity"]] = {"x_tilde": radius, "degenerate": degenerate}
    if not np.any(p.f.values > 0) or not (math.isfinite(p.mass) and p.mass > 0):
        flags.append("profile.degenerate")
        return rep, flags
    if degenerate:
        # positive somewhere but zero at the top: no exponential tail to fit
        flags.append("tail.TailNotExponentialError")
        return rep, flags
    if p.f.tail_rate is None:
        flags.append("profile.no_tail_closure")
        return rep, flags

    try:
        tail = ta.analyze_tail(p)
    except (PositivityError, RangeError, TailNotExponentialError) as exc:
        flags.append(f"tail.{type(exc).__name__}")
        return rep, flags
    flags += tail.flags
    rep[KEYS["astar"]] = {"a_star": tail.a_star, "fit_window": list(tail.fit_window),
                          "fit_r2": tail.fit_r2, "window_stability": tail.window_stability}
    rep[KEYS["sandwich"]] = {"C1": tail.C1, "alpha1": tail.alpha1, "C2": tail.C2,
                             "alpha2": tail.alpha2, "delta": tail.delta,
                             "fraction": tail.sandwich_fraction}
    rep[KEYS["doubling"]] = {"C": ta.DOUBLING_C, "margin": tail.doubling_margin}
    rep[KEYS["mu0"]] = {"mu0": tail.mu0}
    if not tail.a_star > 0:
        return rep, flags

    try:
        M = ta.flatness_profile(p, flatness_delta)
        a = ta.slope_a(p)
        a_at = np.interp(M.x, a.x, a.values)
        gap = M.values - a_at
        half = M.x >= 0.5 * M.x[-1]
        rep[KEYS["flatness"]] = {"delta": flatness_delta, "sup_gap": float(gap.max()),
                                 "sup_gap_upper_half": float(gap[half].max())}
    except (RangeError, PositivityError):
        flags.append("flatness.unavailable")

    u = ta.prefactor_u(p, tail.a_star)
    rep[KEYS["prefactor"]] = {"u_sup_dev": tail.u_sup_dev, "window": list(tail.fit_window)}
    x_max = p.grid.nodes[-1]
    R_lo = max(2.0 / tail.a_star, 1.0)
    R_list = [r for r in np.geomspace(R_lo, x_max / A, 6)]
    avgs = ta.prefactor_averages(u, A, R_list)
    rep[KEYS["averages"]] = {"A": A, "R": [r for r, _ in avgs], "avg": [v for _, v in avgs]}
    half_int = u.integrate(1.0, x_max / 2.0, 1.0)
    full_int = u.integrate(1.0, x_max, 1.0)
    rep[KEYS["nonintegrable"]] = {"int_half": half_int, "int_full": full_int,
                                  "ratio": full_int / half_int if half_int > 0 else math.nan}

    mu_grid = build_grid(1e-3, 2.0 * x_max, 16)
    mu = SampledFunction(mu_grid, np.full(mu_grid.size, tail.mu0), 0.0)
    pts = [0.01, 0.1, 1.0, 10.0, x_max]
    rep[KEYS["mu_residual"]] = {"test_points": pts,
                                "sup_defect": ta.mu_residual(mu, p.kernel, tail.a_star, pts)}

    m = ta.moments(p)
    rep[KEYS["moments"]] = {"gammas": m.gammas, "M": m.M_values,
                            "log_convexity_defect": m.log_convexity_defect}
    rep[KEYS["A_fit"]] = {"A_fit": m.A_fit}
    rep[KEYS["neg_moment"]] = {"gamma": m.neg_gamma, "value": m.neg_moment}
    rep[KEYS["dyadic"]] = {"R": m.dyadic_R, "values": m.dyadic_values, "sup": m.dyadic_sup}

    lap = laplace.laplace_report(u, tail.a_star, tail.mu0, p.kernel.alpha, threads=threads)
    flags += lap.flags
    rep[KEYS["band"]] = {"q_grid": lap.q_grid, "U": lap.U_values, "band_lo": lap.band_lo,
                         "band_hi": lap.band_hi}
    rep[KEYS["V_bound"]] = {"alpha": lap.alpha, "V": lap.V_values, "V_bound": lap.V_bound}
    rep[KEYS["nu_norm"]] = {"nu_norm": lap.nu_norm}
    rep[KEYS["monotone"]] = {"monotone": lap.monotone}
    return rep, flags


# -- subcommands -------------------------------------------------------------

def _emit(text: str, path) -> None:
    if path:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(ns) -> int:
    cfg = RunConfig.from_args(ns)
    p, rep = solve_selfsimilar(cfg.kernel, cfg.grid, cfg.options)
    a_star = None
    try:
        a_star = ta.estimate_astar(p)[0]
    except CoagssError:
        pass
    write_profile_csv(ns.out, p, a_star)
    flags = [] if rep.converged else ["solver.not_converged"]
    body = {"command": "solve", "config": cfg.to_dict(), "solve": rep.to_dict(),
            "mass": p.mass, "a_star": a_star, "profile": ns.out,
            "invariants": p.check(), "flags": flags}
    _emit(report_text(body), ns.report)
    return EXIT_OK if rep.converged else EXIT_FLAGS


def cmd_analyze(ns) -> int:
    kernel = make_kernel(ns.kernel, ns.eps, ns.alpha)
    p = read_profile_csv(ns.profile, kernel)
    rep, flags = analyze_profile(p)
    body = {"command": "analyze", "kernel": kernel.to_dict(), "profile": ns.profile,
            "diagnostics": rep, "flags": flags}
    _emit(report_text(body), ns.report)
    return EXIT_FLAGS if flags else EXIT_OK


def cmd_verify(ns) -> int:
    checks = run_verify(ppd=ns.ppd)
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if ns.report:
        _emit(report_text({"command": "verify", "ppd": ns.ppd,
                           "checks": {c.name: c.passed for c in checks}}), ns.report)
    return EXIT_OK if not failed else EXIT_ERROR


def run_sweep(eps_list, cfg: RunConfig, threads=None) -> tuple[list, list]:
    """Solve and analyze the perturbed kernel for each eps; rows plus flags."""
    rows, flags = [], []
    for eps in eps_list:
        row = {"eps": eps}
        try:
            kernel = KernelSpec.perturbed(eps, cfg.kernel.alpha)
            p, rep = solve_selfsimilar(kernel, cfg.grid, cfg.options, threads, with_residual=False)
            row["converged"] = rep.converged
            tail = ta.analyze_tail(p)
            u = ta.prefactor_u(p, tail.a_star)
            nu = laplace.perturbation_norm(u, tail.mu0, laplace.default_q_grid(tail.a_star),
                                           threads)
            row.update(a_star=tail.a_star, mu0=tail.mu0, nu_norm=nu, nu_norm_over_eps=nu / eps,
                       u_sup_dev=tail.u_sup_dev)
            if not rep.converged:
                flags.append(f"sweep.{eps:g}.not_converged")
        except CoagssError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            flags.append(f"sweep.{eps:g}.failed")
        rows.append(row)
    ok = [r for r in rows if "nu_norm" in r]
    if len(ok) >= 2:
        ratios = [r["nu_norm_over_eps"] for r in ok]
        if max(ratios) > 3.0 * min(ratios):
            flags.append("sweep.nu_norm_not_linear")
        by_eps = sorted(ok, key=lambda r: r["eps"])
        devs = [r["u_sup_dev"] for r in by_eps]
        if any(devs[i] > devs[i + 1] for i in range(len(devs) - 1)):
            flags.append("sweep.u_dev_not_monotone")
    return rows, flags


def cmd_sweep(ns) -> int:
    eps_list = [float(e) for e in ns.eps_list.split(",")] if ns.eps_list else list(DEFAULT_SWEEP)
    for e in eps_list:
        if not 0.0 < e <= 0.5:
            raise ValueError(f"eps={e:g} outside (0, 0.5]")
    cfg = RunConfig.from_args(ns)
    if cfg.kernel.variant != "perturbed":
        cfg = RunConfig(KernelSpec.perturbed(ns.eps, ns.alpha), cfg.x_min, cfg.x_max, cfg.ppd,
                        cfg.tol, cfg.damping, cfg.max_iter)
    rows, flags = run_sweep(eps_list, cfg)
    print("eps,a_star,nu_norm,nu_norm_over_eps,u_sup_dev")
    for r in rows:
        if "nu_norm" in r:
            print(",".join(format(r[k], ".6g") for k in
                           ("eps", "a_star", "nu_norm", "nu_norm_over_eps", "u_sup_dev")))
        else:
            print(f"{r['eps']:g},error,{r['error']}")
    if ns.report:
        _emit(report_text({"command": "sweep", "config": cfg.to_dict(), "rows": rows,
                           "flags": flags}), ns.report)
    return EXIT_FLAGS if flags else EXIT_OK


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--kernel", choices=("constant", "brownian", "perturbed"),
                        default="constant")
    common.add_argument("--eps", type=float, default=0.1, help="perturbation size")
    common.add_argument("--alpha", type=float, default=1.0 / 3.0, help="perturbation exponent")
    common.add_argument("--xmin", type=float, default=1e-4)
    common.add_argument("--xmax", type=float, default=60.0)
    common.add_argument("--ppd", type=int, default=32, help="grid points per decade")
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--damping", type=float, default=1.0)
    common.add_argument("--max-iter", dest="max_iter", type=int, default=200)
    common.add_argument("--report", default=None, help="JSON report path (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="coagss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="compute a self-similar profile")
    s.add_argument("--out", default="profile.csv", help="profile CSV path")
    s.set_defaults(func=cmd_solve)
    a = sub.add_parser("analyze", parents=[common], help="run diagnostics on a profile CSV")
    a.add_argument("profile")
    a.set_defaults(func=cmd_analyze)
    v = sub.add_parser("verify", parents=[common], help="run the closed-form oracle battery")
    v.set_defaults(func=cmd_verify)
    w = sub.add_parser("sweep", parents=[common], help="eps sweep of the perturbed kernel")
    w.add_argument("--eps-list", dest="eps_list", default=None,
                   help="comma-separated eps values (default 0.01,0.05,0.1)")
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; that code is reserved for flags
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except (CoagssError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

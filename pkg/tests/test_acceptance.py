"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line, printed as it runs
and again in the terminal summary.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from coagss import laplace, tail_analysis as ta
from coagss.cli import RunConfig, run_sweep
from coagss.discretization import SampledFunction, build_grid
from coagss.kernels import KernelSpec
from coagss.solver import SolveOptions, solve_selfsimilar

from conftest import ACCEPTANCE_LINES, exp_profile


def record(n: int, checks: dict) -> None:
    """Print the criterion line and fail the test if any check is false."""
    ok = all(passed for passed, _ in checks.values())
    detail = "; ".join(f"{k}={v}" for k, (_, v) in checks.items())
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[n] = line
    print(line)
    bad = [k for k, (passed, _) in checks.items() if not passed]
    assert not bad, f"criterion {n} failed: {bad}"


def fmt(v):
    return f"{v:.4g}"


@pytest.fixture(scope="module")
def oracle64():
    return exp_profile(build_grid(1e-4, 60.0, 64))


@pytest.fixture(scope="module")
def constant64():
    return solve_selfsimilar(KernelSpec.constant(), build_grid(1e-4, 60.0, 64))[0]


def test_criterion_1_constant_oracle(grid32):
    t0 = time.perf_counter()
    p, rep = solve_selfsimilar(KernelSpec.constant(), grid32, SolveOptions(), threads=1)
    elapsed = time.perf_counter() - t0
    x = grid32.nodes
    sel = (x >= 0.01) & (x <= 30)
    err = float(np.max(np.abs(p.f.values[sel] / np.exp(-x[sel]) - 1)))
    record(1, {
        "converged": (rep.converged, rep.converged),
        "iterations<=20": (rep.iterations <= 20, rep.iterations),
        "rel_err<=1e-3": (err <= 1e-3, fmt(err)),
        "mass": (abs(p.mass - 1) <= 1e-9, fmt(p.mass - 1)),
        "runtime<=60s": (elapsed <= 60, f"{elapsed:.1f}s"),
    })


def test_criterion_2_tail_extraction(oracle):
    a, win, r2 = ta.estimate_astar(oracle)
    u = ta.prefactor_u(oracle, a)
    x = oracle.grid.nodes
    sel = (x >= win[0]) & (x <= win[1])
    dev = float(np.max(np.abs(u.values[sel] - 1)))
    mu0 = ta.mu_constant(KernelSpec.constant(), 1.0)
    record(2, {
        "a_star": (abs(a - 1) <= 0.01, fmt(a)),
        "fit_r2>=0.9999": (r2 >= 0.9999, fmt(r2)),
        "u_sup_dev<=1e-2": (dev <= 1e-2, fmt(dev)),
        "mu0==1": (mu0 == 1.0, mu0),
    })


def test_criterion_3_sandwich(constant_solution, brownian_solution):
    checks = {}
    for name, (p, _) in (("constant", constant_solution), ("brownian", brownian_solution)):
        a, win, _ = ta.estimate_astar(p)
        b = ta.fit_exponential_bounds(p, a, win[1])
        x = p.grid.nodes
        xs = x[(x >= 1) & (x <= win[1])]
        f = p.f.values[(x >= 1) & (x <= win[1])]
        # re-check the node-wise sandwich directly, outside the fit
        lower = b.C1 * np.exp(-b.alpha1 * xs)
        upper = b.C2 * np.exp(-b.alpha2 * xs)
        frac = float(np.mean((lower <= f * (1 + 1e-12)) & (f <= upper * (1 + 1e-12))))
        checks[f"{name}.delta<=0.05"] = (b.delta <= 0.05, b.delta)
        checks[f"{name}.fraction"] = (frac == 1.0 and b.holds_fraction == 1.0, frac)
    record(3, checks)


def test_criterion_4_doubling_and_stability(brownian_solution):
    p, _ = brownian_solution
    margin = ta.doubling_check(p, C=10.0)
    stab = ta.window_stability(p, 0.1)
    record(4, {
        "doubling_margin>0": (margin > 0, fmt(margin)),
        "window_stability<=1%": (stab <= 0.01, fmt(stab)),
    })


def _moment_checks(p, tag):
    m = ta.moments(p)
    out = {}
    worst = max(abs(v / math.gamma(g + 1) - 1) for g, v in zip(m.gammas, m.M_values))
    out[f"{tag}.M_rel"] = (worst <= 1e-6, fmt(worst))
    out[f"{tag}.A_fit"] = (abs(m.A_fit) <= 1e-6, fmt(m.A_fit))
    neg = abs(m.neg_moment - math.gamma(1.5))
    out[f"{tag}.neg_moment"] = (neg <= 1e-6, fmt(neg))
    # closed form of (1/2) int_1^2 x e^-x dx; see the notes on the stated 0.164907
    dy = abs(ta.dyadic_average(p, 2.0) - 0.5 * (2 * math.exp(-1) - 3 * math.exp(-2)))
    out[f"{tag}.dyadic_R2"] = (dy <= 1e-6, fmt(dy))
    out[f"{tag}.log_convexity"] = (m.log_convexity_defect <= 1e-10, fmt(m.log_convexity_defect))
    return out


def test_criterion_5_moments(oracle, constant64):
    checks = _moment_checks(oracle, "oracle")
    checks.update(_moment_checks(constant64, "solved64"))
    record(5, checks)


def test_criterion_6_laplace_bands(oracle):
    a = ta.estimate_astar(oracle)[0]
    u = ta.prefactor_u(oracle, a)
    q = laplace.default_q_grid(1.0)
    U = laplace.transform_U(u, q)
    qU = q * U
    lo_ok = bool(np.all(qU >= 0.6065 * (1 - 1e-4)))
    hi_ok = bool(np.all(qU <= 0.9990 * (1 + 1e-4)))
    V, _ = laplace.transform_V(u, 0.0, q)
    record(6, {
        "band_lo": (lo_ok, fmt(qU.min())),
        "band_hi": (hi_ok, fmt(qU.max())),
        "V_alpha0_bitwise": (bool(np.array_equal(U, V)), np.array_equal(U, V)),
        "monotone": (laplace.is_monotone(U), laplace.is_monotone(U)),
    })


def test_criterion_7_mu_equation():
    g = build_grid(1e-3, 100.0, 16)
    pts = [0.01, 0.1, 1.0, 10.0, 50.0]
    checks = {}
    for k in (KernelSpec.constant(), KernelSpec.brownian(), KernelSpec.perturbed(0.1)):
        mu0 = ta.mu_constant(k, 1.0)
        res = ta.mu_residual(SampledFunction(g, np.full(g.size, mu0), 0.0), k, 1.0, pts)
        checks[k.variant] = (res <= 1e-6, fmt(res))
    record(7, checks)


def test_criterion_8_eps_sweep():
    t0 = time.perf_counter()
    rows, flags = run_sweep([0.01, 0.05, 0.1], RunConfig(kernel=KernelSpec.perturbed(0.1)))
    elapsed = time.perf_counter() - t0
    ok_rows = [r for r in rows if "nu_norm" in r]
    conv = len(ok_rows) == 3 and all(r["converged"] for r in ok_rows)
    devs = [r["u_sup_dev"] for r in ok_rows]
    ratios = [r["nu_norm_over_eps"] for r in ok_rows]
    # rows are in increasing eps, so u_sup_dev must not increase as eps shrinks
    mono = conv and all(devs[i] <= devs[i + 1] for i in range(len(devs) - 1))
    spread = max(ratios) / min(ratios) if conv else math.inf
    record(8, {
        "converged": (conv, conv),
        "u_sup_dev_monotone": (mono, [fmt(d) for d in devs]),
        "nu_ratio_spread<=3": (spread <= 3, fmt(spread)),
        "runtime<=600s": (elapsed <= 600, f"{elapsed:.1f}s"),
    })


def test_criterion_9_refinement(brownian_ladder):
    res = {ppd: brownian_ladder[ppd][1].residual_sup for ppd in (16, 32, 64)}
    tv = {ppd: ta.total_variation(brownian_ladder[ppd][0], 1.0, 10.0) for ppd in (16, 32, 64)}
    r1, r2 = res[16] / res[32], res[32] / res[64]
    tv_spread = (max(tv.values()) - min(tv.values())) / min(tv.values())
    record(9, {
        "ratio_16_32>=3": (r1 >= 3, fmt(r1)),
        "ratio_32_64>=3": (r2 >= 3, fmt(r2)),
        "tv_spread<=10%": (tv_spread <= 0.1, fmt(tv_spread)),
    })


def _cli(args, cwd, threads):
    env = dict(os.environ, COAGSS_THREADS=str(threads))
    return subprocess.run([sys.executable, "-m", "coagss.cli", *args], cwd=cwd, env=env,
                          capture_output=True, text=True)


def test_criterion_10_determinism(tmp_path):
    outputs = {}
    for threads in (1, 8):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        codes = [
            _cli(["solve", "--kernel", "brownian", "--out", "p.csv", "--report", "solve.json"], d, threads),
            _cli(["analyze", "p.csv", "--kernel", "brownian", "--report", "analyze.json"], d, threads),
            _cli(["verify", "--report", "verify.json"], d, threads),
            _cli(["sweep", "--eps-list", "0.05", "--ppd", "16", "--report", "sweep.json"], d, threads),
        ]
        assert all(c.returncode in (0, 2) for c in codes), [c.stderr for c in codes]
        outputs[threads] = {f.name: f.read_bytes() for f in sorted(d.iterdir())}
    same = outputs[1] == outputs[8]
    differing = sorted(k for k in outputs[1] if outputs[1][k] != outputs[8].get(k))
    record(10, {"byte_identical": (same, differing or sorted(outputs[1]))})

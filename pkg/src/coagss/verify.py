"""Closed-form oracle battery for the constant kernel.

Every check compares a library result with an analytic value. Quadrature
tolerances are set for 32 points per decade and scale with the fourth
power of the node spacing on coarser grids, matching the order of the
log-log Hermite scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import laplace, tail_analysis as ta
from .discretization import SampledFunction, build_grid
from .kernels import KernelSpec, boundary_integral
from .solver import Profile, SolveOptions, apply_T, renormalize, solve_selfsimilar

BROWNIAN_IK = 2.0 + 4.0 * math.pi / (3.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    expected: float
    tol: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name}: value={self.value:.12g} expected={self.expected:.12g} "
                f"tol={self.tol:.3g}")


def _close(name, value, expected, tol, relative=True) -> Check:
    scale = abs(expected) if relative and expected != 0 else 1.0
    ok = bool(np.isfinite(value) and abs(value - expected) <= tol * scale)
    return Check(name, ok, float(value), float(expected), float(tol))


def _exp_profile(grid, kernel, amp=1.0, rate=1.0):
    return Profile(SampledFunction(grid, amp * np.exp(-rate * grid.nodes), rate), kernel)


def run_verify(ppd: int = 32, x_min: float = 1e-4, x_max: float = 60.0,
               kernel: KernelSpec | None = None, threads=None) -> list[Check]:
    """Run the battery and return one :class:`Check` per oracle."""
    k = KernelSpec.constant() if kernel is None else kernel
    q = max(1.0, (32.0 / ppd) ** 4)
    grid = build_grid(x_min, x_max, ppd)
    x = grid.nodes
    ex = _exp_profile(grid, k)
    out = []

    out.append(_close("kernels.boundary_integral.constant", boundary_integral(k), 2.0, 1e-12))
    out.append(_close("kernels.boundary_integral.brownian",
                      boundary_integral(KernelSpec.brownian()), BROWNIAN_IK, 1e-10))

    out.append(_close("discretization.mass_of_exp", ex.f.integrate(x_min, math.inf, 1.0),
                      1.0, 1e-6 * q))
    out.append(_close("discretization.partial_integral", ex.f.integrate(1.0, 2.0),
                      math.exp(-1) - math.exp(-2), 1e-6 * q))

    T = apply_T(ex, threads)
    sel = (x >= 0.01) & (x <= 30.0)
    out.append(_close("solver.apply_T_fixed_point",
                      float(np.max(np.abs(T.values[sel] / ex.f.values[sel] - 1.0))), 0.0,
                      1e-4 * q, relative=False))

    r = renormalize(_exp_profile(grid, k, amp=2.0))
    out.append(_close("solver.renormalize_mass", r.mass, 1.0, 1e-12))
    mid = (x >= 0.1) & (x <= 10.0)
    out.append(_close("solver.renormalize_shape",
                      float(np.max(np.abs(r.f.values[mid] / (4.0 * np.exp(-2.0 * x[mid])) - 1.0))),
                      0.0, 1e-5 * q, relative=False))

    p, rep = solve_selfsimilar(k, grid, SolveOptions(), threads, with_residual=False)
    out.append(Check("solver.converged", bool(rep.converged), float(rep.iterations), 20.0, 0.0))
    out.append(_close("solver.profile_vs_exp",
                      float(np.max(np.abs(p.f.values[sel] / np.exp(-x[sel]) - 1.0))), 0.0,
                      1e-3 * q, relative=False))
    out.append(_close("solver.profile_mass", p.mass, 1.0, 1e-9))

    five = _exp_profile(grid, k, amp=5.0, rate=2.0)
    a = ta.slope_a(five)
    i10 = int(np.argmin(np.abs(a.x - 10.0)))
    out.append(_close("tail.slope_a", a.values[i10], 2.0 - math.log(5.0) / a.x[i10], 1e-12))

    a_star, _, r2 = ta.estimate_astar(ex)
    out.append(_close("tail.astar", a_star, 1.0, 1e-9))
    out.append(_close("tail.astar_r2", r2, 1.0, 1e-12))
    b = ta.fit_exponential_bounds(ex, a_star)
    out.append(_close("tail.sandwich_delta", b.delta, 0.01, 0.0))
    out.append(_close("tail.sandwich_fraction", b.holds_fraction, 1.0, 0.0))
    out.append(Check("tail.doubling_margin_positive", ta.doubling_check(ex) > 0,
                     ta.doubling_check(ex), 0.0, 0.0))
    u = ta.prefactor_u(ex, 1.0)
    out.append(_close("tail.prefactor_unit", float(np.max(np.abs(u.values - 1.0))), 0.0,
                      1e-12, relative=False))
    ones = SampledFunction(grid, np.ones(grid.size), 0.0)
    avg = ta.prefactor_averages(ones, 2.0, [10.0])[0][1]
    out.append(_close("tail.prefactor_average", avg, 1.9, 1e-10))
    out.append(_close("tail.mu_constant", ta.mu_constant(k, 1.0), 1.0, 1e-15))
    mu_grid = build_grid(1e-3, 100.0, 16)
    for kern in (k, KernelSpec.brownian(), KernelSpec.perturbed(0.1)):
        mu0 = ta.mu_constant(kern, 1.0)
        mu = SampledFunction(mu_grid, np.full(mu_grid.size, mu0), 0.0)
        res = ta.mu_residual(mu, kern, 1.0, [0.01, 0.1, 1.0, 10.0, 50.0])
        out.append(_close(f"tail.mu_residual.{kern.variant}", res, 0.0, 1e-6, relative=False))

    m = ta.moments(ex)
    for g, val in zip(m.gammas, m.M_values):
        out.append(_close(f"tail.moment_{g:g}", val, math.gamma(g + 1.0), 1e-6 * q))
    out.append(_close("tail.A_fit", m.A_fit, 0.0, 1e-6 * q, relative=False))
    out.append(_close("tail.negative_moment", m.neg_moment, math.gamma(1.5), 1e-6 * q))
    out.append(_close("tail.dyadic_R2", ta.dyadic_average(ex, 2.0),
                      0.5 * (2.0 * math.exp(-1) - 3.0 * math.exp(-2)), 1e-6 * q))
    out.append(Check("tail.log_convexity", m.log_convexity_defect <= 1e-10,
                     m.log_convexity_defect, 0.0, 1e-10))
    out.append(_close("tail.total_variation", ta.total_variation(ex, 1.0, 2.0),
                      math.exp(-1) - math.exp(-2), 1e-6 * q))

    qs = laplace.default_q_grid(1.0)
    U = laplace.transform_U(ones, qs, threads)
    band = laplace.band_check(U, qs, 1.0)
    out.append(_close("laplace.U_at_1", laplace.transform_U(ones, [1.0])[0], math.exp(-1), 1e-6 * q))
    out.append(_close("laplace.band_lo", band[0], math.exp(-0.5), 1e-4))
    out.append(_close("laplace.band_hi", band[1], math.exp(-1e-3), 1e-4))
    V, _ = laplace.transform_V(ones, 0.0, qs, threads)
    out.append(Check("laplace.V_alpha0_bitwise", bool(np.array_equal(U, V)), 0.0, 0.0, 0.0))
    out.append(Check("laplace.U_monotone", laplace.is_monotone(U), 0.0, 0.0, 0.0))
    shifted = SampledFunction(grid, np.full(grid.size, 2.0), 0.0)
    nu = laplace.perturbation_norm(shifted, 1.0, qs, threads)
    out.append(_close("laplace.nu_norm_shift", nu, math.exp(-qs[0]), 1e-6 * q))
    return out

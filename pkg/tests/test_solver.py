import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coagss.discretization import SampledFunction, build_grid
from coagss.errors import DegenerateProfileError, DomainError
from coagss.kernels import KernelSpec
from coagss.solver import (Profile, SolveOptions, apply_T, fit_tail_rate, renormalize, residual,
                           solve_selfsimilar)

from conftest import exp_profile


def test_apply_T_fixed_point(oracle, grid32):
    T = apply_T(oracle)
    x = grid32.nodes
    sel = (x >= 0.01) & (x <= 30)
    assert np.max(np.abs(T.values[sel] / oracle.f.values[sel] - 1)) <= 1e-4


def test_apply_T_zero(grid32):
    zero = Profile(SampledFunction(grid32, np.zeros(grid32.size), 1.0), KernelSpec.brownian())
    assert not np.any(apply_T(zero).values)


@pytest.mark.parametrize("kernel", [KernelSpec.constant(), KernelSpec.brownian()],
                         ids=lambda k: k.variant)
def test_apply_T_scaling_family(kernel, grid32):
    # T[lam f(lam .)] = lam T[f](lam .) by homogeneity zero
    lam = 1.5
    x = grid32.nodes
    g = lambda s: np.exp(-s) * (1 + 0.2 * np.exp(-s / 3))
    base = Profile(SampledFunction(grid32, g(x), 1.0), kernel)
    scaled = Profile(SampledFunction(grid32, lam * g(lam * x), lam), kernel)
    T_base = apply_T(base)
    T_scaled = apply_T(scaled)
    # near x_min both sides lean on their own sub-grid continuation
    sel = (x >= 0.1) & (x <= 20)
    expected = lam * T_base.evaluate(lam * x[sel])
    assert np.max(np.abs(T_scaled.values[sel] / expected - 1)) <= 1e-4


def test_renormalize_identity(oracle):
    p = Profile(oracle.f, oracle.kernel)
    object.__setattr__(p, "mass", 1.0)
    assert renormalize(p) is p


def test_renormalize_mass_two(grid32):
    r = renormalize(exp_profile(grid32, amp=2.0))
    assert r.mass == pytest.approx(1.0, abs=1e-12)
    x = grid32.nodes
    mid = (x >= 0.1) & (x <= 10)
    assert np.max(np.abs(r.f.values[mid] / (4 * np.exp(-2 * x[mid])) - 1)) <= 1e-5


def test_renormalize_zero(grid32):
    with pytest.raises(DegenerateProfileError):
        renormalize(Profile(SampledFunction(grid32, np.zeros(grid32.size), 1.0), KernelSpec.constant()))


@settings(max_examples=10, deadline=None)
@given(amp=st.floats(0.2, 5.0), rate=st.floats(0.5, 2.0))
def test_renormalize_mass_property(grid32, amp, rate):
    r = renormalize(exp_profile(grid32, amp=amp, rate=rate))
    assert abs(r.mass - 1.0) <= 1e-12
    assert np.all(r.f.values >= 0)


def test_constant_kernel_converges_fast(grid32):
    # starting at the exact fixed point only discretization error is left to remove
    p, rep = solve_selfsimilar(KernelSpec.constant(), grid32, SolveOptions(tol=1e-4))
    assert rep.converged and rep.iterations <= 5
    x = grid32.nodes
    sel = (x >= 0.01) & (x <= 30)
    assert np.max(np.abs(p.f.values[sel] / np.exp(-x[sel]) - 1)) <= 1e-3


def test_constant_solution(constant_solution, grid32):
    p, rep = constant_solution
    assert rep.converged
    assert p.mass == pytest.approx(1.0, abs=1e-9)
    x = grid32.nodes
    sel = (x >= 0.01) & (x <= 30)
    assert np.max(np.abs(p.f.values[sel] / np.exp(-x[sel]) - 1)) <= 1e-3
    assert np.all(p.f.values >= 0)
    assert p.check() == []


def test_fixed_point_consistency(constant_solution, oracle):
    _, rep = constant_solution
    exact_sup, _ = residual(oracle)
    assert rep.residual_sup <= 10 * exact_sup


def test_brownian_solution_fine_grid(brownian_ladder):
    p, rep = brownian_ladder[64]
    assert rep.converged
    assert p.mass == pytest.approx(1.0, abs=1e-6)
    assert rep.residual_sup < 1e-6


def test_brownian_refinement_is_cauchy(brownian_ladder):
    # compare on the coarse nodes, weighted by x so the tail counts
    coarse = brownian_ladder[16][0]
    x = coarse.grid.nodes
    sel = x <= 40
    vals = [brownian_ladder[ppd][0].f.evaluate(x[sel]) for ppd in (16, 32, 64)]
    d1 = np.max(x[sel] * np.abs(vals[0] - vals[1]))
    d2 = np.max(x[sel] * np.abs(vals[1] - vals[2]))
    assert math.log2(d1 / d2) >= 1.5


def test_max_iter_zero_returns_initial_guess(grid32):
    p, rep = solve_selfsimilar(KernelSpec.brownian(), grid32, SolveOptions(max_iter=0))
    assert not rep.converged and rep.iterations == 0
    x = grid32.nodes
    assert np.allclose(p.f.values, np.exp(-x), rtol=1e-6, atol=0)


def test_residual_of_exact_solution_fine_grid():
    p = exp_profile(build_grid(1e-4, 60.0, 64))
    assert residual(p)[0] <= 1e-6


def test_residual_zero(grid32):
    zero = Profile(SampledFunction(grid32, np.zeros(grid32.size), 1.0), KernelSpec.constant())
    assert residual(zero) == (0.0, 0.0)


def test_residual_shrinks_under_refinement():
    sups = [residual(exp_profile(build_grid(1e-4, 60.0, ppd)))[0] for ppd in (16, 32)]
    assert sups[0] / sups[1] >= 3


@pytest.mark.parametrize("bad", [dict(damping=0.0), dict(damping=1.5), dict(tol=0.0),
                                 dict(max_iter=-1), dict(init="flat")])
def test_bad_options(bad):
    with pytest.raises(DomainError):
        SolveOptions(**bad)


def test_grid_must_cover_working_range():
    with pytest.raises(DomainError):
        solve_selfsimilar(KernelSpec.constant(), build_grid(1e-3, 60.0, 16))


def test_tail_rate_fit():
    g = build_grid(1e-4, 60.0, 16)
    assert fit_tail_rate(g, 3.0 * np.exp(-0.7 * g.nodes)) == pytest.approx(0.7, rel=1e-10)

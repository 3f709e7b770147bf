"""Self-similar profiles as fixed points of the integrated profile equation.

The profile ``f`` satisfies, for homogeneity-zero kernels,

    x^2 f(x) = int_0^x int_{x-y}^inf K(y, z) y f(z) f(y) dz dy,      (*)
    int_0^inf x f(x) dx = 1.

:func:`apply_T` evaluates the right-hand side of (*) divided by ``x^2``.
Iterating ``f <- T[f]`` directly stalls: near ``x = 0`` the map averages
``f`` against ``2y/x^2`` and leaves flat perturbations almost unchanged.
The solver therefore splits the inner integral as
``int_{x-y}^inf = int_0^inf - int_0^{x-y}``, which turns (*) into

    x^2 f(x) = int_x^inf C'(y) exp(-(Lam(y) - Lam(x))) dy,

with the coagulation flux ``C'(y) = y int_0^{y/2} K(u, y-u) f(u) f(y-u) du``,
the loss rate ``L(s) = int_0^inf K(s, z) f(z) dz`` and ``Lam' = L/s``. For
separable kernels ``Lam`` is a closed-form combination of a few moments.
Both sides have the same fixed points; the second is well conditioned at
small sizes and is what :func:`solve_selfsimilar` iterates, with Anderson
mixing once the iterates are close.

Below ``x_min`` the profile is continued by the same formula restricted to
``[x, x_min]``: the loss-only part ``f(x_min) (x_min/x)^2 exp(Lam(x))`` plus
the gain collected between ``x`` and ``x_min``. ``C'`` is computed on the
decade below ``x_min`` and continued as a power law further down.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _parallel
from .discretization import Grid, SampledFunction, build_grid, closure_integral
from .errors import (ClosureMissingError, DegenerateProfileError, DomainError,
                     NumericalFailureError)
from .kernels import KernelSpec, evaluate

logger = logging.getLogger(__name__)

_GAUSS_U, _GAUSS_W = np.polynomial.legendre.leggauss(4)
_EXTENSION_DECADES = 6
_PAD_NODES = 8
_FLOOR = 1e-300


def fit_tail_rate(grid: Grid, values, fraction: float = 0.25,
                  floor: float = 1e-250) -> float | None:
    """Least-squares decay rate of ``log f`` against ``x`` over the top nodes."""
    start = int(math.floor(grid.size * (1.0 - fraction)))
    x = grid.nodes[start:]
    v = np.asarray(values)[start:]
    keep = v > floor
    if keep.sum() < 2:
        return None
    slope = np.polyfit(x[keep], np.log(v[keep]), 1)[0]
    return float(-slope) if slope < 0 else None


@dataclass(frozen=True)
class Profile:
    """A sampled self-similar profile together with its kernel."""

    f: SampledFunction
    kernel: KernelSpec

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @cached_property
    def mass(self) -> float:
        if self.f.tail_rate is None:
            return self.f.integrate(self.grid.x_min, self.grid.nodes[-1], 1.0)
        return self.f.integrate(self.grid.x_min, math.inf, 1.0)

    def subgrid_mass(self) -> float:
        """Estimate of ``int_0^x_min x f dx`` from the small-size continuation."""
        if self.f.values[0] == 0 or self.f.tail_rate is None:
            return 0.0
        return _Continuation(self.f, self.kernel).subgrid_integral(1.0)

    def check(self) -> list[str]:
        """Names of violated profile invariants (empty when healthy)."""
        bad = []
        if not np.all(self.f.values >= 0):
            bad.append("profile.nonnegative")
        m = self.mass
        if not (math.isfinite(m) and m > 0):
            bad.append("profile.mass_positive")
            return bad
        x2f = self.grid.nodes ** 2 * self.f.values
        if x2f[0] > 1e-3 * x2f.max():
            bad.append("profile.x2f_small_at_xmin")
        if self.subgrid_mass() > 1e-6 * m:
            bad.append("profile.subgrid_mass")
        return bad


@dataclass(frozen=True)
class SolveOptions:
    """Iteration controls.

    ``damping`` mixes the new iterate as ``(1-w) f + w N[f]``; once the
    log-change drops below ``anderson_switch`` the last ``anderson_depth``
    iterates are combined by Anderson mixing (depth 0 disables it).
    """

    damping: float = 1.0
    tol: float = 1e-10
    max_iter: int = 200
    init: "Profile | str" = "exp"
    anderson_depth: int = 5
    anderson_switch: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise DomainError("damping must lie in (0, 1]")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 0:
            raise DomainError("max_iter must be >= 0")
        if self.anderson_depth < 0:
            raise DomainError("anderson_depth must be >= 0")
        if not (isinstance(self.init, Profile) or self.init == "exp"):
            raise DomainError("init must be 'exp' or a Profile")

    def to_dict(self) -> dict:
        return {"damping": self.damping, "tol": self.tol, "max_iter": self.max_iter,
                "anderson_depth": self.anderson_depth,
                "anderson_switch": self.anderson_switch}


@dataclass
class SolveReport:
    iterations: int = 0
    final_update: float = math.inf
    residual_sup: float = math.nan
    residual_l1: float = math.nan
    converged: bool = False
    update_scale: float = math.nan
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "final_update": self.final_update,
                "residual_sup": self.residual_sup, "residual_l1": self.residual_l1,
                "converged": self.converged, "update_scale": self.update_scale}


class _Continuation:
    """Profile on a grid extended a few decades below ``x_min``.

    Holds the loss moments ``M_p = int_0^inf z^-p f dz`` of the separable
    kernel terms and the closed-form ``Lam`` built from them. The first
    pass continues ``f`` by the pure loss balance; the second adds the gain
    flux, computed over the decade below ``x_min`` and continued as a power
    law further down, which restores the next order of the small-size expansion.
    """

    def __init__(self, f: SampledFunction, kernel: KernelSpec):
        if f.tail_rate is None:
            raise ClosureMissingError("profile needs a fitted tail_rate")
        self.f = f
        self.kernel = kernel
        self.terms = kernel.terms
        g = f.grid
        self.x0 = g.x_min
        self.offset = _EXTENSION_DECADES * g.points_per_decade
        self.ext_grid = build_grid(g.x_min * 10.0 ** -_EXTENSION_DECADES, g.nodes[-1],
                                   g.points_per_decade)
        if self.ext_grid.size != g.size + self.offset:
            raise DomainError("extended grid does not align with the profile grid")
        self.moments = np.array([f.integrate(g.x_min, math.inf, -p) for _, p in self.terms])
        self.flux = None
        for k in range(3):
            self.ext = self._extend()
            self.moments = np.array([self.ext.integrate(self.ext_grid.x_min, math.inf, -p)
                                     + self._remainder(-p) for _, p in self.terms])
            if k == 1:
                self.ext = self._extend()
                fg = build_grid(g.x_min / 10.0, g.x_min, g.points_per_decade)
                c = _gain_points(self, fg.nodes)
                if np.all(np.isfinite(c)) and c[-1] > 0:
                    self.flux = SampledFunction(fg, np.maximum(c, 0.0))
        self.ext = self._extend()

    def lam(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for (c, p), m in zip(self.terms, self.moments):
            if p == 0.0:
                out += c * m * np.log(x / self.x0)
            else:
                out += c * m * (x ** p - self.x0 ** p) / p
        return out

    def below(self, x):
        f0 = self.f.values[0]
        if f0 == 0.0:
            return np.zeros_like(x)
        return f0 * (self.x0 / x) ** 2 * np.exp(self.lam(x))

    def _gain_part(self, xs):
        """``x^-2 int_x^x0 C'(y) exp(Lam(x) - Lam(y)) dy`` at ascending nodes ``xs``."""
        if self.flux is None:
            return np.zeros_like(xs)
        t = np.log(np.append(xs, self.x0))
        lam_t = self.lam(np.exp(t))
        J = np.zeros(t.size)
        for i in range(t.size - 2, -1, -1):
            half = 0.5 * (t[i + 1] - t[i])
            y = np.exp(half * _GAUSS_U + 0.5 * (t[i + 1] + t[i]))
            cell = half * np.dot(_GAUSS_W, y * self.flux.evaluate(y, below="power")
                                 * np.exp(lam_t[i] - self.lam(y)))
            J[i] = math.exp(lam_t[i] - lam_t[i + 1]) * J[i + 1] + cell
        return J[:-1] / xs ** 2

    def _extend(self) -> SampledFunction:
        xs = self.ext_grid.nodes[: self.offset]
        vals = np.concatenate([self.below(xs) + self._gain_part(xs), self.f.values])
        return SampledFunction(self.ext_grid, vals, self.f.tail_rate)

    def _remainder(self, gamma: float) -> float:
        # int_0^{x_ext} x^gamma f dx for a local power law through the first cell
        v = self.ext.values
        if v[0] == 0.0 or v[1] == 0.0:
            return 0.0
        k = gamma + 1.0 + math.log(v[1] / v[0]) / self.ext_grid.log_step
        if k <= 0.0:
            return 0.0
        x = self.ext_grid.x_min
        return v[0] * x ** (gamma + 1.0) / k

    def subgrid_integral(self, gamma: float) -> float:
        return self.ext.integrate(self.ext_grid.x_min, self.x0, gamma) + self._remainder(gamma)

    def evaluate(self, x):
        return self.ext.evaluate(x, below="power")


class _HalfRule:
    """Gauss points covering ``(x_ext_min, x/2]`` in ``log`` of the variable.

    Full cells share one global point set so that values there can be
    cached; only the cell containing ``x/2`` is integrated separately.
    """

    def __init__(self, grid: Grid):
        t = grid.log_nodes
        self.t = t
        lo, hi = t[:-1, None], t[1:, None]
        half = 0.5 * (hi - lo)
        self.log_pts = (half * _GAUSS_U + 0.5 * (hi + lo)).ravel()
        self.pts = np.exp(self.log_pts)
        self.wts = (half * _GAUSS_W).ravel()

    def split(self, x: float):
        """Return ``(m, z, w)``: the first ``m`` shared points plus extra points."""
        th = math.log(0.5 * x)
        t = self.t
        j = int(np.searchsorted(t, th, side="right")) - 1
        if j < 0:
            return 0, np.empty(0), np.empty(0)
        m = j * _GAUSS_U.size
        if th > t[j]:
            half = 0.5 * (th - t[j])
            z = np.exp(half * _GAUSS_U + 0.5 * (th + t[j]))
            return m, z, half * _GAUSS_W
        return m, np.empty(0), np.empty(0)


def _below_estimate(t_edge, t, d):
    """Integral over ``t < t_edge`` of a t-density behaving like ``e^{k t}``.

    ``k`` and the edge value come from a quadratic fit of ``log d`` through
    the first three quadrature points.
    """
    if np.any(d[:3] <= 0.0):
        return 0.0
    c2, c1, c0 = np.polyfit(t[:3] - t_edge, np.log(d[:3]), 2)
    k = c1
    return math.exp(c0) / k if k > 0.25 else 0.0


def _finish(rule, dens, extra_dens, extra_w, m):
    total = np.dot(rule.wts[:m], dens) + (np.dot(extra_w, extra_dens) if extra_dens.size else 0.0)
    if m >= 3:
        total += _below_estimate(rule.t[0], rule.log_pts[:3], dens)
    return total


_LAGUERRE_X, _LAGUERRE_W = np.polynomial.laguerre.laggauss(24)


def _gain_points(cont: _Continuation, ys) -> np.ndarray:
    return gain_flux(cont, ys, threads=1)


def gain_flux(cont: _Continuation, ys, threads: int | None = None) -> np.ndarray:
    """``C'(y) = y int_0^{y/2} K(u, y-u) f(u) f(y-u) du`` at the sizes ``ys``."""
    rule = _HalfRule(cont.ext_grid)
    fz = cont.evaluate(rule.pts)
    kernel = cont.kernel
    ys = np.asarray(ys, dtype=float)

    def one(i):
        y = float(ys[i])
        m, z, w = rule.split(y)
        u = rule.pts[:m]
        dens = u * evaluate(kernel, u, y - u) * fz[:m] * cont.evaluate(y - u)
        extra = z * evaluate(kernel, z, y - z) * cont.evaluate(z) * cont.evaluate(y - z) if z.size else z
        return y * _finish(rule, dens, extra, w, m)

    return _parallel.map_indices(one, ys.size, threads)


def implicit_update(f: SampledFunction, kernel: KernelSpec,
                    threads: int | None = None) -> SampledFunction:
    """One application of the loss-implicit form of the profile equation.

    Beyond the last node the flux is evaluated from the profile's
    exponential closure and integrated by Gauss-Laguerre, so the top of the
    grid sees the same continuation as :func:`apply_T`.
    """
    grid = f.grid
    x = grid.nodes
    v = f.values
    # the flux beyond the grid is very sensitive to the continuation, so it
    # uses the local slope at the last node rather than the averaged tail rate
    rate = _local_rate(f)
    cont = _Continuation(f.with_tail_rate(rate), kernel)
    s = _LAGUERRE_X / rate
    y_out = x[-1] + s
    flux = gain_flux(cont, np.concatenate([x, y_out]), threads)
    lam = cont.lam(x)
    ref = lam[-1]
    h = np.maximum(flux[: x.size], 0.0) * np.exp(ref - lam)
    h_out = np.maximum(flux[x.size:], 0.0) * np.exp(ref - cont.lam(y_out))
    top = float(np.dot(_LAGUERRE_W, h_out * np.exp(_LAGUERRE_X))) / rate
    cells = SampledFunction(grid, h, rate).tail_cumulative(0.0).values
    H = np.maximum(cells - cells[-1] + top, 0.0)
    vals = H * np.exp(lam - ref) / x ** 2
    return SampledFunction(grid, vals, fit_tail_rate(grid, vals) or f.tail_rate)


def apply_T(p: Profile, threads: int | None = None) -> SampledFunction:
    """Right-hand side of the integrated profile equation divided by ``x^2``.

    The kernel is split into its separable parts ``c (y/z)^p`` so the inner
    integral becomes a weighted tail cumulative of ``f``. Every node is
    computed independently with a fixed summation order, so the result is
    identical for any thread count.
    """
    f = p.f
    grid = f.grid
    if not np.any(f.values > 0):
        return SampledFunction(grid, np.zeros(grid.size), f.tail_rate)
    cont = _Continuation(f, p.kernel)
    ext = cont.ext
    terms = cont.terms
    cums = [ext.tail_cumulative(-q) for _, q in terms]
    rule = _HalfRule(cont.ext_grid)
    z = rule.pts
    fz = cont.evaluate(z)
    head1 = [c * z ** (2.0 + q) * fz for c, q in terms]
    head2 = [c * z * G.evaluate(z, below="power") for (c, _), G in zip(terms, cums)]
    xs = grid.nodes

    def one(i):
        x = float(xs[i])
        m, ze, we = rule.split(x)
        rest = x - z[:m]
        f_rest = cont.evaluate(rest)
        if ze.size:
            fe = cont.evaluate(ze)
            fe_rest = cont.evaluate(x - ze)
        total = 0.0
        for k, ((c, q), G) in enumerate(zip(terms, cums)):
            d1 = head1[k][:m] * G.evaluate(rest, below="power")
            d2 = head2[k][:m] * rest ** (1.0 + q) * f_rest
            e1 = e2 = np.empty(0)
            if ze.size:
                e1 = c * ze ** (2.0 + q) * fe * G.evaluate(x - ze, below="power")
                e2 = c * ze * G.evaluate(ze, below="power") * (x - ze) ** (1.0 + q) * fe_rest
            total += _finish(rule, d1, e1, we, m)
            total += _finish(rule, d2, e2, we, m)
        return total

    rhs = _parallel.map_indices(one, xs.size, threads)
    vals = np.maximum(rhs / xs ** 2, 0.0)
    return SampledFunction(grid, vals, fit_tail_rate(grid, vals) or f.tail_rate)


def _local_rate(f: SampledFunction) -> float:
    """Decay rate of the interpolant at the last node, or the fitted tail rate."""
    if f.values[-1] > 0:
        local = -f.slope_at_end() / f.grid.nodes[-1]
        if local > 0:
            return local
    return f.tail_rate


def _mass(g: SampledFunction) -> float:
    return g.integrate(g.grid.x_min, math.inf, 1.0)


def _normalize_amplitude(g: SampledFunction) -> SampledFunction:
    m = _mass(g)
    if not (math.isfinite(m) and m > 0):
        raise DegenerateProfileError("profile has no positive finite mass")
    return SampledFunction(g.grid, g.values / m, g.tail_rate)


def renormalize(p: Profile) -> Profile:
    """Map ``f -> lam f(lam x)`` with ``lam`` the mass, giving mass 1.

    This is the invariance of the profile equation. Resampling goes through
    the interpolant; the interpolation error left in the mass is removed by
    a final amplitude factor.
    """
    lam = p.mass
    if not (math.isfinite(lam) and lam > 0):
        raise DegenerateProfileError("cannot renormalize a profile with zero mass")
    if lam == 1.0:
        return p
    return Profile(_normalize_amplitude(p.f.rescaled(lam, lam)), p.kernel)


def initial_guess(grid: Grid) -> SampledFunction:
    return SampledFunction(grid, np.exp(-grid.nodes), 1.0)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.max(np.abs(new - old) / np.maximum(old, _FLOOR)))


class _Anderson:
    """Anderson mixing on ``log f`` with a short history."""

    def __init__(self, depth: int, beta: float):
        self.depth = depth
        self.beta = beta
        self.xs: list[np.ndarray] = []
        self.rs: list[np.ndarray] = []

    def reset(self):
        self.xs.clear()
        self.rs.clear()

    def step(self, x: np.ndarray, r: np.ndarray) -> np.ndarray:
        self.xs.append(x)
        self.rs.append(r)
        del self.xs[: -(self.depth + 1)]
        del self.rs[: -(self.depth + 1)]
        if len(self.xs) < 2:
            return x + self.beta * r
        dR = np.diff(np.array(self.rs), axis=0).T
        dX = np.diff(np.array(self.xs), axis=0).T
        gam = np.linalg.lstsq(dR, r, rcond=None)[0]
        return x + self.beta * r - (dX + self.beta * dR) @ gam


def solve_selfsimilar(kernel: KernelSpec, grid: Grid, opts: SolveOptions | None = None,
                      threads: int | None = None, with_residual: bool = True):
    """Iterate the loss-implicit map to the mass-one self-similar profile.

    Returns ``(profile, report)``. Running out of iterations is reported
    through ``report.converged`` and the last iterate is returned.
    """
    opts = SolveOptions() if opts is None else opts
    if grid.x_min > 1e-4 * (1 + 1e-12) or grid.nodes[-1] < 40.0:
        raise DomainError("solver grid must span at least [1e-4, 40]")
    target = grid
    # the last few cells absorb the error of continuing past the grid, so the
    # iteration runs on a slightly longer grid that is cut back at the end
    grid = build_grid(grid.x_min, grid.nodes[-1] * 10.0 ** (_PAD_NODES / grid.points_per_decade),
                      grid.points_per_decade)
    if isinstance(opts.init, Profile):
        src = opts.init.f
        f = SampledFunction(grid, src.evaluate(grid.nodes, below="power"), src.tail_rate)
    else:
        f = initial_guess(grid)
    report = SolveReport()
    mixer = _Anderson(opts.anderson_depth, opts.damping)
    w = opts.damping
    for it in range(1, opts.max_iter + 1):
        raw = implicit_update(f, kernel, threads)
        if not np.all(np.isfinite(raw.values)):
            raise NumericalFailureError(f"non-finite values at iteration {it}")
        report.update_scale = _mass(raw)
        new = _normalize_amplitude(raw)
        lf = np.log(np.maximum(f.values, _FLOOR))
        r = np.log(np.maximum(new.values, _FLOOR)) - lf
        if opts.anderson_depth > 0 and np.max(np.abs(r)) < opts.anderson_switch:
            vals = np.exp(mixer.step(lf, r))
        else:
            mixer.reset()
            vals = (1.0 - w) * f.values + w * new.values
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise NumericalFailureError(f"invalid values at iteration {it}")
        nxt = _normalize_amplitude(
            SampledFunction(grid, vals, fit_tail_rate(grid, vals) or f.tail_rate))
        change = _relative_change(nxt.values, f.values)
        report.history.append(change)
        report.iterations = it
        report.final_update = change
        f = nxt
        logger.debug("iteration %d: relative change %.3e", it, change)
        if change <= opts.tol:
            report.converged = True
            break
    vals = f.values[: target.size]
    f = _normalize_amplitude(SampledFunction(target, vals, fit_tail_rate(target, vals) or f.tail_rate))
    profile = Profile(f, kernel)
    if with_residual:
        report.residual_sup, report.residual_l1 = residual(profile, threads=threads)
    return profile, report


def residual(p: Profile, refine: int = 2, threads: int | None = None):
    """Defect ``|x^2 f - x^2 T[f]| / (x^2 f + floor)`` at the profile nodes.

    ``T`` is evaluated on a grid ``refine`` times finer (the profile is
    interpolated onto it), so for a converged profile the defect measures
    discretization error rather than iteration error. Returns
    ``(sup_defect, l1_defect)``, the latter weighted by ``x dx``.
    """
    f = p.f
    grid = p.grid
    if not np.any(f.values > 0):
        return 0.0, 0.0
    fine = build_grid(grid.x_min, grid.nodes[-1], grid.points_per_decade * refine)
    fine_f = SampledFunction(fine, f.evaluate(fine.nodes, below="power"), _local_rate(f))
    T = apply_T(Profile(fine_f, p.kernel), threads)
    idx = np.rint(np.log(grid.nodes / fine.x_min) / fine.log_step).astype(int)
    tv = T.values[idx]
    diff = np.abs(f.values - tv)
    sup = float(np.max(diff / (f.values + _FLOOR)))
    num = SampledFunction(grid, diff).integrate(grid.x_min, grid.nodes[-1], 1.0)
    den = f.integrate(grid.x_min, grid.nodes[-1], 1.0)
    return sup, float(num / den) if den > 0 else 0.0

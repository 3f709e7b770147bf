"""Tail diagnostics of a computed profile.

The local decay rate is ``a(x) = -log f(x) / x`` and ``a*`` its limit; the
prefactor is ``u(x) = f(x) exp(a* x)``. Everything here is a pure function
of a :class:`~coagss.solver.Profile` (or of a sampled prefactor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretization import SampledFunction
from .errors import (DomainError, PositivityError, RangeError,
                     TailNotExponentialError)
from .kernels import KernelSpec, boundary_integral, evaluate
from .solver import Profile, fit_tail_rate

DELTAS = (0.01, 0.02, 0.05, 0.1, 0.2)
DEFAULT_WINDOW = (0.25, 0.75)
DOUBLING_C = 10.0


@dataclass(frozen=True)
class NodeSeries:
    """Values attached to a subset of grid nodes (may be negative)."""

    x: np.ndarray
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True)
class ExponentialBounds:
    C1: float
    alpha1: float
    C2: float
    alpha2: float
    delta: float
    holds_fraction: float


@dataclass
class TailReport:
    a_star: float
    fit_window: tuple[float, float]
    fit_r2: float
    C1: float = math.nan
    alpha1: float = math.nan
    C2: float = math.nan
    alpha2: float = math.nan
    delta: float = math.nan
    sandwich_fraction: float = math.nan
    doubling_margin: float = math.nan
    window_stability: float = math.nan
    mu0: float = math.nan
    u_sup_dev: float = math.nan
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["fit_window"] = list(self.fit_window)
        d["flags"] = list(self.flags)
        return d


@dataclass
class MomentReport:
    gammas: list
    M_values: list
    A_fit: float
    neg_gamma: float
    neg_moment: float
    dyadic_R: list
    dyadic_values: list
    dyadic_sup: float
    log_convexity_defect: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# -- positivity and the local rate -------------------------------------------

def positivity_radius(p: Profile) -> tuple[float, bool]:
    """Smallest node ``x`` with ``f > 0`` on ``[x, x_max]``, and a degenerate flag.

    The scan runs downward from the top node. A profile whose top node is
    not positive returns ``(x_max, True)``.
    """
    v = p.f.values
    x = p.grid.nodes
    bad = np.flatnonzero(v <= 0)
    if bad.size == 0:
        return float(x[0]), False
    last = int(bad[-1])
    if last == v.size - 1:
        return float(x[-1]), True
    return float(x[last + 1]), False


def _log_f(p: Profile, x):
    vals = p.f.evaluate(x, below="power")
    bad = np.flatnonzero(np.atleast_1d(vals) <= 0)
    if bad.size:
        xb = float(np.atleast_1d(x)[bad[0]])
        raise PositivityError(f"f is not positive at x={xb:.6g}", node=xb)
    return np.log(vals)


def slope_a(p: Profile, x_from: float = 1.0) -> NodeSeries:
    """``a(x) = -log f(x) / x`` at every node ``x >= x_from``."""
    x = p.grid.nodes
    sel = x >= x_from
    if not np.any(sel):
        raise RangeError(f"no grid node at or above x={x_from:g}")
    xs = x[sel]
    v = p.f.values[sel]
    bad = np.flatnonzero(v <= 0)
    if bad.size:
        raise PositivityError(f"f is not positive at node x={xs[bad[0]]:.6g}",
                              node=float(xs[bad[0]]))
    return NodeSeries(xs, -np.log(v) / xs)


def _a_at(p: Profile, x):
    x = np.asarray(x, dtype=float)
    return -_log_f(p, x) / x


# -- a* and the exponential sandwich ------------------------------------------

def estimate_astar(p: Profile, window=DEFAULT_WINDOW):
    """Least-squares slope of ``-log f`` against ``x`` over a window.

    ``window`` is given as fractions of ``x_max``. Returns
    ``(a_star, (x_lo, x_hi), r2)``.
    """
    lo_frac, hi_frac = window
    if not 0.0 <= lo_frac < hi_frac <= 1.0:
        raise DomainError("window fractions must satisfy 0 <= lo < hi <= 1")
    x_max = p.grid.nodes[-1]
    lo, hi = lo_frac * x_max, hi_frac * x_max
    x = p.grid.nodes
    sel = (x >= lo) & (x <= hi)
    if sel.sum() < 3:
        raise RangeError("fit window holds fewer than three nodes")
    xs = x[sel]
    v = p.f.values[sel]
    bad = np.flatnonzero(v <= 0)
    if bad.size:
        raise PositivityError(f"f is not positive at node x={xs[bad[0]]:.6g}",
                              node=float(xs[bad[0]]))
    y = -np.log(v)
    slope, icpt = np.polyfit(xs, y, 1)
    res = y - (slope * xs + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), (float(lo), float(hi)), r2


def window_stability(p: Profile, shift: float = 0.1, window=DEFAULT_WINDOW) -> float:
    """Largest relative change of ``a*`` when the window moves by ``+-shift * x_max``."""
    base = estimate_astar(p, window)[0]
    worst = 0.0
    for s in (-shift, shift):
        lo = min(max(window[0] + s, 0.0), 1.0)
        hi = min(max(window[1] + s, 0.0), 1.0)
        a = estimate_astar(p, (lo, hi))[0]
        worst = max(worst, abs(a - base) / abs(base))
    return worst


def fit_exponential_bounds(p: Profile, a_star: float, x_hi: float | None = None,
                           deltas=DELTAS) -> ExponentialBounds:
    """Bracket ``f`` between ``C1 exp(-alpha1 x)`` and ``C2 exp(-alpha2 x)`` on ``[1, x_hi]``.

    ``alpha1, alpha2 = a*(1 +- delta)`` for the smallest ``delta`` on the
    ladder giving positive finite constants. The constants are extremes
    over the nodes, so the sandwich holds there by construction; it is
    checked again independently and the fraction of nodes where it holds is
    returned.
    """
    if not a_star > 0:
        raise DomainError("a_star must be positive")
    x = p.grid.nodes
    x_hi = 0.75 * x[-1] if x_hi is None else x_hi
    sel = (x >= 1.0) & (x <= x_hi)
    if not np.any(sel):
        raise RangeError("no nodes in [1, x_hi]")
    xs = x[sel]
    v = p.f.values[sel]
    with np.errstate(divide="ignore"):
        lv = np.log(v)
    for d in deltas:
        a1, a2 = a_star * (1.0 + d), a_star * (1.0 - d)
        lc1 = float(np.min(lv + a1 * xs))
        lc2 = float(np.max(lv + a2 * xs))
        if not (math.isfinite(lc1) and math.isfinite(lc2)) or lc2 > 700.0 or lc1 < -700.0:
            continue
        C1, C2 = math.exp(lc1), math.exp(lc2)
        if not (C1 > 0 and math.isfinite(C2)):
            continue
        # compare in log space with a rounding allowance
        tol = 1e-12 * np.maximum(1.0, np.abs(lv))
        ok = (lc1 - a1 * xs <= lv + tol) & (lv <= lc2 - a2 * xs + tol)
        return ExponentialBounds(C1, a1, C2, a2, d, float(np.mean(ok)))
    raise TailNotExponentialError(
        f"no exponential sandwich with delta <= {max(deltas):g} on [1, {x_hi:g}]")


# -- doubling and flatness ----------------------------------------------------

def doubling_check(p: Profile, C: float = DOUBLING_C, R: float = 2.0) -> float:
    """Margin of ``a(X) - a(x) <= log(C (X+1)) / X`` with ``X = 2x - 2``.

    Tested at every node ``x >= R`` with ``X <= x_max``; the margin is minus
    the largest violation, so a positive margin means the inequality holds.
    """
    if not C > 0:
        raise DomainError("C must be positive")
    x = p.grid.nodes
    sel = (x >= R) & (2.0 * x - 2.0 <= x[-1])
    if not np.any(sel):
        raise RangeError(f"grid too short for doubling from R={R:g}")
    xs = x[sel]
    X = 2.0 * xs - 2.0
    gap = _a_at(p, X) - _a_at(p, xs) - np.log(C * (X + 1.0)) / X
    return float(-np.max(gap))


def flatness_profile(p: Profile, delta: float) -> NodeSeries:
    """``M_delta(x) = max over [delta x, x] of a`` at nodes with ``delta x >= 1``."""
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    x = p.grid.nodes
    sel = delta * x >= 1.0
    if not np.any(sel):
        raise RangeError(f"no node with delta*x >= 1 for delta={delta:g}")
    a_nodes = slope_a(p, 1.0)
    ax, av = a_nodes.x, a_nodes.values
    xs = x[sel]
    lower = _a_at(p, delta * xs)
    out = np.empty(xs.size)
    for i, xv in enumerate(xs):
        inside = (ax >= delta * xv) & (ax <= xv)
        out[i] = max(float(lower[i]), float(av[inside].max()) if np.any(inside) else -math.inf)
    return NodeSeries(xs, out)


# -- prefactor ---------------------------------------------------------------

def prefactor_u(p: Profile, a_star: float) -> SampledFunction:
    """``u(x) = f(x) exp(a* x)``, formed in log space."""
    if not a_star > 0:
        raise DomainError("a_star must be positive")
    x = p.grid.nodes
    v = p.f.values
    pos = v > 0
    lu = np.full(v.shape, -np.inf)
    lu[pos] = np.log(v[pos]) + a_star * x[pos]
    if np.any(lu > 700.0):
        raise DomainError("prefactor overflows; a_star is far too large for this profile")
    u = np.where(pos, np.exp(lu), 0.0)
    rate = fit_tail_rate(p.grid, u)
    return SampledFunction(p.grid, u, max(rate or 0.0, 0.0))


def prefactor_averages(u: SampledFunction, A: float, R_list, a_star: float | None = None):
    """``(R, (1/R) int_1^{A R} u dx)`` for each ``R``."""
    if A < 1.0:
        raise DomainError("A must be at least 1")
    x_max = u.grid.nodes[-1]
    out = []
    for R in R_list:
        R = float(R)
        if a_star is not None and R < 2.0 / a_star:
            raise DomainError(f"R={R:g} is below 2/a*")
        if A * R > x_max * (1 + 1e-12):
            raise RangeError(f"A*R={A * R:g} exceeds x_max={x_max:g}")
        if A * R <= 1.0:
            raise RangeError(f"A*R={A * R:g} must exceed 1")
        out.append((R, u.integrate(1.0, min(A * R, x_max), 0.0) / R))
    return out


def mu_constant(kernel: KernelSpec, a_star: float) -> float:
    """``2 a* / I_K``; zero for a non-positive ``a*``."""
    if a_star <= 0:
        return 0.0
    return 2.0 * a_star / boundary_integral(kernel)


_MU_U, _MU_W = np.polynomial.legendre.leggauss(10)
_MU_CELLS = 48


def _half_convolution(mu_eval, kernel: KernelSpec, x: float) -> float:
    """``int_0^x K(y, x-y) mu(y) mu(x-y) dy`` via the half ``(0, x/2]``.

    Dyadic cells ``[x 2^-(j+2), x 2^-(j+1)]`` in ``log y`` grade the nodes
    toward the ``y^-alpha`` endpoint; below the last cell the integrand is
    continued as ``y^-alpha`` times its value there.
    """
    edges = np.log(0.5 * x) - math.log(2.0) * np.arange(_MU_CELLS + 1.0)
    hi, lo = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    y = np.exp(half * _MU_U + 0.5 * (hi + lo))
    dens = y * evaluate(kernel, y, x - y) * mu_eval(y) * mu_eval(x - y)
    total = float(np.sum(half * _MU_W * dens))
    y0 = math.exp(edges[-1])
    d0 = float(evaluate(kernel, y0, x - y0) * mu_eval(np.array([y0]))[0]
               * mu_eval(np.array([x - y0]))[0])
    total += y0 * d0 / (1.0 - kernel.alpha)
    return 2.0 * total


def mu_residual(mu: SampledFunction, kernel: KernelSpec, a_star: float, test_points) -> float:
    """Sup relative defect of ``x mu(x) = (1/2a*) int_0^x K(y, x-y) mu(x-y) mu(y) dy``.

    Below its first node ``mu`` is continued by its first value.
    """
    if not a_star > 0:
        raise DomainError("a_star must be positive")
    first = float(mu.values[0])

    def mu_eval(y):
        return mu.evaluate(y, below=lambda z: np.full(z.shape, first))

    worst = 0.0
    for x in np.atleast_1d(np.asarray(test_points, dtype=float)):
        lhs = x * float(mu_eval(np.array([x]))[0])
        rhs = _half_convolution(mu_eval, kernel, float(x)) / (2.0 * a_star)
        worst = max(worst, abs(lhs - rhs) / (lhs + 1e-300))
    return worst


# -- moments -----------------------------------------------------------------

def _full_moment(p: Profile, w: float) -> float:
    """``int_0^inf x^w f dx``; the part below ``x_min`` uses the local power law."""
    f = p.f
    x0 = p.grid.x_min
    total = f.integrate(x0, math.inf, w)
    v0 = f.values[0]
    if v0 > 0:
        k = w + 1.0 + f.slope_at_start()
        if k <= 0:
            raise DomainError(f"x^{w:g} f is not integrable at 0")
        total += v0 * x0 ** (w + 1.0) / k
    return total


def dyadic_average(p: Profile, R: float) -> float:
    """``(1/R) int_{R/2}^R x f dx``."""
    if R / 2.0 < p.grid.x_min or R > p.grid.nodes[-1]:
        raise RangeError(f"[R/2, R] with R={R:g} is not inside the grid")
    return p.f.integrate(R / 2.0, R, 1.0) / R


def log_convexity_defect(p: Profile, gammas) -> float:
    """Largest ``M(g2)^2 / (M(g1) M(g3)) - 1`` over consecutive equally spaced triples."""
    g = np.asarray(sorted(gammas), dtype=float)
    M = np.array([_full_moment(p, gi) for gi in g])
    worst = -math.inf
    for i in range(g.size - 2):
        if abs((g[i] + g[i + 2]) / 2.0 - g[i + 1]) > 1e-12:
            continue
        worst = max(worst, M[i + 1] ** 2 / (M[i] * M[i + 2]) - 1.0)
    return float(worst)


def moments(p: Profile, gammas=(1, 2, 3, 5, 10), neg_gamma: float = 0.5,
            R_list=None) -> MomentReport:
    """Moment diagnostics: ``M(gamma)``, the growth constant ``A``, a negative
    moment ``int x^{1-gamma} f`` and the dyadic mass averages."""
    gammas = [float(g) for g in gammas]
    if any(g < 1.0 for g in gammas):
        raise DomainError("moment exponents must be >= 1")
    if not 0.0 <= neg_gamma < 1.0:
        raise DomainError("the negative-moment exponent must lie in [0, 1)")
    M = [_full_moment(p, g) for g in gammas]
    A_fit = max(math.log(m / g ** g) / g for m, g in zip(M, gammas))
    neg = _full_moment(p, 1.0 - neg_gamma)
    if R_list is None:
        lo = math.ceil(math.log2(2.0 * p.grid.x_min))
        hi = math.floor(math.log2(p.grid.nodes[-1]))
        R_list = [2.0 ** k for k in range(lo, hi + 1)]
    dy = [dyadic_average(p, R) for R in R_list]
    lc_grid = np.arange(1.0, 10.0 + 1e-9, 0.5)
    return MomentReport(gammas=gammas, M_values=M, A_fit=float(A_fit), neg_gamma=neg_gamma,
                        neg_moment=float(neg), dyadic_R=[float(r) for r in R_list],
                        dyadic_values=[float(d) for d in dy], dyadic_sup=float(max(dy)),
                        log_convexity_defect=log_convexity_defect(p, lc_grid))


# -- bounded variation ---------------------------------------------------------

def total_variation(p: Profile, a: float, b: float) -> float:
    """``sum |f(x_{i+1}) - f(x_i)|`` over the nodes in ``[a, b]`` plus both endpoints."""
    x = p.grid.nodes
    if not (x[0] <= a < b <= x[-1]):
        raise RangeError(f"[{a:g}, {b:g}] is not inside the grid")
    inner = x[(x > a) & (x < b)]
    pts = np.concatenate(([a], inner, [b]))
    vals = p.f.evaluate(pts)
    return float(np.sum(np.abs(np.diff(vals))))


# -- consolidated report ---------------------------------------------------------

def analyze_tail(p: Profile, window=DEFAULT_WINDOW, C: float = DOUBLING_C,
                 r2_min: float = 0.999) -> TailReport:
    """Run the tail diagnostics and collect them in a :class:`TailReport`.

    Failures of individual diagnostics become flags instead of exceptions.
    """
    a_star, win, r2 = estimate_astar(p, window)
    rep = TailReport(a_star=a_star, fit_window=win, fit_r2=r2)
    if r2 < r2_min:
        rep.flags.append("astar.fit_r2_low")
    if not a_star > 0:
        rep.flags.append("astar.nonpositive")
        return rep
    try:
        b = fit_exponential_bounds(p, a_star, win[1])
        rep.C1, rep.alpha1, rep.C2, rep.alpha2 = b.C1, b.alpha1, b.C2, b.alpha2
        rep.delta, rep.sandwich_fraction = b.delta, b.holds_fraction
        if b.holds_fraction < 1.0:
            rep.flags.append("sandwich.violated")
    except TailNotExponentialError:
        rep.flags.append("sandwich.tail_not_exponential")
    try:
        rep.doubling_margin = doubling_check(p, C)
        if rep.doubling_margin <= 0:
            rep.flags.append("doubling.negative_margin")
    except (RangeError, PositivityError):
        rep.flags.append("doubling.unavailable")
    rep.window_stability = window_stability(p, 0.1, window)
    if rep.window_stability > 0.01:
        rep.flags.append("astar.window_unstable")
    rep.mu0 = mu_constant(p.kernel, a_star)
    u = prefactor_u(p, a_star)
    x = p.grid.nodes
    sel = (x >= win[0]) & (x <= win[1])
    rep.u_sup_dev = float(np.max(np.abs(u.values[sel] - rep.mu0)))
    return rep

"""Geometric grids, log-log interpolation and quadrature of sampled functions.

A :class:`SampledFunction` is modelled cell by cell. Between two positive
nodes ``log g`` is a cubic Hermite polynomial in ``log x`` whose slopes come
from a not-a-knot spline through the positive run; this reproduces pure
power laws exactly and is fourth order for smooth data. Cells touching a
zero node fall back to linear interpolation in ``x``. Beyond the last node
the function is closed by ``g(x_N) exp(-b (x - x_N))`` with ``b`` the
``tail_rate``.

Cell integrals split ``x^gamma g(x) dx = exp(E(t)) dt`` (``t = log x``) into
the exponential of the chord of ``E``, integrated in closed form, plus a
Gauss-Legendre correction for the cubic remainder. For a power law the
remainder vanishes and the integral is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .errors import ClosureMissingError, DomainError

_GAUSS_U, _GAUSS_W = np.polynomial.legendre.leggauss(10)


@dataclass(frozen=True)
class Grid:
    """Geometric node set ``x_i = x_min * 10**(i / points_per_decade)``."""

    x_min: float
    x_max: float
    points_per_decade: int

    def __post_init__(self):
        if not (0.0 < self.x_min < self.x_max and math.isfinite(self.x_max)):
            raise DomainError("grid needs 0 < x_min < x_max < inf")
        if int(self.points_per_decade) != self.points_per_decade or self.points_per_decade < 8:
            raise DomainError("points_per_decade must be an integer >= 8")

    @cached_property
    def size(self) -> int:
        decades = math.log10(self.x_max / self.x_min)
        return int(math.ceil(self.points_per_decade * decades - 1e-9)) + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.x_min * 10.0 ** (np.arange(self.size) / self.points_per_decade)
        x[0] = self.x_min
        x.flags.writeable = False
        return x

    @cached_property
    def log_nodes(self) -> np.ndarray:
        t = np.log(self.nodes)
        t.flags.writeable = False
        return t

    @property
    def ratio(self) -> float:
        return 10.0 ** (1.0 / self.points_per_decade)

    @property
    def log_step(self) -> float:
        return math.log(10.0) / self.points_per_decade

    def __len__(self):
        return self.size

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max,
                "points_per_decade": self.points_per_decade}


def build_grid(x_min: float, x_max: float, points_per_decade: int) -> Grid:
    return Grid(float(x_min), float(x_max), int(points_per_decade))


def _scaled_upper_gamma(s: float, z: float) -> float:
    """Return ``exp(z) * Gamma(s, z)`` for ``z > 0``."""
    if z > 600.0:
        # asymptotic series, stopped at its smallest term
        total, term = 1.0, 1.0
        for k in range(1, 60):
            nxt = term * (s - k) / z
            if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
                break
            term = nxt
            total += term
        return z ** (s - 1.0) * total
    if s > 0:
        return float(special.gammaincc(s, z) * special.gamma(s) * math.exp(z))
    if s == 0.0:
        return float(special.exp1(z) * math.exp(z))
    # Gamma(s, z) = (Gamma(s + 1, z) - z^s exp(-z)) / s
    return (_scaled_upper_gamma(s + 1.0, z) - z ** s) / s


def closure_integral(value: float, x_last: float, rate: float, gamma: float,
                     upper: float = math.inf) -> float:
    """``int_{x_last}^{upper} x^gamma * value * exp(-rate (x - x_last)) dx``."""
    if value == 0.0 or upper <= x_last:
        return 0.0
    s = gamma + 1.0
    if rate == 0.0:
        if math.isinf(upper):
            raise DomainError("closure with zero rate is not integrable to infinity")
        if s == 0.0:
            return value * math.log(upper / x_last)
        return value * (upper ** s - x_last ** s) / s
    head = _scaled_upper_gamma(s, rate * x_last)
    if math.isinf(upper):
        tail = 0.0
    else:
        tail = math.exp(-rate * (upper - x_last)) * _scaled_upper_gamma(s, rate * upper)
    return value * rate ** (-s) * (head - tail)


@dataclass(frozen=True)
class SampledFunction:
    """Nonnegative node values on a :class:`Grid` with optional exponential closure."""

    grid: Grid
    values: np.ndarray
    tail_rate: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise DomainError(f"expected {self.grid.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("sampled values must be finite")
        if np.any(v < 0):
            raise DomainError("sampled values must be nonnegative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.tail_rate is not None:
            rate = float(self.tail_rate)
            if not (math.isfinite(rate) and rate >= 0.0):
                raise DomainError("tail_rate must be finite and nonnegative")
            object.__setattr__(self, "tail_rate", rate)

    def with_tail_rate(self, rate):
        return SampledFunction(self.grid, self.values, rate)

    # -- cell model -----------------------------------------------------

    @cached_property
    def _model(self):
        v = self.values
        t = self.grid.log_nodes
        pos = v > 0
        ell = np.full(v.shape, -np.inf)
        ell[pos] = np.log(v[pos])
        slope = np.zeros(v.shape)
        n = v.size
        i = 0
        while i < n:
            if not pos[i]:
                i += 1
                continue
            j = i
            while j + 1 < n and pos[j + 1]:
                j += 1
            if j - i >= 2:
                spline = CubicSpline(t[i:j + 1], ell[i:j + 1], bc_type="not-a-knot")
                slope[i:j + 1] = spline(t[i:j + 1], 1)
            elif j == i + 1:
                slope[i:j + 1] = (ell[j] - ell[i]) / (t[j] - t[i])
            i = j + 1
        log_cell = pos[:-1] & pos[1:]
        return ell, slope, log_cell

    def _log_hermite(self, idx, u):
        """Cubic Hermite ``log g`` on cell ``idx`` at local coordinate ``u``."""
        ell, slope, _ = self._model
        h = self.grid.log_step
        l0, l1 = ell[idx], ell[idx + 1]
        sec = (l1 - l0) / h
        corr = u * (1.0 - u) * h * ((slope[idx] - sec) * (1.0 - u) - (slope[idx + 1] - sec) * u)
        return l0 + u * (l1 - l0) + corr

    def evaluate(self, x, below: str = "raise"):
        """Vectorized evaluation.

        ``below`` selects what happens under ``x_min``: ``"raise"``,
        ``"power"`` (power-law extrapolation with the first node's log slope)
        or a callable returning the values there.
        """
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        g = self.grid
        v = self.values
        xn = g.nodes
        out = np.empty_like(x)

        lo = x < xn[0]
        hi = x > xn[-1]
        mid = ~(lo | hi)
        if np.any(lo):
            if callable(below):
                out[lo] = below(x[lo])
            elif below == "power":
                _, slope, _ = self._model
                out[lo] = v[0] * (x[lo] / xn[0]) ** slope[0] if v[0] > 0 else 0.0
            else:
                raise DomainError(f"x={x[lo].min():g} lies below x_min={xn[0]:g}")
        if np.any(hi):
            if self.tail_rate is None:
                raise ClosureMissingError("evaluation beyond the last node needs a tail_rate")
            out[hi] = v[-1] * np.exp(-self.tail_rate * (x[hi] - xn[-1]))
        if np.any(mid):
            xm = x[mid]
            tm = np.log(xm)
            idx = np.searchsorted(g.log_nodes, tm, side="right") - 1
            idx = np.clip(idx, 0, g.size - 2)
            u = (tm - g.log_nodes[idx]) / g.log_step
            res = np.empty_like(xm)
            _, _, log_cell = self._model
            lc = log_cell[idx]
            if np.any(lc):
                res[lc] = np.exp(self._log_hermite(idx[lc], u[lc]))
            lin = ~lc
            if np.any(lin):
                il = idx[lin]
                w = (xm[lin] - xn[il]) / (xn[il + 1] - xn[il])
                res[lin] = v[il] + (v[il + 1] - v[il]) * w
            at_node = xm == xn[idx]
            res[at_node] = v[idx[at_node]]
            at_next = xm == xn[idx + 1]
            res[at_next] = v[idx[at_next] + 1]
            out[mid] = res
        return out[0] if scalar else out

    def __call__(self, x):
        return self.evaluate(x)

    # -- quadrature -----------------------------------------------------

    def _cell_integrals(self, idx, ua, ub, gamma):
        """``int x^gamma g dx`` over local coordinates [ua, ub] of cells ``idx``."""
        g = self.grid
        h = g.log_step
        t0 = g.log_nodes[idx]
        _, _, log_cell = self._model
        out = np.zeros(idx.shape)
        lc = log_cell[idx]
        if np.any(lc):
            i, a, b, tc = idx[lc], ua[lc], ub[lc], t0[lc]

            def expo(u):
                return (gamma + 1.0) * u * h + self._log_hermite(i[:, None], u)

            # E(u) relative to (gamma+1) t0, added back at the end
            Ea = expo(a[:, None])[:, 0]
            Eb = expo(b[:, None])[:, 0]
            d = Eb - Ea
            width = b - a
            # factor out the larger endpoint so steep cells cannot overflow
            base = np.maximum(Ea, Eb)
            ad = np.abs(d)
            small = ad < 1e-12
            phi = np.where(small, 1.0 - 0.5 * ad, -np.expm1(-ad) / np.where(small, 1.0, ad))
            um = 0.5 * (b - a)[:, None] * _GAUSS_U + 0.5 * (b + a)[:, None]
            line = Ea[:, None] + (um - a[:, None]) * (d / np.where(width > 0, width, 1.0))[:, None]
            rem = expo(um) - line
            corr = 0.5 * width * np.sum(_GAUSS_W * np.exp(line - base[:, None]) * np.expm1(rem), axis=1)
            out[lc] = h * np.exp(base + (gamma + 1.0) * tc) * (width * phi + corr)
        lin = ~lc
        if np.any(lin):
            i = idx[lin]
            xn = g.nodes
            v = self.values
            x0, x1 = xn[i], xn[i + 1]
            xa = x0 * np.exp(ua[lin] * h)
            xb = x0 * np.exp(ub[lin] * h)
            slope = (v[i + 1] - v[i]) / (x1 - x0)
            c0 = v[i] - slope * x0
            out[lin] = c0 * _power_integral(xa, xb, gamma) + slope * _power_integral(xa, xb, gamma + 1.0)
        return out

    def _pieces(self, a, b, gamma):
        """Contributions to ``int_a^b`` ordered from the top cell downward."""
        g = self.grid
        xn = g.nodes
        if a < xn[0] * (1.0 - 1e-12):
            raise DomainError(f"lower limit {a:g} lies below x_min={xn[0]:g}")
        a = max(a, xn[0])
        if not b > a:
            raise DomainError("integration needs a < b")
        pieces = []
        top = min(b, xn[-1])
        if b > xn[-1]:
            if self.tail_rate is None:
                raise ClosureMissingError("integral beyond the last node needs a tail_rate")
            pieces.append(closure_integral(self.values[-1], xn[-1], self.tail_rate, gamma, b))
        if top > a:
            t = g.log_nodes
            h = g.log_step
            ia = min(int(np.searchsorted(t, math.log(a), side="right")) - 1, g.size - 2)
            ib = min(int(np.searchsorted(t, math.log(top), side="left")) - 1, g.size - 2)
            ib = max(ib, ia)
            idx = np.arange(ib, ia - 1, -1)
            ua = np.zeros(idx.size)
            ub = np.ones(idx.size)
            ub[0] = min(1.0, (math.log(top) - t[ib]) / h)
            ua[-1] = max(0.0, (math.log(a) - t[ia]) / h)
            if top == xn[ib + 1]:
                ub[0] = 1.0
            if a == xn[ia]:
                ua[-1] = 0.0
            pieces.extend(self._cell_integrals(idx, ua, ub, gamma).tolist())
        return pieces

    def integrate(self, a: float, b: float = math.inf, weight_exponent: float = 0.0) -> float:
        """``int_a^b x^weight_exponent g(x) dx`` (``b`` may be ``inf``)."""
        total = 0.0
        for piece in self._pieces(float(a), float(b), float(weight_exponent)):
            total += piece
        return total

    def tail_cumulative(self, weight_exponent: float = 0.0) -> "SampledFunction":
        """Sampled ``x -> int_x^inf s^weight_exponent g(s) ds``."""
        if self.tail_rate is None:
            raise ClosureMissingError("tail_cumulative needs a tail_rate")
        g = self.grid
        gamma = float(weight_exponent)
        idx = np.arange(g.size - 2, -1, -1)
        cells = self._cell_integrals(idx, np.zeros(idx.size), np.ones(idx.size), gamma)
        head = closure_integral(self.values[-1], g.nodes[-1], self.tail_rate, gamma)
        acc = np.cumsum(np.concatenate(([head], cells)))
        vals = np.maximum(acc[::-1], 0.0)
        rate = self.tail_rate if self.tail_rate > 0 else None
        return SampledFunction(g, vals, rate)

    def slope_at_start(self) -> float:
        """Log-log slope of the model at ``x_min``."""
        return float(self._model[1][0])

    def slope_at_end(self) -> float:
        """Log-log slope of the model at the last node."""
        return float(self._model[1][-1])

    def rescaled(self, amplitude: float, scale: float) -> "SampledFunction":
        """Node values of ``amplitude * g(scale * x)``; sub-grid values extrapolated."""
        v = amplitude * self.evaluate(scale * self.grid.nodes, below="power")
        rate = None if self.tail_rate is None else self.tail_rate * scale
        return SampledFunction(self.grid, v, rate)


def _power_integral(a, b, p):
    """``int_a^b x^p dx`` elementwise."""
    if p == -1.0:
        return np.log(b / a)
    return (b ** (p + 1.0) - a ** (p + 1.0)) / (p + 1.0)


def interp(g: SampledFunction, x):
    return g.evaluate(x)


def integrate(g: SampledFunction, a: float, b: float = math.inf,
              weight_exponent: float = 0.0) -> float:
    return g.integrate(a, b, weight_exponent)


def tail_cumulative(g: SampledFunction, weight_exponent: float = 0.0) -> SampledFunction:
    return g.tail_cumulative(weight_exponent)


def sample(grid: Grid, func, tail_rate: float | None = None) -> SampledFunction:
    """Sample a vectorized callable on the grid nodes."""
    return SampledFunction(grid, np.asarray(func(grid.nodes), dtype=float), tail_rate)

"""Laplace-transform functionals of the prefactor ``u``.

``U(q) = int_1^inf e^{-qx} u dx`` and ``V(q) = int_1^inf x^-alpha e^{-qx} u dx``
share one code path, so ``V`` with ``alpha = 0`` is ``U`` bit for bit.
Beyond the last node ``u`` follows its exponential closure and the
``e^{-qx}`` factor is folded into that closure analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _parallel
from .discretization import SampledFunction
from .errors import ClosureMissingError, DomainError

Q_LOW = 1e-3
Q_POINTS = 40
BAND_RATIO = 0.1


def default_q_grid(a_star: float, q_low: float = Q_LOW, n: int = Q_POINTS) -> np.ndarray:
    """Geometric grid of ``n`` points on ``[q_low, a*/2]``."""
    if not a_star / 2.0 > q_low:
        raise DomainError(f"a*/2 = {a_star / 2:g} must exceed q_low = {q_low:g}")
    return np.geomspace(q_low, a_star / 2.0, n)


def _check_q(q_grid) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q_grid, dtype=float))
    if not np.all(q > 0):
        raise DomainError("transform arguments must be positive")
    return q


def _transform(u: SampledFunction, weight_exponent: float, q_grid, threads=None) -> np.ndarray:
    if u.tail_rate is None:
        raise ClosureMissingError("u needs a tail closure")
    q = _check_q(q_grid)
    x = u.grid.nodes
    if x[0] > 1.0 or x[-1] <= 1.0:
        raise DomainError("u must be sampled on a grid containing x = 1")

    def one(i):
        damped = SampledFunction(u.grid, u.values * np.exp(-q[i] * x), u.tail_rate + q[i])
        return damped.integrate(1.0, math.inf, weight_exponent)

    return _parallel.map_indices(one, q.size, threads)


def transform_U(u: SampledFunction, q_grid, threads=None) -> np.ndarray:
    """``U(q) = int_1^inf e^{-qx} u(x) dx`` at each ``q``."""
    return _transform(u, 0.0, q_grid, threads)


def transform_V(u: SampledFunction, alpha: float, q_grid, threads=None):
    """``V(q) = int_1^inf x^-alpha e^{-qx} u dx`` and ``max q^{1-alpha} V(q)``."""
    if not 0.0 <= alpha < 1.0:
        raise DomainError("alpha must lie in [0, 1)")
    q = _check_q(q_grid)
    V = _transform(u, -alpha if alpha else 0.0, q, threads)
    return V, float(np.max(q ** (1.0 - alpha) * V))


def band_check(U_values, q_grid, a_star: float):
    """Extremes of ``q U(q)`` over the points of ``q_grid`` in ``(0, a*/2]``."""
    q = _check_q(q_grid)
    U = np.asarray(U_values, dtype=float)
    sel = q <= a_star / 2.0 * (1 + 1e-12)
    if not np.any(sel):
        raise DomainError("no transform argument lies in (0, a*/2]")
    qU = q[sel] * U[sel]
    return float(qU.min()), float(qU.max())


def perturbation_norm(u: SampledFunction, mu0: float, q_grid, threads=None) -> float:
    """``sup_q |q V_nu(q)|`` for ``nu = u - mu0``.

    ``int_1^inf e^{-qx} mu0 dx = mu0 e^{-q}/q`` is subtracted in closed form.
    """
    if not mu0 > 0:
        raise DomainError("mu0 must be positive")
    q = _check_q(q_grid)
    U = transform_U(u, q, threads)
    return float(np.max(np.abs(q * U - mu0 * np.exp(-q))))


def is_monotone(U_values) -> bool:
    """True when consecutive differences of ``U`` are all ``<= 0``."""
    return bool(np.all(np.diff(np.asarray(U_values, dtype=float)) <= 0.0))


@dataclass
class LaplaceReport:
    q_grid: list
    U_values: list
    V_values: list
    alpha: float
    band_lo: float
    band_hi: float
    V_bound: float
    nu_norm: float
    monotone: bool
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def laplace_report(u: SampledFunction, a_star: float, mu0: float, alpha: float = 0.0,
                   q_grid=None, ratio: float = BAND_RATIO, threads=None) -> LaplaceReport:
    """Transforms, band extremes and the perturbation norm on one ``q`` grid.

    ``nu_norm`` is a supremum over the finite grid and so underestimates the
    supremum over all ``q``.
    """
    q = default_q_grid(a_star) if q_grid is None else _check_q(q_grid)
    U = transform_U(u, q, threads)
    V, V_bound = transform_V(u, alpha, q, threads)
    lo, hi = band_check(U, q, a_star)
    flags = []
    if lo <= 0:
        flags.append("band.degenerate")
    elif lo < ratio * hi:
        flags.append("band.ratio")
    mono = is_monotone(U)
    if not mono:
        flags.append("U.not_monotone")
    nu = perturbation_norm(u, mu0, q, threads) if mu0 > 0 else math.nan
    return LaplaceReport(q_grid=q.tolist(), U_values=U.tolist(), V_values=V.tolist(),
                         alpha=alpha, band_lo=lo, band_hi=hi, V_bound=V_bound,
                         nu_norm=nu, monotone=mono, flags=flags)

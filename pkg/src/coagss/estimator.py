"""scikit-learn style wrapper around the profile solver.

``fit`` computes the profile for the configured kernel; there is no training
data, so ``X`` and ``y`` are accepted and ignored. ``predict`` evaluates the
profile at particle sizes and ``transform`` returns the columns
``f, a, u`` used in the profile CSV.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import tail_analysis as ta
from .discretization import build_grid
from .errors import CoagssError, DomainError
from .kernels import KernelSpec
from .solver import SolveOptions, solve_selfsimilar


class SelfSimilarProfile(TransformerMixin, BaseEstimator):
    """Self-similar profile of the coagulation equation.

    Parameters
    ----------
    kernel : {"constant", "brownian", "perturbed"}
    eps, alpha : float
        Perturbation size and exponent, used by the perturbed kernel only.
    x_min, x_max : float
        Grid bounds.
    ppd : int
        Grid points per decade.
    tol, damping, max_iter
        Solver controls, see :class:`~coagss.solver.SolveOptions`.
    threads : int or None
        Worker count; ``None`` reads ``COAGSS_THREADS``.

    Attributes
    ----------
    profile_ : Profile
    report_ : SolveReport
    a_star_ : float
        Tail decay rate (nan when the fit fails).
    """

    def __init__(self, kernel="constant", eps=0.1, alpha=1.0 / 3.0, x_min=1e-4, x_max=60.0,
                 ppd=32, tol=1e-10, damping=1.0, max_iter=200, threads=None):
        self.kernel = kernel
        self.eps = eps
        self.alpha = alpha
        self.x_min = x_min
        self.x_max = x_max
        self.ppd = ppd
        self.tol = tol
        self.damping = damping
        self.max_iter = max_iter
        self.threads = threads

    def _kernel_spec(self) -> KernelSpec:
        if self.kernel == "constant":
            return KernelSpec.constant()
        if self.kernel == "brownian":
            return KernelSpec.brownian()
        if self.kernel == "perturbed":
            return KernelSpec.perturbed(self.eps, self.alpha)
        raise DomainError(f"unknown kernel {self.kernel!r}")

    def fit(self, X=None, y=None):
        opts = SolveOptions(damping=self.damping, tol=self.tol, max_iter=self.max_iter)
        grid = build_grid(self.x_min, self.x_max, self.ppd)
        self.profile_, self.report_ = solve_selfsimilar(self._kernel_spec(), grid, opts,
                                                        self.threads)
        try:
            self.a_star_ = ta.estimate_astar(self.profile_)[0]
        except CoagssError:
            self.a_star_ = np.nan
        return self

    def _sizes(self, X) -> np.ndarray:
        x = check_array(X, ensure_2d=False).reshape(-1)
        lo, hi = self.profile_.grid.x_min, self.profile_.grid.nodes[-1]
        if np.any(x < lo):
            raise DomainError(f"sizes below x_min = {lo:g} are outside the grid")
        return x

    def predict(self, X) -> np.ndarray:
        """Profile values ``f(x)`` at the sizes in ``X`` (one column)."""
        check_is_fitted(self, "profile_")
        return self.profile_.f.evaluate(self._sizes(X))

    def transform(self, X) -> np.ndarray:
        """Columns ``f``, ``a = -log(f)/x`` and ``u = f e^{a* x}``."""
        check_is_fitted(self, "profile_")
        x = self._sizes(X)
        f = self.profile_.f.evaluate(x)
        with np.errstate(divide="ignore", over="ignore"):
            a = -np.log(f) / x
            u = f * np.exp(self.a_star_ * x)
        return np.column_stack([f, a, u])

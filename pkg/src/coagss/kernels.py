"""Homogeneity-zero coagulation kernels and their structural constants.

Every supported kernel has the separable form

    K(x, y) = c0 + c1 * ((x/y)**alpha + (y/x)**alpha)

which the solver exploits to assemble the collision integrals from a few
weighted tail cumulatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError

VARIANTS = ("constant", "brownian", "perturbed")


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric coagulation kernel of homogeneity zero.

    Use the :meth:`constant`, :meth:`brownian` and :meth:`perturbed`
    constructors rather than the raw initializer.
    """

    variant: str
    c: float = 2.0
    eps: float = 0.0
    alpha: float = 0.0
    c0: float = field(init=False)
    c1: float = field(init=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "constant":
            if not self.c > 0:
                raise DomainError("constant kernel needs c > 0")
            c0, c1, alpha = float(self.c), 0.0, 0.0
        elif self.variant == "brownian":
            c0, c1, alpha = 2.0, 1.0, 1.0 / 3.0
        else:
            if not 0.0 <= self.eps < 1.0:
                raise DomainError("perturbed kernel needs eps in [0, 1)")
            if not 0.0 <= self.alpha < 1.0:
                raise DomainError("perturbed kernel needs alpha in [0, 1)")
            c0, c1, alpha = 2.0 - 2.0 * self.eps, float(self.eps), float(self.alpha)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def constant(cls, c: float = 2.0) -> "KernelSpec":
        return cls("constant", c=c)

    @classmethod
    def brownian(cls) -> "KernelSpec":
        """Smoluchowski's kernel (x^{1/3}+y^{1/3})(x^{-1/3}+y^{-1/3})."""
        return cls("brownian")

    @classmethod
    def perturbed(cls, eps: float, alpha: float = 1.0 / 3.0) -> "KernelSpec":
        """``2 + eps*((x/y)^alpha + (y/x)^alpha - 2)``, a near-constant kernel."""
        return cls("perturbed", eps=eps, alpha=alpha)

    # analytic constants of the upper envelope, diagonal bound and derivative bound

    @property
    def K0(self) -> float:
        if self.c1 == 0.0:
            return self.c0 / 2.0
        # c0 + c1*s <= (c0/2 + c1)*s since s = q + 1/q >= 2
        return max(self.c0, 0.0) / 2.0 + self.c1

    @property
    def k0(self) -> float:
        return self.c0 + 2.0 * self.c1

    @property
    def kappa(self) -> float:
        return 1.0

    @property
    def derivative_constant(self) -> float:
        """C with |dK/dx| <= C/x * ((x/y)^a + (y/x)^a)."""
        return self.c1 * self.alpha

    @property
    def terms(self) -> tuple[tuple[float, float], ...]:
        """Separable decomposition as ``(coefficient, p)`` with K = sum c (x/y)^p."""
        if self.c1 == 0.0 or self.alpha == 0.0:
            return ((self.c0 + 2.0 * self.c1, 0.0),)
        return ((self.c0, 0.0), (self.c1, self.alpha), (self.c1, -self.alpha))

    @property
    def is_representative(self) -> bool:
        """False for the perturbed family, which is one admissible choice among many."""
        return self.variant != "perturbed"

    def label(self) -> str:
        if self.variant == "constant":
            return f"constant(c={self.c:g})"
        if self.variant == "brownian":
            return "brownian"
        return f"perturbed(eps={self.eps:g}, alpha={self.alpha:g})"

    def to_dict(self) -> dict:
        return {"variant": self.variant, "c": self.c, "eps": self.eps,
                "alpha": self.alpha, "representative": self.is_representative}

    def __call__(self, x, y):
        return evaluate(self, x, y)


def evaluate(kernel: KernelSpec, x, y):
    """Rate ``K(x, y)``; accepts scalars or broadcastable arrays.

    The ratio is always formed as larger/smaller so that the result is
    exactly symmetric.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(x > 0) and np.all(y > 0)):
        raise DomainError("kernel arguments must be positive")
    if kernel.c1 == 0.0 or kernel.alpha == 0.0:
        out = np.full(np.broadcast(x, y).shape, kernel.c0 + 2.0 * kernel.c1)
    else:
        q = (np.maximum(x, y) / np.minimum(x, y)) ** kernel.alpha
        out = kernel.c0 + kernel.c1 * (q + 1.0 / q)
    return out[()] if out.ndim == 0 else out


# keep the short name the rest of the package uses
eval_kernel = evaluate


@dataclass(frozen=True)
class KernelBoundsReport:
    K0_fit: float
    k0_fit: float
    kappa: float
    alpha_used: float
    derivative_bound_fit: float
    samples: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_bounds(kernel: KernelSpec, sample_count: int = 10_000,
                  seed: int = 0) -> KernelBoundsReport:
    """Audit the kernel constants on log-uniform samples over [1e-8, 1e8].

    One tenth of the pairs lie on the diagonal so that the diagonal minimum
    is actually attained.
    """
    if sample_count < 100:
        raise DomainError("verify_bounds needs at least 100 samples")
    rng = np.random.default_rng(seed)
    x = 10.0 ** rng.uniform(-8.0, 8.0, sample_count)
    y = 10.0 ** rng.uniform(-8.0, 8.0, sample_count)
    y[: sample_count // 10] = x[: sample_count // 10]

    a = kernel.alpha
    envelope = (x / y) ** a + (y / x) ** a
    K = evaluate(kernel, x, y)
    K0_fit = float(np.max(K / envelope))

    band = np.abs(x - y) <= kernel.kappa * (x + y)
    k0_fit = float(np.min(K[band]))

    h = 1e-6 * x
    dK = (evaluate(kernel, x + h, y) - evaluate(kernel, x - h, y)) / (2.0 * h)
    deriv_fit = float(np.max(np.abs(dK) * x / envelope))

    return KernelBoundsReport(K0_fit=K0_fit, k0_fit=k0_fit, kappa=kernel.kappa,
                              alpha_used=a, derivative_bound_fit=deriv_fit,
                              samples=sample_count)


_GRADING_FLOOR = 1e-14


def boundary_integral(kernel: KernelSpec, tol: float = 1e-10,
                      max_points: int = 128) -> float:
    """Compute ``I_K = int_0^1 K(s, 1-s) ds``.

    The diagonal value ``K(1/2, 1/2)`` is integrated exactly and only the
    remainder goes through quadrature, so constant kernels come out exact.
    The remainder is symmetric about 1/2; the half [0, 1/2] is split into
    dyadic cells ``[2^-(j+1)/2, 2^-j/2]`` down to 1e-14, each integrated by
    Gauss-Legendre in log s. The number of points per cell is doubled until
    two successive estimates agree to ``tol``.
    """
    if not 0.0 < tol <= 1e-3:
        raise DomainError("tol must lie in (0, 1e-3]")
    diag = float(evaluate(kernel, 0.5, 0.5))
    if kernel.c1 == 0.0 or kernel.alpha == 0.0:
        return diag

    n_cells = int(math.ceil(math.log2(0.5 / _GRADING_FLOOR)))
    edges = np.log(0.5 * 2.0 ** -np.arange(n_cells + 1.0))[::-1]
    s_floor = float(np.exp(edges[0]))

    def remainder(s):
        return evaluate(kernel, s, 1.0 - s) - diag

    # below the floor the remainder behaves like c * s^-alpha
    below = s_floor * remainder(s_floor) / (1.0 - kernel.alpha)

    prev = None
    n = 4
    while n <= max_points:
        nodes, weights = np.polynomial.legendre.leggauss(n)
        lo, hi = edges[:-1, None], edges[1:, None]
        t = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        s = np.exp(t)
        cells = np.sum(0.5 * (hi - lo) * weights * s * remainder(s), axis=1)
        est = diag + 2.0 * (float(np.sum(cells)) + below)
        if prev is not None and abs(est - prev) <= tol * abs(est):
            return est
        prev = est
        n *= 2
    raise ConvergenceError(
        f"boundary integral did not reach tol={tol:g} with {max_points} points per cell",
        estimate=prev)

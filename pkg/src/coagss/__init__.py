"""Self-similar profiles of the coagulation equation for homogeneity-zero kernels."""

from .discretization import Grid, SampledFunction, build_grid
from .errors import (ClosureMissingError, CoagssError, ConvergenceError, DegenerateProfileError,
                     DomainError, NumericalFailureError, PositivityError, RangeError,
                     TailNotExponentialError)
from .estimator import SelfSimilarProfile
from .kernels import KernelSpec, boundary_integral, eval_kernel, verify_bounds
from .solver import Profile, SolveOptions, SolveReport, apply_T, renormalize, residual, solve_selfsimilar
from .tail_analysis import analyze_tail, estimate_astar, moments, prefactor_u

__version__ = "0.1.0"

__all__ = [
    "Grid", "SampledFunction", "build_grid",
    "CoagssError", "DomainError", "ConvergenceError", "ClosureMissingError",
    "DegenerateProfileError", "NumericalFailureError", "PositivityError", "RangeError",
    "TailNotExponentialError",
    "SelfSimilarProfile",
    "KernelSpec", "boundary_integral", "eval_kernel", "verify_bounds",
    "Profile", "SolveOptions", "SolveReport", "apply_T", "renormalize", "residual",
    "solve_selfsimilar",
    "analyze_tail", "estimate_astar", "moments", "prefactor_u",
]

"""Profile CSV and JSON report serialization.

Profiles are written with 17 significant digits so that reading them back
reproduces every node value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .discretization import SampledFunction, build_grid
from .errors import DomainError
from .kernels import KernelSpec
from .solver import Profile, fit_tail_rate

HEADER = ("x", "f", "a", "u")
SCHEMA = 1


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def profile_columns(p: Profile, a_star: float | None):
    """Node columns ``x, f, a, u`` (``u`` is nan without ``a*``)."""
    x = p.grid.nodes
    f = p.f.values
    with np.errstate(divide="ignore"):
        lf = np.log(f)
    a = -lf / x
    if a_star is None or not a_star > 0:
        u = np.full(x.shape, math.nan)
    else:
        with np.errstate(over="ignore"):
            u = np.where(f > 0, np.exp(lf + a_star * x), 0.0)
    return x, f, a, u


def write_profile_csv(path, p: Profile, a_star: float | None = None) -> None:
    cols = profile_columns(p, a_star)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def read_profile_csv(path, kernel: KernelSpec) -> Profile:
    """Rebuild a :class:`Profile` from a CSV written by :func:`write_profile_csv`.

    The geometric grid is recovered from the node positions and checked
    against them.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != HEADER:
        raise DomainError(f"{path}: expected header {','.join(HEADER)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: malformed number ({exc})") from None
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != 4:
        raise DomainError(f"{path}: need at least three rows of four columns")
    x, f = data[:, 0], data[:, 1]
    if not (np.all(np.isfinite(x)) and np.all(x > 0) and np.all(np.diff(x) > 0)):
        raise DomainError(f"{path}: node positions must be positive and increasing")
    ppd = int(round(1.0 / math.log10(x[1] / x[0])))
    grid = build_grid(x[0], x[-1], ppd)
    if grid.size != x.size or not np.allclose(grid.nodes, x, rtol=1e-12, atol=0):
        raise DomainError(f"{path}: nodes do not form a geometric grid")
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise DomainError(f"{path}: profile values must be finite and nonnegative")
    return Profile(SampledFunction(grid, f, fit_tail_rate(grid, f)), kernel)


def _clean(obj):
    """Turn numpy scalars, tuples and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def report_text(report: dict) -> str:
    body = {"schema": SCHEMA}
    body.update(report)
    return json.dumps(_clean(body), indent=2, sort_keys=True) + "\n"


def write_report(path, report: dict) -> None:
    Path(path).write_text(report_text(report))


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())

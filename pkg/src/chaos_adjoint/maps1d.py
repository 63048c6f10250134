"""Parameterized unimodal maps of the unit interval.

Five families share one peak at x = 1/2:

* ``logistic``    F = (4 - xi/4) x (1 - x)
* ``tent``        F = (2 - xi/2) min(x, 1 - x)
* ``cusp``        F = (1 - xi/4) (1 - u/2 - sqrt(u)/2)
* ``sharp_cusp``  F = (1 - xi/4) (1 - u/2 - u**0.3/2)
* ``param_cusp``  F = 1 - xi u - (1 - xi) sqrt(u)

with u = |2x - 1|.  The first four are height-parameterized and used for the
smoothness scans; ``param_cusp`` morphs the cusp map (xi = 0.5) into the unit
tent map (xi = 1) and is the map used for adjoint work.

All functions accept scalars or numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("logistic", "tent", "cusp", "sharp_cusp", "param_cusp")
SHARP_EXPONENT = 0.3
X_PEAK = 0.5


class MapDomainError(ValueError):
    pass


class SlopeSingularityError(ArithmeticError):
    pass


class InversionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Map1D:
    kind: str
    xi: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown map family {self.kind!r}; expected one of {KINDS}")
        hi = 1.0 if self.kind == "param_cusp" else 4.0
        if not 0.0 <= self.xi <= hi:
            raise ValueError(f"xi={self.xi} outside [0, {hi}] for {self.kind}")

    @property
    def singular_peak(self) -> bool:
        """True when |F'| is unbounded at x = 1/2."""
        if self.kind in ("cusp", "sharp_cusp"):
            return self.xi < 4.0
        return self.kind == "param_cusp" and self.xi < 1.0

    @property
    def height(self) -> float:
        return float(eval_map(self, X_PEAK))

    def with_xi(self, xi: float) -> "Map1D":
        return Map1D(self.kind, xi)


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)) or np.any(~np.isfinite(x)):
        raise MapDomainError("x must lie in [0, 1]")
    return x


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def eval_map(m: Map1D, x):
    x = _check_domain(x)
    xi = m.xi
    u = np.abs(2.0 * x - 1.0)
    if m.kind == "logistic":
        y = (4.0 - xi / 4.0) * x * (1.0 - x)
    elif m.kind == "tent":
        y = (2.0 - xi / 2.0) * np.minimum(x, 1.0 - x)
    elif m.kind == "cusp":
        y = (1.0 - xi / 4.0) * (1.0 - 0.5 * u - 0.5 * np.sqrt(u))
    elif m.kind == "sharp_cusp":
        y = (1.0 - xi / 4.0) * (1.0 - 0.5 * u - 0.5 * u**SHARP_EXPONENT)
    else:
        y = 1.0 - xi * u - (1.0 - xi) * np.sqrt(u)
    # round-off at the endpoints must not leave [0, 1]
    return _out(np.clip(y, 0.0, 1.0))


def _dF_du(m: Map1D, u):
    """dF/du for the |2x-1|-based families (u > 0)."""
    xi = m.xi
    with np.errstate(divide="ignore"):
        if m.kind == "cusp":
            return (1.0 - xi / 4.0) * (-0.5 - 0.25 / np.sqrt(u))
        if m.kind == "sharp_cusp":
            return (1.0 - xi / 4.0) * (-0.5 - 0.5 * SHARP_EXPONENT * u ** (SHARP_EXPONENT - 1.0))
        return -xi - 0.5 * (1.0 - xi) / np.sqrt(u)


def branch_slope(m: Map1D, x, branch: str):
    """Slope on a given monotone branch; the peak itself takes the one-sided limit.

    Returns +/-inf at the peak for singular families instead of raising.
    """
    x = np.asarray(x, dtype=float)
    sgn = 1.0 if branch == "left" else -1.0
    if m.kind == "logistic":
        return (4.0 - m.xi / 4.0) * (1.0 - 2.0 * x)
    if m.kind == "tent":
        return sgn * (2.0 - m.xi / 2.0) * np.ones_like(x)
    u = np.abs(2.0 * x - 1.0)
    if m.kind == "param_cusp" and m.xi == 1.0:
        return sgn * 2.0 * np.ones_like(x)
    # du/dx = -2 on the left branch, +2 on the right
    return -2.0 * sgn * _dF_du(m, u)


def inverse_abs_slope(m: Map1D, x, branch: str):
    """1/|F'(x)| on a branch, continuous through the peak (0 where F' is unbounded)."""
    s = np.abs(branch_slope(m, x, branch))
    with np.errstate(divide="ignore"):
        return np.where(np.isinf(s), 0.0, 1.0 / s)


def map_slope(m: Map1D, x):
    x = _check_domain(x)
    if m.singular_peak and np.any(x == X_PEAK):
        raise SlopeSingularityError(f"dF/dx is unbounded at x=1/2 for {m.kind}(xi={m.xi})")
    if m.kind in ("tent",) or (m.kind == "param_cusp" and m.xi == 1.0):
        if np.any(x == X_PEAK):
            raise SlopeSingularityError("tent map is not differentiable at x=1/2")
    s = np.where(x <= X_PEAK, branch_slope(m, x, "left"), branch_slope(m, x, "right"))
    return _out(s)


def param_derivative(m: Map1D, x):
    """dF/dxi evaluated at x."""
    x = _check_domain(x)
    u = np.abs(2.0 * x - 1.0)
    if m.kind == "logistic":
        d = -0.25 * x * (1.0 - x)
    elif m.kind == "tent":
        d = -0.5 * np.minimum(x, 1.0 - x)
    elif m.kind == "cusp":
        d = -0.25 * (1.0 - 0.5 * u - 0.5 * np.sqrt(u))
    elif m.kind == "sharp_cusp":
        d = -0.25 * (1.0 - 0.5 * u - 0.5 * u**SHARP_EXPONENT)
    else:
        d = -u + np.sqrt(u)
    return _out(d)


def invert_branch(m: Map1D, y, branch: str, tol: float = 1e-12, max_iter: int = 100):
    """Solve F(x) = y on the left (x <= 1/2) or right (x >= 1/2) branch.

    Newton iteration started at 0.25 / 0.75, safeguarded by bisection on the
    branch interval whenever a Newton step would leave the current bracket.
    Works element-wise on arrays.
    """
    if branch not in ("left", "right"):
        raise ValueError("branch must be 'left' or 'right'")
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y).copy()
    top = m.height
    if np.any((y < 0.0) | (y > top + 1e-15)) or np.any(~np.isfinite(y)):
        raise MapDomainError(f"y outside the range [0, {top}] of the {branch} branch")

    # bracket [a, b] with F(a) <= y <= F(b) along the branch orientation
    if branch == "left":
        lo, hi = np.zeros_like(y), np.full_like(y, X_PEAK)
        x = np.full_like(y, 0.25)
    else:
        lo, hi = np.full_like(y, X_PEAK), np.ones_like(y)
        x = np.full_like(y, 0.75)
    inc = 1.0 if branch == "left" else -1.0

    x = np.where(y >= top, X_PEAK, x)
    done = y >= top
    for _ in range(max_iter):
        if np.all(done):
            break
        fx = eval_map(m, x) - y
        ok = np.abs(fx) <= tol
        fresh = ok & ~done
        if fresh.any():
            # one last Newton step takes converged points to round-off
            a, b = (0.0, X_PEAK) if branch == "left" else (X_PEAK, 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                xp = x[fresh] - fx[fresh] / branch_slope(m, x[fresh], branch)
            keep = np.isfinite(xp) & (xp >= a) & (xp <= b)
            x[fresh] = np.where(keep, xp, x[fresh])
        done = done | ok | (hi - lo <= 4.0 * np.finfo(float).eps)
        if np.all(done):
            break
        # shrink the bracket with the current iterate
        below = inc * fx < 0.0
        lo = np.where(~done & below, x, lo)
        hi = np.where(~done & ~below, x, hi)
        s = branch_slope(m, x, branch)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - fx / s
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(done, x, xn)
    else:
        fx = eval_map(m, x) - y
        if np.any((np.abs(fx) > tol) & (hi - lo > 4.0 * np.finfo(float).eps) & (y < top)):
            raise InversionError(f"branch inversion did not converge in {max_iter} iterations")
    return float(x[0]) if scalar else x

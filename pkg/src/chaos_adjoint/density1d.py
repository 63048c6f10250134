"""Discrete Frobenius-Perron operator, stationary density and density adjoint for 1D maps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .maps1d import Map1D, eval_map, inverse_abs_slope, invert_branch, param_derivative


class ConvergenceError(ArithmeticError):
    pass


class SingularSystemError(ArithmeticError):
    pass


@dataclass
class SparseTransition:
    """Row-sparse transition operator (at most 4 nonzeros per row)."""

    matrix: sp.csr_matrix
    lambda_hint: float | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def rows(self):
        """Per-row lists of (column, weight)."""
        A = self.matrix
        return [
            list(zip(A.indices[A.indptr[i]:A.indptr[i + 1]].tolist(),
                     A.data[A.indptr[i]:A.indptr[i + 1]].tolist()))
            for i in range(A.shape[0])
        ]

    def __matmul__(self, x):
        return self.matrix @ x


@dataclass
class DiscreteDensity1D:
    values: np.ndarray
    lam: float
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return grid(self.n)

    def mean(self, J=None) -> float:
        """(1/n) J^T rho with J(y) = y by default."""
        Jv = self.nodes if J is None else np.asarray(J, dtype=float)
        return float(Jv @ self.values) / self.n


@dataclass
class AdjointSolution1D:
    phi: np.ndarray
    eta: float
    residual: float = 0.0
    v: np.ndarray = field(default=None, repr=False)


def grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _interp_weights(x, n):
    """Linear-interpolation stencil of points x on the uniform n-node grid."""
    s = np.clip(x, 0.0, 1.0) * (n - 1)
    j = np.minimum(np.floor(s).astype(int), n - 2)
    t = s - j
    return j, t


def _row_points(m: Map1D, n: int) -> np.ndarray:
    """Grid nodes, except a node whose preimage is a critical point (F' = 0)
    is moved down by half a cell so that 1/|F'| stays finite."""
    y = grid(n)
    top = np.nonzero(np.abs(y - m.height) <= 1e-15)[0]
    if top.size and np.isinf(inverse_abs_slope(m, np.array([0.5]), "left")[0]):
        y[top] -= 0.5 / (n - 1)
    return y


def build_fp_matrix(m: Map1D, n: int) -> SparseTransition:
    """P_n with rho_{k+1}(y_i) = sum over branches of rho_k(x_b) / |F'(x_b)|."""
    if n < 16:
        raise ValueError("n must be >= 16")
    y = _row_points(m, n)
    active = np.nonzero(y <= m.height + 1e-15)[0]
    rows, cols, vals = [], [], []
    for branch in ("left", "right"):
        xb = invert_branch(m, y[active], branch)
        w = inverse_abs_slope(m, xb, branch)
        j, t = _interp_weights(xb, n)
        rows += [active, active]
        cols += [j, j + 1]
        vals += [w * (1.0 - t), w * t]
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A.eliminate_zeros()
    return SparseTransition(A)


def _power(A, x0, normalize, max_iters, tol):
    x = normalize(x0)[0]
    lam, res = 1.0, np.inf
    for k in range(1, max_iters + 1):
        y, lam = normalize(A @ x)
        res = np.max(np.abs(y - x))
        x = y
        if res < tol:
            return x, lam, True, k, res
    return x, lam, res <= 100.0 * tol, max_iters, res


def stationary_density(P: SparseTransition, max_iters: int = 512, tol: float = 1e-12,
                       strict: bool = False) -> DiscreteDensity1D:
    """Power iteration from the uniform density, rescaled to (1/n) sum rho = 1 each step."""
    n = P.n

    def normalize(r):
        s = r.mean()
        return r / s, s

    rho, lam, ok, k, res = _power(P.matrix, np.ones(n), normalize, max_iters, tol)
    if strict and not ok:
        raise ConvergenceError(f"power iteration residual {res:.3e} after {k} iterations")
    P.lambda_hint = lam
    return DiscreteDensity1D(rho, float(lam), ok, k, float(res))


def left_eigenvector(P: SparseTransition, max_iters: int = 2000, tol: float = 1e-13,
                     strict: bool = False):
    """Leading left eigenvector of P_n scaled to mean 1; returns (v, lambda, converged)."""
    At = P.matrix.T.tocsr()

    def normalize(r):
        s = r.mean()
        return r / s, s

    v, lam, ok, k, res = _power(At, np.ones(P.n), normalize, max_iters, tol)
    if strict and not ok:
        raise ConvergenceError(f"left power iteration residual {res:.3e} after {k} iterations")
    return v, float(lam), ok


def solve_adjoint_1d(P: SparseTransition, rho_s, v, lam: float, J_values) -> AdjointSolution1D:
    """Solve the bordered adjoint system for (phi, eta).

        (lambda I - P^T) phi + eta v = J
        rho^T phi                    = 0

    v is rescaled so that (1/n) v^T rho = 1, which makes eta the discrete mean
    (1/n) J^T rho and gives dJbar = (1/n) phi^T dP rho.
    """
    rho = np.asarray(getattr(rho_s, "values", rho_s), dtype=float)
    J = np.asarray(J_values, dtype=float)
    n = P.n
    v = np.asarray(v, dtype=float)
    v = v * n / (v @ rho)
    K = sp.bmat([[lam * sp.identity(n, format="csr") - P.matrix.T, v[:, None]],
                 [rho[None, :], None]], format="csc")
    rhs = np.concatenate([J, [0.0]])
    with np.errstate(all="raise"):
        try:
            sol = spla.spsolve(K, rhs)
        except (RuntimeError, FloatingPointError) as exc:
            raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("augmented adjoint system is singular")
    res = float(np.max(np.abs(K @ sol - rhs)))
    if res > 1e-9 * max(1.0, np.max(np.abs(rhs))):
        raise SingularSystemError(f"adjoint residual {res:.3e} too large")
    return AdjointSolution1D(sol[:n], float(sol[n]), res, v)


def _interp(values, x):
    n = values.size
    j, t = _interp_weights(x, n)
    return (1.0 - t) * values[j] + t * values[j + 1]


def gradient_integrand(m: Map1D, rho_s) -> np.ndarray:
    """g(y) with dg/dy = d(P rho)/dxi: mass flux induced by moving both preimages.

    Raising F by dF shifts each preimage x_b by -dF/F'(x_b), so the cumulative
    mass below y changes by rho(x_R) dF(x_R)/F'(x_R) - rho(x_L) dF(x_L)/F'(x_L)
    = -sum_b rho(x_b) dF(x_b) / |F'(x_b)|.
    """
    rho = np.asarray(getattr(rho_s, "values", rho_s), dtype=float)
    n = rho.size
    y = grid(n)
    g = np.zeros(n)
    active = y <= m.height + 1e-15
    for branch in ("left", "right"):
        xb = invert_branch(m, y[active], branch)
        # 1/|F'| -> 0 at an unbounded peak slope
        g[active] -= _interp(rho, xb) * inverse_abs_slope(m, xb, branch) * param_derivative(m, xb)
    return g


def sensitivity_1d(m: Map1D, rho_s, phi) -> float:
    """dJbar/dxi = (1/n) sum_i phi_i (dg/dy)_i."""
    phi = np.asarray(getattr(phi, "phi", phi), dtype=float)
    g = gradient_integrand(m, rho_s)
    n = g.size
    dg = np.gradient(g, 1.0 / (n - 1), edge_order=2)
    return float(phi @ dg) / n


def mean_x(m: Map1D, n: int, max_iters: int = 512, tol: float = 1e-12) -> float:
    d = stationary_density(build_fp_matrix(m, n), max_iters, tol)
    return d.mean()


def sensitivity_fd_1d(m: Map1D, n: int, delta_xi: float = 1e-3, centered: bool = False,
                      max_iters: int = 512, tol: float = 1e-12) -> float:
    """Finite-difference dxbar/dxi from stationary densities at neighbouring xi."""
    if delta_xi <= 0:
        raise ValueError("delta_xi must be positive")
    hi = 1.0 if m.kind == "param_cusp" else 4.0
    if centered:
        a, b = max(m.xi - delta_xi, 0.0), min(m.xi + delta_xi, hi)
    else:
        a, b = m.xi, m.xi + delta_xi
        if b > hi:  # step backwards at the upper end of the parameter range
            a, b = m.xi - delta_xi, m.xi
    return (mean_x(m.with_xi(b), n, max_iters, tol) - mean_x(m.with_xi(a), n, max_iters, tol)) / (b - a)


@dataclass
class MapAdjointResult:
    map: Map1D
    n: int
    density: DiscreteDensity1D
    v: np.ndarray
    adjoint: AdjointSolution1D
    gradient: float

    @property
    def jbar(self) -> float:
        return self.density.mean(self.J)

    @property
    def J(self) -> np.ndarray:
        return grid(self.n)


def map_adjoint(m: Map1D, n: int, J_values=None, max_iters: int = 512, tol: float = 1e-12) -> MapAdjointResult:
    """Full 1D pipeline: operator, density, left eigenvector, adjoint, gradient."""
    P = build_fp_matrix(m, n)
    dens = stationary_density(P, max_iters, tol)
    v, _, _ = left_eigenvector(P)
    J = grid(n) if J_values is None else np.asarray(J_values, dtype=float)
    adj = solve_adjoint_1d(P, dens, v, dens.lam, J)
    return MapAdjointResult(m, n, dens, adj.v, adj, sensitivity_1d(m, dens, adj))


@dataclass
class ConvergenceStudy:
    ns: np.ndarray
    gradients: np.ndarray
    reference: float
    residuals: np.ndarray
    order: float


def gradient_convergence(m: Map1D, ns=(64, 128, 256, 512, 1024, 2048), n_ref: int = 8096) -> ConvergenceStudy:
    """Adjoint gradient residuals against a fine-grid reference and the fitted log-log order."""
    ns = np.asarray(ns, dtype=int)
    if ns.size < 2:
        raise ValueError("need at least two resolutions")
    ref = map_adjoint(m, n_ref).gradient
    g = np.array([map_adjoint(m, int(n)).gradient for n in ns])
    res = np.abs(g - ref)
    order = float(-np.polyfit(np.log(ns), np.log(res), 1)[0]) if np.all(res > 0) else float("nan")
    return ConvergenceStudy(ns, g, float(ref), res, order)

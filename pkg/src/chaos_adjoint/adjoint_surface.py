"""Adjoint of the surface density and parameter sensitivities on the Lorenz mesh.

The adjoint phi satisfies d(phi)/dt = J - Jbar along streamlines, with start
values phi0 on the section fixed by the transposed section operator.  A
parameter perturbation changes the flow by df/dxi and the mean by

    dJbar/dxi = sum_k phi_k div_s(rho df/dxi)_k dA_k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from .attractor_mesh import AttractorMesh
from .density1d import SingularSystemError, SparseTransition
from .density_surface import (SectionDensity, SurfaceField, _node_values, section_density,
                              streamline_integrals, surface_density, surface_rate)
from .dynsys import hermite, jvp, param_derivatives


class DegenerateProjectionError(ArithmeticError):
    pass


@dataclass
class SectionAdjoint:
    phi0: np.ndarray
    Jbar: float
    residual: float = 0.0


@dataclass
class NodeAreas:
    dA: np.ndarray      # (M, N)
    total: np.ndarray   # (M,) area swept by each streamline strip


def streamline_objective(streamline, J):
    """int_0^T J dt by the trapezoid rule; J is a callable on positions or node values."""
    if isinstance(streamline, AttractorMesh):
        return streamline_integrals(streamline, J)
    vals = J(streamline.positions) if callable(J) else np.broadcast_to(J, streamline.times.shape)
    return float(np.trapezoid(vals, streamline.times) if hasattr(np, "trapezoid")
                 else np.trapz(vals, streamline.times))


def solve_section_adjoint(P: SparseTransition, D, v, rho0, J_streamline, lam: float,
                          tol: float = 1e-9) -> SectionAdjoint:
    """Bordered system for (phi0, Jbar).

        (D^-1 P^T D - lam I) phi0 + D^-1 v Jbar = Jcal
        rho0^T D phi0                           = 0

    With this sign of the border column the second unknown is +Jbar (the
    flux-weighted mean), and a constant objective gives phi0 = 0.
    """
    A = P.matrix if isinstance(P, SparseTransition) else sp.csr_matrix(P)
    M = A.shape[0]
    D = np.asarray(D, dtype=float)
    v = np.asarray(v, dtype=float)
    rho0 = np.asarray(rho0, dtype=float)
    Jc = np.asarray(J_streamline, dtype=float)
    Dinv = sp.diags(1.0 / D)
    top = Dinv @ A.T @ sp.diags(D) - lam * sp.identity(M)
    K = sp.bmat([[top, (v / D)[:, None]], [(rho0 * D)[None, :], None]], format="csc")
    rhs = np.concatenate([Jc, [0.0]])
    with np.errstate(all="raise"):
        try:
            sol = spla.spsolve(K, rhs)
        except (RuntimeError, FloatingPointError) as exc:
            raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("section adjoint system is singular")
    res = float(np.max(np.abs(K @ sol - rhs)))
    if res > tol * max(1.0, float(np.max(np.abs(rhs)))):
        raise SingularSystemError(f"section adjoint residual {res:.3e} too large")
    return SectionAdjoint(sol[:M], float(sol[M]), res)


def surface_adjoint(mesh: AttractorMesh, section_adjoint: SectionAdjoint, J) -> SurfaceField:
    """phi(t) = phi0 + int_0^t (J - Jbar) dt on each streamline."""
    vals = _node_values(mesh, J) - section_adjoint.Jbar
    return SurfaceField(section_adjoint.phi0[:, None]
                        + cumulative_trapezoid(vals, mesh.times, axis=-1, initial=0.0))


def node_areas(mesh: AttractorMesh, rho: SurfaceField, section: SectionDensity) -> NodeAreas:
    """Area per node from dA/dt = rho0 D / rho, split at the midpoints between nodes.

    rho0 / rho is taken from the same log-density profile as ``rho`` so
    strips with rho0 = 0 (no preimage on the section) still get their area.
    """
    r = getattr(rho, "values", rho)
    logr = -cumulative_trapezoid(surface_rate(mesh.sys, mesh.positions, mesh.lhat, mesh.shat),
                                 mesh.times, axis=-1, initial=0.0)
    if r.shape != logr.shape:
        raise ValueError("density field does not match the mesh")
    g = section.D[:, None] * np.exp(-logr)
    h = np.diff(mesh.times, axis=-1)
    # trapezoid halves: [t_k, t_k+1/2] and [t_k+1/2, t_k+1]
    first = 0.125 * h * (3.0 * g[:, :-1] + g[:, 1:])
    second = 0.125 * h * (g[:, :-1] + 3.0 * g[:, 1:])
    dA = np.zeros_like(g)
    dA[:, :-1] += first
    dA[:, 1:] += second
    return NodeAreas(dA, dA.sum(axis=-1))


def _neighbours(mesh: AttractorMesh):
    """Index of the previous/next streamline in seed order (-1 across the seam or past the ends)."""
    M = mesh.M
    br = mesh.branch
    prev = np.arange(M) - 1
    nxt = np.arange(M) + 1
    prev[0] = -1
    nxt[-1] = -1
    seam = np.nonzero(br[1:] != br[:-1])[0]
    nxt[seam] = -1
    prev[seam + 1] = -1
    return prev, nxt


def _ddt(X, h):
    """Fourth-order finite-difference time derivative along axis 1 (one-sided near the ends)."""
    d = np.empty_like(X)
    d[:, 2:-2] = (X[:, :-4] - 8.0 * X[:, 1:-3] + 8.0 * X[:, 3:-1] - X[:, 4:]) / 12.0
    d[:, 0] = (-25.0 * X[:, 0] + 48.0 * X[:, 1] - 36.0 * X[:, 2] + 16.0 * X[:, 3] - 3.0 * X[:, 4]) / 12.0
    d[:, 1] = (-3.0 * X[:, 0] - 10.0 * X[:, 1] + 18.0 * X[:, 2] - 6.0 * X[:, 3] + X[:, 4]) / 12.0
    d[:, -1] = (25.0 * X[:, -1] - 48.0 * X[:, -2] + 36.0 * X[:, -3] - 16.0 * X[:, -4] + 3.0 * X[:, -5]) / 12.0
    d[:, -2] = (3.0 * X[:, -1] + 10.0 * X[:, -2] - 18.0 * X[:, -3] + 6.0 * X[:, -4] - X[:, -5]) / 12.0
    return d / h.reshape((-1,) + (1,) * (X.ndim - 1))


def _hermite_dt(x0, x1, f0, f1, h, s):
    """d/dt of the cubic Hermite interpolant at normalized position s."""
    s = s[:, None]
    return ((6 * s * s - 6 * s) * (x0 - x1) / h[:, None] + (3 * s * s - 4 * s + 1) * f0
            + (3 * s * s - 2 * s) * f1)


def surface_divergence(mesh: AttractorMesh, X, tol: float = 1e-10, max_skew: float = 10.0,
                       realign_skew: float = 1.0) -> SurfaceField:
    """l.dX/dl + s.dX/ds at every node of the mesh.

    The streamwise derivative uses fourth-order centered differences in time
    (one-sided at the ends) divided by the speed.  Spanwise differences go to the index-matched node of each
    neighbour; the streamwise part of that step is removed with
    alpha = ds'.l, beta = ds'.s.  Forward and backward estimates are combined
    with weights that cancel the leading error on uneven spacing.

    Close to the bifurcation, neighbours have very different return times and
    the index-matched step can be mostly streamwise.  A side with
    |alpha / beta| > realign_skew is moved along the neighbour streamline to
    the point where alpha = 0 (cubic Hermite interpolation between its
    nodes).  If a side is still skewed beyond max_skew, or the two sides do
    not straddle the node, the better one-sided estimate is used.
    """
    X = np.asarray(X, dtype=float)
    N = mesh.N
    h = mesh.times[:, -1] / (N - 1)
    if N < 5:
        raise ValueError("surface_divergence needs at least 5 nodes per streamline")
    if X.shape != mesh.positions.shape:
        raise ValueError(f"field shape {X.shape} does not match the mesh {mesh.positions.shape}")
    dXdt = _ddt(X, h)
    dXdl = dXdt / mesh.speed[..., None]
    prev, nxt = _neighbours(mesh)
    P, L, S = mesh.positions, mesh.lhat, mesh.shat
    F = mesh.speed[..., None] * L

    def one_side(nb):
        ok = nb >= 0
        idx = np.where(ok, nb, 0)
        ds = P[idx] - P
        alpha = np.sum(ds * L, axis=-1)
        beta = np.sum(ds * S, axis=-1)
        ok2 = np.broadcast_to(ok[:, None], beta.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            skew = np.where(ok2, np.abs(alpha) / np.abs(beta), np.inf)
        Xn = X[idx]
        bad = ok2 & (skew > realign_skew)
        if bad.any():
            _realign(nb, bad, ds, alpha, beta, Xn)
            skew = np.where(ok2, np.abs(alpha) / np.maximum(np.abs(beta), tol), np.inf)
        if np.any(np.abs(beta[ok2]) < tol):
            raise DegenerateProjectionError("spanwise step has no component along s")
        beta = np.where(ok2, beta, 1.0)
        d = (Xn - X - alpha[..., None] * dXdl) / beta[..., None]
        return skew, beta, d

    def _realign(nb, bad, ds, alpha, beta, Xn, block=4096):
        # move the neighbour point along its streamline to the plane alpha = 0,
        # with cubic Hermite interpolation in time (f and dX/dt are known at nodes)
        ii, jj = np.nonzero(bad)
        for b0 in range(0, ii.size, block):
            i, j = ii[b0:b0 + block], jj[b0:b0 + block]
            k = nb[i]
            p0 = P[i, j]
            l0 = L[i, j]
            a = np.einsum("knc,kc->kn", P[k], l0) - np.sum(p0 * l0, axis=-1)[:, None]
            cross = (a[:, :-1] <= 0.0) & (a[:, 1:] > 0.0)
            t = np.where(cross, -a[:, :-1] / np.where(cross, a[:, 1:] - a[:, :-1], 1.0), 0.0)
            Q = P[k, :-1] + t[..., None] * (P[k, 1:] - P[k, :-1])
            dist = np.where(cross, np.linalg.norm(Q - p0[:, None, :], axis=-1), np.inf)
            del Q
            best = np.argmin(dist, axis=1)
            found = np.isfinite(dist[np.arange(i.size), best])
            s_ = t[np.arange(i.size), best][found]
            i, j, k, best, p0, l0 = i[found], j[found], k[found], best[found], p0[found], l0[found]
            hk = h[k]
            x0, x1 = P[k, best], P[k, best + 1]
            f0, f1 = F[k, best], F[k, best + 1]
            for _ in range(4):
                q = hermite(x0, x1, f0, f1, hk, s_ * hk)
                da = np.sum(_hermite_dt(x0, x1, f0, f1, hk, s_) * l0, axis=-1) * hk
                s_ = np.clip(s_ - np.sum((q - p0) * l0, axis=-1) / np.where(da > 0, da, 1.0), 0.0, 1.0)
            step = hermite(x0, x1, f0, f1, hk, s_ * hk) - p0
            sb = np.sum(step * S[i, j], axis=-1)
            use = np.abs(sb) >= tol
            i, j, k, best, s_, hk, step, sb = (z[use] for z in (i, j, k, best, s_, hk, step, sb))
            ds[i, j] = step
            alpha[i, j] = np.sum(step * L[i, j], axis=-1)
            beta[i, j] = sb
            Xn[i, j] = hermite(X[k, best], X[k, best + 1], dXdt[k, best], dXdt[k, best + 1], hk, s_ * hk)

    kb, bb, db = one_side(prev)
    kf, bf, df = one_side(nxt)
    if np.any(np.isinf(kb) & np.isinf(kf)):
        raise DegenerateProjectionError("streamline without spanwise neighbours")
    both = (kb <= max_skew) & (kf <= max_skew) & (bb * bf < 0.0)
    wf = np.where(both, -bb / np.where(both, bf - bb, 1.0), 0.0)[..., None]
    wb = np.where(both, bf / np.where(both, bf - bb, 1.0), 0.0)[..., None]
    single = np.where((kf <= kb)[..., None], df, db)
    dXds = np.where(both[..., None], wf * df + wb * db, single)
    div = np.sum(L * dXdl, axis=-1) + np.sum(S * dXds, axis=-1)
    return SurfaceField(div)


def sensitivity(mesh: AttractorMesh, phi: SurfaceField, rho: SurfaceField, dA: NodeAreas, dfdxi) -> float:
    """sum_k phi_k div_s(rho df/dxi)_k dA_k (fixed summation order)."""
    dfdxi = np.asarray(dfdxi, dtype=float)
    if not np.any(dfdxi):
        return 0.0
    r = getattr(rho, "values", rho)
    div = surface_divergence(mesh, r[..., None] * dfdxi).values
    p = getattr(phi, "values", phi)
    return float(np.sum((p * div * dA.dA).ravel()))


@dataclass
class LorenzAdjointResult:
    mesh: AttractorMesh
    section: SectionDensity
    P: SparseTransition
    ratios: np.ndarray
    rho: SurfaceField
    adjoint: SectionAdjoint
    phi: SurfaceField
    areas: NodeAreas
    Jcal: np.ndarray
    Jbar: float
    J: object = None


def lorenz_adjoint(mesh: AttractorMesh, J=None, filter_width: int | None = None) -> LorenzAdjointResult:
    """Density, section adjoint, surface adjoint and node areas for objective J (default z)."""
    J = (lambda p: p[..., 2]) if J is None else J
    sd, P, ratios = section_density(mesh, filter_width)
    rho = surface_density(mesh, sd)
    Jc = streamline_integrals(mesh, J)
    adj = solve_section_adjoint(P, sd.D, sd.v, sd.rho0, Jc, sd.lam)
    phi = surface_adjoint(mesh, adj, J)
    return LorenzAdjointResult(mesh, sd, P, ratios, rho, adj, phi, node_areas(mesh, rho, sd), Jc, adj.Jbar, J)


def parameter_sensitivity(result: LorenzAdjointResult, param: str) -> float:
    mesh = result.mesh
    dfdxi = param_derivatives(mesh.sys, mesh.positions, param)[param]
    return sensitivity(mesh, result.phi, result.rho, result.areas, dfdxi)


def normal_offset(mesh: AttractorMesh, P: SparseTransition, rho0, dfdxi, sweeps: int = 4) -> np.ndarray:
    """Normal displacement eta of the attractor surface under the perturbation dfdxi.

    Along each streamline d(eta)/dt = n.J.n eta + n.dfdxi with n = l x s
    (Crank-Nicolson on the node grid).  Start values come from the returns:
    end offsets, sign-matched to the normal of the seed they land on, are
    averaged with the probability-flux weights of the section operator.  The
    strong contraction normal to the surface makes a few sweeps enough.
    """
    n = np.cross(mesh.lhat, mesh.shat)
    a = np.sum(n * jvp(mesh.sys, mesh.positions, n), axis=-1)
    b = np.sum(n * np.asarray(dfdxi, dtype=float), axis=-1)
    h = np.diff(mesh.times, axis=-1)
    n_end = n[:, -1].copy()
    n_end[mesh.return_quadrant < 0, :2] *= -1.0
    n_seed = np.stack([np.interp(mesh.return_x, mesh.seed_x, n[:, 0, c]) for c in range(3)], axis=-1)
    sign = np.sign(np.sum(n_end * n_seed, axis=-1))
    A = P.matrix if isinstance(P, SparseTransition) else sp.csr_matrix(P)
    rho0 = np.asarray(rho0, dtype=float)
    flux = A.multiply(rho0[None, :]).tocsr()
    wsum = np.asarray(flux.sum(axis=1)).ravel()
    fed = wsum > 0
    signed = A.multiply((rho0 * sign)[None, :]).tocsr()
    eta0 = np.zeros(mesh.M)
    eta = np.empty_like(a)
    for _ in range(sweeps):
        eta[:, 0] = eta0
        for k in range(mesh.N - 1):
            eta[:, k + 1] = ((eta[:, k] * (1.0 + 0.5 * h[:, k] * a[:, k]) + 0.5 * h[:, k] * (b[:, k] + b[:, k + 1]))
                             / (1.0 - 0.5 * h[:, k] * a[:, k + 1]))
        eta0 = np.interp(mesh.seed_x, mesh.seed_x[fed], (signed @ eta[:, -1])[fed] / wsum[fed])
    return eta


def _gradient(J, X, h: float = 1e-5) -> np.ndarray:
    g = np.empty(X.shape)
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        g[..., c] = (np.asarray(J(X + e), dtype=float) - np.asarray(J(X - e), dtype=float)) / (2.0 * h)
    return g


def manifold_sensitivity(result: LorenzAdjointResult, param: str):
    """Sensitivity including the first-order displacement of the attractor surface.

    The perturbed surface is x + eta n.  Pulling the perturbed flow back onto
    the mesh gives the tangential field [dfdxi + eta (J n - dn/dt)]_t, whose
    density response goes through the surface adjoint, and the displacement
    itself adds sum rho eta (n . grad J) dA.  Returns (total, surface term,
    displacement term).
    """
    mesh = result.mesh
    df = param_derivatives(mesh.sys, mesh.positions, param)[param]
    eta = normal_offset(mesh, result.P, result.section.rho0, df)
    n = np.cross(mesh.lhat, mesh.shat)
    ndot = _ddt(n, mesh.times[:, -1] / (mesh.N - 1))
    w = df + eta[..., None] * (jvp(mesh.sys, mesh.positions, n) - ndot)
    w -= np.sum(w * n, axis=-1, keepdims=True) * n
    surf = sensitivity(mesh, result.phi, result.rho, result.areas, w)
    J = result.J if result.J is not None else (lambda p: p[..., 2])
    dJn = np.sum(_gradient(J, mesh.positions) * n, axis=-1)
    disp = float(np.sum((result.rho.values * eta * dJn * result.areas.dA).ravel()))
    return surf + disp, surf, disp


def sensitivity_record(param: str, value: float, mesh: AttractorMesh, oracle=None,
                       runtime_seconds: float | None = None) -> dict:
    rec = {"parameter": param, "value": float(value),
           "mesh": {"M": mesh.M, "N": mesh.N, "distribution": mesh.distribution},
           "oracle": None if oracle is None else {"value": float(oracle[0]), "sigma3": float(oracle[1])}}
    if runtime_seconds is not None:
        rec["runtime_seconds"] = float(runtime_seconds)
    return rec

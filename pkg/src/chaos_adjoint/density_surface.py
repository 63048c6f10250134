"""Stationary density on the streamline mesh of the Lorenz attractor.

Along a streamline the surface density obeys d(log rho)/dt = -div_s f with
div_s f = l.J.l + s.J.s for the orthonormal streamwise/spanwise frame.  The
section operator carries start densities to the next return and interpolates
them back onto the seeds, exactly like the 1D transfer operator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.ndimage import uniform_filter1d

from .attractor_mesh import AttractorMesh, MeshClosureError, Streamline
from .density1d import SparseTransition
from .dynsys import OdeSystem, jvp, rhs


ExtrapolationError = MeshClosureError


@dataclass
class SectionDensity:
    rho0: np.ndarray
    v: np.ndarray
    lam: float
    D: np.ndarray
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0


@dataclass
class SurfaceField:
    values: np.ndarray  # (M, N)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("surface field has non-finite entries")


def surface_rate(sys: OdeSystem, positions, lhat, shat) -> np.ndarray:
    """l.J.l + s.J.s at every node (the in-surface divergence of f)."""
    return (np.sum(lhat * jvp(sys, positions, lhat), axis=-1)
            + np.sum(shat * jvp(sys, positions, shat), axis=-1))


def _mesh_rate(mesh: AttractorMesh) -> np.ndarray:
    return surface_rate(mesh.sys, mesh.positions, mesh.lhat, mesh.shat)


def density_log_ratio(streamline, sys: OdeSystem) -> float | np.ndarray:
    """log(rho_end / rho_start) = -int_0^T div_s f dt by the trapezoid rule.

    Accepts a single Streamline or a whole mesh (returns one value per streamline).
    """
    if isinstance(streamline, AttractorMesh):
        return -trapezoid(_mesh_rate(streamline), streamline.times, axis=-1)
    s: Streamline = streamline
    return float(-trapezoid(surface_rate(sys, s.positions, s.lhat, s.shat), s.times))


def section_weights(mesh: AttractorMesh):
    """D_ii = |f0 x t0| ds0 (flux width of each seed) and v_i = T_i D_ii."""
    f0 = rhs(mesh.sys, mesh.starts)
    t0 = mesh.fit.tangent(mesh.seed_x)
    D = np.linalg.norm(np.cross(f0, t0), axis=-1) * mesh.ds0
    return D, mesh.T * D


def build_section_operator(mesh: AttractorMesh, ratios) -> SparseTransition:
    """M x M operator: density at seed j after one return.

    For each branch (seeds on either side of the bifurcation) every pair of
    adjacent streamlines whose returns bracket seed j contributes the
    linearly interpolated end density, so row j reads
    (1 - t) ratio_a rho_a + t ratio_b rho_b.  The pair straddling the
    bifurcation is skipped since its two streamlines end on different sheets.
    """
    ratios = np.asarray(ratios, dtype=float)
    M = mesh.M
    xs = mesh.seed_x
    rx = mesh.return_x
    a, b = mesh.fit.x_domain
    cell = mesh.cell_width()
    if np.any((rx < a - cell) | (rx > b + cell)):
        raise ExtrapolationError("return positions leave the section domain by more than one cell")
    branch = mesh.branch
    rows, cols, vals = [], [], []
    for i in range(M - 1):
        if branch[i] != branch[i + 1]:
            continue
        r0, r1 = rx[i], rx[i + 1]
        lo, hi = min(r0, r1), max(r0, r1)
        if hi == lo:
            continue
        j = np.arange(np.searchsorted(xs, lo, "left"), np.searchsorted(xs, hi, "left"))
        if j.size == 0:
            continue
        t = (xs[j] - r0) / (r1 - r0)
        rows += [j, j]
        cols += [np.full(j.size, i), np.full(j.size, i + 1)]
        vals += [(1.0 - t) * ratios[i], t * ratios[i + 1]]
    if rows:
        rows, cols, vals = (np.concatenate(z) for z in (rows, cols, vals))
    A = sp.csr_matrix((vals, (rows, cols)), shape=(M, M))
    A.sum_duplicates()
    return SparseTransition(A)


def _smooth(x, width):
    if width is None or width <= 1:
        return x
    if width % 2 == 0:
        raise ValueError("filter width must be odd")
    return uniform_filter1d(x, width, mode="nearest")


def poincare_density(P: SparseTransition, v, filter_width: int | None = None, D=None,
                     max_iters: int = 512, tol: float = 1e-12) -> SectionDensity:
    """Leading right eigenvector of P, optionally smoothed, scaled so rho0.v = 1."""
    A = P.matrix
    M = A.shape[0]
    x = np.ones(M) / M
    lam, res, ok, k = 1.0, np.inf, False, 0
    for k in range(1, max_iters + 1):
        y = A @ x
        lam = float(np.sum(y) / np.sum(x))
        y /= np.sum(y)
        res = float(np.max(np.abs(y - x)) / np.max(np.abs(y)))
        x = y
        if res < tol:
            ok = True
            break
    x = _smooth(x, filter_width)
    v = np.asarray(v, dtype=float)
    rho0 = x / float(x @ v)
    eig_res = float(np.max(np.abs(A @ rho0 - lam * rho0)) / np.max(np.abs(rho0)))
    P.lambda_hint = lam
    return SectionDensity(rho0, v, lam, np.ones(M) if D is None else np.asarray(D), ok, k, eig_res)


def section_density(mesh: AttractorMesh, filter_width: int | None = None, max_iters: int = 512,
                    tol: float = 1e-12):
    """Ratios, operator and normalized section density for a mesh."""
    ratios = np.exp(density_log_ratio(mesh, mesh.sys))
    P = build_section_operator(mesh, ratios)
    D, v = section_weights(mesh)
    return poincare_density(P, v, filter_width, D, max_iters, tol), P, ratios


def surface_density(mesh: AttractorMesh, section: SectionDensity) -> SurfaceField:
    """rho(t) = rho0 exp(-int_0^t div_s f) along each streamline (trapezoid in log rho)."""
    logr = -cumulative_trapezoid(_mesh_rate(mesh), mesh.times, axis=-1, initial=0.0)
    return SurfaceField(section.rho0[:, None] * np.exp(logr))


def _node_values(mesh: AttractorMesh, J) -> np.ndarray:
    if callable(J):
        return np.broadcast_to(np.asarray(J(mesh.positions), dtype=float), (mesh.M, mesh.N))
    return np.broadcast_to(np.asarray(J, dtype=float), (mesh.M, mesh.N))


def streamline_integrals(mesh: AttractorMesh, J) -> np.ndarray:
    """int_0^T_i J dt for every streamline (trapezoid on the node grid)."""
    return trapezoid(_node_values(mesh, J), mesh.times, axis=-1)


def mean_quantity(mesh: AttractorMesh, section: SectionDensity, J) -> float:
    """Jbar = sum_i (int J dt)_i D_ii rho0_i."""
    return float(np.sum(streamline_integrals(mesh, J) * section.D * section.rho0))

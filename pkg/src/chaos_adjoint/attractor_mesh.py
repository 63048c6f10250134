"""Surface mesh of the Lorenz attractor built from streamlines between Poincare returns.

The section is the plane z = r + z0 - 1, which contains both nonzero fixed
points.  Upward crossings form two thin arcs related by the rotation
(x, y) -> (-x, -y); folding the third-quadrant arc onto the first gives a
single curve that is fitted by a polynomial y(x).  Streamlines start on that
curve, run once around the attractor and end at their next upward crossing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynsys import (DEFAULT_DT, CrossingTimeout, OdeSystem, _hermite_root, hermite,
                     initial_conditions, integrate_to_crossing, jacobian, jvp, rhs, rk4_step,
                     rk4_tangent_step)

DISTRIBUTIONS = ("uniform_x", "clustered")
CLUSTER_FACTOR = 4.0
CLUSTER_WINDOW = 0.10
MIN_CROSSINGS = 500


class TooFewCrossingsError(RuntimeError):
    pass


class IllConditionedFitError(ArithmeticError):
    pass


class BifurcationError(RuntimeError):
    pass


class FrameDegeneracyError(ArithmeticError):
    pass


class MeshClosureError(ArithmeticError):
    """A return lands more than one seed cell outside the section domain."""


def mirror(points) -> np.ndarray:
    """The Lorenz symmetry (x, y, z) -> (-x, -y, z); an involution."""
    p = np.array(points, dtype=float)
    p[..., :2] *= -1.0
    return p


def fold(points) -> np.ndarray:
    """Map third-quadrant points onto the first-quadrant arc."""
    p = np.array(points, dtype=float)
    third = p[..., 0] < 0.0
    p[third, :2] *= -1.0
    return p


# --------------------------------------------------------------------------
# Poincare sampling and section fit


def section_edges(sys: OdeSystem, eps: float = 1e-8, dt: float = DEFAULT_DT) -> np.ndarray:
    """Outer and inner edge points of the section arc.

    Streamlines passing close to the origin saddle follow its unstable
    manifold, whose first upward crossing is the outer edge; the return of
    that point is the inner edge.  Long runs visit both edges only rarely.
    """
    origin = sys.fixed_points()[0]
    w, V = np.linalg.eig(jacobian(sys, origin))
    u = V[:, np.argmax(w.real)].real
    u *= np.sign(u[0])
    traj, _ = integrate_to_crossing(sys, origin + eps * u, dt=dt, guard=-np.inf, refine="hermite")
    outer = traj.states[-1]
    traj, _ = integrate_to_crossing(sys, outer, dt=dt, refine="hermite")
    return np.array([outer, traj.states[-1]])


def sample_poincare(sys: OdeSystem, T_total: float = 10000.0, spinup: float = 50.0,
                    n_chains: int = 100, dt: float = DEFAULT_DT, seed: int = 0,
                    include_edge: bool = True) -> np.ndarray:
    """Upward crossings of the section plane collected from parallel chains.

    The total integration time T_total is split evenly over ``n_chains``
    independent trajectories (each after its own spin-up), which keeps the
    loop vectorized.  With ``include_edge`` the two edge points are appended so
    the sampled arc reaches the outer and inner edges.  Returns an (K, 3) array with z
    exactly on the plane.
    """
    plane = sys.section_z
    x = initial_conditions(sys, n_chains, seed)
    for _ in range(int(round(spinup / dt))):
        x = rk4_step(sys, x, dt)
    n_steps = int(round(T_total / (n_chains * dt)))
    out = []
    for _ in range(n_steps):
        xn = rk4_step(sys, x, dt)
        hit = (x[:, 2] < plane) & (xn[:, 2] >= plane)
        if hit.any():
            a, b = x[hit], xn[hit]
            fa, fb = rhs(sys, a), rhs(sys, b)
            tau = _hermite_root(a[:, 2], b[:, 2], fa[:, 2], fb[:, 2], dt, plane)
            c = hermite(a, b, fa, fb, dt, tau)
            c[:, 2] = plane
            out.append(c)
        x = xn
    pts = np.concatenate(out) if out else np.empty((0, 3))
    if len(pts) < MIN_CROSSINGS:
        raise TooFewCrossingsError(f"only {len(pts)} section crossings (need {MIN_CROSSINGS})")
    if include_edge and sys.kind == "lorenz":
        pts = np.vstack([pts, section_edges(sys, dt=dt)])
    return pts


@dataclass
class SectionFit:
    """Polynomial section curve y(x) on the plane z = plane_z.

    ``coeffs`` are power-basis coefficients in the scaled variable
    u = (2x - x_min - x_max) / (x_max - x_min), lowest order first.
    """

    plane_z: float
    coeffs: np.ndarray
    x_domain: tuple
    rms: float = 0.0
    y_range: float = 0.0
    condition: float = 1.0

    @property
    def width(self) -> float:
        return self.x_domain[1] - self.x_domain[0]

    def _u(self, x):
        a, b = self.x_domain
        return (2.0 * np.asarray(x, dtype=float) - a - b) / (b - a)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(self._u(x), self.coeffs)

    def slope(self, x):
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(self._u(x), d) * 2.0 / self.width

    def curvature_term(self, x):
        d2 = np.polynomial.polynomial.polyder(self.coeffs, 2)
        return np.polynomial.polynomial.polyval(self._u(x), d2) * (2.0 / self.width) ** 2

    def point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([x, self(x), np.full_like(x, self.plane_z)], axis=-1)

    def tangent(self, x) -> np.ndarray:
        """Unit tangent of the curve, oriented with increasing x."""
        x = np.asarray(x, dtype=float)
        t = np.stack([np.ones_like(x), self.slope(x), np.zeros_like(x)], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def arc_length(self, x) -> np.ndarray:
        """Arc length from x_min to each x (Gauss-Legendre on each interval)."""
        x = np.asarray(x, dtype=float)
        g, w = np.polynomial.legendre.leggauss(16)
        a = self.x_domain[0]
        mid, half = 0.5 * (x + a), 0.5 * (x - a)
        xs = mid[..., None] + half[..., None] * g
        return np.sum(w * np.sqrt(1.0 + self.slope(xs) ** 2), axis=-1) * half

    def project(self, points, iters: int = 20) -> np.ndarray:
        """x of the nearest curve point to each (x, y) in ``points``."""
        p = np.asarray(points, dtype=float)
        px, py = p[..., 0], p[..., 1]
        x = px.copy()
        for _ in range(iters):
            e = self(x) - py
            s = self.slope(x)
            g = (x - px) + e * s
            h = 1.0 + s * s + e * self.curvature_term(x)
            x = x - g / np.where(h > 0.1, h, 1.0 + s * s)
        return x

    def to_dict(self) -> dict:
        return {"plane_z": self.plane_z, "coeffs": [float(c) for c in self.coeffs],
                "x_domain": [float(v) for v in self.x_domain], "rms": self.rms,
                "y_range": self.y_range, "condition": self.condition}

    @classmethod
    def from_dict(cls, d) -> "SectionFit":
        return cls(float(d["plane_z"]), np.asarray(d["coeffs"], dtype=float), tuple(d["x_domain"]),
                   float(d.get("rms", 0.0)), float(d.get("y_range", 0.0)), float(d.get("condition", 1.0)))


def fit_section(points, degree: int = 7, max_condition: float = 1e10) -> SectionFit:
    """Least-squares fit of the folded crossings; x_domain spans the samples."""
    p = fold(points)
    if len(p) < 100:
        raise ValueError(f"need at least 100 section points, got {len(p)}")
    x, y = p[:, 0], p[:, 1]
    a, b = float(x.min()), float(x.max())
    u = (2.0 * x - a - b) / (b - a)
    V = np.polynomial.polynomial.polyvander(u, degree)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > max_condition:
        raise IllConditionedFitError(f"section fit condition estimate {cond:.3e} exceeds {max_condition:.1e}")
    coeffs, *_ = np.linalg.lstsq(V, y, rcond=None)
    res = y - V @ coeffs
    return SectionFit(float(np.mean(p[:, 2])), coeffs, (a, b), float(np.sqrt(np.mean(res**2))),
                      float(np.ptp(y)), cond)


# --------------------------------------------------------------------------
# Streamline tracing


@dataclass
class StreamlineBundle:
    """Streamlines stored as stacked arrays (M streamlines, N nodes each)."""

    positions: np.ndarray      # (M, N, 3)
    times: np.ndarray          # (M, N)
    tangent: np.ndarray        # (M, N, 3) unnormalized separation vector
    T: np.ndarray              # (M,)
    return_point: np.ndarray   # (M, 3) raw (unfolded) crossing
    steps: np.ndarray          # (M,) RK4 steps to the crossing

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    @property
    def N(self) -> int:
        return self.positions.shape[1]


def _trace_chunk(sys, starts, deltas, N, dt, t_max, plane):
    m = len(starts)
    x, v = starts.copy(), deltas.copy()
    xs, vs = [x], [v]
    cross_step = np.full(m, -1)
    cross_tau = np.zeros(m)
    armed = np.zeros(m, dtype=bool)
    n_max = int(np.ceil(t_max / dt))
    for k in range(n_max):
        xn, vn = rk4_tangent_step(sys, x, v, dt)
        live = cross_step < 0
        hit = live & armed & (x[:, 2] < plane) & (xn[:, 2] >= plane)
        if hit.any():
            fa, fb = rhs(sys, x[hit]), rhs(sys, xn[hit])
            cross_tau[hit] = _hermite_root(x[hit, 2], xn[hit, 2], fa[:, 2], fb[:, 2], dt, plane)
            cross_step[hit] = k
        armed |= xn[:, 2] < plane
        x, v = xn, vn
        xs.append(x)
        vs.append(v)
        if np.all(cross_step >= 0):
            break
    else:
        raise CrossingTimeout(f"{int(np.sum(cross_step < 0))} streamlines did not return within t_max={t_max}")
    X = np.stack(xs, axis=1)
    V = np.stack(vs, axis=1)
    T = cross_step * dt + cross_tau

    # resample on N time-uniform nodes by cubic Hermite interpolation of each RK4 step
    t = T[:, None] * np.linspace(0.0, 1.0, N)[None, :]
    k = np.minimum(np.floor(t / dt).astype(int), cross_step[:, None])
    tau = t - k * dt
    rows = np.arange(m)[:, None]
    x0, x1 = X[rows, k], X[rows, k + 1]
    v0, v1 = V[rows, k], V[rows, k + 1]
    pos = hermite(x0, x1, rhs(sys, x0), rhs(sys, x1), dt, tau)
    tan = hermite(v0, v1, jvp(sys, x0, v0), jvp(sys, x1, v1), dt, tau)
    pos[:, 0] = starts
    tan[:, 0] = deltas
    pos[:, -1, 2] = plane
    return pos, t, tan, T, pos[:, -1].copy(), cross_step + 1


def trace_bundle(sys: OdeSystem, starts, deltas, N: int, dt: float = DEFAULT_DT,
                 t_max: float = 50.0, chunk: int = 1024, threads: int = 1) -> StreamlineBundle:
    """Integrate every start (with its separation vector) to its next upward crossing.

    Integration is chunked over seeds with a fixed chunk size, so the result
    does not depend on ``threads``.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    if N < 3:
        raise ValueError("N must be >= 3")
    plane = sys.section_z
    def work(i):
        return _trace_chunk(sys, starts[i:i + chunk], deltas[i:i + chunk], N, dt, t_max, plane)

    offsets = range(0, len(starts), chunk)
    if threads > 1 and len(offsets) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, offsets))
    else:
        parts = [work(i) for i in offsets]
    return StreamlineBundle(*(np.concatenate(p) for p in zip(*parts)))


def frames(sys: OdeSystem, positions, tangent, tol: float = 1e-12):
    """Unit streamwise l = f/|f| and spanwise s (separation with l removed)."""
    f = rhs(sys, positions)
    speed = np.linalg.norm(f, axis=-1)
    lhat = f / speed[..., None]
    w = tangent - np.sum(tangent * lhat, axis=-1, keepdims=True) * lhat
    wn = np.linalg.norm(w, axis=-1)
    scale = np.linalg.norm(tangent, axis=-1)
    if np.any(wn <= tol * np.maximum(scale, 1e-300)):
        raise FrameDegeneracyError("separation vector is parallel to the flow")
    shat = w / wn[..., None]
    # one re-orthogonalization pass to push l.s to round-off
    shat -= np.sum(shat * lhat, axis=-1, keepdims=True) * lhat
    shat /= np.linalg.norm(shat, axis=-1, keepdims=True)
    return speed, lhat, shat


@dataclass
class Streamline:
    start: np.ndarray
    positions: np.ndarray
    speed: np.ndarray
    lhat: np.ndarray
    shat: np.ndarray
    times: np.ndarray
    return_x: float
    return_quadrant: str
    T: float
    ds0: float = float("nan")
    separation: np.ndarray = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return len(self.times)


def trace_streamline(sys: OdeSystem, start, N: int, neighbor_start, fit: SectionFit | None = None,
                     dt: float = DEFAULT_DT, t_max: float = 50.0) -> Streamline:
    """Trace one streamline; the spanwise frame follows the separation toward ``neighbor_start``."""
    start = np.asarray(start, dtype=float)
    delta = np.asarray(neighbor_start, dtype=float) - start
    nd = np.linalg.norm(delta)
    if nd == 0.0:
        raise FrameDegeneracyError("neighbor_start coincides with start")
    b = trace_bundle(sys, start[None], (delta / nd)[None], N, dt, t_max)
    speed, lhat, shat = frames(sys, b.positions[0], b.tangent[0])
    ret = b.return_point[0]
    quad = "third" if ret[0] < 0 else "first"
    rf = fold(ret)
    rx = float(fit.project(rf)) if fit is not None else float(rf[0])
    return Streamline(start, b.positions[0], speed, lhat, shat, b.times[0], rx, quad, float(b.T[0]),
                      separation=b.tangent[0])


def fit_attractor_section(sys: OdeSystem, T_total: float = 10000.0, seed: int = 0,
                          dt: float = DEFAULT_DT, degree: int = 7) -> SectionFit:
    """Sample, fit, then close the domain under the return map.

    The streamline from the fitted outer end returns slightly beyond the
    sampled inner edge (the fit residual is amplified by stretching), so
    its projection onto the curve is added to the samples and the curve
    refitted.
    """
    pts = sample_poincare(sys, T_total, dt=dt, seed=seed)
    fit = fit_section(pts, degree)
    x_hi = fit.x_domain[1]
    b = trace_bundle(sys, fit.point(np.array([x_hi])), fit.tangent(np.array([x_hi])), 3, dt)
    inner = fit.point(fit.project(fold(b.return_point)))
    return fit_section(np.vstack([pts, inner]), degree)


# --------------------------------------------------------------------------
# Seeding


def return_quadrant(sys: OdeSystem, fit: SectionFit, x, dt: float = DEFAULT_DT, t_max: float = 50.0):
    """+1 where the streamline from fit.point(x) returns to the first quadrant, -1 otherwise."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    b = trace_bundle(sys, fit.point(x), fit.tangent(x), 3, dt, t_max)
    return np.where(b.return_point[:, 0] >= 0.0, 1, -1)


def locate_bifurcation(sys: OdeSystem, fit: SectionFit, n_scan: int = 65, tol: float = 1e-9,
                       dt: float = DEFAULT_DT) -> float:
    """Start x where the return quadrant flips (the streamline hits the origin saddle).

    A coarse scan brackets the first flip, then bisection refines it.
    """
    a, b = fit.x_domain
    xs = np.linspace(a, b, n_scan)
    q = return_quadrant(sys, fit, xs, dt)
    flips = np.nonzero(q[1:] != q[:-1])[0]
    if flips.size == 0:
        raise BifurcationError("return quadrant does not change over the section")
    lo, hi = xs[flips[0]], xs[flips[0] + 1]
    qlo = q[flips[0]]
    while hi - lo > tol * (b - a):
        mid = 0.5 * (lo + hi)
        if return_quadrant(sys, fit, mid, dt)[0] == qlo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def seed_positions(fit: SectionFit, M: int, distribution: str = "clustered",
                   x_bif: float | None = None) -> np.ndarray:
    """Start x coordinates, endpoints included.

    ``clustered`` places seeds with CLUSTER_FACTOR times the uniform density
    inside a window of CLUSTER_WINDOW * |x_domain| centred on x_bif.
    """
    if M < 16:
        raise ValueError("M must be >= 16")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
    a, b = fit.x_domain
    if distribution == "uniform_x":
        return np.linspace(a, b, M)
    if x_bif is None:
        raise BifurcationError("clustered seeding needs the bifurcation location")
    h = 0.5 * CLUSTER_WINDOW * (b - a)
    lo, hi = max(a, x_bif - h), min(b, x_bif + h)
    knots = np.array([a, lo, hi, b])
    cdf = np.concatenate([[0.0], np.cumsum(np.diff(knots) * np.array([1.0, CLUSTER_FACTOR, 1.0]))])
    return np.interp(np.linspace(0.0, cdf[-1], M), cdf, knots)


def spanwise_widths(fit: SectionFit, xs) -> np.ndarray:
    """ds0: half the arc distance to each neighbouring seed, summed."""
    s = fit.arc_length(xs)
    gaps = np.diff(s)
    ds = np.zeros(len(xs))
    ds[:-1] += 0.5 * gaps
    ds[1:] += 0.5 * gaps
    return ds


# --------------------------------------------------------------------------
# Mesh


@dataclass
class AttractorMesh:
    sys: OdeSystem
    fit: SectionFit
    distribution: str
    seed_x: np.ndarray         # (M,)
    ds0: np.ndarray            # (M,)
    positions: np.ndarray      # (M, N, 3)
    speed: np.ndarray          # (M, N)
    lhat: np.ndarray           # (M, N, 3)
    shat: np.ndarray           # (M, N, 3)
    times: np.ndarray          # (M, N)
    separation: np.ndarray     # (M, N, 3) unnormalized tangent-linear separation
    T: np.ndarray              # (M,)
    return_x: np.ndarray       # (M,)
    return_quadrant: np.ndarray  # (M,) +1 first, -1 third
    x_bif: float = float("nan")
    seed: int = 0

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    @property
    def starts(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def branch(self) -> np.ndarray:
        """0 for seeds left of the bifurcation, 1 for seeds right of it."""
        if np.isnan(self.x_bif):
            return (self.return_quadrant < 0).astype(int)
        return (self.seed_x > self.x_bif).astype(int)

    def streamline(self, i: int) -> Streamline:
        return Streamline(self.positions[i, 0], self.positions[i], self.speed[i], self.lhat[i], self.shat[i],
                          self.times[i], float(self.return_x[i]),
                          "first" if self.return_quadrant[i] > 0 else "third", float(self.T[i]),
                          float(self.ds0[i]), self.separation[i])

    def cell_width(self) -> float:
        return float(np.max(np.diff(self.seed_x)))

    def header(self) -> dict:
        return {
            "M": self.M, "N": self.N, "seed": self.seed, "distribution": self.distribution,
            "plane_z": self.fit.plane_z, "fit": self.fit.to_dict(), "x_bif": self.x_bif,
            "params": {k: float(v) for k, v in self.sys.params.items()}, "system": self.sys.kind,
            "seed_x": self.seed_x.tolist(), "ds0": self.ds0.tolist(), "T": self.T.tolist(),
            "return_x": self.return_x.tolist(), "return_quadrant": self.return_quadrant.tolist(),
        }


def assemble_mesh(sys: OdeSystem, fit: SectionFit, seed_x, N: int, distribution: str,
                  x_bif: float = float("nan"), seed: int = 0, dt: float = DEFAULT_DT,
                  t_max: float = 50.0, chunk: int = 1024, check_closure: bool = True,
                  threads: int = 1) -> AttractorMesh:
    """Trace streamlines from the given seed positions and assemble the mesh."""
    seed_x = np.asarray(seed_x, dtype=float)
    b = trace_bundle(sys, fit.point(seed_x), fit.tangent(seed_x), N, dt, t_max, chunk, threads)
    speed, lhat, shat = frames(sys, b.positions, b.tangent)
    quad = np.where(b.return_point[:, 0] >= 0.0, 1, -1)
    rx = fit.project(fold(b.return_point))
    mesh = AttractorMesh(sys, fit, distribution, seed_x, spanwise_widths(fit, seed_x), b.positions, speed,
                         lhat, shat, b.times, b.tangent, b.T, rx, quad, x_bif, seed)
    if check_closure:
        a, c = fit.x_domain
        cell = mesh.cell_width()
        out = (rx < a - cell) | (rx > c + cell)
        if out.any():
            raise MeshClosureError(f"{int(out.sum())} returns fall more than one cell outside the section domain")
    return mesh


def build_mesh(sys: OdeSystem, M: int, N: int, distribution: str = "clustered", seed: int = 0,
               T_total: float = 10000.0, dt: float = DEFAULT_DT, fit: SectionFit | None = None,
               chunk: int = 1024, threads: int = 1) -> AttractorMesh:
    """Sample the section, fit it, seed M streamlines and trace them with N nodes each."""
    if fit is None:
        fit = fit_attractor_section(sys, T_total, seed, dt)
    x_bif = locate_bifurcation(sys, fit, dt=dt)
    xs = seed_positions(fit, M, distribution, x_bif)
    return assemble_mesh(sys, fit, xs, N, distribution, x_bif, seed, dt, chunk=chunk, threads=threads)


# --------------------------------------------------------------------------
# Serialization

CSV_COLUMNS = ("streamline", "node", "x", "y", "z", "speed", "lx", "ly", "lz", "sx", "sy", "sz", "t")


def mesh_table(mesh: AttractorMesh, extra: dict | None = None):
    """Columnar table (header names, 2D array) with one row per mesh node."""
    M, N = mesh.M, mesh.N
    cols = [np.repeat(np.arange(M), N), np.tile(np.arange(N), M)]
    cols += [mesh.positions[..., c].ravel() for c in range(3)]
    cols += [mesh.speed.ravel()]
    cols += [mesh.lhat[..., c].ravel() for c in range(3)]
    cols += [mesh.shat[..., c].ravel() for c in range(3)]
    cols += [mesh.times.ravel()]
    names = list(CSV_COLUMNS)
    for k, v in (extra or {}).items():
        names.append(k)
        cols.append(np.asarray(v, dtype=float).ravel())
    return names, np.column_stack(cols)


def write_csv(path, names, table, int_cols: int = 0):
    """CSV with integer leading columns and %.16e floats."""
    fmt = ["%d"] * int_cols + ["%.16e"] * (table.shape[1] - int_cols)
    np.savetxt(path, table, fmt=fmt, delimiter=",", header=",".join(names), comments="")


def save_mesh(mesh: AttractorMesh, csv_path, header_path, extra: dict | None = None):
    names, table = mesh_table(mesh, extra)
    write_csv(csv_path, names, table, int_cols=2)
    with open(header_path, "w") as fh:
        json.dump(mesh.header(), fh, indent=1, sort_keys=True)


def load_mesh(csv_path, header_path) -> AttractorMesh:
    with open(header_path) as fh:
        h = json.load(fh)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    M, N = h["M"], h["N"]
    col = {n: data[:, i].reshape(M, N) for i, n in enumerate(CSV_COLUMNS)}
    sys = OdeSystem(h["system"], h["params"])
    pos = np.stack([col["x"], col["y"], col["z"]], axis=-1)
    lhat = np.stack([col["lx"], col["ly"], col["lz"]], axis=-1)
    shat = np.stack([col["sx"], col["sy"], col["sz"]], axis=-1)
    return AttractorMesh(sys, SectionFit.from_dict(h["fit"]), h["distribution"], np.asarray(h["seed_x"]),
                         np.asarray(h["ds0"]), pos, col["speed"], lhat, shat, col["t"], shat.copy(),
                         np.asarray(h["T"]), np.asarray(h["return_x"]), np.asarray(h["return_quadrant"]),
                         float(h["x_bif"]), int(h["seed"]))

"""Independent reference values from plain trajectory statistics.

None of these functions use the density machinery: they average along
trajectories, bin visits, and fit straight lines through ensemble means.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynsys import DEFAULT_DT, OdeSystem, ensemble_mean, initial_conditions, rk4_step
from .maps1d import Map1D, eval_map

# parameter windows for Lorenz regressions
LORENZ_HALFWIDTH = {"s": 1.0, "r": 1.0, "b": 0.2, "z0": 1.0}
SCAN_TARGETS = ("maps_xbar_vs_xi", "lorenz_zbar_x2_vs_r", "rossler_xz_vs_c")


@dataclass
class RegressionResult:
    slope: float
    sigma3: float
    intercept: float
    values: np.ndarray        # parameter samples
    means: np.ndarray         # ensemble mean per sample
    stderr: np.ndarray        # standard error per sample

    def __iter__(self):
        return iter((self.slope, self.sigma3))

    def band(self):
        return self.slope - self.sigma3, self.slope + self.sigma3

    def contains(self, x: float) -> bool:
        lo, hi = self.band()
        return lo <= x <= hi


def linear_fit(x, y):
    """Ordinary least squares y = a + b x; returns (b, 3 * SE(b), a)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least three points")
    xm = x.mean()
    sxx = np.sum((x - xm) ** 2)
    b = float(np.sum((x - xm) * (y - y.mean())) / sxx)
    a = float(y.mean() - b * xm)
    resid = y - a - b * x
    s2 = np.sum(resid**2) / (x.size - 2)
    return b, float(3.0 * np.sqrt(s2 / sxx)), a


def _z(p):
    return p[..., 2]


def _run_means_ode(sys: OdeSystem, param: str, values, runs: int, T_avg: float, spinup: float,
                   seed: int, dt: float, J, chunk: int, threads: int):
    """Per-run time averages for every (value, run), all integrated as one batch."""
    pv = np.repeat(np.asarray(values, dtype=float), runs)
    x0 = initial_conditions(sys, pv.size, seed)
    n_spin = int(round(spinup / dt))
    n_avg = int(round(T_avg / dt))

    def work(sl):
        s = sys.with_params(**{param: pv[sl]})
        x = x0[sl]
        for _ in range(n_spin):
            x = rk4_step(s, x, dt)
        acc = np.zeros(len(x))
        for _ in range(n_avg):
            x = rk4_step(s, x, dt)
            acc += J(x)
        return acc / n_avg

    slices = [slice(i, min(i + chunk, pv.size)) for i in range(0, pv.size, chunk)]
    if threads > 1 and len(slices) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, slices))
    else:
        parts = [work(sl) for sl in slices]
    return pv, np.concatenate(parts)


def regression_sensitivity(sys, param: str, center: float | None = None, halfwidth: float | None = None,
                           n_values: int = 9, runs_per_value: int = 16, T_avg: float = 2000.0,
                           spinup: float = 50.0, seed: int = 0, dt: float = DEFAULT_DT, J=None,
                           chunk: int = 1024, threads: int = 1) -> RegressionResult:
    """Slope of the ensemble mean of J against a parameter, with a 3-sigma band.

    For an OdeSystem, ``T_avg`` and ``spinup`` are time units; for a Map1D
    (param must be "xi") they are iteration counts.  The line is fitted
    through every individual run average.
    """
    if n_values < 5:
        raise ValueError("n_values must be >= 5")
    if isinstance(sys, Map1D):
        if param != "xi":
            raise KeyError("maps only have the parameter 'xi'")
        center = sys.xi if center is None else center
        halfwidth = 0.05 if halfwidth is None else halfwidth
        values = np.linspace(center - halfwidth, center + halfwidth, n_values)
        J = (lambda x: x) if J is None else J
        per = []
        for k, xi in enumerate(values):
            _, _, m = ensemble_mean(sys.with_xi(float(xi)), J, runs_per_value, int(T_avg), int(spinup),
                                    seed=seed + k, per_run=True)
            per.append(m)
        pv, means = np.repeat(values, runs_per_value), np.concatenate(per)
    else:
        if param not in sys.params:
            raise KeyError(f"unknown parameter {param!r} for {sys.kind}")
        center = float(sys.params[param]) if center is None else center
        if halfwidth is None:
            halfwidth = LORENZ_HALFWIDTH.get(param, 0.05 * max(abs(center), 1.0))
        values = np.linspace(center - halfwidth, center + halfwidth, n_values)
        pv, means = _run_means_ode(sys, param, values, runs_per_value, T_avg, spinup, seed, dt,
                                   _z if J is None else J, chunk, threads)
    slope, sigma3, a = linear_fit(pv, means)
    grouped = means.reshape(n_values, runs_per_value)
    se = grouped.std(axis=1, ddof=1) / np.sqrt(runs_per_value) if runs_per_value > 1 else np.full(n_values, np.nan)
    return RegressionResult(slope, sigma3, a, values, grouped.mean(axis=1), se)


def histogram_density(sys, bins: int = 64, n_steps: int = 100000, spinup: int = 1000, seed: int = 0,
                      runs: int = 64, plane: str = "xz", dt: float = DEFAULT_DT, ranges=None):
    """Normalized visit histogram.

    Maps give (edges, density) on [0, 1] with density integrating to one.
    ODEs give (xedges, yedges, density) for the projection onto ``plane``.
    """
    if bins < 32:
        raise ValueError("bins must be >= 32")
    x = initial_conditions(sys, runs, seed)
    if isinstance(sys, Map1D):
        for _ in range(spinup):
            x = eval_map(sys, x)
        counts = np.zeros(bins)
        for _ in range(n_steps):
            x = eval_map(sys, x)
            counts += np.bincount(np.minimum((x * bins).astype(int), bins - 1), minlength=bins)
        edges = np.linspace(0.0, 1.0, bins + 1)
        return edges, counts / (counts.sum() / bins)
    axes = ["xyz".index(c) for c in plane]
    if len(axes) != 2:
        raise ValueError("plane must name two coordinates, e.g. 'xz'")
    for _ in range(spinup):
        x = rk4_step(sys, x, dt)
    if ranges is None:
        ranges = [(-25.0, 25.0), (0.0, 50.0)] if sys.kind == "lorenz" else [(-25.0, 25.0), (-25.0, 25.0)]
    counts = np.zeros((bins, bins))
    for _ in range(n_steps):
        x = rk4_step(sys, x, dt)
        h, _, _ = np.histogram2d(x[:, axes[0]], x[:, axes[1]], bins=bins, range=ranges)
        counts += h
    xe = np.linspace(*ranges[0], bins + 1)
    ye = np.linspace(*ranges[1], bins + 1)
    cell = (xe[1] - xe[0]) * (ye[1] - ye[0])
    return xe, ye, counts / (counts.sum() * cell)


def _flow_means(sys: OdeSystem, observables, M, n_steps, n_spin, seed, dt):
    """Per-run averages of several observables; returns (means, stderrs)."""
    x = initial_conditions(sys, M, seed)
    for _ in range(n_spin):
        x = rk4_step(sys, x, dt)
    acc = np.zeros((len(observables), M))
    for _ in range(n_steps):
        x = rk4_step(sys, x, dt)
        for k, obs in enumerate(observables):
            acc[k] += obs(x)
    acc /= n_steps
    return acc.mean(axis=1), acc.std(axis=1, ddof=1) / np.sqrt(M)


def smoothness_scan(target: str, grid, family: str = "logistic", M: int | None = None,
                    N: int | None = None, n0: int | None = None, seed: int = 0,
                    dt: float = DEFAULT_DT, threads: int = 1):
    """Ensemble means over a parameter grid.

    maps_xbar_vs_xi      rows (xi, mean x, stderr) for the map ``family``;
                         M runs of N iterations after n0 spin-up iterations.
    lorenz_zbar_x2_vs_r  rows (r, mean z, stderr, mean x^2, stderr).
    rossler_xz_vs_c      rows (c, mean x, stderr, mean z, stderr) at a = b = 0.1.

    For the flows N and n0 count RK4 steps.
    """
    if target not in SCAN_TARGETS:
        raise ValueError(f"target must be one of {SCAN_TARGETS}")
    grid = np.asarray(grid, dtype=float)
    if grid.size < 50:
        raise ValueError("scan grids need at least 50 parameter values")
    rows = []
    if target == "maps_xbar_vs_xi":
        M, N, n0 = M or 1000, N or 50000, n0 or 1000
        for k, xi in enumerate(grid):
            m, se = ensemble_mean(Map1D(family, float(xi)), lambda x: x, M, N, n0, seed=seed + k,
                                  chunk=M, threads=threads)
            rows.append((float(xi), m, se))
        return np.array(rows)
    M, N, n0 = M or 64, N or 20000, n0 or 5000
    if target == "lorenz_zbar_x2_vs_r":
        base, name, obs = OdeSystem("lorenz"), "r", (lambda p: p[..., 2], lambda p: p[..., 0] ** 2)
    else:
        base, name, obs = OdeSystem("rossler"), "c", (lambda p: p[..., 0], lambda p: p[..., 2])
    for k, val in enumerate(grid):
        m, se = _flow_means(base.with_params(**{name: float(val)}), obs, M, N, n0, seed + k, dt)
        rows.append((float(val), m[0], se[0], m[1], se[1]))
    return np.array(rows)

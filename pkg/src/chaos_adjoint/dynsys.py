"""Lorenz (with z0 shift) and Rossler systems, fixed-step RK4 and ensemble averages.

State arrays have a trailing axis of length 3; every function broadcasts over
leading axes so that many trajectories advance in one vectorized step.
Parameters may also be arrays broadcasting against the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .maps1d import Map1D, eval_map

DEFAULT_DT = 0.01

_PARAMS = {
    "lorenz": {"s": 10.0, "r": 28.0, "b": 8.0 / 3.0, "z0": 0.0},
    "rossler": {"a": 0.1, "b": 0.1, "c": 14.0},
}


class NonFiniteStateError(FloatingPointError):
    pass


class CrossingTimeout(RuntimeError):
    pass


@dataclass(frozen=True)
class OdeSystem:
    kind: str = "lorenz"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ValueError(f"unknown system {self.kind!r}")
        full = dict(_PARAMS[self.kind])
        unknown = set(self.params) - set(full)
        if unknown:
            raise KeyError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        full.update(self.params)
        object.__setattr__(self, "params", full)

    def __getattr__(self, name):
        try:
            return self.__dict__["params"][name]
        except KeyError:
            raise AttributeError(name) from None

    def __hash__(self):
        return hash((self.kind, tuple(sorted((k, float(np.sum(v))) for k, v in self.params.items()))))

    def with_params(self, **kw) -> "OdeSystem":
        p = dict(self.params)
        p.update(kw)
        return OdeSystem(self.kind, p)

    @property
    def section_z(self) -> float:
        """Plane through the two nonzero Lorenz fixed points."""
        return self.r + self.z0 - 1.0

    def fixed_points(self) -> np.ndarray:
        if self.kind != "lorenz":
            raise NotImplementedError("fixed points only tabulated for lorenz")
        pts = [(0.0, 0.0, self.z0)]
        if self.r > 1:
            c = np.sqrt(self.b * (self.r - 1.0))
            pts += [(c, c, self.section_z), (-c, -c, self.section_z)]
        return np.array(pts)


LORENZ = OdeSystem("lorenz")


def rhs(sys: OdeSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    P = {k: np.asarray(v, dtype=float) for k, v in sys.params.items()}
    if sys.kind == "lorenz":
        s, r, b, z0 = P["s"], P["r"], P["b"], P["z0"]
        return np.stack([s * (Y - X), -X * (Z - z0) + r * X - Y, X * Y - b * (Z - z0)], axis=-1)
    a, b, c = P["a"], P["b"], P["c"]
    return np.stack([-Y - Z, X + a * Y, b + Z * (X - c)], axis=-1)


def jacobian(sys: OdeSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    P = {k: np.asarray(v, dtype=float) for k, v in sys.params.items()}
    shape = np.broadcast_shapes(X.shape, *(v.shape for v in P.values()))
    Jac = np.zeros(shape + (3, 3))
    if sys.kind == "lorenz":
        s, r, b, z0 = P["s"], P["r"], P["b"], P["z0"]
        Jac[..., 0, 0] = -s
        Jac[..., 0, 1] = s
        Jac[..., 1, 0] = r - (Z - z0)
        Jac[..., 1, 1] = -1.0
        Jac[..., 1, 2] = -X
        Jac[..., 2, 0] = Y
        Jac[..., 2, 1] = X
        Jac[..., 2, 2] = -b
    else:
        a, c = P["a"], P["c"]
        Jac[..., 0, 1] = -1.0
        Jac[..., 0, 2] = -1.0
        Jac[..., 1, 0] = 1.0
        Jac[..., 1, 1] = a
        Jac[..., 2, 0] = Z
        Jac[..., 2, 2] = X - c
    return Jac


def jvp(sys: OdeSystem, x, v) -> np.ndarray:
    """Jacobian-vector product J(x) v without forming J."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    u, w, q = v[..., 0], v[..., 1], v[..., 2]
    P = {k: np.asarray(val, dtype=float) for k, val in sys.params.items()}
    if sys.kind == "lorenz":
        s, r, b, z0 = P["s"], P["r"], P["b"], P["z0"]
        return np.stack([s * (w - u), (r - (Z - z0)) * u - w - X * q, Y * u + X * w - b * q], axis=-1)
    a, c = P["a"], P["c"]
    return np.stack([-w - q, u + a * w, Z * u + (X - c) * q], axis=-1)


def param_derivatives(sys: OdeSystem, x, names=None) -> dict:
    """Analytic df/dparam for each requested parameter name."""
    x = np.asarray(x, dtype=float)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    zero = np.zeros_like(X)
    if sys.kind == "lorenz":
        z0, b = sys.params["z0"], sys.params["b"]
        table = {
            "s": lambda: np.stack([Y - X, zero, zero], axis=-1),
            "r": lambda: np.stack([zero, X, zero], axis=-1),
            "b": lambda: np.stack([zero, zero, -(Z - z0)], axis=-1),
            "z0": lambda: np.stack([zero, X, zero + b], axis=-1),
        }
    else:
        table = {
            "a": lambda: np.stack([zero, Y, zero], axis=-1),
            "b": lambda: np.stack([zero, zero, zero + 1.0], axis=-1),
            "c": lambda: np.stack([zero, zero, -Z], axis=-1),
        }
    names = list(table) if names is None else ([names] if isinstance(names, str) else list(names))
    out = {}
    for n in names:
        if n not in table:
            raise KeyError(f"unknown parameter {n!r} for {sys.kind}")
        out[n] = table[n]()
    return out


def rk4_step(sys: OdeSystem, x, dt: float = DEFAULT_DT) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    k1 = rhs(sys, x)
    k2 = rhs(sys, x + 0.5 * dt * k1)
    k3 = rhs(sys, x + 0.5 * dt * k2)
    k4 = rhs(sys, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError("state became non-finite during RK4 step")
    return out


def rk4_tangent_step(sys: OdeSystem, x, v, dt: float = DEFAULT_DT):
    """One RK4 step of the state and a tangent vector (dv/dt = J(x) v) together."""
    k1 = rhs(sys, x)
    l1 = jvp(sys, x, v)
    x2 = x + 0.5 * dt * k1
    k2 = rhs(sys, x2)
    l2 = jvp(sys, x2, v + 0.5 * dt * l1)
    x3 = x + 0.5 * dt * k2
    k3 = rhs(sys, x3)
    l3 = jvp(sys, x3, v + 0.5 * dt * l2)
    x4 = x + dt * k3
    k4 = rhs(sys, x4)
    l4 = jvp(sys, x4, v + dt * l3)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    vn = v + (dt / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(vn))):
        raise NonFiniteStateError("state became non-finite during RK4 step")
    return xn, vn


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    dt: float


def integrate(sys: OdeSystem, x0, n_steps: int, dt: float = DEFAULT_DT, t0: float = 0.0) -> Trajectory:
    x = np.asarray(x0, dtype=float)
    states = np.empty((n_steps + 1,) + x.shape)
    states[0] = x
    for k in range(n_steps):
        x = rk4_step(sys, x, dt)
        states[k + 1] = x
    return Trajectory(t0 + dt * np.arange(n_steps + 1), states, dt)


def hermite(x0, x1, f0, f1, h, tau):
    """Cubic Hermite interpolant on a step of length h at local time tau in [0, h]."""
    s = np.asarray(tau) / h
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    e = (...,) + (None,) * (np.ndim(x0) - np.ndim(s))
    return h00[e] * x0 + (h * h10)[e] * f0 + h01[e] * x1 + (h * h11)[e] * f1


def _hermite_root(z0, z1, dz0, dz1, h, target, iters=8):
    """Time in [0, h] where the cubic Hermite interpolant of z hits target."""
    t = h * (target - z0) / (z1 - z0)  # linear guess
    for _ in range(iters):
        s = t / h
        z = ((2 * s**3 - 3 * s**2 + 1) * z0 + h * (s**3 - 2 * s**2 + s) * dz0
             + (-2 * s**3 + 3 * s**2) * z1 + h * (s**3 - s**2) * dz1)
        dz = ((6 * s**2 - 6 * s) * z0 / h + (3 * s**2 - 4 * s + 1) * dz0
              + (-6 * s**2 + 6 * s) * z1 / h + (3 * s**2 - 2 * s) * dz1)
        t = np.clip(t - (z - target) / dz, 0.0, h)
    return t


def integrate_to_crossing(sys: OdeSystem, x0, plane_z: float | None = None, direction: str = "up",
                          dt: float = DEFAULT_DT, t_max: float = 100.0, guard: float = 0.5,
                          refine: str = "linear"):
    """Integrate until the next upward crossing of z = plane_z.

    A crossing only counts once the trajectory has dropped more than ``guard``
    below the plane, so a start on the plane does not trigger immediately.
    Returns (Trajectory including the crossing point, return time).
    """
    if direction != "up":
        raise ValueError("only upward crossings are supported")
    plane_z = sys.section_z if plane_z is None else plane_z
    x = np.asarray(x0, dtype=float)
    states, times = [x], [0.0]
    armed = x[2] < plane_z - guard
    n_max = int(np.ceil(t_max / dt))
    for k in range(n_max):
        xn = rk4_step(sys, x, dt)
        if armed and x[2] < plane_z <= xn[2]:
            if refine == "hermite":
                f0, f1 = rhs(sys, x), rhs(sys, xn)
                tau = _hermite_root(x[2], xn[2], f0[2], f1[2], dt, plane_z)
                xc = hermite(x, xn, f0, f1, dt, tau)
                xc[2] = plane_z
            else:
                tau = dt * (plane_z - x[2]) / (xn[2] - x[2])
                xc = x + (tau / dt) * (xn - x)
            T = k * dt + tau
            states.append(xc)
            times.append(T)
            return Trajectory(np.array(times), np.array(states), dt), T
        if xn[2] < plane_z - guard:
            armed = True
        x = xn
        states.append(x)
        times.append((k + 1) * dt)
    raise CrossingTimeout(f"no upward crossing of z={plane_z} within t_max={t_max}")


def _base_point(sys: OdeSystem) -> np.ndarray:
    if sys.kind == "lorenz":
        return np.array([1.0, 1.0, sys.section_z])
    return np.array([1.0, -5.0, 0.1])


def initial_conditions(sys, n_runs: int, seed: int) -> np.ndarray:
    """Per-run starting points drawn from independent child generators.

    Maps: uniform in [0.25, 0.75).  ODEs: a fixed base point plus a unit
    normal perturbation (spin-up removes the transient).
    """
    children = np.random.SeedSequence(seed).spawn(n_runs)
    rngs = [np.random.default_rng(c) for c in children]
    if isinstance(sys, Map1D):
        return np.array([g.uniform(0.25, 0.75) for g in rngs])
    base = _base_point(sys)
    return np.array([base + g.standard_normal(3) for g in rngs])


def ensemble_mean(sys, J: Callable, M_runs: int, N_steps: int, spinup: int, seed: int = 0,
                  dt: float = DEFAULT_DT, per_run: bool = False, chunk: int = 256, threads: int = 1):
    """Average J over M_runs trajectories of N_steps after discarding spinup steps.

    ``sys`` is a Map1D (J takes x) or an OdeSystem (J takes states (..., 3)).
    Returns (mean, standard error of the mean over runs); with ``per_run`` the
    per-run averages are returned as a third element.
    """
    if spinup < 0:
        raise ValueError("spinup must be >= 0")
    x0 = initial_conditions(sys, M_runs, seed)
    step = (lambda x: eval_map(sys, x)) if isinstance(sys, Map1D) else (lambda x: rk4_step(sys, x, dt))

    def run(block):
        x = block
        for _ in range(spinup):
            x = step(x)
        acc = np.zeros(len(block))
        for _ in range(N_steps):
            x = step(x)
            acc += J(x)
        return acc / N_steps

    blocks = [x0[i:i + chunk] for i in range(0, M_runs, chunk)]
    if threads > 1 and len(blocks) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            means = np.concatenate(list(ex.map(run, blocks)))
    else:
        means = np.concatenate([run(b) for b in blocks])
    mean = float(np.mean(means))
    stderr = float(np.std(means, ddof=1) / np.sqrt(M_runs)) if M_runs > 1 else float("nan")
    return (mean, stderr, means) if per_run else (mean, stderr)

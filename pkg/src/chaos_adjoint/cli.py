"""Command-line driver for the map and Lorenz pipelines.

Every run takes a JSON config (optional), dotted ``--set key=value``
overrides and a few shortcut flags, and writes into one output directory:

    manifest.json   config, seed, versions, wall-clock per stage, artifact hashes
    results.json    deterministic numbers only (byte-identical for equal config)
    mesh.csv        Lorenz subcommands
    fields/*.csv    per-node or per-grid-point fields, plus optional SVG charts

Exit codes: 0 ok, 1 config error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adjoint_surface import lorenz_adjoint, parameter_sensitivity, sensitivity_record
from .attractor_mesh import DISTRIBUTIONS, build_mesh, mesh_table, write_csv
from .density1d import (build_fp_matrix, gradient_convergence, grid, map_adjoint, sensitivity_fd_1d,
                        stationary_density)
from .density_surface import mean_quantity, section_density, surface_density
from .dynsys import OdeSystem
from .maps1d import Map1D
from .oracle import histogram_density, regression_sensitivity, smoothness_scan

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

SUBCOMMANDS = ("map-density", "map-adjoint", "map-sensitivity", "map-convergence", "map-scan",
               "lorenz-mesh", "lorenz-density", "lorenz-adjoint", "lorenz-sensitivity", "lorenz-pipeline",
               "oracle-regression", "oracle-histogram")

DEFAULT_CONFIG = {
    "seed": 0,
    "threads": 1,
    "map": {
        "family": "param_cusp", "xi": 0.5, "n": 256, "delta_xi": 1e-3, "centered_fd": True,
        "max_iters": 512, "tol": 1e-12,
        "convergence": {"ns": [64, 128, 256, 512, 1024, 2048], "n_ref": 8096},
    },
    "scan": {
        "target": "maps_xbar_vs_xi", "family": "tent", "grid": {"start": 0.02, "stop": 1.0, "num": 50},
        "M": None, "N": None, "n0": None,
    },
    "lorenz": {
        "params": {"s": 10.0, "r": 28.0, "b": 8.0 / 3.0, "z0": 0.0},
        "M": 512, "N": 128, "distribution": "clustered", "T_total": 10000.0, "dt": 0.01,
        "filter_width": None, "params_to_differentiate": ["z0"], "oracle": False,
    },
    "oracle": {
        "system": "lorenz", "param": "z0", "center": None, "halfwidth": None, "n_values": 9,
        "runs_per_value": 16, "T_avg": 2000.0, "spinup": 50.0,
    },
    "histogram": {"system": "map", "bins": 64, "n_steps": 100000, "spinup": 1000, "runs": 64, "plane": "xz"},
    "output": {"fields": True, "svg": True},
}

# shortcut flag -> dotted config key
SHORTCUTS = {
    "xi": "map.xi", "n": "map.n", "M": "lorenz.M", "N": "lorenz.N", "distribution": "lorenz.distribution",
    "seed": "seed", "threads": "threads",
}


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# Config


def _merge(base: dict, new: dict, path: str = "") -> dict:
    for k, v in new.items():
        key = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, key + ".")
        else:
            base[k] = v
    return base


def set_key(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[p]
    if parts[-1] not in node and not (len(parts) == 3 and parts[1] == "params"):
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        _merge(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        set_key(cfg, k.strip(), _parse_value(v.strip()))
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed must be a non-negative integer")
    need(isinstance(cfg["threads"], int) and cfg["threads"] >= 1, "threads must be a positive integer")
    m = cfg["map"]
    need(isinstance(m["n"], int) and m["n"] >= 16, "map.n must be an integer >= 16")
    need(float(m["delta_xi"]) > 0, "map.delta_xi must be positive")
    lz = cfg["lorenz"]
    need(lz["distribution"] in DISTRIBUTIONS, f"lorenz.distribution must be one of {DISTRIBUTIONS}")
    need(isinstance(lz["M"], int) and lz["M"] >= 16, "lorenz.M must be an integer >= 16")
    need(isinstance(lz["N"], int) and lz["N"] >= 8, "lorenz.N must be an integer >= 8")
    need(float(lz["dt"]) > 0, "lorenz.dt must be positive")
    fw = lz["filter_width"]
    need(fw is None or (isinstance(fw, int) and fw >= 1 and fw % 2 == 1), "lorenz.filter_width must be odd")
    params = lz["params_to_differentiate"]
    need(isinstance(params, list) and all(p in lz["params"] for p in params),
         f"lorenz.params_to_differentiate must list names from {sorted(lz['params'])}")
    need(cfg["oracle"]["system"] in ("lorenz", "map"), "oracle.system must be 'lorenz' or 'map'")
    need(cfg["histogram"]["system"] in ("lorenz", "rossler", "map"), "histogram.system must be lorenz, rossler or map")


def _map(cfg) -> Map1D:
    return Map1D(cfg["map"]["family"], float(cfg["map"]["xi"]))


def _lorenz(cfg) -> OdeSystem:
    return OdeSystem("lorenz", {k: float(v) for k, v in cfg["lorenz"]["params"].items()})


# --------------------------------------------------------------------------
# Output


def default_outdir() -> Path:
    return Path(os.environ.get("CHAOS_ADJOINT_OUTDIR", "runs"))


def _clean(obj):
    """Plain-Python copy with numpy scalars/arrays converted and non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in (obj.tolist() if isinstance(obj, np.ndarray) else obj)]
    if isinstance(obj, (np.integer, bool, np.bool_)):
        return obj.item() if hasattr(obj, "item") else obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def dump_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_svg(path: Path, x, y, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 640, height: int = 400) -> None:
    """Single-series line chart."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    pad = 50
    x0, x1 = (x.min(), x.max()) if x.size else (0.0, 1.0)
    y0, y1 = (y.min(), y.max()) if y.size else (0.0, 1.0)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    px = pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
    py = height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    svg = f"""<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">
<rect width="100%" height="100%" fill="white"/>
<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>
<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>
<text x="14" y="{height / 2}" font-size="12" transform="rotate(-90 14 {height / 2})" text-anchor="middle">{ylabel}</text>
<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>
<text x="{pad}" y="{height - pad + 15}" font-size="10">{x0:.4g}</text>
<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x1:.4g}</text>
<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.4g}</text>
<text x="{pad - 4}" y="{pad + 8}" font-size="10" text-anchor="end">{y1:.4g}</text>
<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>
</svg>
"""
    with open(path, "w") as fh:
        fh.write(svg)


class Run:
    """Collects stage timings, results and written artifacts for one invocation."""

    def __init__(self, command: str, cfg: dict, outdir: Path):
        self.command = command
        self.cfg = cfg
        self.outdir = Path(outdir)
        self.stages: dict[str, float] = {}
        self.results: dict = {"command": command}
        self.artifacts: list[Path] = []
        self.failed: str | None = None

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.stages[name] = time.perf_counter() - t0
        return out

    def path(self, rel: str) -> Path:
        p = self.outdir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(p)
        return p

    @property
    def fields(self) -> bool:
        return bool(self.cfg["output"]["fields"])

    def table(self, rel, names, columns, int_cols=0):
        if self.fields:
            write_csv(self.path(rel), names, np.column_stack([np.asarray(c, dtype=float) for c in columns]), int_cols)

    def svg(self, rel, x, y, **kw):
        if self.fields and self.cfg["output"]["svg"]:
            write_svg(self.path(rel), x, y, **kw)

    def finish(self):
        dump_json(self.path("results.json"), self.results)
        hashes = {}
        for p in self.artifacts:
            h = hashlib.sha256()
            with open(p, "rb") as fh:
                for block in iter(lambda: fh.read(1 << 20), b""):
                    h.update(block)
            hashes[str(p.relative_to(self.outdir))] = h.hexdigest()
        manifest = {
            "command": self.command, "config": self.cfg, "seed": self.cfg["seed"],
            "versions": {"chaos_adjoint": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "stages_seconds": self.stages, "artifacts": hashes, "status": self.failed or "ok",
        }
        dump_json(self.outdir / "manifest.json", manifest)


# --------------------------------------------------------------------------
# Map subcommands


def _map_density(run: Run):
    cfg = run.cfg["map"]
    m = _map(run.cfg)
    P = run.stage("operator", build_fp_matrix, m, cfg["n"])
    d = run.stage("density", stationary_density, P, cfg["max_iters"], cfg["tol"])
    run.results.update({"family": m.kind, "xi": m.xi, "n": cfg["n"], "lambda": d.lam, "mean_x": d.mean(),
                        "converged": d.converged, "iterations": d.iterations, "residual": d.residual})
    run.table("fields/density.csv", ["x", "rho"], [d.nodes, d.values])
    run.svg("fields/density.svg", d.nodes, d.values, title="stationary density", xlabel="x", ylabel="rho")
    if not d.converged:
        run.failed = "power iteration did not converge"


def _map_adjoint(run: Run):
    cfg = run.cfg["map"]
    m = _map(run.cfg)
    res = run.stage("adjoint", map_adjoint, m, cfg["n"], None, cfg["max_iters"], cfg["tol"])
    d = res.density
    run.results.update({"family": m.kind, "xi": m.xi, "n": cfg["n"], "lambda": d.lam, "mean_x": res.jbar,
                        "eta": res.adjoint.eta, "adjoint_gradient": res.gradient, "converged": d.converged,
                        "adjoint_residual": res.adjoint.residual})
    x = grid(cfg["n"])
    run.table("fields/adjoint.csv", ["x", "rho", "phi"], [x, d.values, res.adjoint.phi])
    run.svg("fields/adjoint.svg", x, res.adjoint.phi, title="adjoint density", xlabel="x", ylabel="phi")
    if not d.converged:
        run.failed = "power iteration did not converge"
    return res


def _map_sensitivity(run: Run):
    res = _map_adjoint(run)
    cfg = run.cfg["map"]
    fd = run.stage("finite_difference", sensitivity_fd_1d, res.map, cfg["n"], float(cfg["delta_xi"]),
                   bool(cfg["centered_fd"]), cfg["max_iters"], cfg["tol"])
    run.results.update({"fd_gradient": fd, "delta_xi": float(cfg["delta_xi"]),
                        "relative_difference": abs(res.gradient - fd) / abs(fd) if fd != 0 else float("inf")})


def _map_convergence(run: Run):
    cfg = run.cfg["map"]
    m = _map(run.cfg)
    conv = cfg["convergence"]
    st = run.stage("convergence", gradient_convergence, m, conv["ns"], int(conv["n_ref"]))
    run.results.update({"family": m.kind, "xi": m.xi, "ns": st.ns, "gradients": st.gradients,
                        "reference": st.reference, "n_ref": int(conv["n_ref"]), "residuals": st.residuals,
                        "order": st.order})
    run.table("fields/convergence.csv", ["n", "gradient", "residual"], [st.ns, st.gradients, st.residuals], 1)
    run.svg("fields/convergence.svg", np.log10(st.ns), np.log10(st.residuals), title="gradient residual",
            xlabel="log10 n", ylabel="log10 residual")


def _map_scan(run: Run):
    sc = run.cfg["scan"]
    g = sc["grid"]
    grid_vals = np.linspace(float(g["start"]), float(g["stop"]), int(g["num"]))
    family = sc["family"]
    rows = run.stage("scan", smoothness_scan, sc["target"], grid_vals, family, sc["M"], sc["N"], sc["n0"],
                     run.cfg["seed"], threads=run.cfg["threads"])
    if sc["target"] == "maps_xbar_vs_xi":
        names = ["xi", "mean", "stderr"]
    elif sc["target"] == "lorenz_zbar_x2_vs_r":
        names = ["r", "mean_z", "stderr_z", "mean_x2", "stderr_x2"]
    else:
        names = ["c", "mean_x", "stderr_x", "mean_z", "stderr_z"]
    run.results.update({"target": sc["target"], "family": family if sc["target"] == "maps_xbar_vs_xi" else None,
                        "columns": names, "rows": rows})
    if run.fields:
        write_csv(run.path("fields/scan.csv"), names, rows)
    run.svg("fields/scan.svg", rows[:, 0], rows[:, 1], title=sc["target"], xlabel=names[0], ylabel=names[1])


# --------------------------------------------------------------------------
# Lorenz subcommands


def _oracle_result(run: Run, sys_, param):
    oc = run.cfg["oracle"]
    reg = run.stage(f"oracle_{param}", regression_sensitivity, sys_, param, oc["center"], oc["halfwidth"],
                    int(oc["n_values"]), int(oc["runs_per_value"]), float(oc["T_avg"]), float(oc["spinup"]),
                    run.cfg["seed"], float(run.cfg["lorenz"]["dt"]), threads=run.cfg["threads"])
    return reg


def _mesh(run: Run):
    lz = run.cfg["lorenz"]
    mesh = run.stage("mesh", build_mesh, _lorenz(run.cfg), lz["M"], lz["N"], lz["distribution"], run.cfg["seed"],
                     float(lz["T_total"]), float(lz["dt"]), threads=run.cfg["threads"])
    run.results["mesh"] = {"M": mesh.M, "N": mesh.N, "distribution": mesh.distribution,
                           "plane_z": mesh.fit.plane_z, "x_domain": list(mesh.fit.x_domain),
                           "fit_rms": mesh.fit.rms, "x_bifurcation": mesh.x_bif,
                           "mean_return_time": float(np.mean(mesh.T))}
    return mesh


def _write_mesh(run: Run, mesh, extra=None):
    if run.fields:
        names, table = mesh_table(mesh, extra)
        write_csv(run.path("mesh.csv"), names, table, int_cols=2)
        dump_json(run.path("fields/mesh_header.json"), mesh.header())


def _lorenz_mesh(run: Run):
    mesh = _mesh(run)
    _write_mesh(run, mesh)
    run.table("fields/seeds.csv", ["seed_x", "ds0", "T", "return_x"],
              [mesh.seed_x, mesh.ds0, mesh.T, mesh.return_x])


def _section_table(run, mesh, sd, ratios, extra_cols=None):
    names = ["seed_x", "rho0", "D", "v", "ratio", "T"]
    cols = [mesh.seed_x, sd.rho0, sd.D, sd.v, ratios, mesh.T]
    for k, v in (extra_cols or {}).items():
        names.append(k)
        cols.append(v)
    run.table("fields/section.csv", names, cols)
    run.svg("fields/section_density.svg", mesh.seed_x, sd.rho0, title="section density", xlabel="x", ylabel="rho0")


def _density_results(run, mesh, sd):
    run.results["density"] = {"lambda": sd.lam, "converged": sd.converged, "iterations": sd.iterations,
                              "eigen_residual": sd.residual,
                              "zbar": mean_quantity(mesh, sd, lambda p: p[..., 2])}
    if not sd.converged:
        run.failed = "section power iteration did not converge"


def _lorenz_density(run: Run):
    mesh = _mesh(run)
    sd, P, ratios = run.stage("density", section_density, mesh, run.cfg["lorenz"]["filter_width"])
    rho = run.stage("surface_density", surface_density, mesh, sd)
    _density_results(run, mesh, sd)
    _write_mesh(run, mesh, {"rho": rho.values})
    _section_table(run, mesh, sd, ratios)


def _adjoint(run: Run):
    mesh = _mesh(run)
    res = run.stage("adjoint", lorenz_adjoint, mesh, None, run.cfg["lorenz"]["filter_width"])
    _density_results(run, mesh, res.section)
    run.results["adjoint"] = {"Jbar": res.Jbar, "residual": res.adjoint.residual,
                              "rho0_D_phi0": float(np.sum(res.section.rho0 * res.section.D * res.adjoint.phi0)),
                              "total_area": float(res.areas.total.sum()),
                              "rho_area": float(np.sum(res.rho.values * res.areas.dA))}
    return mesh, res


def _write_adjoint(run, mesh, res):
    _write_mesh(run, mesh, {"rho": res.rho.values, "phi": res.phi.values, "dA": res.areas.dA})
    _section_table(run, mesh, res.section, res.ratios, {"phi0": res.adjoint.phi0, "Jcal": res.Jcal})


def _lorenz_adjoint(run: Run):
    mesh, res = _adjoint(run)
    _write_adjoint(run, mesh, res)


def _sensitivities(run: Run, mesh, res, oracles=None):
    records = []
    out = {}
    for p in run.cfg["lorenz"]["params_to_differentiate"]:
        t0 = time.perf_counter()
        val = run.stage(f"sensitivity_{p}", parameter_sensitivity, res, p)
        rt = time.perf_counter() - t0 + run.stages.get("mesh", 0.0) + run.stages.get("adjoint", 0.0)
        orc = None if not oracles else oracles.get(p)
        records.append(sensitivity_record(p, val, mesh, orc, runtime_seconds=rt))
        out[p] = {"value": val}
        if orc is not None:
            out[p].update({"oracle_slope": orc.slope, "oracle_sigma3": orc.sigma3, "inside_band": orc.contains(val)})
    run.results["sensitivity"] = out
    # runtimes vary between runs, so they live outside results.json
    dump_json(run.path("sensitivity.json"), records)


def _lorenz_sensitivity(run: Run):
    mesh, res = _adjoint(run)
    _sensitivities(run, mesh, res)
    _write_adjoint(run, mesh, res)


def _lorenz_pipeline(run: Run):
    oracles = None
    if run.cfg["lorenz"]["oracle"]:
        sys_ = _lorenz(run.cfg)
        oracles = {p: _oracle_result(run, sys_, p) for p in run.cfg["lorenz"]["params_to_differentiate"]}
    mesh, res = _adjoint(run)
    _sensitivities(run, mesh, res, oracles)
    _write_adjoint(run, mesh, res)


# --------------------------------------------------------------------------
# Oracle subcommands


def _oracle_regression(run: Run):
    oc = run.cfg["oracle"]
    if oc["system"] == "map":
        sys_, param = _map(run.cfg), "xi"
    else:
        sys_, param = _lorenz(run.cfg), oc["param"]
    reg = _oracle_result(run, sys_, param)
    run.results.update({"system": oc["system"], "param": param, "slope": reg.slope, "sigma3": reg.sigma3,
                        "intercept": reg.intercept})
    run.table("fields/regression.csv", ["value", "mean", "stderr"], [reg.values, reg.means, reg.stderr])
    run.svg("fields/regression.svg", reg.values, reg.means, title=f"mean vs {param}", xlabel=param, ylabel="mean")


def _oracle_histogram(run: Run):
    hc = run.cfg["histogram"]
    if hc["system"] == "map":
        edges, dens = run.stage("histogram", histogram_density, _map(run.cfg), int(hc["bins"]), int(hc["n_steps"]),
                                int(hc["spinup"]), run.cfg["seed"], int(hc["runs"]))
        centers = 0.5 * (edges[1:] + edges[:-1])
        run.results.update({"system": "map", "family": run.cfg["map"]["family"], "xi": run.cfg["map"]["xi"],
                            "bins": int(hc["bins"]), "mean_x": float(np.sum(centers * dens) / dens.size)})
        run.table("fields/histogram.csv", ["x", "density"], [centers, dens])
        run.svg("fields/histogram.svg", centers, dens, title="histogram density", xlabel="x", ylabel="density")
        return
    sys_ = _lorenz(run.cfg) if hc["system"] == "lorenz" else OdeSystem("rossler")
    xe, ye, dens = run.stage("histogram", histogram_density, sys_, int(hc["bins"]), int(hc["n_steps"]),
                             int(hc["spinup"]), run.cfg["seed"], int(hc["runs"]), hc["plane"],
                             float(run.cfg["lorenz"]["dt"]))
    xc, yc = 0.5 * (xe[1:] + xe[:-1]), 0.5 * (ye[1:] + ye[:-1])
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    run.results.update({"system": hc["system"], "plane": hc["plane"], "bins": int(hc["bins"]),
                        "mass": float(dens.sum() * (xe[1] - xe[0]) * (ye[1] - ye[0]))})
    run.table("fields/histogram.csv", [hc["plane"][0], hc["plane"][1], "density"], [X.ravel(), Y.ravel(), dens.ravel()])


HANDLERS = {
    "map-density": _map_density, "map-adjoint": _map_adjoint, "map-sensitivity": _map_sensitivity,
    "map-convergence": _map_convergence, "map-scan": _map_scan, "lorenz-mesh": _lorenz_mesh,
    "lorenz-density": _lorenz_density, "lorenz-adjoint": _lorenz_adjoint,
    "lorenz-sensitivity": _lorenz_sensitivity, "lorenz-pipeline": _lorenz_pipeline,
    "oracle-regression": _oracle_regression, "oracle-histogram": _oracle_histogram,
}


# --------------------------------------------------------------------------
# Entry points


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chaos-adjoint", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted-path override, value parsed as JSON when possible")
    ap.add_argument("--outdir", help="output directory (default $CHAOS_ADJOINT_OUTDIR or ./runs)")
    ap.add_argument("--xi", type=float)
    ap.add_argument("--n", type=int)
    ap.add_argument("--M", type=int)
    ap.add_argument("--N", type=int)
    ap.add_argument("--distribution", choices=DISTRIBUTIONS)
    ap.add_argument("--param", help="Lorenz parameter(s) to differentiate, comma separated")
    ap.add_argument("--family", help="map family")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--no-fields", action="store_true", help="skip mesh/field CSV and SVG output")
    return ap


def _overrides(args) -> list[str]:
    out = list(args.set)
    for flag, key in SHORTCUTS.items():
        val = getattr(args, flag)
        if val is not None:
            out.append(f"{key}={json.dumps(val)}")
    if args.family is not None:
        key = "scan.family" if args.command == "map-scan" else "map.family"
        out.append(f"{key}={json.dumps(args.family)}")
    if args.param is not None:
        names = [p.strip() for p in args.param.split(",") if p.strip()]
        out.append(f"lorenz.params_to_differentiate={json.dumps(names)}")
        if args.command == "oracle-regression":
            out.append(f"oracle.param={json.dumps(names[0])}")
    if args.no_fields:
        out.append("output.fields=false")
    return out


def run(command: str, config_path=None, overrides=(), outdir=None) -> int:
    """Run one subcommand and return its exit code."""
    try:
        cfg = load_config(config_path, overrides)
        if command not in HANDLERS:
            raise ConfigError(f"unknown subcommand {command!r}")
        # construct the systems once up front so bad parameters are config errors
        if command.startswith("map") or cfg["oracle"]["system"] == "map" or cfg["histogram"]["system"] == "map":
            _map(cfg)
        _lorenz(cfg)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(outdir) if outdir is not None else default_outdir()
    r = Run(command, cfg, out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[command](r)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, RuntimeError) as exc:
        r.failed = f"{type(exc).__name__}: {exc}"
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        r.finish()
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if r.failed:
        print(f"numerical failure: {r.failed}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, _overrides(args), args.outdir)


if __name__ == "__main__":
    sys.exit(main())

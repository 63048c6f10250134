import hashlib
import json

import numpy as np
import pytest

from chaos_adjoint.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, SUBCOMMANDS, load_config, main


def _results(path):
    return json.loads((path / "results.json").read_text())


def test_subcommand_list():
    assert len(SUBCOMMANDS) == 12
    with pytest.raises(SystemExit):
        main(["map-frobnicate"])


def test_map_sensitivity(tmp_path):
    assert main(["map-sensitivity", "--xi", "0.5", "--n", "256", "--outdir", str(tmp_path)]) == EXIT_OK
    res = _results(tmp_path)
    assert res["relative_difference"] < 0.05
    assert abs(res["adjoint_gradient"] - res["fd_gradient"]) <= 0.05 * abs(res["fd_gradient"])
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "ok" and man["seed"] == 0
    assert {"numpy", "scipy", "python", "chaos_adjoint"} <= set(man["versions"])
    assert man["config"]["map"]["xi"] == 0.5
    for rel, digest in man["artifacts"].items():
        assert hashlib.sha256((tmp_path / rel).read_bytes()).hexdigest() == digest


def test_map_scan_csv(tmp_path):
    code = main(["map-scan", "--family", "tent", "--set", "scan.M=8", "--set", "scan.N=200", "--set", "scan.n0=20",
                 "--outdir", str(tmp_path)])
    assert code == EXIT_OK
    header = (tmp_path / "fields" / "scan.csv").read_text().splitlines()[0]
    assert header == "xi,mean,stderr"
    rows = np.loadtxt(tmp_path / "fields" / "scan.csv", delimiter=",", skiprows=1)
    assert rows.shape == (50, 3)
    assert np.all((rows[:, 1] > 0) & (rows[:, 1] < 1))


def test_map_density_and_adjoint(tmp_path):
    assert main(["map-adjoint", "--n", "128", "--outdir", str(tmp_path)]) == EXIT_OK
    res = _results(tmp_path)
    assert res["eta"] == pytest.approx(res["mean_x"], rel=1e-6)
    assert (tmp_path / "fields" / "adjoint.csv").exists()
    assert (tmp_path / "fields" / "adjoint.svg").read_text().startswith("<svg")


def test_no_fields(tmp_path):
    assert main(["map-density", "--n", "64", "--no-fields", "--outdir", str(tmp_path)]) == EXIT_OK
    assert not (tmp_path / "fields").exists()


def test_config_errors(tmp_path):
    out = str(tmp_path / "o")
    assert main(["map-density", "--set", "map.nodes=3", "--outdir", out]) == EXIT_CONFIG
    assert main(["map-density", "--n", "8", "--outdir", out]) == EXIT_CONFIG
    assert main(["map-density", "--xi", "7", "--outdir", out]) == EXIT_CONFIG
    assert main(["lorenz-mesh", "--distribution", "uniform_x", "--M", "4", "--outdir", out]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["map-density", "--config", str(bad), "--outdir", out]) == EXIT_CONFIG


def test_io_errors(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["map-density", "--n", "64", "--outdir", str(blocker / "sub")]) == EXIT_IO
    assert main(["map-density", "--config", str(tmp_path / "missing.json"), "--outdir", str(tmp_path)]) == EXIT_IO


def test_numerical_failure(tmp_path):
    code = main(["map-density", "--n", "256", "--set", "map.max_iters=2", "--outdir", str(tmp_path)])
    assert code == EXIT_NUMERICAL
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] != "ok"


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"map": {"n": 300}, "lorenz": {"params": {"r": 30.0}}}))
    cfg = load_config(p, ["map.xi=0.6"])
    assert cfg["map"]["n"] == 300 and cfg["map"]["xi"] == 0.6
    assert cfg["lorenz"]["params"]["r"] == 30.0


def test_lorenz_pipeline(tmp_path):
    code = main(["lorenz-pipeline", "--M", "512", "--N", "128", "--distribution", "clustered", "--param", "z0",
                 "--outdir", str(tmp_path)])
    assert code == EXIT_OK
    res = _results(tmp_path)
    assert res["sensitivity"]["z0"]["value"] == pytest.approx(1.0, abs=0.15)
    assert res["adjoint"]["Jbar"] == pytest.approx(23.55, rel=0.01)
    rec = json.loads((tmp_path / "sensitivity.json").read_text())
    assert rec[0]["parameter"] == "z0" and rec[0]["mesh"]["M"] == 512 and rec[0]["runtime_seconds"] > 0
    names = (tmp_path / "mesh.csv").read_text().splitlines()[0].split(",")
    assert names[:5] == ["streamline", "node", "x", "y", "z"]
    assert "runtime_seconds" not in (tmp_path / "results.json").read_text()

import json
import subprocess
import sys

import numpy as np
import pytest

from spectral_lab.cli import main
from spectral_lab.config import ConfigError, load, validate
from spectral_lab.tables import read_csv, sidecar

BASE = {
    "seed": 3,
    "potential": {"kind": "power", "tau": 2.0},
    "grid": {"d": 1, "L": 10.0, "n": 800},
    "sensor": {"variant": "equidistributed", "delta": 0.2, "alpha": 0.0},
    "scan": {"lambdas": {"start": 9, "stop": 29, "step": 4}, "lambda_max": 29,
             "T": [0.5, 1.0, 2.0], "lambda_trunc": 12, "rho": [0.5, 1.0], "trials": 8},
    "control": {"samples": 5},
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def _run(args):
    return main([str(a) for a in args])


def _bodies(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*.csv"))}


def test_config_validation_messages(tmp_path):
    bad = dict(BASE, sensor={"variant": "equidistributed", "delta": 0.7})
    with pytest.raises(ConfigError, match=r"sensor: delta must lie in \(0, 1/2\)"):
        validate(bad)
    with pytest.raises(ConfigError, match="grid.d"):
        validate(dict(BASE, grid={"d": 3}))
    with pytest.raises(ConfigError, match="scan.lambdas"):
        validate(dict(BASE, scan={"lambdas": [5, 3]}))
    with pytest.raises(ConfigError, match="potential.kind"):
        validate(dict(BASE, potential={"kind": "cubic"}))
    with pytest.raises(ConfigError, match="anisotropic"):
        validate(dict(BASE, potential={"kind": "anisotropic", "tau": 2.0}))
    with pytest.raises(ConfigError, match="file not found"):
        load(tmp_path / "missing.json")


def test_config_range_and_seed_override(tmp_path):
    cfg = load(_write(tmp_path, BASE), seed=99)
    assert cfg.seed == 99
    assert cfg.lambdas == [9.0, 13.0, 17.0, 21.0, 25.0, 29.0]
    assert cfg.sensor.seed == 99
    two = validate(dict(BASE, potential={"kind": "two_sided", "c1": 1, "tau1": 2, "c2": 2,
                                         "tau2": 2, "sampler": "upper"}))
    assert two.potential(np.array([[2.0]]))[0] == pytest.approx(8.0)


def test_invalid_config_exit_code(tmp_path, capsys):
    path = _write(tmp_path, dict(BASE, sensor={"variant": "equidistributed", "delta": 0.7}))
    assert _run(["sensors", "--config", path, "--out", tmp_path / "o"]) == 2
    err = capsys.readouterr().err
    assert "sensor: delta must lie in (0, 1/2)" in err


def test_spectrum_csv(tmp_path):
    path = _write(tmp_path, BASE)
    out = tmp_path / "out"
    assert _run(["spectrum", "--config", path, "--out", out]) == 0
    (csv,) = out.glob("*/spectrum.csv")
    rows = read_csv(csv)
    assert [r["k"] for r in rows[:3]] == ["0", "1", "2"]
    for r in rows:
        assert float(r["analytic"]) == 2 * int(r["k"]) + 1
        assert float(r["rel_err"]) < 1e-3
    meta = json.loads(sidecar(csv).read_text())
    assert meta["seed"] == 3 and meta["command"] == "spectrum"
    assert len(meta["config_hash"]) == 64
    assert "numpy" in meta["versions"]


def test_all_subcommands_and_reproducibility(tmp_path):
    path = _write(tmp_path, BASE)
    roots = []
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in ("spectrum", "decay", "sensors", "ratio-scan", "ghost-check", "observability"):
            jobs = "2" if run == "b" else "1"
            assert _run([cmd, "--config", path, "--out", out, "--jobs", jobs]) == 0, cmd
        roots.append(out)
    a, b = (_bodies(r) for r in roots)
    assert a.keys() == b.keys()
    assert len(a) >= 7
    for name in a:
        assert a[name] == b[name], name
    assert _run(["report", "--config", path, "--out", roots[0]]) == 0
    (rep,) = roots[0].glob("*/report.json")
    summary = json.loads(rep.read_text())
    (run,) = summary["runs"].values()
    assert "ratio_scan" in run and "exponent_table" in run
    (loc,) = roots[0].glob("*/localization.csv")
    assert loc.read_text().splitlines()[0] == "lambda,subspace_dim,r_star,fitted_e,seed"


def test_seed_flag_changes_run_directory(tmp_path):
    path = _write(tmp_path, BASE)
    out = tmp_path / "o"
    _run(["sensors", "--config", path, "--out", out])
    _run(["sensors", "--config", path, "--out", out, "--seed", "5"])
    assert len(list(out.iterdir())) == 2


def test_console_entry_point(tmp_path):
    path = _write(tmp_path, dict(BASE, grid={"d": 1, "L": 3.0}))
    proc = subprocess.run([sys.executable, "-m", "spectral_lab.cli", "sensors", "--config",
                           str(path), "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "grid.n" in proc.stderr

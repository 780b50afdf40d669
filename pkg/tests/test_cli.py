"""End-to-end runs through the command line: artifacts, determinism and exit codes."""

import csv
import json
import os

import numpy as np
import pytest

from nematic2d.cli import main
from nematic2d.fieldio import read_snapshot
from nematic2d.specfun import make_params

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIGS = os.path.join(HERE, "..", "configs")


@pytest.fixture(autouse=True)
def out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("NEMATIC_OUT_DIR", str(tmp_path / "env-out"))
    return tmp_path / "env-out"


def cfg_path(name):
    return os.path.join(CONFIGS, name)


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SMALL_KINETIC = [
    "--set", "grid.nx=16", "--set", "grid.ny=16", "--set", "time.t_end=0.02", "--set", "time.output_every=2",
]


def read_rows(path):
    with open(path) as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


def test_kinetic_run_writes_listed_artifacts(tmp_path, out_env):
    assert main(["simulate", "--config", cfg_path("kinetic-two-vortex.cfg")] + SMALL_KINETIC) == 0
    out = out_env / "kinetic-two-vortex"
    meta = json.loads((out / "run.json").read_text())
    assert meta["tier"] == "kinetic" and meta["status"] == "completed" and meta["clock"] == "kinetic"
    assert meta["config"]["grid.nx"] == 16
    assert meta["derived"]["r_eq"] == pytest.approx(make_params(6.0, 0.05).r_eq)
    for name in meta["artifacts"]:
        assert (out / name).stat().st_size > 0
    snaps = [a for a in meta["artifacts"] if a.endswith(".nemf")]
    assert len(snaps) == 3  # 4 steps of 5e-3, output every 2
    m = read_snapshot(out / snaps[-1])
    assert m.shape == (9, 16, 16) and np.allclose(m[0], 1.0)
    rows = read_rows(out / "diagnostics.csv")
    assert rows[0] == ["t", "E_total", "E_reduced", "S_rel", "n_vortices"] and len(rows) == 4
    e = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(e) <= 1e-6)


def test_runs_are_byte_identical(tmp_path):
    outs = []
    for label in ("a", "b"):
        assert main(["simulate", "--config", cfg_path("kinetic-two-vortex.cfg"), "--out", str(tmp_path / label)]
                    + SMALL_KINETIC) == 0
        outs.append(tmp_path / label / "kinetic-two-vortex")
    names = sorted(os.listdir(outs[0]))
    assert names == sorted(os.listdir(outs[1]))
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_closure_run_and_rescaled_clock(tmp_path):
    args = ["simulate", "--config", cfg_path("closure-maxent.cfg"), "--out", str(tmp_path),
            "--set", "grid.nx=16", "--set", "grid.ny=16", "--set", "time.t_end=2e-4", "--set", "time.output_every=5"]
    assert main(args) == 0
    meta = json.loads((tmp_path / "closure-maxent" / "run.json").read_text())
    assert meta["clock"] == "rescaled" and meta["status"] == "completed"
    assert read_snapshot(tmp_path / "closure-maxent" / meta["artifacts"][0]).shape == (1, 16, 16)


def test_vortex_square_has_both_clocks(tmp_path):
    assert main(["simulate", "--config", cfg_path("vortex-square.cfg"), "--out", str(tmp_path)]) == 0
    out = tmp_path / "vortex-square"
    meta = json.loads((out / "run.json").read_text())
    per = meta["t_per_t_prime"]
    p = make_params(6.0, 0.05)
    assert per == pytest.approx(-np.pi * p.tau_gamma * np.log(0.05) / 8)
    rows = read_rows(out / "vortex-trajectory.csv")
    assert rows[0] == ["t_prime", "t", "k", "re_z", "im_z", "degree", "U"]
    for r in rows[1:]:
        assert float(r[1]) == pytest.approx(float(r[0]) * per, rel=1e-10, abs=1e-300)
    assert (out / "vortex-trajectory.csv").read_text().rstrip().splitlines()[-1].startswith("# status=completed")
    phase = read_snapshot(out / "phase_final.nemf")
    assert phase.shape == (1, 33, 33) and np.all(phase.imag == 0)


def test_close_approach_exit_code(tmp_path, capsys):
    args = ["simulate", "--config", cfg_path("vortex-pair.cfg"), "--out", str(tmp_path)]
    assert main(args) == 0
    assert main(args + ["--strict-halt"]) == 4
    assert "close approach" in capsys.readouterr().err
    assert json.loads((tmp_path / "vortex-pair" / "run.json").read_text())["status"] == "close-approach"


def test_config_error_exit_code(tmp_path, capsys):
    path = write_cfg(tmp_path, "tier = kinetic\nparams.gamma = -1\nunknown = 3\n")
    assert main(["simulate", "--config", path]) == 2
    err = capsys.readouterr().err
    assert "params.gamma: must be positive" in err and "unknown: unknown key" in err
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["simulate", "--config", path, "--set", "oops"]) == 2
    assert main(["specfun-table", "--gamma", "6", "--out", str(tmp_path / "t.csv"), "--r-max", "1.5"]) == 2


def test_instability_exit_code(tmp_path, capsys):
    args = ["simulate", "--config", cfg_path("closure-maxent.cfg"), "--out", str(tmp_path), "--set", "time.dt=1e-3"]
    assert main(args) == 3
    assert "numerical instability" in capsys.readouterr().err


def test_validation_failure_exit_code(tmp_path, monkeypatch, capsys):
    from nematic2d import validation

    failing = validation.CheckResult(2, "stationarity", False, "forced", 0.0, 10.0)
    monkeypatch.setattr(validation, "run_checks", lambda numbers=None, seed=0: [failing])
    assert main(["validate", "--config", cfg_path("validate.cfg"), "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().out.split()[:3] == ["[FAIL]", "2", "stationarity:"]


def test_validate_subset(tmp_path, capsys):
    args = ["validate", "--config", cfg_path("validate.cfg"), "--out", str(tmp_path),
            "--set", "validate.criteria=1 11"]
    assert main(args) == 0
    out = capsys.readouterr().out.splitlines()
    assert [line.split()[:2] for line in out] == [["[PASS]", "1"], ["[PASS]", "11"]]
    rows = read_rows(tmp_path / "validate" / "validation.csv")
    assert rows[0] == ["criterion", "name", "passed", "seconds", "detail"] and len(rows) == 3


def test_specfun_table(tmp_path):
    path = tmp_path / "sf.csv"
    assert main(["specfun-table", "--gamma", "6", "--out", str(path), "--n", "50"]) == 0
    rows = read_rows(path)
    assert rows[0] == ["r", "lambda", "w_gamma", "w_gamma_prime"] and len(rows) == 52
    table = np.array(rows[1:], dtype=float)
    assert np.all(np.diff(table[:, 0]) > 0) and np.all(np.diff(table[:, 1]) > 0)
    i = int(np.argmin(table[:, 2]))
    assert table[i, 0] == pytest.approx(make_params(6.0, 0.1).r_eq, abs=1e-12)  # 12 significant digits
    assert abs(table[i, 3]) <= 1e-10


def test_maxslope_demo(tmp_path):
    path = tmp_path / "ms.csv"
    assert main(["maxslope-demo", "--out", str(path)]) == 0
    rows = read_rows(path)
    assert rows[0] == ["epsilon", "sup_distance"] and len(rows) == 4
    d = [float(r[1]) for r in rows[1:]]
    assert d[0] > d[1] > d[2] > 0


def test_tiers_through_simulate(tmp_path):
    path = write_cfg(tmp_path, "tier = specfun-table\nname = sf\nspecfun.n = 5\n")
    assert main(["simulate", "--config", path, "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "sf" / "run.json").read_text())
    assert meta["artifacts"] == ["specfun-table.csv"] and "clock" not in meta

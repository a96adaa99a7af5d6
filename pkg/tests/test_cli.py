import json

import numpy as np
import pytest

from frechet_mp.cli import main


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def test_mpass_double_well_1d(tmp_path):
    code, out = run(tmp_path, "mpass", "double-well-1d", "--seed", "0")
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["verdict"] == "critical-point-found"
    assert abs(s["c_estimate"] - 1.0) <= 1e-3
    assert np.allclose(s["h"], [1.0], atol=1e-3)
    for f in ("trace.csv", "ps.csv", "path.csv"):
        assert (out / f).read_text().count("\n") > 1


def test_mpass_complex_exp_ps_failure(tmp_path):
    code, out = run(tmp_path, "mpass", "complex-exp-merit", "--seed", "0")
    assert code == 2
    assert json.loads((out / "summary.json").read_text())["verdict"] == "ps-violated"


def test_missing_problem_prints_usage(tmp_path, capsys):
    code, _ = run(tmp_path, "mpass")
    assert code == 1
    assert "usage" in capsys.readouterr().err


def test_no_subcommand(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_problem(tmp_path, capsys):
    code, _ = run(tmp_path, "mpass", "nosuch")
    assert code == 1
    assert "nosuch" in capsys.readouterr().err


def test_bad_flag_is_not_confused_with_ps_violation(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["mpass", "double-well-1d", "--seed", "abc"])
    assert exc.value.code == 1


def test_solve_volterra_linear(tmp_path):
    code, out = run(tmp_path, "solve", "volterra-linear", "--nodes", "64")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["solved"] and rep["sup_error"] <= 1e-3
    sol = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
    assert sol.shape == (64, 2)
    assert (out / "residuals.csv").exists() and (out / "c1.json").exists()


def test_solve_identity_target(tmp_path):
    code, out = run(tmp_path, "solve", "identity", "--target", "1,2,3,4")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["iterations"] == 1
    sol = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
    assert np.allclose(sol[:, 1], [1, 2, 3, 4])


def test_solve_identity_wrong_target_length(tmp_path):
    code, _ = run(tmp_path, "solve", "identity", "--target", "1,2")
    assert code == 1


def test_solve_cubic_c1_violation(tmp_path):
    code, out = run(tmp_path, "solve", "cubic-degenerate")
    assert code == 3
    c1 = json.loads((out / "c1.json").read_text())
    assert not (out / "report.json").exists()
    assert c1


def test_solve_functional_problem_rejected(tmp_path):
    code, _ = run(tmp_path, "solve", "double-well-1d")
    assert code == 1


@pytest.mark.parametrize("name,expected", [("double-well-2d", 0), ("identity", 0), ("volterra-sin", 0),
                                           ("cubic-degenerate", 1)])
def test_check(tmp_path, name, expected):
    code, out = run(tmp_path, "check", name, "--samples", "20")
    assert code == expected
    lines = (out / "check.csv").read_text().splitlines()
    assert lines[0] == "check,value,tol,status"
    assert ("FAIL" in "".join(lines)) == bool(expected)


def test_config_file_overrides(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("problem:\n  name: volterra-linear\n  N: 32\nsolve:\n  max_iter: 50\nseed: 5\n")
    code, out = run(tmp_path, "solve", "--config", str(cfg))
    assert code == 0
    sol = np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1)
    assert sol.shape == (32, 2)


def test_config_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("problem: double-well-1d\nmountain_pass:\n  bogus: 1\n")
    code, _ = run(tmp_path, "mpass", "--config", str(cfg))
    assert code == 1


def test_cli_flags_beat_config(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"problem": {"name": "volterra-linear", "N": 32}}))
    code, out = run(tmp_path, "solve", "--config", str(cfg), "--nodes", "16")
    assert code == 0
    assert np.loadtxt(out / "solution.csv", delimiter=",", skiprows=1).shape == (16, 2)


@pytest.mark.parametrize("argv", [["mpass", "double-well-2d"], ["solve", "volterra-sin", "--nodes", "32"]])
def test_deterministic_artifacts(tmp_path, argv):
    _, a = run(tmp_path, *argv, "--seed", "7", name="a")
    _, b = run(tmp_path, *argv, "--seed", "7", name="b")
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_solve_iota_weights(tmp_path):
    code, out = run(tmp_path, "solve", "volterra-linear", "--nodes", "32", "--iota-weights", "1,0.1,0.01")
    assert code == 0
    assert json.loads((out / "report.json").read_text())["solved"]
    code, _ = run(tmp_path, "solve", "volterra-linear", "--iota-weights", "1,0", name="bad")
    assert code == 1

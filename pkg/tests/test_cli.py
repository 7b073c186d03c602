import json
import subprocess
import sys

import numpy as np
import pytest

from sctomp.cli import EXIT_INPUT, EXIT_OK, EXIT_STAGE1, EXIT_VERIFY, main
from sctomp.spline import PHSpline, load_spline, save_spline

from conftest import FIXTURES

CORRIDOR = str(FIXTURES / "straight.json")
DI = str(FIXTURES / "double_integrator.json")


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def di_full(tmp_path_factory):
    out = tmp_path_factory.mktemp("di")
    code = run("full", "--corridor", CORRIDOR, "--model", DI, "--out", out, "--plot-data")
    return code, out


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "sctomp.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for name in ("spline", "plan", "verify", "full"):
        assert name in res.stdout


def test_full_double_integrator(di_full, capsys):
    code, out = di_full
    assert code == EXIT_OK
    doc = json.loads((out / "trajectory.json").read_text())
    assert doc["total_time"] == pytest.approx(2.0, rel=0.02)
    assert doc["manifest"]["criterion"] == "arc_length"
    assert doc["active_fraction"]["a"] >= 0.95
    spline = json.loads((out / "spline.json").read_text())
    # one segment, start frame fixed, free goal frame, endpoint constraint: 20 - 4 - 3
    assert spline["degrees_of_freedom"] == 13
    assert (out / "plot_data.json").exists()


def test_verify_accepts_fresh_pair(di_full, capsys):
    _, out = di_full
    code = run("verify", "--corridor", CORRIDOR, "--model", DI, "--spline", out / "spline.json",
               "--trajectory", out / "trajectory.csv")
    assert code == EXIT_OK
    assert "all trajectory checks passed" in capsys.readouterr().out


def test_verify_rejects_hand_edited_bound(di_full, tmp_path, capsys):
    _, out = di_full
    lines = (out / "trajectory.csv").read_text().splitlines()
    row = lines[5].split(",")
    row[-1] = "1.5"
    lines[5] = ",".join(row)
    edited = tmp_path / "trajectory.csv"
    edited.write_text("\n".join(lines) + "\n")
    (tmp_path / "trajectory.json").write_text((out / "trajectory.json").read_text())
    code = run("verify", "--corridor", CORRIDOR, "--model", DI, "--spline", out / "spline.json",
               "--trajectory", edited)
    assert code == EXIT_VERIFY
    assert "input a out of bounds" in capsys.readouterr().out


def test_verify_rejects_stale_spline(di_full, tmp_path, capsys):
    # same straight line, different parametrization: u(xi) = 0.8 + b xi with unit length
    _, out = di_full
    fresh = load_spline(out / "spline.json")
    b = (-0.8 + np.sqrt(0.64 + 4 * 0.36 / 3)) / (2 / 3)
    u = 0.8 + b * np.arange(5) / 4
    tuples = np.zeros((1, 5, 4))
    tuples[0, :, 0] = u
    stale = PHSpline.from_tuples(tuples, fresh.start)
    np.testing.assert_allclose(stale.end, [1, 0, 0], atol=1e-12)
    save_spline(stale, tmp_path / "stale.json")
    code = run("verify", "--corridor", CORRIDOR, "--model", DI, "--spline", tmp_path / "stale.json",
               "--trajectory", out / "trajectory.csv")
    assert code == EXIT_VERIFY
    assert "off its path parameter" in capsys.readouterr().out


def test_corrupted_corridor_is_input_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"regions": [')
    assert run("spline", "--corridor", bad, "--out", tmp_path) == EXIT_INPUT
    assert "corridor" in capsys.readouterr().err


def test_disjoint_corridor_names_region(tmp_path, capsys):
    doc = {
        "regions": [
            {"A": np.vstack([np.eye(3), -np.eye(3)]).tolist(), "b": [1, 1, 1, 0, 0, 0]},
            {"A": np.vstack([np.eye(3), -np.eye(3)]).tolist(), "b": [3, 1, 1, -2, 0, 0]},
        ],
        "start": [0.5, 0.5, 0.5],
        "goal": [2.5, 0.5, 0.5],
    }
    path = tmp_path / "disjoint.json"
    path.write_text(json.dumps(doc))
    assert run("spline", "--corridor", path, "--out", tmp_path) == EXIT_STAGE1
    assert "region" in capsys.readouterr().err
    assert not (tmp_path / "spline.json").exists()


def test_plan_without_spline_or_model(tmp_path):
    assert run("plan", "--corridor", CORRIDOR, "--model", DI, "--out", tmp_path) == EXIT_INPUT
    assert run("plan", "--corridor", CORRIDOR, "--full", "--out", tmp_path) == EXIT_INPUT
    assert run("plan", "--corridor", CORRIDOR, "--model", tmp_path / "missing.json",
               "--full", "--out", tmp_path) == EXIT_INPUT


def test_nodes_must_be_at_least_two(tmp_path):
    assert run("spline", "--corridor", CORRIDOR, "--nodes", 1, "--out", tmp_path) == EXIT_INPUT


def test_plan_reuses_spline(di_full, tmp_path, capsys):
    _, out = di_full
    code = run("plan", "--corridor", CORRIDOR, "--model", DI, "--spline", out / "spline.json",
               "--out", tmp_path)
    assert code == EXIT_OK
    assert "total_time=" in capsys.readouterr().out
    assert (tmp_path / "trajectory.csv").read_bytes() == (out / "trajectory.csv").read_bytes()


def test_full_is_deterministic(di_full, tmp_path):
    _, out = di_full
    assert run("full", "--corridor", CORRIDOR, "--model", DI, "--out", tmp_path,
               "--plot-data") == EXIT_OK
    for name in ("spline.json", "trajectory.csv", "trajectory.json", "plot_data.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name


def test_full_with_several_criteria(tmp_path):
    code = run("full", "--corridor", CORRIDOR, "--model", DI, "--out", tmp_path,
               "--criteria", "arc_length,energy")
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["failed"] == []
    for c in ("arc_length", "energy"):
        assert (tmp_path / c / "trajectory.csv").exists()
        assert summary["total_time"][c] == pytest.approx(2.0, rel=0.02)


def test_unknown_criterion_rejected(tmp_path):
    code = run("full", "--corridor", CORRIDOR, "--model", DI, "--out", tmp_path,
               "--criteria", "arc_length,bogus")
    assert code == EXIT_INPUT

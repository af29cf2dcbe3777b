import json
import subprocess
import sys

import pytest

from oracles import decay_discounted
from pdmpctl.cli import main
from pdmpctl.fields import ValueField
from pdmpctl.model import fixture_path


def fx(name):
    return str(fixture_path(name))


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def average_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("avg")
    assert main(["solve-average", "--model", fx("cycle1d"), "--out", str(out)]) == 0
    return out


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "--model", fx("cycle1d")]) == 0
    assert main(["validate", "--model", fx("cycle1d-badkernel"), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "kernel_self_atom" in err
    assert read_json(tmp_path / "validation.json")["pass"] is False
    assert main(["validate", "--model", str(tmp_path / "missing.cfg")]) == 3


def test_bad_arguments_exit_3():
    assert main(["solve-discounted", "--model", fx("cycle1d")]) == 3
    assert main(["no-such-command"]) == 3


def test_solve_discounted(tmp_path):
    assert main(["solve-discounted", "--model", fx("cycle1d-a0"), "--alpha", "1", "--out", str(tmp_path)]) == 0
    s = read_json(tmp_path / "summary.json")
    assert abs(s["value_at_x0"] - 1.7707) <= 1e-3
    assert {"value.csv", "policy.csv"} <= {p.name for p in tmp_path.iterdir()}


def test_solve_discounted_rejects_zero_alpha(capsys):
    assert main(["solve-discounted", "--model", fx("cycle1d"), "--alpha", "0"]) == 3
    assert "α must be positive; use solve-average" in capsys.readouterr().err


def test_solve_discounted_decay(tmp_path):
    assert main(["solve-discounted", "--model", fx("decay1d"), "--alpha", "0.5", "--out", str(tmp_path)]) == 0
    J = ValueField.from_csv((tmp_path / "value.csv").read_text())
    assert max(abs(J.values - decay_discounted(0.5, J.grid))) <= 1e-3


def test_solve_discounted_iteration_cap(tmp_path):
    cfg = tmp_path / "capped.cfg"
    cfg.write_text(fixture_path("cycle1d").read_text() + "\n[solver]\nmax_iter = 3\n")
    assert main(["solve-discounted", "--model", str(cfg), "--alpha", "0.1", "--out", str(tmp_path)]) == 2


def test_solve_average_single_action(tmp_path):
    assert main(["solve-average", "--model", fx("cycle1d-a0"), "--out", str(tmp_path), "--reps", "2"]) == 0
    s = read_json(tmp_path / "summary.json")
    assert abs(s["rho"] - 2.0) <= 1e-2
    assert s["residual_max"] <= 1e-3


def test_solve_average_two_actions(average_dir):
    s = read_json(average_dir / "summary.json")
    assert s["rho"] <= 2.0 + 1e-2
    for name in ("h.csv", "w.csv", "policy.csv", "residual.csv", "sweep.csv"):
        assert (average_dir / name).is_file()


def test_solve_average_blowup(tmp_path):
    assert main(["solve-average", "--model", fx("blowup"), "--out", str(tmp_path), "--reps", "0"]) == 2
    s = read_json(tmp_path / "summary.json")
    assert s["relative_value_bound"] is False and s["boundedness"]["blow_up"] is True


def test_simulate_single_action(tmp_path):
    assert main(["simulate", "--model", fx("cycle1d-a0"), "--action", "a0", "--x0", "0.5",
                 "--horizon", "100", "--reps", "5", "--dump-trajectory", "--out", str(tmp_path)]) == 0
    s = read_json(tmp_path / "summary.json")
    assert s["mean"] == 2.0 and s["stderr"] == 0.0
    assert (tmp_path / "trajectory.csv").read_text().startswith("n,T_n,Z_n,cause\n1,0.5,0.5,boundary")


def test_simulate_with_policy(tmp_path, average_dir):
    args = ["simulate", "--model", fx("cycle1d"), "--policy", str(average_dir / "policy.csv"),
            "--x0", "0.5", "--horizon", "50", "--reps", "8"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    assert main(args[:3] + ["--action", "zz", "--x0", "0.5"]) == 3


def test_verify_passes_and_detects_tampering(tmp_path, average_dir):
    assert main(["verify", "--model", fx("cycle1d"), "--solution", str(average_dir),
                 "--out", str(tmp_path / "ok")]) == 0
    bad = tmp_path / "bad"
    bad.mkdir()
    for p in average_dir.iterdir():
        (bad / p.name).write_bytes(p.read_bytes())
    s = read_json(bad / "summary.json")
    s["rho"] += 1.0
    (bad / "summary.json").write_text(json.dumps(s))
    assert main(["verify", "--model", fx("cycle1d"), "--solution", str(bad)]) == 1
    report = read_json(bad / "verify.json")
    failed = [c["id"] for c in report["checks"] if not c["pass"]]
    assert "optimality_residual" in failed


def test_verify_missing_solution(tmp_path):
    assert main(["verify", "--model", fx("cycle1d"), "--solution", str(tmp_path)]) == 3


def test_artifacts_byte_identical_across_runs_and_threads(tmp_path):
    base = ["solve-discounted", "--model", fx("cycle1d"), "--alpha", "0.5"]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--out", str(tmp_path / "b"), "--threads", "4"]) == 0
    for name in ("value.csv", "policy.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "pdmpctl.cli", "validate", "--model", fx("cycle1d")],
                       capture_output=True, text=True)
    assert r.returncode == 0

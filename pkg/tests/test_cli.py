import csv
import io
import json

import numpy as np
import pytest

from relaykey.cli import main
from relaykey.config import KEYS


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_table1_is_byte_identical_across_runs(capsys):
    code, first, _ = run(capsys, "table1")
    assert code == 0
    _, second, _ = run(capsys, "table1")
    assert first == second
    assert first.splitlines()[0] == "c_R,rho_dB,beta_opt,beta_star"
    assert len(first.splitlines()) == 61


def test_unknown_key_exits_with_config_error(capsys):
    code, _, err = run(capsys, "simulate", "-s", "bogus=1")
    assert code == 2 and "bogus" in err


def test_foreign_key_is_rejected(capsys):
    code, _, err = run(capsys, "table1", "-s", "trials=5")
    assert code == 2


def test_bad_json_file_reports_location(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text('{"c_ar": 0.1,\n "rho_db": }')
    code, _, err = run(capsys, "sweep", "-c", str(path))
    assert code == 2 and ":2:" in err


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit):
        main(["simulate", "--help"])
    out = capsys.readouterr().out
    for k in KEYS:
        assert k.name in out


def test_sweep_peaks_at_the_grid_optimum(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"c_ar": 0.0, "rho_db": 30.0}))
    code, out, _ = run(capsys, "sweep", "-c", str(cfg), "--threads", "2")
    assert code == 0
    data = rows(out)
    assert len(data) == 999
    theta = np.array([float(r["theta"]) for r in data])
    assert float(data[int(np.argmax(theta))]["beta"]) == pytest.approx(0.545)
    assert theta[-1] < 1e-3 and theta[0] < theta.max() / 2
    assert all(float(r["theta_lb"]) <= float(r["theta"]) + 1e-12 for r in data)


def test_sweep_over_los_fraction(capsys):
    code, out, _ = run(capsys, "sweep", "-s", "sweep_var=c", "-s", "start=0", "-s", "stop=0.9",
                       "-s", "step=0.3", "-s", "beta=0.5")
    assert code == 0
    assert [float(r["c"]) for r in rows(out)] == pytest.approx([0.0, 0.3, 0.6, 0.9])


def test_optimize_methods(capsys):
    code, out, _ = run(capsys, "optimize", "-s", "rho_db=30")
    assert code == 0 and float(rows(out)[0]["beta"]) == pytest.approx(0.545)
    code, out, _ = run(capsys, "optimize", "-s", "method=constrained", "-s", "eta=0.01")
    assert code == 0 and rows(out)[0]["method"] == "NewtonConstraint"


def test_simulate_writes_rounds_summary_and_trajectory(tmp_path, capsys):
    traj, summ = tmp_path / "t.csv", tmp_path / "s.csv"
    code, out, _ = run(capsys, "simulate", "-s", "rounds=4", "-s", "trials=20", "-s", "c_ar=0.2",
                       "--trajectory", str(traj), "--summary", str(summ), "--threads", "1")
    assert code == 0
    assert [r["m"] for r in rows(out)] == ["1", "2", "3", "4"]
    assert traj.read_text().splitlines()[0] == "m,n_ar,n_br,n_xor,buffer_after,outage,delivered_bits"
    assert len(traj.read_text().splitlines()) == 5
    assert rows(summ.read_text())[0]["recovery_failures"] == "0"


def test_simulate_summary_goes_to_stderr_by_default(capsys):
    code, _, err = run(capsys, "simulate", "-s", "rounds=2", "-s", "trials=4", "--threads", "1")
    assert code == 0 and "throughput=" in err


def test_invalid_scheme_exits_2(capsys):
    code, _, _ = run(capsys, "simulate", "-s", "scheme=largest")
    assert code == 2


def test_bad_thread_env_exits_2(monkeypatch, capsys):
    monkeypatch.setenv("RELAYKEY_THREADS", "lots")
    code, _, err = run(capsys, "table1")
    assert code == 2 and "RELAYKEY_THREADS" in err


@pytest.mark.slow
def test_validate_passes_and_detects_a_perturbed_marcum(capsys):
    code, out, _ = run(capsys, "validate")
    assert code == 0 and "FAIL" not in out
    code, out, _ = run(capsys, "validate", "--perturb-marcum", "1e-3")
    assert code == 1
    assert "FAIL  marcum_q1" in out

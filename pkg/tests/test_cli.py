import csv
import json
import subprocess
import sys

import pytest

from aoi_starve import cli
from aoi_starve import experiments as ex
from aoi_starve.config import default_config


@pytest.fixture(autouse=True)
def no_env_out(monkeypatch):
    monkeypatch.delenv("AOI_STARVE_OUT", raising=False)


def test_analytic_table(tmp_path, capsys):
    assert cli.run(["analytic", "--xs", "0,0.5,0.8,0.9", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "analytic.csv")))
    v = [float(r["average_aoi_ms"]) for r in rows]
    assert v[0] == 201.5 and v[3] == pytest.approx(210.5, abs=1e-9)
    inc = [(b - a) / (xb - xa) for a, b, xa, xb in zip(v, v[1:], [0, .5, .8], [.5, .8, .9])]
    assert all(d > 0 for d in inc) and inc == sorted(inc)
    assert (tmp_path / "config.echo").exists()


def test_full_starvation_exit_code(capsys):
    assert cli.run(["analytic", "--xs", "1.0"]) == 2
    assert "degenerate starvation" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("gamma = 100\nwat = 3\n")
    assert cli.run(["analytic", "--config", str(p)]) == 2


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.run(["analytic", "--out", str(blocker / "sub")]) == 3


def test_env_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv("AOI_STARVE_OUT", str(tmp_path / "env"))
    assert cli.run(["analytic", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "analytic.csv").exists() and not (tmp_path / "flag").exists()


def test_simulate_writes_artifacts(tmp_path):
    rc = cli.run(["simulate", "--duration-ms", "3000", "--attack-mode", "active-eve", "--x", "0.5",
                  "--events", "100", "--out", str(tmp_path)])
    assert rc == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"config.echo", "summary.json", "metrics.txt", "reset_samples.csv", "events.csv", "timing.json"} <= names
    s = json.loads((tmp_path / "summary.json").read_text())
    assert "wall_s" not in s and s["analytic"]["average_aoi_ms"] == pytest.approx(202.5)


def test_simulate_outputs_byte_identical(tmp_path):
    args = ["simulate", "--duration-ms", "4000", "--seed", "9", "--events", "5000"]
    assert cli.run(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.run(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("events.csv", "reset_samples.csv", "summary.json", "metrics.txt", "config.echo"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_validate_fault_injection_names_the_check(tmp_path, capsys):
    rc = cli.run(["validate", "--duration-ms", "20000", "--analytic-gamma", "120", "--out", str(tmp_path)])
    assert rc == 4
    out = capsys.readouterr().out
    assert "FAIL  sim_vs_analytic_x0:" in out
    assert "renewal" in (tmp_path / "validation.txt").read_text()


def test_sweep_parallel_equals_sequential(tmp_path):
    spec = ex.SweepSpec("x", (0.0, 0.9), replicas_per_point=2, root_seed=3)
    cfg = default_config(attack_mode="probabilistic", n_vehicles=20)
    a = ex.cmd_sweep(spec, cfg, tmp_path / "seq", duration_ms=3000, jobs=1)
    b = ex.cmd_sweep(spec, cfg, tmp_path / "par", duration_ms=3000, jobs=2)
    assert a == b
    assert (tmp_path / "seq" / "sweep.csv").read_bytes() == (tmp_path / "par" / "sweep.csv").read_bytes()


def test_x_sweep_needs_an_attack_mode():
    with pytest.raises(Exception, match="attack_mode"):
        ex.cmd_sweep(ex.SweepSpec("x", (0.0, 0.5), 1), default_config(), None, duration_ms=100)


def test_safety_missing_run():
    with pytest.raises(ex.MissingRunError, match="0.9"):
        ex.safety_from_reports({0.0: None}, [0.0, 0.9])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "aoi_starve", "analytic"], capture_output=True, text=True)
    assert r.returncode == 0 and "201.5" in r.stdout

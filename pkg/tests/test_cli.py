import json

import numpy as np
import pytest

from nsnpp import diagnostics as dg
from nsnpp.cli import main

EX2 = """scheme = {scheme}
initial_condition = example2
N = 12
dt = 1e-2
t_end = 0.1
snapshot_every = 5
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("scheme", ["bdf1", "bdf2-rpc", "bdf2-mrpc"])
def test_run_example2(tmp_path, scheme):
    out = tmp_path / "out"
    code = main(["run", _write(tmp_path, EX2.format(scheme=scheme)), "--output-dir", str(out), "--quiet"])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["steps"] == 10
    ts = dg.read_timeseries(out / "timeseries.csv")
    assert len(ts["step"]) == 11
    np.testing.assert_allclose(ts["mass_1"], 4.4, rtol=1e-12)
    assert np.all(np.diff(ts["scheme_energy"]) <= 1e-10 * ts["scheme_energy"][0])
    assert (out / "snapshots" / "step_000005" / "u_x.txt").exists()
    f, meta = dg.read_snapshot(out / "snapshots" / "final" / "c_1.txt")
    assert meta["N"] == 12 and f.min() > 0


def test_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, EX2.format(scheme="bdf2-mrpc"))
    for d in ("a", "b"):
        assert main(["run", cfg, "--output-dir", str(tmp_path / d), "--quiet"]) == 0
    for var in ("u_x", "p", "c_2"):
        a, _ = dg.read_snapshot(tmp_path / "a" / "snapshots" / "final" / f"{var}.txt")
        b, _ = dg.read_snapshot(tmp_path / "b" / "snapshots" / "final" / f"{var}.txt")
        assert np.array_equal(a, b)


def test_restart_from_snapshot_dir(tmp_path):
    assert main(["run", _write(tmp_path, EX2.format(scheme="bdf1")), "--output-dir", str(tmp_path / "a"),
                 "--quiet"]) == 0
    snap = tmp_path / "a" / "snapshots" / "final"
    text = ("scheme = bdf1\ninitial_condition = snapshot-dir\nsnapshot_dir = " + str(snap)
            + "\nN = 12\ndt = 1e-2\nt_end = 0.05\neps = 1\nnu = 0.01\n"
            "species.1.z = 1\nspecies.1.D = 1\nspecies.2.z = -1\nspecies.2.D = 1\n")
    assert main(["run", _write(tmp_path, text, "restart.cfg"), "--output-dir", str(tmp_path / "b"),
                 "--quiet"]) == 0
    summary = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert summary["t"] == pytest.approx(0.15)
    np.testing.assert_allclose(summary["mass"], 4.4, rtol=1e-12)


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["run", _write(tmp_path, "dt = 0\n"), "--quiet"]) == 2
    assert "key 'dt'" in capsys.readouterr().err
    assert main(["run", _write(tmp_path, "N = 8\nbogus = 1\n"), "--quiet"]) == 2
    assert "line 2" in capsys.readouterr().err


def test_step_failure_exit_code(tmp_path, capsys):
    # BDF2 at dt = 0.5 on Example 2 blows up in sigma within a few steps
    text = "scheme = bdf2-mrpc\ninitial_condition = example2\nN = 32\ndt = 0.5\nt_end = 10\n"
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, text), "--output-dir", str(out), "--quiet"]) == 1
    failure = json.loads((out / "failure.json").read_text())
    assert failure["step"] > 0
    assert "FAILED" in capsys.readouterr().err


def test_verify_mms(capsys):
    assert main(["verify-mms", "example3", "--N", "64", "--time", "0.3", "--quiet"]) == 0
    assert "ok" in capsys.readouterr().out


def test_convergence_command(tmp_path, capsys):
    text = "scheme = bdf1\ninitial_condition = example1\nN = 24\nt_end = 0.2\n"
    out = tmp_path / "conv"
    assert main(["convergence", _write(tmp_path, text), "--sweep", "dt=0.02,0.01", "--output-dir", str(out)]) == 0
    table = dg.read_table(out / "convergence.csv")
    assert table.values == [0.02, 0.01]
    rate = table.rates()["u"][0]
    assert 0.8 < rate < 1.2
    data = json.loads((out / "convergence.json").read_text())
    assert data["parameter"] == "dt"
    assert "rate_u=" in capsys.readouterr().out


def test_convergence_rejects_unforced_case(tmp_path):
    text = "initial_condition = example2\nN = 8\n"
    assert main(["convergence", _write(tmp_path, text), "--sweep", "dt=0.1,0.05", "--quiet"]) == 2
    assert main(["convergence", _write(tmp_path, text), "--sweep", "nu=1,2", "--quiet"]) == 2

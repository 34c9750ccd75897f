import numpy as np
import pytest

from conftest import SMALL_INI
from nordvlas import cli
from nordvlas.io import read_diagnostics, read_snapshot
from nordvlas.state import InstabilityError


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text + f"[output]\nout_dir = {tmp_path / 'out'}\n")
    return p


def test_check_identities(capsys):
    assert cli.main(["check-identities", "--trials", "200"]) == 0
    assert "kernel_identity_1" in capsys.readouterr().out


def test_check_bab():
    assert cli.main(["check-bab"]) == 0


def test_simulate_vacuum_zero_diagnostics(tmp_path):
    ini = SMALL_INI.format(t_end=0.2, A_f=0.0, t_hist=0.2).replace("A_phi = 0.1", "A_phi = 0.0").replace(
        "A_pi = 0.1", "A_pi = 0.0")
    cfg = _write(tmp_path, ini)
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    recs = read_diagnostics(tmp_path / "out" / "diagnostics.csv")
    assert len(recs) > 1
    for r in recs:
        assert r.total_energy == 0 and r.P_max == 0 and r.phi_max == 0 and r.energy_drift_rel == 0
    assert (tmp_path / "out" / "config.ini").exists()


def test_simulate_writes_snapshots(tmp_path):
    ini = SMALL_INI.format(t_end=0.1, A_f=4.6405, t_hist=0.1)
    p = tmp_path / "run.ini"
    p.write_text(ini + "[output]\nsnapshot_every = 2\n")
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    snaps = sorted((tmp_path / "o").glob("snapshot_*.bin"))
    assert snaps
    dims, dx, t, (phi, _) = read_snapshot(snaps[-1])
    assert dims == (33, 33, 33) and t == pytest.approx(0.1)
    assert np.all(np.isfinite(phi))


def test_cfl_violation_exit_1(tmp_path, capsys):
    ini = SMALL_INI.format(t_end=1.0, A_f=1.0, t_hist=1.0).replace("[time]\n", "[time]\ndt = 0.5\n")
    assert cli.main(["simulate", "--config", str(_write(tmp_path, ini))]) == 1
    assert "CFL" in capsys.readouterr().err


def test_missing_config_exit_1(tmp_path, capsys):
    assert cli.main(["simulate"]) == 1
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.ini")]) == 1
    assert cli.main(["verify-representation"]) == 1


def test_blowup_exit_2_keeps_rows(tmp_path, monkeypatch, capsys):
    import nordvlas.simulation as simmod

    real = simmod.step_wave
    calls = {"n": 0}

    def failing(field, source, dt):
        calls["n"] += 1
        if calls["n"] > 3:
            raise InstabilityError("field blow-up or instability at t=0.1")
        return real(field, source, dt)

    monkeypatch.setattr(simmod, "step_wave", failing)
    ini = SMALL_INI.format(t_end=0.3, A_f=4.6405, t_hist=0.3)
    assert cli.main(["simulate", "--config", str(_write(tmp_path, ini))]) == 2
    assert "blow-up" in capsys.readouterr().err
    assert len(read_diagnostics(tmp_path / "out" / "diagnostics.csv")) == 3


def test_verify_representation_rejects_late_time(tmp_path):
    ini = SMALL_INI.format(t_end=0.2, A_f=4.6405, t_hist=0.2)
    assert cli.main(["verify-representation", "--config", str(_write(tmp_path, ini)), "--t", "0.5"]) == 1


def test_verify_representation_runs(tmp_path, capsys):
    ini = SMALL_INI.format(t_end=0.6, A_f=4.6405, t_hist=0.6)
    code = cli.main(["verify-representation", "--config", str(_write(tmp_path, ini)), "--t", "0.5",
                     "--x", "0,0,0"])
    out = capsys.readouterr().out
    assert code == 0, out
    assert "rel_err" in out

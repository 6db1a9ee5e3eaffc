import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from classe_wpt import cli, simulator
from classe_wpt.errors import NoConvergence

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CFG = str(CONFIGS / "prototype.cfg")
EXACT_CFG = str(CONFIGS / "exact_design.cfg")


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_design_midpoint(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert run("design", "--fs", "200e3", "--ils-max", 0.8, "--vo-min", 24, "--ripple", 1, "--out", out) == 0
    text = capsys.readouterr().out
    assert "chosen Y  = 0.125 S" in text
    assert "7.711e-08" in text and "4.93504e-06" in text and "5.5622e-05" in text
    assert len(out.read_text().splitlines()) == 12


def test_design_two_points(tmp_path):
    out = tmp_path / "d.csv"
    assert run("design", "--fs", "200e3", "--ils-max", 0.8, "--vo-min", 24, "--ripple", 1,
               "--points", 2, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 3


@pytest.mark.parametrize("flag,value", [("--ripple", "0"), ("--ripple", "150"), ("--fs", "-1")])
def test_design_bad_flags(tmp_path, capsys, flag, value):
    args = {"--fs": "200e3", "--ils-max": "0.8", "--vo-min": "24", "--ripple": "1"}
    args[flag] = value
    argv = ["design", "--out", str(tmp_path / "d.csv")]
    for k, v in args.items():
        argv += [k, v]
    with pytest.raises(SystemExit) as exc:
        code = cli.main(argv)
        raise SystemExit(code)
    assert exc.value.code == 2
    assert flag in capsys.readouterr().err


def test_steady_report(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert run("steady", "--config", CFG, "--out", out) == 0
    text = capsys.readouterr().out
    values = dict(line.split(None, 1) for line in text.splitlines())
    assert float(values["vo_avg"]) == pytest.approx(24.0, abs=1e-3)
    assert float(values["vcf_peak"]) == pytest.approx(78, rel=0.05)
    assert out.read_text().splitlines()[0] == "t,vcf,ilf,vo,ils,gate"


def test_steady_zero_phase(tmp_path, capsys):
    assert run("steady", "--config", CFG, "--D", 0, "--R", 36, "--out", tmp_path / "s.csv") == 0
    values = dict(line.split(None, 1) for line in capsys.readouterr().out.splitlines())
    assert abs(float(values["io_avg"])) < 0.1


def test_steady_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("steady", "--config", CFG, "--D", 0.2, "--out", a)
    run("steady", "--config", CFG, "--D", 0.2, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_missing_config(tmp_path, capsys):
    assert run("steady", "--config", tmp_path / "none.cfg", "--out", tmp_path / "s.csv") == 2
    assert "cannot read" in capsys.readouterr().err


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lf = 0\ncf = 1\nco = 1\nr = 1\nfs = 1\nils_amp = 1\n")
    assert run("steady", "--config", cfg, "--out", tmp_path / "s.csv") == 2
    cfg.write_text(Path(CFG).read_text() + "dt = 1e-6\n".replace("dt", "dt"))
    assert run("steady", "--config", cfg, "--out", tmp_path / "s.csv") == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NoConvergence(7, 1.0)
    monkeypatch.setattr(simulator, "steady_state_at", boom)
    assert run("steady", "--config", CFG, "--D", 0.1, "--out", tmp_path / "s.csv") == 3


def test_bode_files(tmp_path, capsys):
    out = tmp_path / "bode.csv"
    assert run("bode", "--config", CFG, "--out", out) == 0
    for part in ("plant", "loop"):
        lines = (tmp_path / f"bode_{part}.csv").read_text().splitlines()
        assert lines[0] == "f_hz,mag_db,phase_deg" and len(lines) == 51
    loop = np.loadtxt(tmp_path / "bode_loop.csv", delimiter=",", skiprows=1)
    at_fc = np.interp(np.log(100.0), np.log(loop[:, 0]), loop[:, 1])
    assert at_fc == pytest.approx(0.0, abs=1e-6)


def test_bode_numeric_rows(tmp_path, capsys):
    out = tmp_path / "bode.csv"
    assert run("bode", "--config", CFG, "--numeric", "--numeric-freqs", "400,1000", "--out", out) == 0
    num = np.loadtxt(tmp_path / "bode_numeric.csv", delimiter=",", skiprows=1)
    plant = np.loadtxt(tmp_path / "bode_plant.csv", delimiter=",", skiprows=1)
    ref = np.interp(np.log(num[:, 0]), np.log(plant[:, 0]), plant[:, 1])
    assert np.all(np.abs(num[:, 1] - ref) < 2.0)


def test_bode_bad_grid(tmp_path):
    assert run("bode", "--config", CFG, "--fmin", 10, "--fmax", 1, "--out", tmp_path / "b.csv") == 2


def test_sweep_load_independence(tmp_path, capsys):
    out = tmp_path / "sw.csv"
    assert run("sweep", "--config", EXACT_CFG, "--param", "R", "--from", 18, "--to", 144,
               "--steps", 4, "--D", 0.125, "--out", out) == 0
    rows = np.genfromtxt(out, delimiter=",", names=True)
    assert list(rows.dtype.names) == list(cli.SWEEP_FIELDS)
    assert np.ptp(rows["io_avg"]) / np.mean(rows["io_avg"]) < 0.05


def test_sweep_closed_loop_regulates(tmp_path):
    out = tmp_path / "sw.csv"
    assert run("sweep", "--config", CFG, "--param", "ils", "--from", 0.9, "--to", 1.2,
               "--steps", 2, "--closed-loop", "--out", out) == 0
    rows = np.genfromtxt(out, delimiter=",", names=True)
    assert np.all(np.abs(rows["reg_error"]) <= 0.1)


def test_sweep_single_step_and_order(tmp_path):
    out = tmp_path / "sw.csv"
    assert run("sweep", "--config", CFG, "--param", "D", "--from", 0.1, "--to", 0.2,
               "--steps", 1, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 2
    assert run("sweep", "--config", CFG, "--param", "D", "--from", 0.2, "--to", 0.1,
               "--steps", 3, "--jobs", 2, "--out", out) == 0
    rows = np.genfromtxt(out, delimiter=",", names=True)
    np.testing.assert_allclose(rows["value"], [0.2, 0.15, 0.1])


def test_sweep_failure_writes_partial_table(tmp_path, monkeypatch):
    real = simulator.steady_state_at

    def flaky(params, D, *a, **k):
        if params.R > 100:
            raise NoConvergence(3, 1.0)
        return real(params, D, *a, **k)
    monkeypatch.setattr(simulator, "steady_state_at", flaky)
    out = tmp_path / "sw.csv"
    assert run("sweep", "--config", CFG, "--param", "R", "--from", 36, "--to", 144,
               "--steps", 2, "--D", 0.1, "--out", out) == 3
    rows = np.genfromtxt(out, delimiter=",", names=True)
    assert list(rows["converged"]) == [1, 0]


def test_sweep_needs_phase(tmp_path):
    assert run("sweep", "--config", CFG, "--param", "R", "--from", 18, "--to", 36,
               "--steps", 2, "--out", tmp_path / "s.csv") == 2


def test_simulate_open_loop(tmp_path, capsys):
    out = tmp_path / "ol.csv"
    assert run("simulate", "--config", CFG, "--scenario", "open_loop", "--D", 0.2,
               "--t-post", 1e-4, "--stride", 10, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 1 + 20 * 1000 // 10 + 1


def test_simulate_hold(tmp_path, capsys):
    out = tmp_path / "h.csv"
    assert run("simulate", "--config", CFG, "--scenario", "hold", "--t-pre", 1e-4,
               "--t-post", 1e-3, "--out", out) == 0
    assert out.read_text().splitlines()[0].endswith(",D")
    assert "max deviation" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "classe_wpt", "design", "--fs", "200e3",
                          "--ils-max", "0.8", "--vo-min", "24", "--ripple", "0", "--out",
                          str(tmp_path / "d.csv")], capture_output=True, text=True)
    assert res.returncode == 2
    assert "--ripple" in res.stderr


def test_simulate_source_step_needs_reachable_start(tmp_path, capsys):
    assert run("simulate", "--config", CFG, "--scenario", "source_step",
               "--out", tmp_path / "s.csv") == 2
    assert "--R" in capsys.readouterr().err


def test_simulate_source_step(tmp_path, capsys):
    assert run("simulate", "--config", CFG, "--R", 72, "--scenario", "source_step",
               "--t-pre", 1e-3, "--t-post", 20e-3, "--out", tmp_path / "s.csv") == 0
    text = capsys.readouterr().out
    pct = float(text.split("max deviation")[1].split("(")[1].split()[0])
    assert pct <= 2.0

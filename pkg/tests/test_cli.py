"""Exit-code contract and output of the command-line interface.

Commands run in-process through cli.main() so monkeypatching and capsys
work; one smoke test goes through the real interpreter to cover the
module entry point.
"""

import json
import subprocess
import sys

import pytest

from mollowsim import cli
from mollowsim.errors import NumericalInvariantError, PipelineError
from tests.test_scenarios import FAST_DRIVE_SWEEP, FAST_SCENARIO

AMBIGUOUS_SCENARIO = """\
# weak pump at exact resonance: the quadrupole center line cancels and the
# remaining comb matches no multiplet template
kind = scenario
b0_nt = 1250
bm_nt = 500
omega_m_hz = 40
pump_rate = 0.5
gamma1 = 0.05
gamma2 = 0.05
gamma_e1 = 2.4
gamma_e2 = 2.4
meta_gamma1 = 1.0
meta_gamma2 = 1.0
probe_line = C9
polarization = LinearTheta
theta_deg = 45
duration_s = 2.5
dt_s = 0.0005
"""


@pytest.fixture
def fast_cfg(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST_SCENARIO)
    return path


def test_validate_shipped_name(capsys):
    assert cli.main(["validate", "--config", "fig3_b1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("OK fig3_b1")
    assert "larmor 1300" in out


def test_validate_file_path(fast_cfg, capsys):
    assert cli.main(["validate", "--config", str(fast_cfg)]) == 0
    assert "OK fast" in capsys.readouterr().out


def test_validate_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(FAST_SCENARIO + "mystery_knob = 1\n")
    assert cli.main(["validate", "--config", str(bad)]) == 2
    assert "mystery_knob" in capsys.readouterr().err


def test_unknown_config_name_exits_2(capsys):
    assert cli.main(["simulate", "--config", "no_such_thing",
                     "--out", "/tmp/unused"]) == 2
    assert "config not found" in capsys.readouterr().err


def test_simulate_writes_artifacts(fast_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(fast_cfg), "--out", str(out)]) == 0
    assert "fast: Singlet" in capsys.readouterr().out
    for artifact in ("spectrum.csv", "peaks.json", "report.json"):
        assert (out / artifact).exists()
    doc = json.loads((out / "report.json").read_text())
    assert doc["classification"]["structure"] == "Singlet"


def test_simulate_rejects_sweep_config(tmp_path, capsys):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(FAST_DRIVE_SWEEP)
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "sweep command" in capsys.readouterr().err


def test_sweep_rejects_scenario_config(fast_cfg, tmp_path, capsys):
    assert cli.main(["sweep", "--config", str(fast_cfg),
                     "--out", str(tmp_path / "o")]) == 2
    assert "simulate command" in capsys.readouterr().err


def test_sweep_runs_and_reports_aggregate(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MOLLOWSIM_WORKERS", "2")
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(FAST_DRIVE_SWEEP)
    out = tmp_path / "runs"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "5 points, 0 failed" in stdout
    assert "second-sideband table: 5 rows" in stdout
    doc = json.loads((out / "report.json").read_text())
    assert doc["aggregate"]["kind"] == "second_sideband_table"


def test_no_alignment_observable_exits_0(tmp_path, capsys):
    cfg = tmp_path / "c8lin.cfg"
    cfg.write_text(FAST_SCENARIO.replace("probe_line = C9", "probe_line = C8")
                   .replace("polarization = CircularX", "polarization = LinearTheta"))
    assert cli.main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 0
    assert "no alignment observable" in capsys.readouterr().out


def test_ambiguous_classification_exits_4(tmp_path, capsys):
    cfg = tmp_path / "ambig.cfg"
    cfg.write_text(AMBIGUOUS_SCENARIO)
    assert cli.main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 4
    captured = capsys.readouterr()
    assert "ambig: Other" in captured.out
    assert "ambiguous" in captured.err


def test_numerical_invariant_exits_3(fast_cfg, tmp_path, capsys, monkeypatch):
    def exploding(scenario, out_dir=None):
        raise PipelineError("dynamics",
                            NumericalInvariantError("trace defect 1e-3", step=42))

    monkeypatch.setattr(cli, "run_scenario", exploding)
    assert cli.main(["simulate", "--config", str(fast_cfg),
                     "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "numerical invariant" in err
    assert "dynamics" in err


def test_other_pipeline_error_exits_1(fast_cfg, tmp_path, capsys, monkeypatch):
    def exploding(scenario, out_dir=None):
        raise PipelineError("spectral", ValueError("band is empty"))

    monkeypatch.setattr(cli, "run_scenario", exploding)
    assert cli.main(["simulate", "--config", str(fast_cfg),
                     "--out", str(tmp_path / "o")]) == 1
    assert "pipeline error" in capsys.readouterr().err


def test_fit_rabi_from_csv(tmp_path, capsys):
    pts = tmp_path / "points.csv"
    pts.write_text("bm,rabi\n1000,16.0\n2000,32.0\n3000,48.0\n4000,64.1\n")
    assert cli.main(["fit-rabi", "--points", str(pts)]) == 0
    out = capsys.readouterr().out
    assert "slope" in out and "gamma estimate" in out


def test_fit_rabi_rejects_bad_csv(tmp_path, capsys):
    pts = tmp_path / "points.csv"
    pts.write_text("a,b\n1,2\n")
    assert cli.main(["fit-rabi", "--points", str(pts)]) == 2
    assert "bm,rabi" in capsys.readouterr().err
    assert cli.main(["fit-rabi", "--points", str(tmp_path / "missing.csv")]) == 2


def test_fit_rabi_rejects_non_numeric_rows(tmp_path, capsys):
    pts = tmp_path / "points.csv"
    pts.write_text("bm,rabi\n1000,16.0\n2000,not_a_number\n3000,48.0\n")
    assert cli.main(["fit-rabi", "--points", str(pts)]) == 2
    assert "non-numeric" in capsys.readouterr().err


def test_infer_bm(capsys):
    assert cli.main(["infer-bm", "--rabi-hz", "48", "--gamma", "0.032"]) == 0
    assert "3000.0" in capsys.readouterr().out


def test_infer_bm_rejects_nonpositive(capsys):
    assert cli.main(["infer-bm", "--rabi-hz", "-3", "--gamma", "0.032"]) == 2
    assert cli.main(["infer-bm", "--rabi-hz", "48", "--gamma", "0"]) == 2


def test_module_entry_point_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "mollowsim.cli", "validate", "--config", "fig6_d0"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("OK fig6_d0")

import json

import pytest

from layerlab.cli import main
from layerlab.config import ConfigError, parse_config

FAST = ["--set", "grid.Nr=128", "--set", "solver.eps=0.06",
        "--set", "sweep.eps_list=0.06", "--set", "sweep.orders=false"]


def test_defaults_from_empty_file(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    cfg = parse_config(f)
    assert cfg["reaction.a"] == 0.3
    assert cfg["solver.m"] == 2
    assert cfg["grid.N"] == 2
    assert cfg["solver.eps"] == 0.01
    assert cfg["grid.Nr"] == 2048


def test_unknown_key_rejected(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("solver.epsilon = 0.01\n")
    with pytest.raises(ConfigError, match="solver.epsilon"):
        parse_config(f)


def test_type_mismatch_rejected():
    with pytest.raises(ConfigError, match="grid.Nr"):
        parse_config(overrides=["grid.Nr=many"])


def test_m_below_two_rejected():
    with pytest.raises(ConfigError, match="solver.m"):
        parse_config(overrides=["solver.m=1"])


def test_eps_list_parsing():
    cfg = parse_config(overrides=["sweep.eps_list=0.02, 0.01, 0.005"])
    assert cfg["sweep.eps_list"] == (0.02, 0.01, 0.005)


def test_gamma_range_enforced():
    with pytest.raises(ConfigError, match="verify.gamma"):
        parse_config(overrides=["verify.gamma=0.4"])


def test_effective_config_echo_round_trips(tmp_path):
    cfg = parse_config(overrides=["solver.eps=0.025", "grid.Nr=512"])
    echo = tmp_path / "echo.cfg"
    echo.write_text(cfg.to_text())
    again = parse_config(echo)
    assert again.values == cfg.values


def test_cli_ode_runs_and_reports(tmp_path):
    out = tmp_path / "ode"
    rc = main(["ode", "--out", str(out), "--set", "solver.eps=0.05",
               "--tau", "0,1,2", "--xi", "0.1,0.3,0.5"])
    assert rc == 0
    body = (out / "ode.csv").read_text().splitlines()
    assert body[0].startswith("# schema:")
    assert body[1] == "tau,xi,Y,Y_xi,Y_xixi"
    assert len(body) == 2 + 9
    rep = json.loads((out / "ode_report.json").read_text())
    assert rep["all_passed"] is True
    assert rep["linearization"]["C1"] <= 1.0 <= rep["linearization"]["C2"]


def test_cli_simulate_writes_snapshots(tmp_path):
    out = tmp_path / "sim"
    rc = main(["simulate", "--out", str(out), *FAST])
    assert rc == 0
    eps_dir = out / "0.06"
    assert (eps_dir / "snapshots.csv").exists()
    assert (eps_dir / "config.txt").exists()
    run = json.loads((eps_dir / "run.json").read_text())
    assert run["boundary_inactive"] is True
    assert run["solution_min"] >= 0.0


def test_cli_envelope_check(tmp_path):
    out = tmp_path / "env"
    rc = main(["envelope-check", "--out", str(out), *FAST])
    assert rc == 0
    cal = json.loads((out / "calibration.json").read_text())
    assert cal["Cstar"] > 0
    assert cal["margin_minus"] >= 0 and cal["margin_plus"] >= 0
    header = (out / "envelope.csv").read_text().splitlines()[1]
    assert header == "x,t,w_minus,w_plus,L_minus,L_plus"


def test_cli_unknown_key_exit_code_2(tmp_path):
    rc = main(["simulate", "--out", str(tmp_path / "x"), "--set", "nope=1"])
    assert rc == 2


def test_cli_verify_and_report(tmp_path):
    out = tmp_path / "ver"
    rc = main(["verify", "--out", str(out), *FAST])
    assert rc in (0, 1)  # checks may fail at this coarse setting; files must exist
    rep = json.loads((out / "0.06" / "report.json").read_text())
    assert rep["eps"] == 0.06
    assert "checks" in rep and "M0" in rep
    assert (main(["report", "--in", str(out)])) in (0, 1)


def test_cli_sweep_single_entry_skips_fit(tmp_path):
    out = tmp_path / "sweep1"
    rc = main(["sweep", "--out", str(out), *FAST])
    assert rc in (0, 1)
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["width_fit"] is None
    assert "fewer than 2" in doc["width_fit_notice"]
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[1] == "epsilon,t_gen,width,M0,t_min,b_fit"
    assert len(lines) == 3


def test_cli_report_empty_dir_exit_2(tmp_path):
    assert main(["report", "--in", str(tmp_path)]) == 2

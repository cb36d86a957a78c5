import json
from pathlib import Path

import numpy as np
import pytest

from layerplots.cli import main
from layerplots.figures import plot_profiles, plot_width_fit, width_fit_values
from layerplots.io import SchemaError, read_snapshots, read_sweep

FIXTURES = Path(__file__).parent / "fixtures"
SWEEP_3EPS = FIXTURES / "sweep_width3eps.csv"


def _write_snapshots(path: Path, times=(0.0, 1.0)) -> Path:
    rr = np.linspace(0.005, 0.995, 100)
    lines = ["# schema: layerlab.snapshots.v1", "t,r,u"]
    for t in times:
        u0 = 0.8 * np.clip(1 - (rr / 0.5) ** 2, 0, None) ** 3
        u = np.clip(u0 * (1 + t), 0, 1)
        lines += [f"{t},{r},{v}" for r, v in zip(rr, u)]
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_report(path: Path) -> Path:
    path.write_text(json.dumps({
        "eps": 0.02, "t_gen": 1.0, "a": 0.3, "M0": 10.0, "gamma": 0.1,
    }))
    return path


def test_width_fit_exact_fixture(tmp_path):
    out = tmp_path / "fit.png"
    info = plot_width_fit(SWEEP_3EPS, out)
    assert abs(info["slope"] - 1.0) < 1e-9
    assert info["R2"] > 1.0 - 1e-12
    assert abs(info["C"] - 3.0) < 1e-9
    assert out.exists() and out.stat().st_size > 0


def test_width_fit_cli_reports_slope(tmp_path, capsys):
    out = tmp_path / "fit.svg"
    rc = main(["width-fit", "--in", str(SWEEP_3EPS), "--out", str(out)])
    assert rc == 0
    msg = capsys.readouterr().out
    assert "slope=1.000" in msg
    assert "R2=1" in msg
    assert out.exists()


def test_width_fit_two_points(tmp_path):
    csv = tmp_path / "two.csv"
    csv.write_text("epsilon,t_gen,width,M0,t_min,b_fit\n"
                   "0.02,1,0.08,1,1,1\n0.01,1,0.02,1,1,1\n")
    info = width_fit_values(csv)
    # a two-point log-log fit passes through both points: slope = log ratio
    assert info["slope"] == pytest.approx(2.0, rel=1e-12)
    assert info["R2"] == pytest.approx(1.0, abs=1e-12)


def test_schema_violation_missing_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("epsilon,width\n0.02,0.06\n")
    out = tmp_path / "nope.png"
    rc = main(["width-fit", "--in", str(bad), "--out", str(out)])
    assert rc != 0
    assert not out.exists()


def test_schema_violation_non_numeric(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("epsilon,t_gen,width,M0,t_min,b_fit\n"
                   "0.02,1,wide,1,1,1\n")
    out = tmp_path / "nope.png"
    assert main(["width-fit", "--in", str(bad), "--out", str(out)]) != 0
    assert not out.exists()


def test_width_fit_single_point_rejected(tmp_path):
    csv = tmp_path / "one.csv"
    csv.write_text("epsilon,t_gen,width,M0,t_min,b_fit\n0.02,1,0.06,1,1,1\n")
    out = tmp_path / "nope.png"
    assert main(["width-fit", "--in", str(csv), "--out", str(out)]) != 0
    assert not out.exists()


def test_profiles_empty_input_rejected(tmp_path):
    empty = tmp_path / "snapshots.csv"
    empty.write_text("t,r,u\n")
    out = tmp_path / "nope.png"
    assert main(["profiles", "--in", str(empty), "--out", str(out)]) != 0
    assert not out.exists()


def test_profiles_single_snapshot(tmp_path):
    snaps = _write_snapshots(tmp_path / "snapshots.csv", times=(0.0,))
    out = tmp_path / "profiles.png"
    info = plot_profiles(snaps, out)
    assert info["n_curves"] == 1
    assert out.exists()


def test_profiles_with_report_markers(tmp_path):
    snaps = _write_snapshots(tmp_path / "snapshots.csv", times=(0.0, 0.5, 1.0))
    rep = _write_report(tmp_path / "report.json")
    out = tmp_path / "profiles.svg"
    rc = main(["profiles", "--in", str(snaps), "--report", str(rep),
               "--out", str(out)])
    assert rc == 0
    assert b"interface" in out.read_bytes()


def test_bands_figure(tmp_path):
    snaps = _write_snapshots(tmp_path / "snapshots.csv", times=(0.0, 1.0))
    rep = _write_report(tmp_path / "report.json")
    out = tmp_path / "bands.png"
    rc = main(["bands", "--in", str(rep), "--snapshots", str(snaps),
               "--out", str(out)])
    assert rc == 0
    assert out.exists()


def test_optimality_figure(tmp_path):
    out = tmp_path / "opt.png"
    rc = main(["optimality", "--in", str(SWEEP_3EPS), "--out", str(out)])
    assert rc == 0
    assert out.exists()


@pytest.mark.parametrize("ext", ["png", "svg"])
def test_byte_stable_regeneration(tmp_path, ext):
    out1 = tmp_path / f"a.{ext}"
    out2 = tmp_path / f"b.{ext}"
    plot_width_fit(SWEEP_3EPS, out1)
    plot_width_fit(SWEEP_3EPS, out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_readers_reject_missing_files(tmp_path):
    with pytest.raises(SchemaError):
        read_sweep(tmp_path / "nothing.csv")
    with pytest.raises(SchemaError):
        read_snapshots(tmp_path / "nothing.csv")

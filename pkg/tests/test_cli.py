import json
import subprocess
import sys

import numpy as np
import pytest

from iontrap.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from iontrap.config import PRESETS
from iontrap.model import GridSpec, SpinorState
from iontrap.observables import WignerGrid
from iontrap.propagation import write_checkpoint

LIGHT = """
[params]
m = 800
omega = 0.0005
delta = 0
lam = 0
k = 0.2
phi = 0

[grid]
n_points = 256
x_extent = 9

[initial]
x0 = 5
sigma = 0.5
channel = -
"""


def test_presets_list(capsys):
    assert main(["presets-list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == list(PRESETS)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "iontrap", "presets-list"], capture_output=True, text=True)
    assert out.returncode == 0 and "fig5" in out.stdout


def test_curves(tmp_path):
    assert main(["curves", "--preset", "fig2a", "--out", str(tmp_path)]) == EXIT_OK
    for family in ("diabatic", "adiabatic", "bare"):
        data = np.loadtxt(tmp_path / f"curves_{family}.tsv", skiprows=1)
        assert data.shape == (1801, 3)
    assert main(["curves", "--preset", "fig2a", "--family", "bare", "--out", str(tmp_path / "b")]) == EXIT_OK
    assert [p.name for p in (tmp_path / "b").iterdir()] == ["curves_bare.tsv"]


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["run", "--preset", "fig99", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "bad.ini"
    bad.write_text(LIGHT + "[outputs]\nnonsense = 1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "line 19" in capsys.readouterr().err
    assert main(["run", "--preset", "fig3-squeezed", "--override", "params.lam=x", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["scan", "--preset", "fig5", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["scan", "--preset", "fig5", "--vary", "lam", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_numerical_failure_exit_3(tmp_path, capsys):
    # 256 points cannot resolve the packet momentum of the heavy ion
    code = main(["run", "--preset", "fig3-squeezed", "--override", "grid.n_points=256", "--out", str(tmp_path)])
    assert code == EXIT_NUMERICAL
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "failed" and "GridError" in manifest["error"]
    assert main(["scan", "--preset", "fig5", "--vary", "lam=0.06:0.07:3", "--budget", "2",
                 "--out", str(tmp_path)]) == EXIT_NUMERICAL


def test_short_run_writes_artifacts(tmp_path, capsys):
    cfg = tmp_path / "light.ini"
    cfg.write_text(LIGHT + "[propagator]\ndt_report = T0/100\nt_end = T0/10\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == EXIT_OK
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert set(manifest["files"]) >= {"resolved.ini", "series.tsv"}
    assert all(len(f["sha256"]) == 64 for f in manifest["files"].values())
    series = np.loadtxt(tmp_path / "out" / "series.tsv", skiprows=2)
    assert series.shape == (11, 12)
    assert np.allclose(series[:, 11], 1.0, atol=1e-12)
    headline = json.loads(capsys.readouterr().out)
    assert headline["identities"]["max_inversion_gap"] < 1e-10


def test_spectrum(tmp_path, capsys):
    assert main(["spectrum", "--preset", "fig3-coherent", "--curve", "H", "--out", str(tmp_path)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["n0"] == 720
    assert info["T_cl"] == pytest.approx(2 * np.pi / 0.0005, rel=1e-8)
    assert (tmp_path / "spectrum_H.tsv").exists()


def test_wigner_from_checkpoint(tmp_path, fig3):
    g = GridSpec(-4.0, 4.0, 128)
    f = np.exp(-g.x**2 / (4 * 0.3**2)) / (2 * np.pi * 0.3**2) ** 0.25
    write_checkpoint(tmp_path / "s.bin", SpinorState(np.vstack([f, 0 * f]).astype(complex), g), fig3)
    out = tmp_path / "w.tsv"
    assert main(["wigner", "--checkpoint", str(tmp_path / "s.bin"), "--out", str(out),
                 "--p-range", "-12", "12", "97", "--x-stride", "2"]) == EXIT_OK
    wg = WignerGrid.read(out)
    assert wg.values.shape == (64, 97)
    assert wg.total() == pytest.approx(1.0, abs=1e-6)


def test_scan_command(tmp_path):
    cfg = tmp_path / "light.ini"
    cfg.write_text(LIGHT)
    assert main(["scan", "--config", str(cfg), "--vary", "lam=0:0:1", "--vary", "phi=0:1:2",
                 "--budget", "4", "--out", str(tmp_path)]) == EXIT_OK
    data = np.loadtxt(tmp_path / "scan.tsv", skiprows=1)
    assert data.shape == (2, 7)
    assert np.allclose(data[:, 2], 0.0, atol=1e-12)

import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from mixfujita.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_PARTIAL, main, run_config

LINEAR = """\
schema = 1
mode = "linear"

[operator]
a = 1.0
b = 0.0
s = 0.5

[grid]
half_width = 80.0
n = 2048

[problem]
initial = { kind = "gaussian", amplitude = 1.0, width = 1.0 }

[linear]
t_first = 1.0
t_last = 10.0
n_times = 11
"""

EIGEN = """\
schema = 1
mode = "eigen"

[operator]
a = 1.0
b = 0.0
s = 0.5

[domain]
kind = "interval"
radius = 2.0
n = 2048
"""

DIRICHLET = """\
schema = 1
mode = "dirichlet"

[operator]
a = 1.0
b = 1.0
s = 0.5

[domain]
n = 127

[problem]
p = 2.0
initial = { kind = "eigenfunction", scale = 12.0 }

[controls]
t_max = 5.0
"""

SWEEP = """\
schema = 1
mode = "sweep"

[operator]
a = 1.0
b = 1.0
s = 0.5

[grid]
half_width = 256.0
n = 2048

[problem]
initial = { kind = "bump" }

[controls]
t_max = 20.0
{extra}

[sweep]
p_list = [1.5, 3.0]
mass_list = [0.001, 10.0]
"""


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def test_linear_smoke(tmp_path):
    out = tmp_path / "out"
    res = run_config(write(tmp_path, LINEAR), "linear", out)
    assert res.status == EXIT_OK, res.message
    names = sorted(p.name for p in out.iterdir())
    assert names == ["decay.png", "report.json", "series.csv"]
    rep = json.loads((out / "report.json").read_text())
    fit = rep["diagnostics"]["decay_fit"]
    assert fit["expected"] == -1.0
    assert "slope" in fit
    assert (out / "series.csv").read_text().splitlines()[0].startswith("t,sup_norm")
    assert (out / "decay.png").stat().st_size > 0


def test_eigen_closed_form(tmp_path):
    out = tmp_path / "out"
    res = run_config(write(tmp_path, EIGEN), "eigen", out)
    assert res.status == EXIT_OK
    doc = json.loads((out / "eigen.json").read_text())
    assert doc["reference"]["lambda1"] == pytest.approx(np.pi**2 / 16)
    assert doc["eigen"]["lambda1"] == pytest.approx(np.pi**2 / 16, rel=0.005)
    assert (out / "eigenfunction.png").stat().st_size > 0


def test_unknown_key_no_artifacts(tmp_path):
    out = tmp_path / "out"
    res = run_config(write(tmp_path, LINEAR.replace("s = 0.5", "s = 0.5\nfoo = 1")), "linear", out)
    assert res.status == EXIT_CONFIG
    assert ":8:" in res.message and "foo" in res.message
    assert res.artifacts == [] and not out.exists()


def test_mode_mismatch(tmp_path):
    assert run_config(write(tmp_path, LINEAR), "eigen", tmp_path / "o").status == EXIT_CONFIG


def test_formats_respected(tmp_path):
    out = tmp_path / "out"
    text = LINEAR + '\n[output]\nformats = ["csv"]\n'
    res = run_config(write(tmp_path, text), "linear", out)
    assert res.status == EXIT_OK
    assert [p.name for p in out.iterdir()] == ["series.csv"]


def test_dirichlet_blowup_with_rate_plot(tmp_path):
    out = tmp_path / "out"
    res = run_config(write(tmp_path, DIRICHLET), "dirichlet", out)
    assert res.status == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdict"] == "BLEW_UP"
    assert rep["diagnostics"]["kaplan"]["bound_time"] is not None
    assert rep["T_est"] <= 1.1 * rep["diagnostics"]["kaplan"]["bound_time"]
    assert (out / "rate.png").stat().st_size > 0


def test_numeric_failure_exit(tmp_path):
    text = EIGEN + "\n[eigen]\nmax_sweeps = 1\ntol = 1e-300\n"
    res = run_config(write(tmp_path, text), "eigen", tmp_path / "o")
    assert res.status == EXIT_NUMERIC
    assert "ConvergenceError" in res.message


def test_rate_without_blowup_exit(tmp_path):
    text = DIRICHLET.replace('"dirichlet"', '"rate"').replace("scale = 12.0", "scale = 0.1")
    res = run_config(write(tmp_path, text), "rate", tmp_path / "o")
    assert res.status == EXIT_NUMERIC
    assert "did not blow up" in res.message


def test_sweep_outputs(tmp_path):
    out = tmp_path / "out"
    res = run_config(write(tmp_path, SWEEP.replace("{extra}", "")), "sweep", out, workers=2)
    assert res.status == EXIT_OK, res.message
    assert {p.name for p in out.iterdir()} == {"phase.csv", "phase.json", "phase.png"}
    doc = json.loads((out / "phase.json").read_text())
    assert doc["p_fujita"] == 2.0


def test_sweep_partial_exit(tmp_path):
    text = SWEEP.replace("{extra}", "blowup_threshold = 5.0")
    out = tmp_path / "out"
    res = run_config(write(tmp_path, text), "sweep", out)
    assert res.status == EXIT_PARTIAL
    assert (out / "phase.csv").exists()


def test_determinism(tmp_path):
    cfg = write(tmp_path, DIRICHLET)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_config(cfg, "dirichlet", a).status == EXIT_OK
    assert run_config(cfg, "dirichlet", b).status == EXIT_OK
    for name in ("report.json", "series.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_main_entry(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["linear", "--config", str(write(tmp_path, LINEAR)), "--out", str(out)])
    assert code == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert str(out / "report.json") in printed


def test_console_script_bad_config(tmp_path):
    cfg = write(tmp_path, "schema = 1\nmode = [")
    proc = subprocess.run([sys.executable, "-m", "mixfujita.cli", "linear", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "malformed" in proc.stderr


def test_missing_subcommand():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2

import json
import math
import subprocess
import sys

import pytest

from capilab.cli import main


def test_help(capsys):
    assert main(["--help"]) == 0
    assert "sweep-serrin" in capsys.readouterr().out
    assert main(["sweep-hk", "--help"]) == 0
    assert "--amps" in capsys.readouterr().out


def test_usage_errors(tmp_path):
    assert main(["solve", "--theta", "9", "--out", str(tmp_path)]) == 2
    assert main(["solve", "--mesh", "banana", "--out", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"thetta": 1.0}))
    assert main(["check", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["solve", "--perturbation", "12:0.6", "--out", str(tmp_path)]) == 2


def test_check_exact_cap(tmp_path):
    out = tmp_path / "o"
    assert main(["check", "--r", "1", "--theta", "1.0472", "--mode", "planar",
                 "--mesh", "16x32", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["serrin_deficit"] < 1e-3
    assert json.loads((out / "checks.json").read_text())["passed"]
    assert (out / "report.csv").read_text().startswith("mode,r,theta,")


def test_degrees_and_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "solve", "theta": 60, "deg": True, "mesh": [8, 16]}))
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
    saved = json.loads((out / "config.json").read_text())
    assert saved["theta"] == pytest.approx(math.pi / 3)
    assert (out / "field.txt").exists() and (out / "mesh.txt").exists()
    # the config names another subcommand
    assert main(["check", "--config", str(cfg), "--out", str(out)]) == 2


def test_sweep_outputs_byte_identical(tmp_path):
    args = ["sweep-cmc", "--amps", "0.05,0.1", "--mesh", "12x24", "--threads", "1", "--gate", "0.5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("config.json", "sweep_cmc.csv", "sweep_cmc_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "capilab", "solve", "--mesh", "4x16",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "CG iterations" in out.stdout

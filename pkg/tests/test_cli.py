import csv
import hashlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from impulsive_iss.cli import main
from impulsive_iss.config import load_document
from impulsive_iss.expressions import ExpressionError, compile_scalar
from conftest import DEMO_SYSTEMS

EXAMPLE1 = str(DEMO_SYSTEMS / "example1.yaml")
SCALAR = str(DEMO_SYSTEMS / "scalar_desk.yaml")
BILINEAR = str(DEMO_SYSTEMS / "bilinear_desk.yaml")
WORKED = str(DEMO_SYSTEMS / "worked_numbers.yaml")
DWELL = str(DEMO_SYSTEMS / "dwell_weak.yaml")
TWO_MODE = str(DEMO_SYSTEMS / "two_mode.yaml")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSimulate:
    def test_unperturbed_rows(self, tmp_path):
        out = tmp_path / "traj.csv"
        assert main(["simulate", EXAMPLE1, "--out", str(out), "--quiet"]) == 0
        rows = read_csv(out)
        assert rows[0] == ["t", "x_1", "is_jump", "pre_post"]
        t = np.array([float(r[0]) for r in rows[1:]])
        x = np.array([float(r[1]) for r in rows[1:]])
        assert np.max(np.abs(x - np.exp(-(t - 1.0)))) < 1e-7

    def test_perturbed_growth(self, tmp_path):
        out = tmp_path / "traj.csv"
        assert main(["simulate", EXAMPLE1, "--param", "delta=0.1", "--out", str(out), "--quiet"]) == 0
        rows = read_csv(out)
        post = [float(r[1]) for r in rows[1:] if r[3] == "post"]
        assert 70 <= post[-1] <= 85

    def test_window_error(self, capsys):
        assert main(["simulate", EXAMPLE1, "--t0", "5", "--t-end", "2"]) == 2

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", BILINEAR, "--input", '{"kind": "constant", "value": [0.2]}', "--quiet"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_switched_signal(self, tmp_path):
        out = tmp_path / "sw.csv"
        assert main(["simulate", TWO_MODE, "--t-end", "2", "--out", str(out), "--quiet"]) == 0
        assert float(read_csv(out)[-1][1]) == pytest.approx(0.5 * math.exp(-3.0), abs=1e-7)

    def test_escape(self, tmp_path):
        doc = tmp_path / "escape.yaml"
        doc.write_text("n: 1\nm: 1\nsystem: {flow: ['x[0]**2'], jump: ['x[0]']}\n"
                       "impulses: {kind: explicit, times: [], horizon: 5}\n"
                       "simulation: {x0: [1.0], step: 0.001, blowup_cap: 1000000.0}\n")
        assert main(["simulate", str(doc), "--out", str(tmp_path / "o.csv")]) == 1


class TestCertify:
    def test_worked_numbers(self, capsys):
        assert main(["certify", WORKED]) == 0
        out = capsys.readouterr().out
        assert "R_max" in out and "0.267879" in out
        for line in out.splitlines():
            if line.startswith("  ") and "=" in line:
                assert line.count("[") == 1, line

    def test_undeclared_param(self, capsys):
        assert main(["certify", WORKED, "--param", "unused=0"]) == 2
        assert "unused" in capsys.readouterr().err

    def test_threshold_exit(self, tmp_path, capsys):
        doc = tmp_path / "big.yaml"
        doc.write_text(open(WORKED).read().replace("Nbar: 0.1", "Nbar: 0.4"))
        assert main(["certify", str(doc)]) == 3
        err = capsys.readouterr().err
        assert "0.367879" in err and "Nbar" in err

    def test_dwell(self, capsys):
        assert main(["certify", DWELL]) == 0
        out = capsys.readouterr().out
        assert "lambda~" in out and "lambda  " in out
        assert any(line.strip().startswith("lambda") and "= 0.5 " in line for line in out.splitlines())

    def test_fit(self, tmp_path):
        out = tmp_path / "cert.json"
        assert main(["certify", BILINEAR, "--fit", "--out", str(out), "--quiet"]) == 0
        data = json.loads(out.read_text())
        assert data["constants"]["lambda"]["value"] > 0

    def test_missing_certificate(self):
        assert main(["certify", BILINEAR]) == 2

    def test_report_digest(self, tmp_path):
        report = tmp_path / "run.json"
        assert main(["certify", WORKED, "--report", str(report), "--quiet"]) == 0
        data = json.loads(report.read_text())
        assert data["input_digest"] == hashlib.sha256(open(WORKED, encoding="utf-8").read().encode()).hexdigest()
        assert data["command"] == "certify" and data["wall_time_s"] >= 0
        assert load_document(WORKED).digest == data["input_digest"]


class TestVerify:
    def test_bilinear_passes(self, tmp_path):
        out = tmp_path / "v.csv"
        report = tmp_path / "v.json"
        code = main(["verify", BILINEAR, "--fit", "--trials", "5", "--out", str(out), "--report", str(report),
                     "--quiet"])
        assert code == 0
        rows = read_csv(out)
        assert rows[0] == ["trial", "seed", "t", "lhs", "rhs", "margin"]
        assert len(rows) > 1 and all(float(r[5]) >= 0 for r in rows[1:])
        assert json.loads(report.read_text())["passed"]

    def test_zero_gain_fails(self, tmp_path):
        doc = tmp_path / "zero.yaml"
        doc.write_text(open(BILINEAR).read().replace("input_spacing: 0.5", "input_spacing: 0.5\n  gain_scale: 0.0"))
        code = main(["verify", str(doc), "--fit", "--trials", "5", "--state-radius", "0.01",
                     "--report", str(tmp_path / "r.json"), "--quiet"])
        assert code == 1
        assert json.loads((tmp_path / "r.json").read_text())["violations"]

    def test_zero_trials(self, tmp_path):
        out = tmp_path / "v.csv"
        assert main(["verify", BILINEAR, "--fit", "--trials", "0", "--out", str(out), "--quiet",
                     "--report", str(tmp_path / "r.json")]) == 0
        assert read_csv(out) == [["trial", "seed", "t", "lhs", "rhs", "margin"]]

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["verify", BILINEAR, "--fit", "--trials", "2", "--seed", "4", "--quiet",
                "--report", str(tmp_path / "r.json")]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_radius_refused(self, tmp_path, capsys):
        assert main(["verify", WORKED, "--input-radius", "0.5", "--trials", "1"]) == 2
        assert "threshold" in capsys.readouterr().err


class TestPhi:
    def test_closed_form(self, capsys):
        assert main(["phi", SCALAR, "--s", "0", "--t", "2.5"]) == 0
        out = capsys.readouterr().out
        norm = float([ln for ln in out.splitlines() if ln.startswith("||Phi||")][0].split("=")[1])
        assert norm == pytest.approx(0.25 * math.exp(-2.5), abs=1e-7)
        assert norm == pytest.approx(0.0205212, abs=1e-7)
        assert "margin" in out

    def test_identity(self, capsys):
        assert main(["phi", SCALAR, "--s", "1.5", "--t", "1.5"]) == 0
        assert "[[1.]]" in capsys.readouterr().out


class TestDocuments:
    def test_unknown_key(self, tmp_path, capsys):
        doc = tmp_path / "bad.yaml"
        doc.write_text(open(SCALAR).read() + "bogus: 1\n")
        assert main(["phi", str(doc), "--s", "0", "--t", "1"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_config_dir(self, tmp_path, monkeypatch, capsys):
        (tmp_path / "mine.yaml").write_text(open(SCALAR).read())
        monkeypatch.setenv("IMPISS_CONFIG_DIR", str(tmp_path))
        monkeypatch.chdir(DEMO_SYSTEMS.parent)
        assert main(["phi", "mine.yaml", "--s", "0", "--t", "1"]) == 0

    def test_missing_file(self):
        assert main(["phi", "does-not-exist.yaml", "--s", "0", "--t", "1"]) == 2

    def test_bad_param(self):
        assert main(["simulate", EXAMPLE1, "--param", "delta"]) == 2

    @pytest.mark.parametrize("src", ["__import__('os')", "x.__class__", "open('f')", "[1, 2]",
                                     "lambda: 1", "x[0] if 1 else 2", "y", "x[5]", "'a'", "sin(x[0], 1)"])
    def test_expression_whitelist(self, src):
        with pytest.raises(ExpressionError):
            compile_scalar(src, n=1, m=1)

    def test_expression_grammar(self):
        fn = compile_scalar("-2 * x[0] + sin(t) * u[0] ** 2 + k", n=1, m=1, params={"k": 0.5})
        assert fn(0.5, [1.0], [2.0]) == pytest.approx(-2 + 4 * math.sin(0.5) + 0.5)

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "impulsive_iss", "phi", SCALAR, "--s", "0", "--t", "1"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "||Phi||" in proc.stdout

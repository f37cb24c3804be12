import csv
import filecmp
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ctpredict.cli import main


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def tree(d):
    return sorted(os.path.relpath(os.path.join(root, f), d) for root, _, fs in os.walk(d) for f in fs)


class TestCheck:
    def test_ou_regular(self, capsys):
        assert main(["check"]) == 0
        out = capsys.readouterr().out
        assert "classification: Regular" in out and "szego_value:" in out

    def test_band_limited(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "family = band_limited\nparams = width=1\n")
        assert main(["check", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "Deterministic" in capsys.readouterr().out
        rep = json.load(open(tmp_path / "o" / "regularity.json"))
        assert rep["classification"] == "Deterministic"

    def test_missing_density_file(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "density.csv = nowhere.csv\n")
        assert main(["check", "--config", cfg]) == 1
        assert "density.csv" in capsys.readouterr().err

    def test_malformed_names_key(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "time.h = -0.5\n")
        assert main(["check", "--config", cfg]) == 1
        assert "time.h" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "grid.bogus = 1\n")
        assert main(["check", "--config", cfg]) == 1
        assert "grid.bogus" in capsys.readouterr().err

    def test_usage(self, capsys):
        assert main([]) == 1
        assert main(["explode"]) == 1
        assert main(["check", "--seed", "abc"]) == 1

    def test_sampled_density(self, tmp_path, ou_model):
        from ctpredict.io import write_density_csv

        write_density_csv(str(tmp_path / "g.csv"), ou_model, "x")
        cfg = write_cfg(tmp_path, "density.csv = g.csv\n")
        assert main(["check", "--config", cfg]) == 0


class TestFactorize:
    def test_outputs_and_determinism(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["factorize", "--out", str(a)]) == 0
        assert main(["factorize", "--out", str(b)]) == 0
        assert tree(a) == ["factor_diagnostics.json", "factor_freq.csv", "factor_time.csv"]
        for f in tree(a):
            assert filecmp.cmp(a / f, b / f, shallow=False)
        diag = json.load(open(a / "factor_diagnostics.json"))
        assert diag["leak_energy"] < 1e-6 and diag["passed"]
        assert diag["header"].startswith("ctpredict 0.1.0 config_sha256=")
        for f in ("factor_freq.csv", "factor_time.csv"):
            assert open(a / f).readline().startswith("# ctpredict 0.1.0 config_sha256=")

    def test_deterministic_input(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "family = gaussian\n")
        assert main(["factorize", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "Deterministic" in capsys.readouterr().err

    def test_failing_check_exit(self, tmp_path):
        cfg = write_cfg(tmp_path, "tol.plancherel = 1e-30\n")
        assert main(["factorize", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


class TestPredict:
    def test_whole_past_rows(self, tmp_path):
        cfg = write_cfg(tmp_path, "predict.tau = 0.1, 0.5, 1, 2\npredict.psi = false\n")
        assert main(["predict", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        rows = read_rows(tmp_path / "o" / "summary.csv")
        assert len(rows) == 4
        assert all(r["verdict"] == "consistent" and r["T"] == "" for r in rows)
        for r in rows:
            assert float(r["sigma2_formula"]) == pytest.approx(1 - np.exp(-2 * float(r["tau"])), rel=1e-6)

    def test_finite_section_divergent(self, tmp_path):
        cfg = write_cfg(tmp_path, "predict.tau = 1\npredict.T = 1\n")
        assert main(["predict", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        rows = read_rows(tmp_path / "o" / "summary.csv")
        fs = [r for r in rows if r["T"] == "1"]
        assert len(fs) == 1 and fs[0]["verdict"] == "divergent"
        assert float(fs[0]["sigma2_formula"]) == pytest.approx(0.867144, abs=1e-4)
        assert float(fs[0]["sigma2_oracle"]) == pytest.approx(0.864665, rel=1e-2)
        names = tree(tmp_path / "o")
        assert "finite_tau1_T1.json" in names and "whole_past_tau1_psi.csv" in names
        body = json.load(open(tmp_path / "o" / "finite_tau1_T1.json"))
        assert body["oracle"]["verdict"] == "divergent"

    def test_empty_tau(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "predict.tau =\n")
        assert main(["predict", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
        assert "predict.tau" in capsys.readouterr().err


class TestSimulateVerify:
    def test_simulate_needs_seed(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path / "o")]) == 1
        assert "seed" in capsys.readouterr().err

    @pytest.mark.parametrize("method", ["ma", "spectral"])
    def test_simulate(self, tmp_path, method):
        cfg = write_cfg(tmp_path, f"simulate.n = 300\nsimulate.method = {method}\ntime.h = 0.0078125\n")
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["simulate", "--config", cfg, "--seed", "5", "--out", a]) == 0
        assert main(["simulate", "--config", cfg, "--seed", "5", "--out", b]) == 0
        assert filecmp.cmp(os.path.join(a, "path.csv"), os.path.join(b, "path.csv"), shallow=False)
        assert len(read_rows(os.path.join(a, "path.csv"))) == 300

    def test_verify_small(self, tmp_path):
        cfg = write_cfg(tmp_path, "verify.N = 400\npredict.T = 1\n")
        assert main(["verify", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 0
        rows = read_rows(tmp_path / "o" / "mc_report.csv")
        assert [r["T"] for r in rows] == ["", "1"]
        assert main(["verify", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "p")]) == 0
        for f in ("mc_report.csv", "mc_report.json"):
            assert filecmp.cmp(tmp_path / "o" / f, tmp_path / "p" / f, shallow=False)

    def test_verify_underpowered(self, tmp_path):
        cfg = write_cfg(tmp_path, "verify.N = 10\npredict.T = 1\n")
        code = main(["verify", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")])
        assert code in (0, 3)
        assert len(read_rows(tmp_path / "o" / "mc_report.csv")) == 2

    def test_corrupted_theory(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "verify.N = 400\npredict.T = 1\nverify.theory_override = 0.5\n")
        assert main(["verify", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 3
        assert "verification failed" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ctpredict", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "0.1.0" in out.stdout

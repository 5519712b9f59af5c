#!/usr/bin/env python3
"""
Integration Tests for the moserlab command line
"""

import json
import os
import shutil
import subprocess
import sys
import tempfile
import unittest

import pytest

# Add parent directory to path
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

from moserlab.main import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, run


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestParamsCommand:
    """params prints the derived chain"""

    def test_reference_chain(self, workdir, capsys):
        code = run(["params", "--N", "2", "--tbar", "1.6", "--rbar-fraction", "0.5", "--out", "out"])
        assert code == EXIT_OK
        line = capsys.readouterr().out.strip().splitlines()[-1]
        assert line.startswith("r=7 tbar*=8 rbar=4.5 kappa=1.55556")
        report = json.loads((workdir / "out" / "params.json").read_text())
        assert report["passed"] is True
        assert report["command"] == "params"

    def test_out_of_range_tbar(self, workdir, capsys):
        code = run(["params", "--tbar", "1.3", "--out", "out"])
        assert code == EXIT_CONFIG
        assert "error:" in capsys.readouterr().err

    def test_csv_tables(self, workdir):
        assert run(["params", "--format", "csv", "--out", "out"]) == EXIT_OK
        assert (workdir / "out" / "params.json").exists()
        assert (workdir / "out" / "params_params.csv").exists()
        assert (workdir / "out" / "params_sweep.csv").exists()

    def test_deterministic_reruns(self, workdir):
        argv = ["params", "--seed", "17", "--deterministic"]
        assert run(argv + ["--out", "a"]) == EXIT_OK
        assert run(argv + ["--out", "b"]) == EXIT_OK
        assert (workdir / "a" / "params.json").read_bytes() == (workdir / "b" / "params.json").read_bytes()


class TestConfigErrors:
    """Unusable configs exit with code 2"""

    def test_unknown_key(self, workdir, capsys):
        (workdir / "bad.toml").write_text('[grid]\nn = 8\nsmoothing = 3\n')
        assert run(["bound", "--config", "bad.toml", "--out", "out"]) == EXIT_CONFIG
        assert "bad.toml" in capsys.readouterr().err

    def test_missing_file(self, workdir):
        assert run(["weight", "--config", "missing.toml", "--out", "out"]) == EXIT_CONFIG

    def test_unknown_claim(self, workdir):
        assert run(["verify", "--suite", "no-such-claim", "--out", "out"]) == EXIT_CONFIG


class TestVerifyAndReport:
    """verify followed by report"""

    def test_verify_subset_then_report(self, workdir, capsys):
        assert run(["verify", "--suite", "0z,0z-floor", "--out", "out", "--deterministic"]) == EXIT_OK
        assert "claims=2" in capsys.readouterr().out
        assert run(["report", "--out", "out"]) == EXIT_OK
        summary = json.loads((workdir / "out" / "summary.json").read_text())
        assert list(summary["reports"]) == ["verify"]
        assert summary["passed"] is True

    def test_report_without_inputs_fails(self, workdir, capsys):
        assert run(["report", "--out", "empty"]) == EXIT_FAILED
        assert "no-reports" in capsys.readouterr().err

    def test_failing_weight_lists_labels(self, workdir, capsys):
        (workdir / "rough.toml").write_text('[weights]\ngamma = 0.6\n')
        assert run(["weight", "--config", "rough.toml", "--k-max", "5", "--out", "out"]) == EXIT_FAILED
        assert "inverse-integrability" in capsys.readouterr().err
        report = json.loads((workdir / "out" / "weight.json").read_text())
        assert report["failing_labels"] == ["inverse-integrability"]


class TestModuleEntryPoint(unittest.TestCase):
    """python -m moserlab.main in a subprocess"""

    def test_exit_codes(self):
        env = dict(os.environ, PYTHONPATH=ROOT)
        ok = subprocess.run([sys.executable, "-m", "moserlab.main", "params", "--out", "out"],
                            cwd=self._tmp(), env=env, capture_output=True, text=True)
        self.assertEqual(ok.returncode, 0, ok.stderr)
        self.assertIn("tbar*=8", ok.stdout)
        bad = subprocess.run([sys.executable, "-m", "moserlab.main", "params", "--N", "1"],
                             cwd=self._tmp(), env=env, capture_output=True, text=True)
        self.assertEqual(bad.returncode, 2)
        print("✅ Exit codes 0 and 2 observed")

    def _tmp(self):
        path = tempfile.mkdtemp(prefix="moserlab-cli-")
        self.addCleanup(shutil.rmtree, path, True)
        return path


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

#!/usr/bin/env python3
"""
Unit Tests for settings and the problem-config schema
"""

import os
import sys

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from moserlab.config import ProblemConfig, Settings, load_problem_config, settings
from moserlab.exceptions import ConfigError

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data")


class TestSettings:
    """Environment-driven defaults"""

    def test_defaults(self):
        assert settings.K_S_SLACK > 1
        assert settings.CLAIMS_PATH.name == "claims_v1.sexp"
        assert settings.CLAIMS_PATH.exists()
        assert settings.log_path.name == settings.LOG_FILE

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("CG_RTOL", "1e-6")
        monkeypatch.setenv("MOSER_CONSERVATIVE_SUMS", "true")
        fresh = Settings()
        assert fresh.CG_RTOL == 1e-6
        assert fresh.MOSER_CONSERVATIVE_SUMS is True


class TestProblemConfig:
    """TOML problem files"""

    def test_shipped_configs(self):
        heat = load_problem_config(os.path.join(DATA_DIR, "heat.toml"))
        assert heat.domain.T == 0.1
        assert heat.weights.kind == "identity"
        assert heat.source.kind == "sine"
        degenerate = load_problem_config(os.path.join(DATA_DIR, "degenerate.toml"))
        assert degenerate.weights.kind == "distance"
        assert degenerate.weights.gamma == 0.2

    def test_defaults_fill_missing_sections(self, tmp_path):
        path = tmp_path / "small.toml"
        path.write_text('[grid]\nn = 8\nnt = 2\n')
        cfg = load_problem_config(path)
        assert cfg.grid.n == 8
        assert cfg.params == ProblemConfig().params
        assert cfg.structure.a2 is None

    @pytest.mark.parametrize("body", [
        '[grid]\nn = 8\ncolour = "red"\n',
        '[solver]\nkind = "gmres"\n',
        '[domain]\nshape = "triangle"\n',
        '[domain]\ndirichlet_faces = ["up"]\n',
        '[domain]\ndirichlet_faces = []\n',
        '[params]\nrbar_fraction = 1.5\n',
        '[bound]\nalpha = 0.5\n',
    ])
    def test_invalid_files(self, tmp_path, body):
        path = tmp_path / "bad.toml"
        path.write_text(body)
        with pytest.raises(ConfigError):
            load_problem_config(path)

    def test_syntax_error(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[grid\nn = 8\n")
        with pytest.raises(ConfigError):
            load_problem_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_problem_config(tmp_path / "nowhere.toml")


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

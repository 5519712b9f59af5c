#!/usr/bin/env python3
"""
Unit Tests for report writing and aggregation
"""

import json
import math
import os
import sys

import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from moserlab import config
from moserlab.monitoring import reports
from moserlab.monitoring.reports import ReportStore, sanitize, strip_runtimes


class TestHelpers:
    """Payload clean-up"""

    def test_sanitize_non_finite(self):
        out = sanitize({"a": math.inf, "b": [1.0, -math.inf, math.nan], "c": (2, "x")})
        assert out == {"a": "inf", "b": [1.0, "-inf", "nan"], "c": [2, "x"]}

    def test_shares_package_settings(self):
        assert reports.settings is config.settings

    def test_strip_runtimes(self):
        payload = {"runtime_ms": 3.0, "results": [{"label": "0z", "runtime_ms": 1.2}]}
        assert strip_runtimes(payload) == {"results": [{"label": "0z"}]}


class TestReportStore:
    """JSON and CSV files in the output directory"""

    def test_sorted_keys_and_strict_json(self, tmp_path):
        store = ReportStore(tmp_path)
        path = store.write_json("params", {"seed": 1, "command": "params", "bound": math.inf})
        text = path.read_text()
        assert text.index('"bound"') < text.index('"command"') < text.index('"seed"')
        assert json.loads(text)["bound"] == "inf"

    def test_deterministic_drops_runtimes(self, tmp_path):
        store = ReportStore(tmp_path, deterministic=True)
        store.write_json("verify", {"results": [{"label": "a", "runtime_ms": 5.0}]})
        csv_path = store.write_csv("verify_claims", pd.DataFrame({"label": ["a"], "runtime_ms": [5.0]}))
        assert "runtime_ms" not in (tmp_path / "verify.json").read_text()
        assert list(pd.read_csv(csv_path).columns) == ["label"]

    def test_repeat_writes_are_identical(self, tmp_path):
        store = ReportStore(tmp_path, deterministic=True)
        payload = {"command": "weight", "rows": [{"k": 5, "ratio": 7.25, "runtime_ms": 0.3}]}
        first = store.write_json("weight", payload).read_bytes()
        second = store.write_json("weight", dict(reversed(list(payload.items())))).read_bytes()
        assert first == second

    def test_aggregate(self, tmp_path):
        store = ReportStore(tmp_path)
        store.write_json("params", {"command": "params", "seed": 7, "passed": True, "failing_labels": []})
        store.write_json("verify", {"command": "verify", "seed": 7, "passed": False, "failing_labels": ["ss1"]})
        (tmp_path / "junk.json").write_text("{not json")
        summary = store.aggregate()
        assert sorted(summary["reports"]) == ["params", "verify"]
        assert summary["failing_labels"] == ["verify:ss1"]
        assert not summary["passed"]
        table = pd.read_csv(tmp_path / "summary.csv")
        assert list(table["report"]) == ["params", "verify"]
        assert list(table["failing_count"]) == [0, 1]
        # the summary never aggregates itself
        assert "summary" not in store.aggregate()["reports"]

    def test_empty_directory(self, tmp_path):
        summary = ReportStore(tmp_path / "fresh").aggregate()
        assert summary["reports"] == {}
        assert summary["passed"] is False


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

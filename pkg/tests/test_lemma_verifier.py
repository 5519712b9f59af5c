#!/usr/bin/env python3
"""
Unit Tests for the claim registry and verifier
"""

import os
import sys
import unittest

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from moserlab.core import lemma_verifier
from moserlab.core.lemma_verifier import (
    ClaimKind,
    ClaimRegistry,
    ClaimRegistryEntry,
    ClaimStatus,
    SampledPayload,
    SampleSpec,
    check_inequality,
    default_registry,
    run_all,
    verify_identity,
    verify_positivity,
)
from moserlab.exceptions import UnknownLabelError

SMALL_SUITE = """
(define sq (^ (+ t 1) 2))
(identity "good" "t real" sq (+ (^ t 2) (* 2 t) 1))
(identity "bad" "t real" sq (+ (^ t 2) 1))
(identity "broken" "t real" (+ undefined-name 1) 1)
(positivity "neg" "t in [-2, 2]" (+ (^ t 2) -1) -2 2 0)
(positivity "family" "t in [-1, 1]" (+ (^ t 2) s) -1 1 0 (s-samples 1/2 1))
(positivity "edge" "t in [0, 1]" (^ t 2) 0 1 0)
"""


def fake_sampled_entry():
    """|t| <= 0 fails at the first grid node"""
    return ClaimRegistryEntry(
        label="fake", kind=ClaimKind.SAMPLED, domain="t in [-1, 1]",
        payload=SampledPayload(
            family="small",
            check=lambda s, l, t: [(np.abs(t), np.zeros_like(t))],
            default_spec=lambda: SampleSpec(s_grid=(0.8,), t_grid=np.linspace(-1.0, 1.0, 11)),
            t_range=(-1.0, 1.0),
            s_range=(0.7, 1.0),
        ),
    )


class TestRegistry:
    """Default registry contents and lookups"""

    def test_contains_core_labels(self):
        registry = default_registry()
        for label in ("0z", "0zaz", "0zazb", "wwzb", "f8-junction", "f9-junction", "f10-junction",
                      "fs500", "fs50", "fs9z", "fs10z", "fs11z", "fs7zbb", "fs8zb", "fs12zb",
                      "ss1", "ss2", "ss3", "ss4", "sss1", "sss2", "sss3", "sss4", "0z-floor"):
            assert label in registry, label

    def test_kinds(self):
        registry = default_registry()
        assert registry.get("0z").kind == ClaimKind.EXACT
        assert registry.get("wwzb").kind == ClaimKind.POSITIVITY
        assert registry.get("ss1").kind == ClaimKind.SAMPLED

    def test_unknown_label(self):
        with pytest.raises(UnknownLabelError):
            default_registry().get("no-such-claim")
        with pytest.raises(KeyError):
            default_registry().get("no-such-claim")

    def test_duplicate_label(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        with pytest.raises(ValueError):
            registry.register(registry.get("good"))

    def test_labels_sorted(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        assert registry.labels == sorted(registry.labels)
        assert len(registry) == 6


class TestExactIdentities:
    """Canonical-form comparison"""

    def test_zero_identity(self):
        result = verify_identity("0z")
        assert result.status == ClaimStatus.PASS
        assert result.witness is None

    def test_residual_witness(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        assert verify_identity("good", registry).passed
        result = verify_identity("bad", registry)
        assert result.status == ClaimStatus.FAIL
        assert "residual" in result.witness
        assert registry.get("bad").status == ClaimStatus.FAIL

    def test_wrong_kind(self):
        with pytest.raises(ValueError):
            verify_identity("0z-floor")


class TestPositivity:
    """Certified positivity claims"""

    def test_floor_claim(self):
        result = verify_positivity("0z-floor")
        assert result.passed
        assert float(result.margin) > 0

    def test_counterexample_witness(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        result = verify_positivity("neg", registry)
        assert result.status == ClaimStatus.FAIL
        assert result.witness["t"] == "0"
        assert result.witness["value"] == "-1"

    def test_s_samples(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        assert verify_positivity("family", registry).passed

    def test_inconclusive(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        result = verify_positivity("edge", registry, max_depth=5)
        assert result.status == ClaimStatus.INCONCLUSIVE
        assert result.witness["depth"] == 5


class TestSampledInequalities:
    """Grid and seeded random points"""

    def test_small_spec_passes(self):
        spec = SampleSpec(s_grid=(1.5,), l_grid=(3.0,), t_grid=np.linspace(-10, 10, 101),
                          random_points=50, seed=1)
        assert check_inequality("ss1", spec).passed

    def test_first_violation_is_reported(self):
        registry = ClaimRegistry([fake_sampled_entry()])
        result = check_inequality("fake", registry=registry)
        assert result.status == ClaimStatus.FAIL
        assert result.witness["s"] == 0.8
        assert result.witness["t"] == -1.0
        assert "l" not in result.witness

    def test_empty_grid_rejected(self):
        spec = SampleSpec(s_grid=(), t_grid=np.linspace(-1, 1, 5))
        with pytest.raises(ValueError):
            check_inequality("sss1", spec)


class TestRunAll:
    """Failures become report entries"""

    def test_mixed_registry(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        report = run_all(registry, include_timings=False)
        statuses = {r.label: r.status for r in report.results}
        assert statuses["good"] == ClaimStatus.PASS
        assert statuses["bad"] == ClaimStatus.FAIL
        assert statuses["broken"] == ClaimStatus.ERROR
        assert statuses["neg"] == ClaimStatus.FAIL
        assert not report.passed
        assert report.failing_labels == ["bad", "broken", "edge", "neg"]
        assert all(r.runtime_ms is None for r in report.results)
        assert [r.label for r in report.results] == sorted(statuses)

    def test_thread_pool_matches_serial(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        serial = run_all(registry, workers=1, include_timings=False)
        pooled = run_all(registry, workers=3, include_timings=False)
        assert serial.model_dump() == pooled.model_dump()

    def test_statuses_recorded_after_pool(self):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        assert all(registry.get(label).status == ClaimStatus.PENDING for label in registry.labels)
        report = run_all(registry, workers=3, include_timings=False)
        for result in report.results:
            assert registry.get(result.label).status == result.status

    def test_workers_leave_registry_untouched(self, monkeypatch):
        registry = ClaimRegistry.from_suite_text(SMALL_SUITE)
        monkeypatch.setattr(lemma_verifier, "_record", lambda registry, result: result)
        report = run_all(registry, workers=3, include_timings=False)
        assert len(report.results) == 6
        assert all(registry.get(label).status == ClaimStatus.PENDING for label in registry.labels)


class TestFullSuite(unittest.TestCase):
    """The shipped suite passes end to end"""

    def test_every_claim_passes(self):
        print("\nRunning the full claim suite...")
        report = run_all(default_registry(), include_timings=False)
        for result in report.results:
            print(f"  {result.label}: {result.status.value}")
        self.assertEqual(report.failing_labels, [])
        self.assertGreaterEqual(len(report.results), 45)
        print("✅ Full suite passed")


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

#!/usr/bin/env python3
"""
Unit Tests for the explicit Moser bound
"""

import math
import os
import sys
import unittest
from decimal import Decimal, getcontext

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from moserlab.core.moser_bound import (
    ProblemData,
    classify_case,
    compute_bound,
    compute_constants,
    empirical_iteration,
    geometric_tail,
    m_alpha,
    partial_sums,
)
from moserlab.core.spaces_grid import Domain, Grid, GridFunction, ParamChain, derive_params, lp_norm
from moserlab.exceptions import HypothesisGapError, ParameterError


def problem(alpha=9.0, fraction=0.5, u_alpha_norm=2.0, **kwargs):
    values = {"Q_measure": 1.0, "C": 1.0, "a_norm": 1.0}
    values.update(kwargs)
    return ProblemData(chain=derive_params(2, 1.6, fraction), alpha=alpha, u_alpha_norm=u_alpha_norm, **values)


class TestSeries:
    """Closed-form tails of Σκ^{-j} and Σjκ^{-j}"""

    def test_known_values(self):
        sum1, sum2 = geometric_tail(4 / 3, 1)
        assert sum1 == pytest.approx(3.0)
        assert sum2 == pytest.approx(12.0)

    @pytest.mark.parametrize("kappa, j0", [(4 / 3, 1), (14 / 9, 0), (1.08, 6)])
    def test_against_partial_sums(self, kappa, j0):
        closed = geometric_tail(kappa, j0)
        summed = partial_sums(kappa, j0, terms=2000)
        assert closed[0] == pytest.approx(summed[0], rel=1e-12)
        assert closed[1] == pytest.approx(summed[1], rel=1e-10)

    def test_kappa_must_exceed_one(self):
        with pytest.raises(ParameterError):
            geometric_tail(1.0, 1)


class TestCases:
    """Case split on s_0 = α/r̄"""

    def test_case_one(self):
        d = problem(alpha=9.0)
        assert d.s(0) == pytest.approx(2.0)
        assert classify_case(d) == 1
        with pytest.raises(ParameterError):
            m_alpha(d)

    def test_alpha_equal_rbar_is_case_two(self):
        assert classify_case(problem(alpha=4.5)) == 2

    def test_m_alpha_brackets_one(self):
        d = problem(alpha=4.4, fraction=0.9)
        m = m_alpha(d)
        assert m >= 1
        assert d.s(m) <= 1 < d.s(m + 1)

    def test_lower_limit_on_alpha(self):
        with pytest.raises(ParameterError):
            problem(alpha=2.9)
        assert classify_case(problem(alpha=3.0)) == 2

    def test_hypothesis_gap(self):
        chain = ParamChain(N=2, tbar=1.5, r=1.8, tbar_star=6.0, rbar=1.2)
        with pytest.raises(HypothesisGapError):
            ProblemData(chain=chain, Q_measure=1.0, C=1.0, a_norm=1.0, alpha=0.9, u_alpha_norm=1.0)

    @pytest.mark.parametrize("kwargs", [{"a_norm": 0.0}, {"C": -1.0}, {"Q_measure": 0.0}, {"u_alpha_norm": -1.0}])
    def test_invalid_data(self, kwargs):
        with pytest.raises(ParameterError):
            problem(**kwargs)


class TestConstants:
    """C₁, c₁, c₂ and the Case 2 extras"""

    def test_C1_reference_value(self):
        c = compute_constants(problem(), conservative=False)
        assert c["C1"].to_float() == pytest.approx(math.sqrt(18 * 1e16 * 3 + 1), rel=1e-12)
        assert c["C1"].to_float() == pytest.approx(7.348e8, rel=1e-3)
        assert c["j0"] == 1
        assert c["m_alpha"] is None

    def test_conservative_sums_case_one(self):
        d = problem()
        plain = compute_constants(d, conservative=False)
        wide = compute_constants(d, conservative=True)
        assert wide["j0"] == 0
        assert wide["sum1"] == pytest.approx(plain["sum1"] + 1)
        assert wide["sum2"] == pytest.approx(plain["sum2"])

    def test_case_two_extras(self):
        d = problem(alpha=4.4, fraction=0.9)
        c = compute_constants(d, conservative=False)
        assert c["case"] == 2
        assert c["j0"] == c["m_alpha"] + 1
        assert c["inner_steps"] == c["m_alpha"]
        assert c["M"] > 0
        assert c["k1"].log10 > 0
        assert compute_constants(d, conservative=True)["inner_steps"] == c["m_alpha"] + 1


class TestBound(unittest.TestCase):
    """Final bound against a Decimal oracle"""

    def test_case_one_matches_decimal(self):
        report = compute_bound(problem(alpha=9.0, u_alpha_norm=2.0), conservative=False)
        getcontext().prec = 50
        C1 = (Decimal(18) * Decimal(10) ** 16 * 3 + 1).sqrt()
        kappa = Decimal(14) / Decimal(9)
        log10_c1 = (C1 * 2).log10() / 2
        log10_c2 = kappa.log10() / 2
        sum1 = 1 / (kappa - 1)
        sum2 = kappa / (kappa - 1) ** 2
        expected = sum1 * log10_c1 + sum2 * log10_c2 + Decimal(2).log10()
        self.assertEqual(report.case, 1)
        self.assertAlmostEqual(report.log10_final_bound, float(expected), places=9)
        self.assertAlmostEqual(report.sum1, 1.8, places=12)
        self.assertAlmostEqual(report.sum2, 5.04, places=12)
        print(f"✅ log10 bound = {report.log10_final_bound:.6f}")

    def test_overflowing_bound_keeps_log(self):
        report = compute_bound(problem(alpha=4.4, fraction=0.9), conservative=False)
        self.assertEqual(report.case, 2)
        self.assertTrue(math.isfinite(report.log10_final_bound))
        if report.log10_final_bound >= 308:
            self.assertIsNone(report.final_bound)
        self.assertEqual(len(report.s_schedule), report.m_alpha + 2)

    def test_small_norm_does_not_lower_bound(self):
        low = compute_bound(problem(u_alpha_norm=0.01), conservative=False)
        one = compute_bound(problem(u_alpha_norm=1.0), conservative=False)
        self.assertEqual(low.log10_inner, 0.0)
        self.assertAlmostEqual(low.log10_final_bound, one.log10_final_bound, places=12)


class TestBoundMonotonicity:
    """final bound never decreases when |Q|, C, ‖a‖ or ‖u‖_α grows"""

    @pytest.mark.parametrize("alpha, fraction", [(9.0, 0.5), (4.4, 0.9)])
    @pytest.mark.parametrize("name", ["Q_measure", "C", "a_norm", "u_alpha_norm"])
    def test_non_decreasing(self, name, alpha, fraction):
        base = {"Q_measure": 1.0, "C": 1.0, "a_norm": 1.0, "u_alpha_norm": 2.0}
        bounds = []
        for factor in (0.5, 1.0, 2.0, 5.0, 10.0):
            values = dict(base, **{name: base[name] * factor})
            bounds.append(compute_bound(problem(alpha=alpha, fraction=fraction, **values)).log10_final_bound)
        assert all(later >= earlier - 1e-12 for earlier, later in zip(bounds, bounds[1:]))
        assert bounds[-1] > bounds[0] or name == "u_alpha_norm"


class TestEmpiricalLadder:
    """Norm ladder of a computed field"""

    def _field(self):
        grid = Grid(Domain("unit-square", ("all",), 0.5), 8, 4)
        return GridFunction.from_function(grid, lambda X, Y, t: t * np.sin(np.pi * X) * np.sin(np.pi * Y))

    def test_bounded_field_passes(self):
        u = self._field()
        norm = lp_norm(u.positive_part().values, u.grid, 9.0)
        d = problem(alpha=9.0, u_alpha_norm=norm, Q_measure=u.grid.Q_measure)
        table = empirical_iteration(u, d, m_max=4)
        assert len(table) == 10
        assert set(table["part"]) == {"u+", "u-"}
        assert table["below_bound"].all()
        assert table["recursion_holds"].all()
        assert table.loc[table["m"] == 0, "log10_rung_rhs"].isna().all()
        assert table["exponent"].iloc[1] == pytest.approx(9.0 * 14 / 9)

    def test_constant_field_trends_to_constant(self):
        grid = Grid(Domain("unit-square", ("all",), 0.5), 8, 4)
        c = 3.0
        u = GridFunction.from_function(grid, lambda X, Y, t: np.full_like(X, c))
        d = problem(alpha=9.0, u_alpha_norm=lp_norm(u.values, grid, 9.0), Q_measure=grid.Q_measure)
        ladder = empirical_iteration(u, d, m_max=8)
        rungs = ladder[ladder["part"] == "u+"].sort_values("m")
        norms = rungs["norm"].to_numpy()
        expected = c * grid.Q_measure ** (1.0 / rungs["exponent"].to_numpy())
        np.testing.assert_allclose(norms, expected, rtol=1e-10)
        gaps = c - norms
        assert np.all(gaps >= -1e-12)
        assert np.all(np.diff(gaps) < 0)
        assert gaps[-1] < 0.01 * c
        assert rungs["recursion_holds"].all()

    def test_short_ladder_rejected(self):
        u = self._field()
        with pytest.raises(ParameterError):
            empirical_iteration(u, problem(), m_max=2)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

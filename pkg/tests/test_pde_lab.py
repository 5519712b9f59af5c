#!/usr/bin/env python3
"""
Unit Tests for the implicit finite-volume solver and its checks
"""

import math
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from moserlab.core.pde_lab import (
    EnergyCheck,
    ParabolicProblem,
    assemble_and_solve,
    assemble_operator,
    battery_cases,
    bound_consistency,
    consistency_run,
    energy_inequality,
    export_snapshot_csv,
    make_source,
    manufactured_convergence,
    random_test_function,
    run_battery,
    structure_holds,
    time_steps_for,
    weak_residual,
)
from moserlab.core.spaces_grid import Domain, Grid, GridFunction, WeightField, derive_params
from moserlab.core.weight_forge import DistanceWeightSpec, build_distance_weight
from moserlab.exceptions import (
    InadmissibleTestFunctionError,
    ParameterError,
    SandwichViolation,
    SingularSystemError,
)


def heat_problem(n=16, nt=8, T=0.1, source="sine", shape="unit-square"):
    domain = Domain(shape, ("all",), T)
    grid = Grid(domain, n, nt)
    return ParabolicProblem(domain, WeightField.identity(grid), make_source(source), name="heat"), grid


class TestAssembly:
    """Stiffness and mass matrices"""

    def test_symmetric_with_lumped_mass(self):
        problem, grid = heat_problem(n=8)
        op = assemble_operator(problem, grid)
        assert op.size == 64
        assert abs(op.K - op.K.T).max() == 0.0
        np.testing.assert_allclose(op.M.diagonal(), grid.cell_volume)
        # interior rows conserve flux
        row_sums = np.asarray(op.K.sum(axis=1)).ravel()
        interior = op.gather(~grid.dirichlet_adjacent_cells())
        np.testing.assert_allclose(row_sums[interior], 0.0, atol=1e-14)

    def test_l_shape_drops_inactive_cells(self):
        problem, grid = heat_problem(n=8, shape="L-shape")
        assert assemble_operator(problem, grid).size == 48

    def test_non_diagonal_rejected(self):
        _, grid = heat_problem(n=4)
        B = np.zeros((4, 4, 2, 2))
        B[...] = [[1.0, 0.2], [0.2, 1.0]]
        problem = ParabolicProblem(grid.domain, WeightField(grid=grid, b=0.5, bbar=2.0, B=B), make_source("zero"))
        with pytest.raises(ParameterError):
            assemble_operator(problem, grid)

    def test_sandwich_violation(self):
        _, grid = heat_problem(n=4)
        B = np.zeros((4, 4, 2, 2))
        B[..., 0, 0] = B[..., 1, 1] = 1.0
        problem = ParabolicProblem(grid.domain, WeightField(grid=grid, b=2.0, bbar=3.0, B=B), make_source("zero"))
        with pytest.raises(SandwichViolation) as info:
            assemble_operator(problem, grid)
        assert info.value.cell == (0, 0)

    def test_vanishing_weight_is_singular(self):
        _, grid = heat_problem(n=4)
        problem = ParabolicProblem(grid.domain, WeightField.identity(grid, 0.0), make_source("constant"))
        with pytest.raises(SingularSystemError):
            assemble_operator(problem, grid)

    def test_grid_mismatch(self):
        problem, _ = heat_problem(n=8)
        with pytest.raises(ParameterError):
            assemble_operator(problem, Grid(problem.domain, 16, 8))

    def test_unknown_source(self):
        with pytest.raises(ParameterError):
            make_source("sawtooth")


class TestSolve:
    """Backward Euler solutions"""

    def test_sine_is_discrete_eigenvector(self):
        problem, grid = heat_problem(n=16, nt=8)
        u = assemble_and_solve(problem, grid)
        lam = 2.0 * (2.0 - 2.0 * math.cos(math.pi * grid.h)) / grid.h ** 2
        amplitude = 0.0
        for _ in range(grid.nt):
            amplitude = (amplitude / grid.dt + 1.0) / (1.0 / grid.dt + lam)
        expected = amplitude * np.sin(np.pi * grid.X) * np.sin(np.pi * grid.Y)
        np.testing.assert_allclose(u.values[-1], expected, atol=1e-8)
        assert np.all(u.values[0] == 0.0)

    def test_nonnegative_source_keeps_sign(self):
        problem, grid = heat_problem(n=16, nt=4, source="constant", shape="L-shape")
        u = assemble_and_solve(problem, grid)
        assert u.values[:, grid.mask].min() >= -1e-9
        assert u.sup_norm() > 0

    def test_zero_source_gives_zero(self):
        problem, grid = heat_problem(n=8, nt=3, source="zero")
        assert assemble_and_solve(problem, grid).sup_norm() == 0.0


class TestWeakForm:
    """Discrete weak residual"""

    def test_solution_satisfies_weak_form(self):
        problem, grid = heat_problem(n=16, nt=8, source="bump")
        u = assemble_and_solve(problem, grid)
        phi = random_test_function(grid, np.random.default_rng(4))
        exact = weak_residual(u, problem, phi)
        perturbed = weak_residual(GridFunction(grid, u.values + 0.01 * phi.values), problem, phi)
        assert exact < 1e-8
        assert perturbed > 1e3 * max(exact, 1e-15)

    def test_test_function_support(self):
        _, grid = heat_problem(n=16, nt=4)
        phi = random_test_function(grid, np.random.default_rng(1))
        assert np.all(phi.values[0] == 0.0)
        assert np.all(phi.values[:, grid.dirichlet_adjacent_cells()] == 0.0)

    def test_inadmissible_test_function(self):
        problem, grid = heat_problem(n=8, nt=2)
        u = assemble_and_solve(problem, grid)
        with pytest.raises(InadmissibleTestFunctionError):
            weak_residual(u, problem, GridFunction(grid, np.ones((3, 8, 8))))


class TestConvergence:
    """Observed orders on refinement"""

    def test_time_order(self):
        result = manufactured_convergence("heat-time", (8, 16, 32), n_space=8)
        assert 0.8 < result.order < 1.2
        assert result.monotone
        assert list(result.table.columns) == ["step", "error"]

    def test_space_order(self):
        result = manufactured_convergence("heat-space", (16, 32, 64))
        assert 1.8 <= result.order <= 2.2
        assert result.monotone
        assert result.errors[-1] < result.errors[0] / 10

    def test_time_steps_scale_with_h_squared(self):
        assert time_steps_for(16, 0.1) == 26
        assert time_steps_for(2, 0.01) == 1

    def test_invalid_requests(self):
        with pytest.raises(ParameterError):
            manufactured_convergence("heat-space", (8, 16))
        with pytest.raises(ParameterError):
            manufactured_convergence("wave", (8, 16, 32))


class TestBoundConsistency:
    """Computed solutions stay below the explicit bound"""

    def test_single_problem(self):
        chain = derive_params(2, 1.6)
        problem, grid = heat_problem(n=16, nt=8)
        result = bound_consistency(problem, grid, alpha=9.0, chain=chain, C=1.0, m_max=4)
        assert result.case == 1
        assert result.sup_below_bound
        assert result.structure_ok
        assert result.log10_slack > 0
        assert structure_holds(problem)
        assert result.energy_ok
        assert result.ladder_ok
        assert result.passed

    def test_run_carries_report_and_ladder(self):
        chain = derive_params(2, 1.6)
        problem, grid = heat_problem(n=16, nt=8)
        run = consistency_run(problem, grid, alpha=9.0, chain=chain, C=1.0, m_max=4)
        assert run.report.log10_final_bound == run.result.log10_bound
        assert run.report.case == run.result.case
        assert len(run.ladder) == 10
        assert run.result.ladder_ok == bool(run.ladder["recursion_holds"].all() and run.ladder["below_bound"].all())

    def test_battery_case_names(self):
        names = [c.name for c in battery_cases("all")]
        assert len(names) == 12
        assert "elliptic-L-shape-checkerboard" in names
        assert "degenerate-gamma0.2" in names
        with pytest.raises(ParameterError):
            battery_cases("hyperbolic")

    def test_degenerate_battery(self):
        results = run_battery(derive_params(2, 1.6), alpha=9.0, kind="degenerate", n=16, workers=2, m_max=4)
        assert [r.name for r in results] == ["degenerate-gamma0.1", "degenerate-gamma0.2"]
        assert all(r.sup_below_bound for r in results)
        assert all(r.min_value >= -1e-9 for r in results)
        assert all(r.energy_ok for r in results)
        assert all(r.passed for r in results)


class TestEnergyInequality:
    """LHS ≤ RHS on solver outputs with the energy terms ordered in between"""

    @pytest.mark.parametrize("source", ["constant", "sine", "bump", "gaussian", "checkerboard"])
    def test_holds_on_heat_problems(self, source):
        problem, grid = heat_problem(n=16, nt=8, source=source)
        u = assemble_and_solve(problem, grid)
        check = energy_inequality(u, problem, derive_params(2, 1.6), admissibility_constant=1.0)
        assert check.lhs <= check.rhs
        assert check.b_energy <= check.B_energy * (1 + 1e-12)
        assert check.B_energy <= check.rhs
        assert check.holds

    def test_degenerate_weight_orders_energies(self):
        domain = Domain("unit-square", ("all",), 0.1)
        grid = Grid(domain, 16, 8)
        weights = build_distance_weight(DistanceWeightSpec(0.2), grid)
        problem = ParabolicProblem(domain, weights, make_source("constant"), name="degenerate")
        u = assemble_and_solve(problem, grid)
        check = energy_inequality(u, problem, derive_params(2, 1.6), admissibility_constant=1.0)
        assert check.b_energy < check.B_energy
        assert check.holds

    def test_broken_chain_is_rejected(self):
        assert EnergyCheck(lhs=1.0, b_energy=2.0, B_energy=3.0, rhs=4.0).holds
        assert not EnergyCheck(lhs=5.0, b_energy=2.0, B_energy=3.0, rhs=4.0).holds
        assert not EnergyCheck(lhs=1.0, b_energy=3.5, B_energy=3.0, rhs=4.0).holds
        assert not EnergyCheck(lhs=1.0, b_energy=2.0, B_energy=4.5, rhs=4.0).holds
        assert not EnergyCheck(lhs=2.5, b_energy=2.0, B_energy=3.0, rhs=4.0).admissible


class TestSnapshot:
    """CSV export of one time level"""

    def test_export(self, tmp_path):
        problem, grid = heat_problem(n=8, nt=2, shape="L-shape")
        u = assemble_and_solve(problem, grid)
        path = export_snapshot_csv(u, 2, tmp_path / "snap" / "u.csv")
        frame = pd.read_csv(path, index_col=0)
        assert frame.shape == (8, 8)
        assert frame.isna().to_numpy().sum() == 16
        with pytest.raises(ParameterError):
            export_snapshot_csv(u, 5, tmp_path / "bad.csv")


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

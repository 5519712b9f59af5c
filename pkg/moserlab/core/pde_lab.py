"""
Desk-scale solver for ∂u/∂t − div(B∇u) = f with u = 0 on A×(0,T) and at t = 0,
zero conormal flux on the rest of the boundary.

Space: cell-centered two-point-flux finite volumes for diagonal B, arithmetic face
averages, half-cell flux 2b(0 − u)/h on Dirichlet faces. Time: backward Euler.
Each step solves (M/Δt + K)uⁿ = M fⁿ + M uⁿ⁻¹/Δt by Jacobi-preconditioned CG.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from cachetools import LRUCache, cached
from pydantic import BaseModel
from scipy import sparse
from scipy.sparse.linalg import cg

from moserlab.config import settings
from moserlab.core.aux_functions import SLParams, constants, eval_sl
from moserlab.core.moser_bound import BoundReport, ProblemData, compute_bound, empirical_iteration
from moserlab.core.spaces_grid import (
    Domain,
    Grid,
    GridFunction,
    ParamChain,
    WeightField,
    check_sandwich,
    discrete_gradient,
    estimate_admissibility,
    integrate,
    lp_norm,
    weighted_norms,
)
from moserlab.core.weight_forge import DistanceWeightSpec, build_distance_weight
from moserlab.exceptions import (
    InadmissibleTestFunctionError,
    ParameterError,
    SandwichViolation,
    SingularSystemError,
    SolverConvergenceError,
)

logger = logging.getLogger(__name__)

SourceFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


# ==================== SOURCES ====================
def make_source(kind: str, amplitude: float = 1.0) -> SourceFn:
    """Named source terms f(x, y, t)"""
    pi = np.pi

    def zero(X, Y, t):
        return np.zeros_like(X)

    def constant(X, Y, t):
        return np.full_like(X, amplitude)

    def sine(X, Y, t):
        return amplitude * np.sin(pi * X) * np.sin(pi * Y)

    def bump(X, Y, t):
        rho2 = ((X - 0.3) ** 2 + (Y - 0.3) ** 2) / 0.09
        return amplitude * np.maximum(0.0, 1.0 - rho2) ** 2

    def gaussian(X, Y, t):
        return amplitude * np.exp(-((X - 0.25) ** 2 + (Y - 0.35) ** 2) / 0.01)

    def checkerboard(X, Y, t):
        parity = (np.floor(4 * X) + np.floor(4 * Y)) % 2
        return amplitude * np.where(parity == 0, 1.0, -1.0)

    def manufactured(X, Y, t):
        # u* = t sin(πx) sin(πy) with B = I
        return amplitude * (1.0 + 2.0 * pi ** 2 * t) * np.sin(pi * X) * np.sin(pi * Y)

    sources = {
        "zero": zero,
        "constant": constant,
        "sine": sine,
        "bump": bump,
        "gaussian": gaussian,
        "checkerboard": checkerboard,
        "manufactured": manufactured,
    }
    if kind not in sources:
        raise ParameterError(f"Unknown source {kind!r}; choose from {sorted(sources)}")
    return sources[kind]


def manufactured_solution(X: np.ndarray, Y: np.ndarray, t: float) -> np.ndarray:
    return t * np.sin(np.pi * X) * np.sin(np.pi * Y)


# ==================== PROBLEM ====================
@dataclass
class StructureFields:
    """Per-cell a₀, a₁, a₂, a of the growth condition |f| ≤ a₀|∇u| + a₁|u| + a₂"""
    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    a: np.ndarray

    @classmethod
    def default(cls, grid: Grid, f_values: np.ndarray, epsilon: Optional[float] = None) -> "StructureFields":
        """a₀ = a₁ = 0, a₂ = sup|f|, a = a₂ + ε"""
        epsilon = settings.STRUCTURE_EPSILON if epsilon is None else epsilon
        sup_f = float(np.max(np.abs(f_values[:, grid.mask]))) if grid.mask.any() else 0.0
        zeros = np.zeros(grid.shape)
        return cls(a0=zeros, a1=zeros.copy(), a2=np.full(grid.shape, sup_f),
                   a=np.full(grid.shape, sup_f + epsilon))


@dataclass
class ParabolicProblem:
    domain: Domain
    weights: WeightField
    source: SourceFn
    structure: Optional[StructureFields] = None
    name: str = "problem"

    @property
    def grid(self) -> Grid:
        return self.weights.grid

    def source_values(self) -> np.ndarray:
        return GridFunction.from_function(self.grid, self.source).values

    def structure_fields(self) -> StructureFields:
        if self.structure is None:
            self.structure = StructureFields.default(self.grid, self.source_values())
        return self.structure


# ==================== ASSEMBLY ====================
@dataclass
class Operator:
    K: sparse.csr_matrix
    M: sparse.dia_matrix
    index: np.ndarray  # cell → unknown, −1 on inactive cells

    @property
    def size(self) -> int:
        return self.K.shape[0]

    def gather(self, values: np.ndarray) -> np.ndarray:
        return values[..., self.index >= 0]

    def scatter(self, vector: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape)
        out[self.index >= 0] = vector
        return out


def _check_grid(problem: ParabolicProblem, grid: Grid) -> None:
    if grid.n != problem.grid.n or grid.domain != problem.domain:
        raise ParameterError("Grid does not match the grid the weights were built on")


def assemble_operator(problem: ParabolicProblem, grid: Grid) -> Operator:
    """
    Stiffness K (face transmissibilities, integrated units) and lumped mass M = h²I.
    Raises: ParameterError for non-diagonal B, SandwichViolation if λ(B) ∉ [b, b̄]
    """
    _check_grid(problem, grid)
    w = problem.weights
    if not w.is_diagonal():
        raise ParameterError("The two-point-flux scheme needs a diagonal B")
    sandwich = check_sandwich(w)
    if not sandwich.passed:
        raise SandwichViolation(f"Eigenvalues of B leave [b, b̄] in cell {sandwich.cell}", cell=sandwich.cell)

    mask = grid.mask
    index = -np.ones(grid.shape, dtype=int)
    index[mask] = np.arange(int(mask.sum()))
    diag_coef = (w.B[..., 0, 0], w.B[..., 1, 1])

    rows, cols, vals = [], [], []
    for axis, coef in enumerate(diag_coef):
        lo = [slice(None), slice(None)]
        hi = [slice(None), slice(None)]
        lo[axis], hi[axis] = slice(None, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        both = mask[lo] & mask[hi]
        p, q = index[lo][both], index[hi][both]
        t = 0.5 * (coef[lo] + coef[hi])[both]
        rows += [p, q, p, q]
        cols += [p, q, q, p]
        vals += [t, t, -t, -t]

    axes = {"west": 0, "east": 0, "south": 1, "north": 1}
    for direction, faces in grid.dirichlet_faces.items():
        cells = index[faces]
        rows.append(cells)
        cols.append(cells)
        vals.append(2.0 * diag_coef[axes[direction]][faces])

    n_unknowns = int(mask.sum())
    K = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n_unknowns, n_unknowns)).tocsr()
    K.sum_duplicates()
    if K.count_nonzero() == 0:
        raise SingularSystemError("Stiffness vanishes identically: b ≡ 0 and no Dirichlet coupling")
    M = sparse.diags(np.full(n_unknowns, grid.cell_volume))
    return Operator(K=K, M=M, index=index)


def assemble_and_solve(problem: ParabolicProblem, grid: Grid, rtol: Optional[float] = None,
                       maxiter: Optional[int] = None) -> GridFunction:
    """
    Backward Euler from u⁰ = 0; returns all time levels.
    Raises: SolverConvergenceError when CG hits the iteration cap
    """
    rtol = settings.CG_RTOL if rtol is None else rtol
    maxiter = settings.CG_MAXITER if maxiter is None else maxiter
    op = assemble_operator(problem, grid)
    A = (op.M / grid.dt + op.K).tocsr()
    jacobi = sparse.diags(1.0 / A.diagonal())
    f_values = op.gather(problem.source_values())
    mass = grid.cell_volume

    solution = np.zeros((grid.nt + 1,) + grid.shape)
    u_prev = np.zeros(op.size)
    for n in range(1, grid.nt + 1):
        rhs = mass * f_values[n] + mass * u_prev / grid.dt
        if not np.any(rhs):
            u_next = np.zeros(op.size)
        else:
            u_next, info = cg(A, rhs, x0=u_prev, rtol=rtol, atol=0.0, maxiter=maxiter, M=jacobi)
            if info != 0:
                residual = float(np.linalg.norm(rhs - A @ u_next) / np.linalg.norm(rhs))
                raise SolverConvergenceError(
                    f"CG did not converge at step {n}/{grid.nt} (relative residual {residual:.3e})",
                    residual=residual, iterations=info)
        solution[n] = op.scatter(u_next, grid.shape)
        u_prev = u_next
    logger.debug(f"Solved {problem.name}: n={grid.n}, nt={grid.nt}, sup|u|={np.max(np.abs(solution)):.4g}")
    return GridFunction(grid, solution)


# ==================== WEAK FORM ====================
def _check_test_function(phi: GridFunction) -> None:
    grid = phi.grid
    if np.any(phi.values[0][grid.mask] != 0):
        raise InadmissibleTestFunctionError("Test function must vanish at t = 0")
    if np.any(phi.values[:, grid.dirichlet_adjacent_cells()] != 0):
        raise InadmissibleTestFunctionError("Test function must vanish in cells touching A")


def weak_residual(u: GridFunction, problem: ParabolicProblem, phi: GridFunction) -> float:
    """|Σ_n Δt φⁿ·[M(uⁿ − uⁿ⁻¹)/Δt + Kuⁿ − Mfⁿ]|"""
    _check_test_function(phi)
    grid = u.grid
    op = assemble_operator(problem, grid)
    U = op.gather(u.values)
    F = op.gather(problem.source_values())
    P = op.gather(phi.values)
    h2 = grid.cell_volume
    total = []
    for n in range(1, grid.nt + 1):
        r = h2 * (U[n] - U[n - 1]) / grid.dt + op.K @ U[n] - h2 * F[n]
        total.append(grid.dt * float(P[n] @ r))
    return abs(math.fsum(total))


def random_test_function(grid: Grid, rng: np.random.Generator) -> GridFunction:
    """Smooth random φ with φ(·,0) = 0 and φ = 0 in A-adjacent cells"""
    cutoff = np.where(grid.dirichlet_adjacent_cells(), 0.0, grid.distance_to_A())
    X, Y = grid.X, grid.Y
    spatial = np.zeros(grid.shape)
    for _ in range(3):
        kx, ky = rng.integers(0, 4, size=2)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        spatial += rng.normal() * np.cos(kx * np.pi * X + phase[0]) * np.cos(ky * np.pi * Y + phase[1])
    spatial *= cutoff
    ramp = grid.times / grid.domain.T
    values = ramp[:, None, None] * np.where(grid.mask, spatial, 0.0)[None, :, :]
    return GridFunction(grid, values)


def phi_norm(phi: GridFunction, problem: ParabolicProblem) -> float:
    return weighted_norms(phi, problem.weights).V_B_T


# ==================== STRUCTURE CHECKS ====================
def structure_holds(problem: ParabolicProblem) -> bool:
    """b⁻¹a₀² + a₁ + a₂ ≤ a on every active cell"""
    s = problem.structure_fields()
    grid = problem.grid
    b = problem.weights.b
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = np.where(s.a0 == 0, 0.0, s.a0 ** 2 / b)
    lhs = quad + s.a1 + s.a2
    return bool(np.all(lhs[grid.mask] <= s.a[grid.mask] * (1 + 1e-12)))


def growth_condition_holds(u: GridFunction, problem: ParabolicProblem) -> bool:
    """|f| ≤ a₀|∇u| + a₁|u| + a₂ on levels 1..nt"""
    s = problem.structure_fields()
    grid = u.grid
    grad = discrete_gradient(u.values, grid.h)
    grad_abs = np.sqrt(np.einsum("nijk,nijk->nij", grad, grad))
    bound = s.a0 * grad_abs + s.a1 * np.abs(u.values) + s.a2
    f = np.abs(problem.source_values())
    ok = f[1:, grid.mask] <= bound[1:, grid.mask] * (1 + 1e-12) + 1e-15
    return bool(np.all(ok))


# ==================== WEAK-FORM FIDELITY ====================
@dataclass
class EnergyCheck:
    """
    lhs ≤ rhs with b_energy ≤ B_energy ≤ rhs in between. lhs ≤ b_energy depends on the
    sampled admissibility constant and is only reported, as admissible.
    """
    lhs: float
    b_energy: float
    B_energy: float
    rhs: float

    @staticmethod
    def _le(x: float, y: float) -> bool:
        return x <= y * (1 + 1e-12)

    @property
    def admissible(self) -> bool:
        return self._le(self.lhs, self.b_energy)

    @property
    def holds(self) -> bool:
        return (self._le(self.lhs, self.rhs) and self._le(self.b_energy, self.B_energy)
                and self._le(self.B_energy, self.rhs))


def energy_inequality(u: GridFunction, problem: ParabolicProblem, chain: ParamChain,
                      admissibility_constant: float, s: float = 2.0, l: float = 3.0) -> EnergyCheck:
    """
    η ≡ 1 form with v = F_{s,l}(u⁺), φ = G_{s,l}(u⁺):
    ‖v‖²_{L^r(Q)} vs C²c₀∫(a₀|∇u| + a₁|u| + a₂)φ, with C²∫|∇v|²b and C²∫∇v·B∇v reported.
    """
    params = SLParams(s, l)
    grid = u.grid
    w = np.maximum(u.values, 0.0)
    v = eval_sl("F", params, w)
    phi = eval_sl("G", params, w)
    C2 = admissibility_constant ** 2

    grad_v = discrete_gradient(v, grid.h)
    b_energy = C2 * integrate(grid, problem.weights.b[None] * np.einsum("nijk,nijk->nij", grad_v, grad_v))
    B_energy = C2 * integrate(grid, np.einsum("nijk,ijkl,nijl->nij", grad_v, problem.weights.B, grad_v))

    st = problem.structure_fields()
    grad_u = discrete_gradient(u.values, grid.h)
    grad_abs = np.sqrt(np.einsum("nijk,nijk->nij", grad_u, grad_u))
    growth = st.a0 * grad_abs + st.a1 * np.abs(u.values) + st.a2
    rhs = C2 * constants().c0_f * integrate(grid, growth * phi)
    lhs = lp_norm(v, grid, chain.r) ** 2
    return EnergyCheck(lhs=lhs, b_energy=b_energy, B_energy=B_energy, rhs=rhs)


def chain_rule_defect(u: GridFunction, s: float = 2.0, l: float = 3.0) -> Tuple[float, float]:
    """
    max |∇_h F(u⁺) − F′(u⁺)∇_h u⁺| and the allowance h·max|F″(u⁺)|·max|∇_h u⁺|².
    Returns: (defect, allowance)
    """
    params = SLParams(s, l)
    grid = u.grid
    w = np.maximum(u.values, 0.0)
    grad_w = discrete_gradient(w, grid.h)
    grad_v = discrete_gradient(eval_sl("F", params, w), grid.h)
    fprime = eval_sl("F'", params, w)
    diff = grad_v - fprime[..., None] * grad_w
    mask = grid.mask
    defect = float(np.max(np.linalg.norm(diff, axis=-1)[:, mask]))
    grad_sq = np.einsum("nijk,nijk->nij", grad_w, grad_w)
    fsecond = np.abs(eval_sl("F''", params, w))
    allowance = grid.h * float(np.max(fsecond[:, mask])) * float(np.max(grad_sq[:, mask]))
    return defect, allowance


# ==================== CONVERGENCE ====================
@dataclass
class ConvergenceResult:
    case_id: str
    steps: List[float]
    errors: List[float]
    order: float
    monotone: bool
    table: pd.DataFrame = field(repr=False, default=None)


def time_steps_for(n: int, T: float) -> int:
    """nt with Δt ≈ h²"""
    return max(1, math.ceil(T * n * n))


def _discrete_l2(diff: np.ndarray, grid: Grid) -> float:
    return math.sqrt(integrate(grid, np.where(grid.mask, diff, 0.0) ** 2))


def _fit_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)


def _identity_problem(domain: Domain, grid: Grid, source: SourceFn, name: str) -> ParabolicProblem:
    return ParabolicProblem(domain=domain, weights=WeightField.identity(grid), source=source, name=name)


def manufactured_convergence(case_id: str, resolutions: Sequence[int], T: float = 0.1,
                             n_space: int = 16) -> ConvergenceResult:
    """
    Least-squares slope of log(error) against log(step).

    heat-space   B = I, u* = t sin(πx)sin(πy), resolutions are n, Δt ≈ h²
    heat-time    B = I, f = sin(πx)sin(πy) on a fixed n_space grid, resolutions are nt;
                 reference is the exact semi-discrete solution (the sine is a discrete eigenvector)
    degenerate   B = diag(dist^{1/2}, 1), f ≡ 1, reference is the finest run block-averaged
    """
    if len(resolutions) < 3:
        raise ParameterError("manufactured_convergence needs at least 3 resolutions")
    resolutions = sorted(resolutions)
    domain = Domain("unit-square", ("all",), T)
    steps, errors = [], []

    if case_id == "heat-space":
        for n in resolutions:
            grid = Grid(domain, n, time_steps_for(n, T))
            u = assemble_and_solve(_identity_problem(domain, grid, make_source("manufactured"), case_id), grid)
            exact = manufactured_solution(grid.X, grid.Y, grid.times[-1])
            steps.append(grid.h)
            errors.append(_discrete_l2(u.values[-1] - exact, grid))
    elif case_id == "heat-time":
        for nt in resolutions:
            grid = Grid(domain, n_space, nt)
            u = assemble_and_solve(_identity_problem(domain, grid, make_source("sine"), case_id), grid)
            lam = 2.0 * (2.0 - 2.0 * math.cos(math.pi * grid.h)) / grid.h ** 2
            amplitude = (1.0 - math.exp(-lam * T)) / lam
            exact = amplitude * np.sin(np.pi * grid.X) * np.sin(np.pi * grid.Y)
            steps.append(grid.dt)
            errors.append(_discrete_l2(u.values[-1] - exact, grid))
    elif case_id == "degenerate":
        fine_n = resolutions[-1]
        solutions = {}
        for n in resolutions:
            grid = Grid(domain, n, time_steps_for(n, T))
            weights = build_distance_weight(DistanceWeightSpec(gamma=0.5), grid)
            problem = ParabolicProblem(domain, weights, make_source("constant"), name=case_id)
            solutions[n] = (grid, assemble_and_solve(problem, grid).values[-1])
        fine = solutions[fine_n][1]
        for n in resolutions[:-1]:
            grid, coarse = solutions[n]
            r = fine_n // n
            if r * n != fine_n:
                raise ParameterError(f"Resolution {n} does not nest in {fine_n}")
            averaged = fine.reshape(n, r, n, r).mean(axis=(1, 3))
            steps.append(grid.h)
            errors.append(_discrete_l2(coarse - averaged, grid))
    else:
        raise ParameterError(f"Unknown convergence case {case_id!r}")

    order = _fit_order(steps, errors)
    # errors listed from the coarsest step to the finest
    paired = sorted(zip(steps, errors), reverse=True)
    monotone = all(e1 > e2 for (_, e1), (_, e2) in zip(paired, paired[1:]))
    if not monotone:
        logger.warning(f"⚠️ Non-monotone errors in {case_id}: {errors}")
    table = pd.DataFrame({"step": steps, "error": errors})
    logger.info(f"Convergence {case_id}: order {order:.3f} over {len(steps)} runs")
    return ConvergenceResult(case_id, steps, errors, order, monotone, table)


# ==================== BOUND CONSISTENCY ====================
class BoundConsistency(BaseModel):
    name: str
    shape: str
    source: str
    kind: str
    sup_norm: float
    min_value: float
    u_alpha_norm: float
    a_norm: float
    admissibility_constant: float
    case: int
    log10_bound: float
    log10_slack: Optional[float] = None
    sup_below_bound: bool
    ladder_ok: bool
    energy_ok: bool
    structure_ok: bool
    growth_ok: bool
    passed: bool
    runtime_ms: Optional[float] = None


@cached(cache=LRUCache(maxsize=32))
def admissibility_constant(domain: Domain, chain: ParamChain, n_samples: Optional[int] = None,
                           seed: Optional[int] = None) -> float:
    """C_est × ADMISSIBILITY_SAFETY_FACTOR"""
    n_samples = settings.ADMISSIBILITY_SAMPLES if n_samples is None else n_samples
    seed = settings.SEED if seed is None else seed
    return settings.ADMISSIBILITY_SAFETY_FACTOR * estimate_admissibility(domain, chain, n_samples, seed)


@dataclass
class ConsistencyRun:
    """A consistency verdict with the bound report and norm ladder it was built from"""
    result: BoundConsistency
    report: BoundReport
    ladder: pd.DataFrame = field(repr=False)


def bound_consistency(problem: ParabolicProblem, grid: Grid, alpha: float, chain: ParamChain,
                      C: Optional[float] = None, m_max: int = 8, kind: str = "custom",
                      source_name: str = "custom", u: Optional[GridFunction] = None) -> BoundConsistency:
    """Solve (unless u is given), then compare sup|u| with the Moser bound fed by the discrete norms"""
    return consistency_run(problem, grid, alpha, chain, C, m_max, kind, source_name, u).result


def consistency_run(problem: ParabolicProblem, grid: Grid, alpha: float, chain: ParamChain,
                    C: Optional[float] = None, m_max: int = 8, kind: str = "custom",
                    source_name: str = "custom", u: Optional[GridFunction] = None) -> ConsistencyRun:
    started = time.perf_counter()
    u = assemble_and_solve(problem, grid) if u is None else u
    st = problem.structure_fields()
    structure_ok = structure_holds(problem)
    growth_ok = growth_condition_holds(u, problem)
    if not (structure_ok and growth_ok):
        logger.warning(f"⚠️ {problem.name}: structure or growth condition fails; outside the theorem's hypotheses")

    C = admissibility_constant(problem.domain, chain) if C is None else C
    values = u.values
    u_alpha = lp_norm(values, grid, alpha)
    a_field = np.broadcast_to(st.a, values.shape)
    a_norm = lp_norm(a_field, grid, chain.rbar / (chain.rbar - 2))
    data = ProblemData(chain=chain, Q_measure=grid.Q_measure, C=C, a_norm=a_norm,
                       alpha=alpha, u_alpha_norm=u_alpha)
    report = compute_bound(data)
    ladder = empirical_iteration(u, data, m_max=m_max, report=report)
    energy = energy_inequality(u, problem, chain, C)

    sup = u.sup_norm()
    below = sup == 0.0 or math.log10(sup) <= report.log10_final_bound
    ladder_ok = bool(ladder["recursion_holds"].all() and ladder["below_bound"].all())
    result = BoundConsistency(
        name=problem.name,
        shape=problem.domain.shape,
        source=source_name,
        kind=kind,
        sup_norm=sup,
        min_value=float(np.min(values[:, grid.mask])),
        u_alpha_norm=u_alpha,
        a_norm=a_norm,
        admissibility_constant=C,
        case=report.case,
        log10_bound=report.log10_final_bound,
        log10_slack=(report.log10_final_bound - math.log10(sup)) if sup > 0 else None,
        sup_below_bound=below,
        ladder_ok=ladder_ok,
        energy_ok=energy.holds,
        structure_ok=structure_ok,
        growth_ok=growth_ok,
        passed=below and ladder_ok and energy.holds,
        runtime_ms=(time.perf_counter() - started) * 1000.0,
    )
    status = "✅" if result.passed else "❌"
    logger.info(f"{status} {problem.name}: sup={sup:.4g}, log10 bound={report.log10_final_bound:.4g}")
    return ConsistencyRun(result=result, report=report, ladder=ladder)


# ==================== BATTERIES ====================
ELLIPTIC_SOURCES = ("constant", "sine", "bump", "gaussian", "checkerboard")
ELLIPTIC_GEOMETRIES = (("unit-square", ("all",)), ("L-shape", ("all",)))
DEGENERATE_GAMMAS = (0.1, 0.2)


@dataclass
class BatteryCase:
    name: str
    kind: str
    source: str
    domain: Domain
    gamma: Optional[float] = None
    amplitude: float = 1.0


def battery_cases(kind: str = "all", T: float = 0.1) -> List[BatteryCase]:
    cases = []
    if kind in ("elliptic", "all"):
        for shape, faces in ELLIPTIC_GEOMETRIES:
            for source in ELLIPTIC_SOURCES:
                cases.append(BatteryCase(f"elliptic-{shape}-{source}", "elliptic", source,
                                         Domain(shape, faces, T)))
    if kind in ("degenerate", "all"):
        for gamma in DEGENERATE_GAMMAS:
            cases.append(BatteryCase(f"degenerate-gamma{gamma}", "degenerate", "constant",
                                     Domain("unit-square", ("all",), T), gamma=gamma))
    if not cases:
        raise ParameterError(f"Unknown battery kind {kind!r}")
    return cases


def build_case_problem(case: BatteryCase, n: int) -> Tuple[ParabolicProblem, Grid]:
    grid = Grid(case.domain, n, time_steps_for(n, case.domain.T))
    if case.gamma is None:
        weights = WeightField.identity(grid)
    else:
        weights = build_distance_weight(DistanceWeightSpec(gamma=case.gamma), grid)
    problem = ParabolicProblem(case.domain, weights, make_source(case.source, case.amplitude), name=case.name)
    return problem, grid


def run_battery(chain: ParamChain, alpha: float, kind: str = "all", n: int = 32, T: float = 0.1,
                workers: int = 4, m_max: int = 8) -> List[BoundConsistency]:
    """Independent solves in a thread pool; results sorted by case name"""
    cases = battery_cases(kind, T)

    def run_case(case: BatteryCase) -> BoundConsistency:
        problem, grid = build_case_problem(case, n)
        return bound_consistency(problem, grid, alpha, chain, m_max=m_max, kind=case.kind, source_name=case.source)

    # constants are shared per domain; warm the cache before fanning out
    for domain in {case.domain for case in cases}:
        admissibility_constant(domain, chain)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run_case, cases))
    passed = sum(r.passed for r in results)
    logger.info(f"Battery {kind}: {passed}/{len(results)} passed")
    return sorted(results, key=lambda r: r.name)


# ==================== EXPORT ====================
def export_snapshot_csv(u: GridFunction, level: int, path: Union[str, Path]) -> Path:
    """One time slice as a CSV matrix: rows x₁, columns x₂, inactive cells empty"""
    grid = u.grid
    if not 0 <= level <= grid.nt:
        raise ParameterError(f"level must lie in 0..{grid.nt}, got {level}")
    values = np.where(grid.mask, u.values[level], np.nan)
    frame = pd.DataFrame(values, index=np.round(grid.centers, 12), columns=np.round(grid.centers, 12))
    frame.index.name = "x1\\x2"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path)
    return path

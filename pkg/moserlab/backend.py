import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from moserlab.config import ProblemConfig, settings
from moserlab.core import lemma_verifier as lv
from moserlab.core.pde_lab import (
    ParabolicProblem,
    StructureFields,
    assemble_and_solve,
    chain_rule_defect,
    consistency_run,
    export_snapshot_csv,
    make_source,
    manufactured_convergence,
    phi_norm,
    random_test_function,
    run_battery,
    weak_residual,
)
from moserlab.core.spaces_grid import (
    Domain,
    Grid,
    ParamChain,
    WeightField,
    admissible_tbar_interval,
    derive_params,
)
from moserlab.core.weight_forge import (
    AnnularWeightSpec,
    DistanceWeightSpec,
    build_distance_weight,
    check_inverse_integrability,
    doubling_report,
    rasterize_annular_weight,
    weight_table,
)

# Setup logging
logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================
SUITES = {
    "all": (lv.ClaimKind.EXACT, lv.ClaimKind.POSITIVITY, lv.ClaimKind.SAMPLED),
    "exact": (lv.ClaimKind.EXACT,),
    "positivity": (lv.ClaimKind.POSITIVITY,),
    "sampled": (lv.ClaimKind.SAMPLED,),
}
CONVERGENCE_RESOLUTIONS = (16, 32, 64)
CONVERGENCE_ORDER_RANGE = (1.8, 2.2)
WEAK_RESIDUAL_SAMPLES = 10
WEAK_RESIDUAL_TOLERANCE = 1e-8
PARAMS_SWEEP_DIMENSIONS = (2, 3, 4, 5)
PARAMS_SWEEP_SAMPLES = 100


@dataclass
class CommandResult:
    """Payload for the JSON report, optional CSV tables and the failing labels"""
    command: str
    payload: Dict[str, Any]
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    failing_labels: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failing_labels

    def report(self, seed: int) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": seed,
            "passed": self.passed,
            "failing_labels": sorted(self.failing_labels),
            **self.payload,
        }


# ==================== PROBLEM BUILDING ====================
def build_chain(cfg: ProblemConfig) -> ParamChain:
    return derive_params(cfg.params.N, cfg.params.tbar, cfg.params.rbar_fraction)


def build_domain(cfg: ProblemConfig) -> Domain:
    return Domain(cfg.domain.shape, tuple(cfg.domain.dirichlet_faces), cfg.domain.T)


def build_weights(cfg: ProblemConfig, grid: Grid) -> WeightField:
    w = cfg.weights
    if w.kind == "identity":
        return WeightField.identity(grid)
    if w.kind == "constant":
        return WeightField.identity(grid, w.value)
    if w.kind == "distance":
        return build_distance_weight(DistanceWeightSpec(gamma=w.gamma, bbar=w.bbar), grid)
    spec = AnnularWeightSpec(N=2, beta=w.beta, k_max=w.k_max, schedule="toy", seed=settings.SEED)
    return rasterize_annular_weight(spec, grid)


def build_problem(cfg: ProblemConfig) -> ParabolicProblem:
    """Domain, grid, weights, source and structure fields from a problem config"""
    domain = build_domain(cfg)
    grid = Grid(domain, cfg.grid.n, cfg.grid.nt)
    weights = build_weights(cfg, grid)
    problem = ParabolicProblem(domain, weights, make_source(cfg.source.kind, cfg.source.amplitude),
                               name=f"{cfg.domain.shape}-{cfg.weights.kind}-{cfg.source.kind}")
    st = cfg.structure
    f_values = problem.source_values()
    sup_f = float(np.max(np.abs(f_values[:, grid.mask])))
    a2 = sup_f if st.a2 is None else st.a2
    with np.errstate(divide="ignore"):
        quad = np.where(st.a0 == 0, 0.0, st.a0 ** 2 / weights.b)
    a = quad + st.a1 + a2 + st.epsilon
    problem.structure = StructureFields(
        a0=np.full(grid.shape, st.a0), a1=np.full(grid.shape, st.a1),
        a2=np.full(grid.shape, a2), a=np.where(grid.mask, a, st.epsilon),
    )
    return problem


# ==================== verify ====================
def run_verify(suite: str = "all", workers: Optional[int] = None, include_timings: bool = True) -> CommandResult:
    """Claim registry run for a named suite or a comma-separated label list"""
    registry = lv.default_registry()
    if suite in SUITES:
        kinds = SUITES[suite]
        selected = lv.ClaimRegistry([e for e in registry if e.kind in kinds], registry.definitions)
    else:
        labels = [label.strip() for label in suite.split(",") if label.strip()]
        selected = lv.ClaimRegistry([registry.get(label) for label in labels], registry.definitions)

    report = lv.run_all(selected, workers=workers, include_timings=include_timings)
    results = [r.model_dump(mode="json") for r in report.results]
    table = pd.DataFrame([{k: v for k, v in r.items() if k != "witness"} for r in results])
    return CommandResult(
        command="verify",
        payload={"suite": suite, "results": results, "claims": len(results)},
        tables={"claims": table},
        failing_labels=report.failing_labels,
    )


# ==================== params ====================
def params_sweep(seed: int, dimensions: Sequence[int] = PARAMS_SWEEP_DIMENSIONS,
                 samples: int = PARAMS_SWEEP_SAMPLES) -> pd.DataFrame:
    """Chain ordering for random t̄ drawn inside the admissible interval of each N"""
    rng = np.random.default_rng(seed)
    rows = []
    for N in dimensions:
        lo, hi = (float(x) for x in admissible_tbar_interval(N))
        for tbar in rng.uniform(lo, hi, samples):
            if not lo < tbar < hi:
                continue
            chain = derive_params(N, float(tbar), float(rng.uniform(0.05, 0.95)))
            rows.append({**chain.as_dict(), "ordering": chain.ordering_holds()})
    return pd.DataFrame(rows)


def run_params(N: int, tbar: float, rbar_fraction: float = 0.5, seed: Optional[int] = None) -> CommandResult:
    seed = settings.SEED if seed is None else seed
    chain = derive_params(N, tbar, rbar_fraction)
    lo, hi = admissible_tbar_interval(N)
    sweep = params_sweep(seed)
    failing = [] if sweep["ordering"].all() else ["params-sweep-ordering"]
    payload = {
        "chain": chain.as_dict(),
        "tbar_interval": [str(lo), str(hi)],
        "sweep": {"runs": int(len(sweep)), "ordering_holds": bool(sweep["ordering"].all())},
    }
    return CommandResult("params", payload, {"params": pd.DataFrame([chain.as_dict()]), "sweep": sweep}, failing)


# ==================== weight ====================
def run_weight(cfg: ProblemConfig, k_max: Optional[int] = None, beta: Optional[float] = None) -> CommandResult:
    """Annular doubling/L^β table plus inverse integrability of the distance weight"""
    N = cfg.params.N
    spec = AnnularWeightSpec(N=N, beta=beta if beta is not None else cfg.weights.beta,
                             k_max=k_max if k_max is not None else cfg.weights.k_max, seed=settings.SEED)
    table = weight_table(spec)
    failing = [f"doubling-k{k}" for k, ok in zip(table["k"], table["passed"]) if not ok]
    failing += [f"lbeta-k{k}" for k, ok in zip(table["k"], table["lbeta_passed"]) if not ok]
    if not table["increasing"].all():
        failing.append("doubling-increasing")

    lebesgue = doubling_report(AnnularWeightSpec(N=N, beta=spec.beta, k_max=spec.k_max, annuli=False), 5)
    if not math.isclose(lebesgue.ratio.to_float(), 2.0 ** N, rel_tol=1e-12):
        failing.append("doubling-lebesgue")

    chain = build_chain(cfg)
    grid = Grid(build_domain(cfg), cfg.grid.n, 1)
    gamma = cfg.weights.gamma
    inverse = check_inverse_integrability(build_distance_weight(DistanceWeightSpec(gamma=gamma), grid), chain, gamma)
    if not inverse.passed:
        failing.append("inverse-integrability")

    payload = {
        "annular": {"N": N, "beta": str(spec.beta), "k_max": spec.k_max,
                    "rows": json.loads(table.to_json(orient="records"))},
        "lebesgue_ratio": lebesgue.ratio.to_float(),
        "distance": {"gamma": gamma, "integral": inverse.integral, "exponent": inverse.exponent,
                     "analytic_exponent": inverse.analytic_exponent, "analytic_pass": inverse.analytic_pass},
    }
    return CommandResult("weight", payload, {"weight": table}, failing)


# ==================== bound ====================
def run_bound(cfg: ProblemConfig, alpha: Optional[float] = None, m_max: Optional[int] = None) -> CommandResult:
    """Solve the configured problem, feed its norms into the Moser pipeline, check the ladder"""
    chain = build_chain(cfg)
    alpha = cfg.bound.alpha if alpha is None else alpha
    m_max = cfg.bound.m_max if m_max is None else m_max
    problem = build_problem(cfg)
    grid = problem.grid
    run = consistency_run(problem, grid, alpha, chain, C=cfg.bound.admissibility_constant,
                          m_max=m_max, kind="config", source_name=cfg.source.kind)
    consistency, report, ladder = run.result, run.report, run.ladder

    failing = []
    if not consistency.sup_below_bound:
        failing.append("sup-below-bound")
    failing += [f"ladder-{row.part}-m{row.m}" for row in ladder.itertuples()
                if not (row.recursion_holds and row.below_bound)]
    if not consistency.energy_ok:
        failing.append("energy-inequality")

    payload = {
        "chain": chain.as_dict(),
        "bound": report.model_dump(mode="json"),
        "consistency": consistency.model_dump(mode="json"),
    }
    return CommandResult("bound", payload, {"ladder": ladder}, failing)


# ==================== solve ====================
def run_solve(cfg: ProblemConfig, seed: Optional[int] = None, workers: int = 4,
              battery: str = "all", snapshot_path: Optional[Path] = None) -> CommandResult:
    """
    Configured problem (weak residuals, chain rule, max principle), the solver
    battery and the manufactured convergence study
    """
    seed = settings.SEED if seed is None else seed
    chain = build_chain(cfg)
    alpha = cfg.bound.alpha
    failing: List[str] = []

    # Step 1: configured problem
    problem = build_problem(cfg)
    grid = problem.grid
    u = assemble_and_solve(problem, grid)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(WEAK_RESIDUAL_SAMPLES):
        phi = random_test_function(grid, rng)
        scale = phi_norm(phi, problem)
        if scale > 0:
            ratios.append(weak_residual(u, problem, phi) / scale)
    worst_residual = max(ratios) if ratios else 0.0
    if worst_residual > WEAK_RESIDUAL_TOLERANCE:
        failing.append("weak-residual")

    f_values = problem.source_values()
    scale = max(u.sup_norm(), 1.0)
    min_value = float(np.min(u.values[:, grid.mask]))
    if np.all(f_values >= 0) and min_value < -1e-9 * scale:
        failing.append("max-principle")
    defect, allowance = chain_rule_defect(u)
    if defect > allowance:
        failing.append("chain-rule")

    # Step 2: battery
    results = run_battery(chain, alpha, kind=battery, n=cfg.grid.n, T=cfg.domain.T, workers=workers,
                          m_max=cfg.bound.m_max)
    failing += [r.name for r in results if not r.passed]

    # Step 3: convergence
    convergence = manufactured_convergence("heat-space", CONVERGENCE_RESOLUTIONS)
    lo, hi = CONVERGENCE_ORDER_RANGE
    if not (lo <= convergence.order <= hi and convergence.monotone):
        failing.append("convergence-order")

    payload = {
        "problem": {
            "name": problem.name,
            "sup_norm": u.sup_norm(),
            "min_value": min_value,
            "weak_residual_ratio": worst_residual,
            "chain_rule_defect": defect,
            "chain_rule_allowance": allowance,
        },
        "battery": [r.model_dump(mode="json") for r in results],
        "convergence": {"case": convergence.case_id, "order": convergence.order,
                        "monotone": convergence.monotone, "steps": convergence.steps,
                        "errors": convergence.errors},
    }
    tables = {
        "battery": pd.DataFrame([r.model_dump() for r in results]),
        "convergence": convergence.table,
    }
    if snapshot_path is not None:
        payload["snapshot"] = export_snapshot_csv(u, grid.nt, snapshot_path).name
    return CommandResult("solve", payload, tables, failing)

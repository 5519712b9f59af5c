"""
Explicit-constant L∞ bound for weak solutions via Moser iteration.

Ladder exponents κ^m·α with κ = r/r̄ and s_m = κ^m·α/r̄.
  Case 1 (s_0 > 1): bound = c₁^{Σ κ^{-j}} c₂^{Σ jκ^{-j}} max{1, ‖u‖_α}
  Case 2 (s_0 ≤ 1): the first m_α rungs use ‖w‖_{next} ≤ k₁‖w‖ + k₁, then Case 1
                    from j₀ = m_α + 1 applied to k₁^{m_α}‖u‖_α + Σ_{i≤m_α} k₁^i.

Constants reach 10^(10^k) territory quickly, so everything is carried as log10
through LogScalar and math.fsum.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from moserlab.config import settings
from moserlab.core.aux_functions import constants, estimate_k_s
from moserlab.core.log_scalar import LogScalar, log_sum
from moserlab.core.spaces_grid import GridFunction, ParamChain, lp_norm
from moserlab.exceptions import HypothesisGapError, ParameterError

logger = logging.getLogger(__name__)


# ==================== INPUT ====================
@dataclass(frozen=True)
class ProblemData:
    chain: ParamChain
    Q_measure: float
    C: float
    a_norm: float
    alpha: float
    u_alpha_norm: float

    def __post_init__(self):
        lower = 2.0 / 3.0 - constants().delta_f
        if not self.alpha / self.chain.rbar > lower:
            raise ParameterError(
                f"alpha/rbar = {self.alpha / self.chain.rbar:.9g} must exceed 2/3 - delta = {lower:.9g}")
        if self.alpha < 1:
            raise HypothesisGapError(
                f"alpha = {self.alpha} satisfies alpha > rbar(2/3 - delta) but not alpha >= 1")
        if not self.a_norm > 0:
            raise ParameterError(f"a_norm must be positive, got {self.a_norm}")
        if not self.Q_measure > 0 or not self.C > 0:
            raise ParameterError(f"|Q| and C must be positive, got |Q|={self.Q_measure}, C={self.C}")
        if self.u_alpha_norm < 0:
            raise ParameterError(f"u_alpha_norm must be non-negative, got {self.u_alpha_norm}")

    @property
    def kappa(self) -> float:
        return self.chain.kappa

    def s(self, m: int) -> float:
        return self.kappa ** m * self.alpha / self.chain.rbar


# ==================== REPORT ====================
class BoundReport(BaseModel):
    case: int
    kappa: float
    s_schedule: List[float]
    m_alpha: Optional[int] = None
    C1: float
    c1: float
    c2: float
    M: Optional[float] = None
    c_alpha: Optional[float] = None
    k1: Optional[float] = None
    k0: float
    j0: int
    sum1: float
    sum2: float
    log10_C1: float
    log10_c1: float
    log10_c2: float
    log10_inner: float
    log10_final_bound: float
    final_bound: Optional[float] = None
    conservative_sums: bool = False


# ==================== CASES & SERIES ====================
def classify_case(d: ProblemData) -> int:
    """1 iff s_0 = α/r̄ > 1; α = r̄ goes to Case 2"""
    return 1 if d.alpha / d.chain.rbar > 1 else 2


def m_alpha(d: ProblemData) -> int:
    """max{m : s_m ≤ 1} (Case 2 only)"""
    if classify_case(d) == 1:
        raise ParameterError("m_alpha is only defined in Case 2")
    m = 0
    while d.s(m + 1) <= 1:
        m += 1
    return m


def geometric_tail(kappa: float, j0: int) -> Tuple[float, float]:
    """(Σ_{j≥j0} κ^{-j}, Σ_{j≥j0} jκ^{-j}) in closed form"""
    if not kappa > 1:
        raise ParameterError(f"kappa must exceed 1, got {kappa}")
    head = kappa ** (-(j0 - 1))
    sum1 = head / (kappa - 1)
    sum2 = head * ((j0 - 1) / (kappa - 1) + kappa / (kappa - 1) ** 2)
    return sum1, sum2


def partial_sums(kappa: float, j0: int, terms: int = 1000) -> Tuple[float, float]:
    j = np.arange(j0, j0 + terms, dtype=float)
    w = kappa ** -j
    return math.fsum(w), math.fsum(j * w)


# ==================== CONSTANTS ====================
def _log10(x: LogScalar) -> float:
    return x.log10


def compute_constants(d: ProblemData, conservative: Optional[bool] = None) -> Dict[str, object]:
    """
    C₁, c₁, c₂ for both cases; m_α, M, c_α, k₁ in Case 2; tail sums from j₀.
    Values are LogScalars; the report layer turns them into floats.
    """
    conservative = settings.MOSER_CONSERVATIVE_SUMS if conservative is None else conservative
    cst = constants()
    C, c0, Q, a = (LogScalar.from_float(x) for x in (d.C, cst.c0_f, d.Q_measure, d.a_norm))
    rbar, alpha = d.chain.rbar, d.alpha
    case = classify_case(d)

    C1 = (18 * C ** 2 * c0 ** 2 * (Q + 2) * a + 1) ** 0.5
    power = rbar / alpha
    c1 = C1 ** power * LogScalar.from_float(alpha / rbar) ** power
    c2 = LogScalar.from_float(d.kappa) ** power

    out: Dict[str, object] = {"case": case, "C1": C1, "c1": c1, "c2": c2, "k0": cst.k0_f}
    if case == 1:
        j0 = 1
        out["m_alpha"] = None
    else:
        ma = m_alpha(d)
        indices = [m for m in range(ma + 2) if d.s(m) <= 1]
        if len(indices) < ma + 2:
            logger.info(f"s_{ma + 1} = {d.s(ma + 1):.6g} > 1: dropped from M (k_s needs s <= 1)")
        M = max(estimate_k_s(d.s(m)) for m in indices)
        c_alpha = (2 * C ** 2 * c0 * ((c0 + 10) + M * (1 + Q) * a)) ** 0.5
        k1 = (c_alpha + (cst.k0_f + 1) * (1 + Q) + 2) ** (2.0 / alpha)
        out.update({"m_alpha": ma, "M": M, "c_alpha": c_alpha, "k1": k1})
        j0 = ma + 1
    if conservative and case == 1:
        j0 -= 1
    out["j0"] = j0
    out["inner_steps"] = (out["m_alpha"] + (1 if conservative else 0)) if case == 2 else 0
    out["sum1"], out["sum2"] = geometric_tail(d.kappa, j0)
    out["conservative_sums"] = conservative
    return out


def inner_value(u_alpha_norm: float, k1: LogScalar, steps: int) -> LogScalar:
    """k₁^{steps}·‖u‖_α + Σ_{i=1}^{steps} k₁^i"""
    u = LogScalar.from_float(u_alpha_norm)
    return log_sum([k1 ** steps * u] + [k1 ** i for i in range(1, steps + 1)])


def compute_bound(d: ProblemData, conservative: Optional[bool] = None) -> BoundReport:
    """Final L∞ bound, log10 first; the natural value is None when it overflows a double"""
    c = compute_constants(d, conservative)
    case = c["case"]
    if case == 1:
        inner = LogScalar.from_float(d.u_alpha_norm)
    else:
        inner = inner_value(d.u_alpha_norm, c["k1"], c["inner_steps"])
    log10_inner = max(0.0, _log10(inner)) if not inner.is_zero() else 0.0
    log10_c1, log10_c2 = _log10(c["c1"]), _log10(c["c2"])
    log10_bound = math.fsum([c["sum1"] * log10_c1, c["sum2"] * log10_c2, log10_inner])

    natural = 10.0 ** log10_bound if log10_bound < 308 else None
    schedule_len = (c["m_alpha"] or 0) + 2
    report = BoundReport(
        case=case,
        kappa=d.kappa,
        s_schedule=[d.s(m) for m in range(schedule_len)],
        m_alpha=c["m_alpha"],
        C1=c["C1"].to_float(),
        c1=c["c1"].to_float(),
        c2=c["c2"].to_float(),
        M=c.get("M"),
        c_alpha=c["c_alpha"].to_float() if "c_alpha" in c else None,
        k1=c["k1"].to_float() if "k1" in c else None,
        k0=c["k0"],
        j0=c["j0"],
        sum1=c["sum1"],
        sum2=c["sum2"],
        log10_C1=_log10(c["C1"]),
        log10_c1=log10_c1,
        log10_c2=log10_c2,
        log10_inner=log10_inner,
        log10_final_bound=log10_bound,
        final_bound=natural,
        conservative_sums=c["conservative_sums"],
    )
    logger.info(f"Moser bound case {case}: log10(bound) = {log10_bound:.6g} (κ={d.kappa:.6g}, α={d.alpha})")
    return report


# ==================== EMPIRICAL LADDER ====================
def _ladder(values: np.ndarray, u: GridFunction, d: ProblemData, m_max: int) -> List[float]:
    return [lp_norm(values, u.grid, d.kappa ** m * d.alpha) for m in range(m_max + 1)]


def _rung_bound(m: int, prev: float, d: ProblemData, c: Dict[str, object]) -> float:
    """log10 of the right-hand side for rung m → m+1"""
    if c["case"] == 2 and m <= c["m_alpha"]:
        k1 = c["k1"]
        return (k1 * LogScalar.from_float(prev) + k1).log10
    km = d.kappa ** -m
    return math.fsum([km * c["c1"].log10, m * km * c["c2"].log10, max(0.0, math.log10(prev)) if prev > 0 else 0.0])


def empirical_iteration(u: GridFunction, d: ProblemData, m_max: int = 8,
                        report: Optional[BoundReport] = None) -> pd.DataFrame:
    """
    ‖u^±‖_{L^{κ^m α}(Q)} for m = 0..m_max with per-rung recursion checks and the
    comparison of every rung against the final bound.
    Raises: ParameterError if m_max < 3
    """
    if m_max < 3:
        raise ParameterError(f"m_max must be >= 3, got {m_max}")
    c = compute_constants(d, report.conservative_sums if report is not None else None)
    report = report or compute_bound(d)
    log10_bound = report.log10_final_bound

    rows = []
    for part, field_values in (("u+", u.positive_part().values), ("u-", u.negative_part().values)):
        ladder = _ladder(field_values, u, d, m_max)
        for m, norm in enumerate(ladder):
            log10_norm = math.log10(norm) if norm > 0 else -math.inf
            row = {
                "part": part,
                "m": m,
                "exponent": d.kappa ** m * d.alpha,
                "norm": norm,
                "log10_norm": log10_norm,
                "below_bound": log10_norm <= log10_bound,
                "recursion_holds": True,
                "log10_rung_rhs": None,
            }
            if m > 0:
                rhs = _rung_bound(m - 1, ladder[m - 1], d, c)
                row["log10_rung_rhs"] = rhs
                row["recursion_holds"] = log10_norm <= rhs + 1e-12
            rows.append(row)

    table = pd.DataFrame(rows)
    if not (table["below_bound"].all() and table["recursion_holds"].all()):
        failing = table[~(table["below_bound"] & table["recursion_holds"])]
        logger.error(f"❌ Ladder check failed on {len(failing)} rungs")
    else:
        logger.info(f"✅ Ladder of {m_max + 1} rungs below 10^{log10_bound:.4g}")
    return table

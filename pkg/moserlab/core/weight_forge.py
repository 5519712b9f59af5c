"""
Degenerate and non-uniform weights.

Annular weight: b ≡ 1 and b̄ = 1 off the annuli, k^{4k} on
B(x_k, 2r_k) \\ B(x_k, r_k) with r_k = 2^{-e(k)}, e(k) = k^{4kβ}. Radii this small
only exist in closed form, so every mass is a LogScalar built from the
ball-volume formula. The toy schedule e(k) = k can be rasterized onto a grid.

Distance weight: b = dist(x, ∂Ω)^γ paired with b̄ in B = diag(b, b̄).
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import gammaln
from scipy.stats import qmc

from moserlab.core.log_scalar import LogScalar, log_sum
from moserlab.core.spaces_grid import Grid, ParamChain, WeightField
from moserlab.exceptions import ParameterError

logger = logging.getLogger(__name__)

SCHEDULES = ("full", "toy")


# ==================== SPECS ====================
@dataclass(frozen=True)
class AnnularWeightSpec:
    N: int = 2
    beta: Fraction = Fraction(2)
    k_max: int = 10
    schedule: str = "full"
    seed: int = 0
    annuli: bool = True

    def __post_init__(self):
        beta = Fraction(str(self.beta)) if isinstance(self.beta, float) else Fraction(self.beta)
        object.__setattr__(self, "beta", beta)
        if self.N < 2:
            raise ParameterError(f"N must be >= 2, got {self.N}")
        if beta < 2:
            raise ParameterError(f"beta must be >= 2, got {beta}")
        if (4 * beta).denominator != 1:
            raise ParameterError(f"4·beta must be an integer so k^(4kβ) is exact, got beta={beta}")
        if self.k_max < 5:
            raise ParameterError(f"k_max must be >= 5, got {self.k_max}")
        if self.schedule not in SCHEDULES:
            raise ParameterError(f"Unknown schedule {self.schedule!r}; choose from {SCHEDULES}")

    @property
    def k_range(self) -> range:
        return range(5, self.k_max + 1)

    def exponent(self, k: int) -> int:
        """e(k): k^{4kβ} (full) or k (toy)"""
        if self.schedule == "toy":
            return k
        return k ** int(4 * k * self.beta)

    def centers(self) -> Dict[int, np.ndarray]:
        """Seeded scrambled Halton points in the unit cube, one per k"""
        sampler = qmc.Halton(d=self.N, scramble=True, seed=self.seed)
        points = sampler.random(len(self.k_range))
        return {k: points[i] for i, k in enumerate(self.k_range)}

    def _require_k(self, k: int) -> None:
        if k not in self.k_range:
            raise ParameterError(f"k={k} outside k_range 5..{self.k_max}")


@dataclass(frozen=True)
class DistanceWeightSpec:
    gamma: float
    bbar: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ParameterError(f"gamma must lie in (0,1), got {self.gamma}")
        if self.bbar <= 0:
            raise ParameterError(f"bbar must be positive, got {self.bbar}")


# ==================== LOG-SPACE MEASURES ====================
def log2_unit_ball_volume(N: int) -> float:
    """log₂ σ_N with σ_N = π^{N/2}/Γ(N/2+1)"""
    return float((0.5 * N * math.log(math.pi) - gammaln(0.5 * N + 1)) / math.log(2.0))


def unit_ball_volume(N: int) -> LogScalar:
    return LogScalar.pow2(log2_unit_ball_volume(N))


def ball_volume(N: int, log2_radius: int) -> LogScalar:
    """|B(x, 2^{log2_radius})| = σ_N·2^{N·log2_radius}"""
    return unit_ball_volume(N) * LogScalar.pow2(N * log2_radius)


def doubling_lower_bound(N: int, k: int) -> float:
    """3/(2^N(k^{-2} + 8k^{-3} + 2k^{-4k}))"""
    return 3.0 / (2 ** N * (k ** -2.0 + 8.0 * k ** -3.0 + 2.0 * float(k) ** (-4.0 * k)))


@dataclass
class DoublingResult:
    k: int
    ratio: LogScalar
    doubling_lower_bound: float
    outer_mass: LogScalar
    inner_mass: LogScalar
    inner_terms: Dict[str, LogScalar] = field(default_factory=dict)
    log2_r_k: int = 0

    @property
    def passed(self) -> bool:
        # the two sides agree to ~k^{-4k} relative when 2^N − 1 = 3
        return self.ratio.to_float() >= self.doubling_lower_bound * (1 - 1e-12)

    def as_dict(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "log2_r_k": str(self.log2_r_k),
            "log2_ratio": self.ratio.log2,
            "ratio": self.ratio.to_float(),
            "lower_bound": self.doubling_lower_bound,
            "ratio_margin": self.ratio.to_float() - self.doubling_lower_bound,
            "log2_outer_mass": self.outer_mass.log2,
            "log2_inner_mass": self.inner_mass.log2,
            "passed": self.passed,
        }


def doubling_report(spec: AnnularWeightSpec, k: int) -> DoublingResult:
    """
    b̄(B(x_k,2r_k)) / b̄(B(x_k,r_k)) from closed-form masses.

    Outer ball, lower bound: the k-th annulus k^{4k}σ_N2^{-Ne}(2^N−1) plus the
    inner ball where b̄ ≥ 1. Inner ball, upper bound: earlier annuli up to k̄
    (≤ 2^N k^{-2}k^{4k}v_k), the annuli between k̄ and k (≤ 2^{N+3}k^{-3}k^{4k}v_k),
    Lebesgue mass v_k and the later annuli (≤ 2^N v_k). Without annuli b̄ ≡ 1.
    """
    spec._require_k(k)
    if spec.schedule != "full" and spec.annuli:
        raise ParameterError("doubling_report needs the full schedule; the toy schedule is for rasterizing")
    N = spec.N
    e = spec.exponent(k)
    v_k = ball_volume(N, -e)

    if not spec.annuli:
        outer = ball_volume(N, 1 - e)
        ratio = outer / v_k
        return DoublingResult(k=k, ratio=ratio, doubling_lower_bound=float(2 ** N), outer_mass=outer,
                              inner_mass=v_k, log2_r_k=-e)

    big_k = LogScalar.from_int(k)
    weight_k = big_k ** (4 * k)
    annulus = weight_k * v_k * (2 ** N - 1)
    outer = annulus + v_k

    scale = LogScalar.pow2(N) * weight_k * v_k
    terms = {
        "earlier_annuli": scale * big_k ** -2,
        "middle_annuli": scale * 8 * big_k ** -3,
        "lebesgue": v_k,
        "later_annuli": LogScalar.pow2(N) * v_k,
    }
    inner = log_sum(terms.values())
    ratio = outer / inner
    result = DoublingResult(k=k, ratio=ratio, doubling_lower_bound=doubling_lower_bound(N, k),
                            outer_mass=outer, inner_mass=inner, inner_terms=terms, log2_r_k=-e)
    if not result.passed:
        logger.error(f"❌ Doubling ratio {ratio.to_float():.6g} below bound {result.doubling_lower_bound:.6g} at k={k}")
    return result


@dataclass
class LBetaMassResult:
    k: int
    log2_lhs: LogScalar
    log2_rhs: float
    passed: bool

    @property
    def margin_log2(self) -> float:
        """log₂(RHS) − log₂(LHS)"""
        return self.log2_rhs - self.log2_lhs.log2


def lbeta_mass_check(spec: AnnularWeightSpec, k: int) -> LBetaMassResult:
    """∫_{B(x_k,2r_k)} k^{4βk} = k^{4βk}2^N v_k ≤ 2^N σ_N 2^{-k}, compared in log₂"""
    spec._require_k(k)
    N = spec.N
    lhs = LogScalar.from_int(k) ** (4 * spec.beta * k) * LogScalar.pow2(N) * ball_volume(N, -spec.exponent(k))
    rhs = LogScalar.pow2(N) * unit_ball_volume(N) * LogScalar.pow2(-k)
    passed = lhs <= rhs
    return LBetaMassResult(k=k, log2_lhs=lhs, log2_rhs=rhs.log2, passed=passed)


def weight_table(spec: AnnularWeightSpec, ks: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Per-k doubling and L^β rows"""
    rows = []
    for k in ks or spec.k_range:
        row = doubling_report(spec, k).as_dict()
        mass = lbeta_mass_check(spec, k)
        row["lbeta_margin_log2"] = mass.margin_log2
        row["lbeta_passed"] = mass.passed
        rows.append(row)
    table = pd.DataFrame(rows)
    ratios = table["ratio"].to_numpy()
    table["increasing"] = np.concatenate([[True], np.diff(ratios) > 0])
    logger.info(f"Annular weight table N={spec.N} β={spec.beta}: {len(table)} rows, "
                f"all passed={bool(table['passed'].all() and table['lbeta_passed'].all())}")
    return table


# ==================== GRID WEIGHTS ====================
def rasterize_annular_weight(spec: AnnularWeightSpec, grid: Grid) -> WeightField:
    """Toy-schedule b̄ on grid cells; b ≡ 1 and B = diag(1, b̄)"""
    if spec.schedule != "toy":
        raise ParameterError("Only the toy schedule e(k) = k can be rasterized")
    if spec.N != 2:
        raise ParameterError("Rasterizing needs N = 2")
    bbar = np.ones(grid.shape)
    for k, center in spec.centers().items():
        r_k = 2.0 ** (-spec.exponent(k))
        dist = np.hypot(grid.X - center[0], grid.Y - center[1])
        annulus = (dist >= r_k) & (dist < 2 * r_k)
        bbar[annulus] = np.maximum(bbar[annulus], float(k) ** (4 * k))
    return WeightField.diagonal(grid, [np.ones(grid.shape), bbar])


def build_distance_weight(spec: DistanceWeightSpec, grid: Grid, bbar: Optional[np.ndarray] = None) -> WeightField:
    """b = dist(center, ∂Ω)^γ per active cell, B = diag(b, b̄)"""
    dist = grid.domain.boundary_distance(grid.X, grid.Y)
    b = np.where(grid.mask, np.power(np.maximum(dist, 0.0), spec.gamma), 1.0)
    upper = np.full(grid.shape, spec.bbar) if bbar is None else np.broadcast_to(bbar, grid.shape)
    B = np.zeros(grid.shape + (2, 2))
    B[..., 0, 0], B[..., 1, 1] = b, upper
    return WeightField(grid=grid, b=b, bbar=np.maximum(b, upper), B=B)


@dataclass
class InverseIntegrabilityResult:
    passed: bool
    integral: float
    exponent: float
    analytic_exponent: Optional[float] = None
    analytic_pass: Optional[bool] = None
    cell: Optional[tuple] = None


def check_inverse_integrability(w: WeightField, chain: ParamChain,
                                gamma: Optional[float] = None) -> InverseIntegrabilityResult:
    """Discrete ∫_Ω b^{-t̄/(2−t̄)}; with gamma also the criterion γt̄/(2−t̄) < 1"""
    exponent = chain.tbar / (2 - chain.tbar)
    grid = w.grid
    zero = grid.mask & (w.b <= 0)
    if zero.any():
        cell = tuple(int(i) for i in np.argwhere(zero)[0])
        logger.warning(f"⚠️ b vanishes in cell {cell}; b^-1 not integrable")
        return InverseIntegrabilityResult(False, math.inf, exponent, cell=cell)

    integral = float(np.sum(np.where(grid.mask, w.b, 1.0)[grid.mask] ** (-exponent)) * grid.cell_volume)
    result = InverseIntegrabilityResult(passed=math.isfinite(integral), integral=integral, exponent=exponent)
    if gamma is not None:
        result.analytic_exponent = gamma * exponent
        result.analytic_pass = result.analytic_exponent < 1
        result.passed = result.passed and result.analytic_pass
    return result


def inverse_integrability_refinement(spec: DistanceWeightSpec, chain: ParamChain, domain,
                                     resolutions: Sequence[int] = (32, 64)) -> List[float]:
    """Discrete b^{-1} integrals under grid refinement"""
    integrals = []
    for n in resolutions:
        grid = Grid(domain, n, 1)
        integrals.append(check_inverse_integrability(build_distance_weight(spec, grid), chain).integral)
    return integrals

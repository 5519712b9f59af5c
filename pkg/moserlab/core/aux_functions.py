"""
Floating-point evaluators for the auxiliary test-function families.

Two families are covered:
  * F_{s,l} (s > 1, l ≥ 3): |t|^s inside [−l, l], continued by η + a|t| + b/|t|
    outside so that F, F′ and F″ match at |t| = l.
  * F_s (1/2 < s ≤ 1): θ(t)|t|^s with the polynomial cutoff θ on [−1, 1],
    θ ≡ 1 outside.
together with G = F·F′, its derivative, F̄ and the fixed constants δ, α₀, c₀, k₀.

All evaluators accept scalars or numpy arrays and are even/odd as expected:
F, F″, G′ are even, F′ and G are odd.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np
from cachetools import LRUCache, cached

from moserlab.config import settings
from moserlab.core.poly_algebra import Expr
from moserlab.exceptions import DomainError, ParameterError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


# ==================== PARAMETERS ====================
@dataclass(frozen=True)
class SLParams:
    s: float
    l: float

    def __post_init__(self):
        if not self.s > 1:
            raise ParameterError(f"F_(s,l) needs s > 1, got s={self.s}")
        if not self.l >= 3:
            raise ParameterError(f"F_(s,l) needs l >= 3, got l={self.l}")

    @property
    def eta(self) -> float:
        return (1 - self.s ** 2) * self.l ** self.s

    @property
    def a(self) -> float:
        return 0.5 * self.s * (self.s + 1) * self.l ** (self.s - 1)

    @property
    def b(self) -> float:
        return 0.5 * self.s * (self.s - 1) * self.l ** (self.s + 1)


@dataclass(frozen=True)
class SmallSParams:
    s: float

    def __post_init__(self):
        if not 0.5 < self.s <= 1:
            raise ParameterError(f"F_s needs 1/2 < s <= 1, got s={self.s}")


@dataclass(frozen=True)
class AuxConstants:
    """δ, α₀, c₀, k₀ as exact rationals (float views via properties)"""
    delta: Fraction
    alpha0: Fraction
    c0: Fraction
    k0: Fraction

    @property
    def delta_f(self) -> float:
        return float(self.delta)

    @property
    def alpha0_f(self) -> float:
        return float(self.alpha0)

    @property
    def c0_f(self) -> float:
        return float(self.c0)

    @property
    def k0_f(self) -> float:
        return float(self.k0)


def _build_constants() -> AuxConstants:
    delta = Fraction(1, 10 ** 6)
    alpha0 = 1 - Fraction(1, 10 ** 8)
    c0 = max(1 / (1 - alpha0), Fraction(2))
    # θ′ bracket at |t| = 1 evaluated with every sign taken positive
    k0 = (Fraction(3, 8) * (1 + Fraction(10, 3) + 5)) ** 2
    return AuxConstants(delta=delta, alpha0=alpha0, c0=c0, k0=k0)


_CONSTANTS = _build_constants()


def constants() -> AuxConstants:
    return _CONSTANTS


# ==================== HELPERS ====================
def _prepare(t: ArrayLike):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("t must be finite")
    return arr, np.abs(arr), np.sign(arr)


def _finish(result: np.ndarray, t: ArrayLike) -> ArrayLike:
    return float(result) if np.ndim(t) == 0 else result


def _safe_pow(x: np.ndarray, e: float) -> np.ndarray:
    """x**e with x = 0 mapped to 0 for e > 0, silenced elsewhere"""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, np.power(np.where(x > 0, x, 1.0), e), 0.0 if e > 0 else (1.0 if e == 0 else np.inf))


# ==================== F_{s,l} FAMILY ====================
SL_KINDS = ("F", "F'", "F''", "G", "G'")
_SL_ALIASES = {"F′": "F'", "F″": "F''", "G′": "G'"}


def eval_sl(which: str, p: SLParams, t: ArrayLike) -> ArrayLike:
    """
    Piecewise F_{s,l}, its first two derivatives, G = F·F′ and G′ = F′² + F·F″.
    Raises: DomainError for F″ at t = 0 when s < 2
    """
    which = _SL_ALIASES.get(which, which)
    if which not in SL_KINDS:
        raise ValueError(f"Unknown F_(s,l) variant {which!r}; expected one of {SL_KINDS}")
    arr, x, sg = _prepare(t)
    s, l = p.s, p.l
    inner = x <= l
    outer_x = np.where(inner, l, x)

    if which == "F''" and s < 2 and np.any(x == 0):
        raise DomainError(f"F''_(s,l) is unbounded at t=0 for s={s} < 2")

    F_in = _safe_pow(x, s)
    F_out = p.eta + p.a * outer_x + p.b / outer_x
    if which == "F":
        return _finish(np.where(inner, F_in, F_out), t)

    dF_in = s * sg * _safe_pow(x, s - 1)
    dF_out = sg * (p.a - p.b / outer_x ** 2)
    if which == "F'":
        return _finish(np.where(inner, dF_in, dF_out), t)

    if which == "F''":
        ddF_in = s * (s - 1) * _safe_pow(x, s - 2)
        ddF_out = 2 * p.b / outer_x ** 3
        return _finish(np.where(inner, ddF_in, ddF_out), t)

    if which == "G":
        G_in = s * sg * _safe_pow(x, 2 * s - 1)
        G_out = F_out * dF_out
        return _finish(np.where(inner, G_in, G_out), t)

    dG_in = s * (2 * s - 1) * _safe_pow(x, 2 * s - 2)
    dG_out = dF_out ** 2 + F_out * 2 * p.b / outer_x ** 3
    return _finish(np.where(inner, dG_in, dG_out), t)


# ==================== SMALL-s FAMILY ====================
SMALL_S_KINDS = ("theta", "theta'", "theta''", "F_s", "F_s'", "F_s''", "G_s", "G_s'", "Fbar")
_SMALL_ALIASES = {
    "θ": "theta", "θ′": "theta'", "θ″": "theta''",
    "F_s′": "F_s'", "F_s″": "F_s''", "G_s′": "G_s'", "F̄": "Fbar",
}
_SINGULAR_AT_ZERO = {"theta'", "theta''", "F_s''"}


def theta_bracket(x: np.ndarray) -> np.ndarray:
    return x ** 2 - 10.0 / 3.0 * x + 5.0


def derivative_bracket(s: float, x: np.ndarray) -> np.ndarray:
    """(5/2+s)x² − (5+10s/3)x + 5/2+5s, the bracket of F_s′"""
    return (2.5 + s) * x ** 2 - (5.0 + 10.0 * s / 3.0) * x + 2.5 + 5.0 * s


def second_derivative_bracket(s: float, x: np.ndarray) -> np.ndarray:
    return ((15.0 / 4.0 + 4.0 * s + s ** 2) * x ** 2
            - (2.5 + 20.0 * s / 3.0 + 10.0 * s ** 2 / 3.0) * x
            - 5.0 / 4.0 + 5.0 * s ** 2)


def k_bracket(s: float, x: ArrayLike) -> ArrayLike:
    """h(1,s,t): G_s′ = 9/64·|t|^(2s−1)·k_bracket on |t| ≤ 1"""
    x = np.asarray(x, dtype=float)
    return ((10 + 9 * s + 2 * s ** 2) * x ** 4
            - (40 + 140 * s / 3 + 40 * s ** 2 / 3) * x ** 3
            + (190 / 3 + 950 * s / 9 + 380 * s ** 2 / 9) * x ** 2
            - (100 / 3 + 100 * s + 200 * s ** 2 / 3) * x
            + 25 * s + 50 * s ** 2)


def h_alpha(alpha: float, s: float, t: ArrayLike) -> ArrayLike:
    """(9/64 |t|^(2s−1))⁻¹·[α F_s′² + F_s F_s″] = α·P² + θ-bracket·F_s″-bracket on |t| ≤ 1"""
    x = np.abs(np.asarray(t, dtype=float))
    return alpha * derivative_bracket(s, x) ** 2 + theta_bracket(x) * second_derivative_bracket(s, x)


def eval_small_s(which: str, p: SmallSParams, t: ArrayLike) -> ArrayLike:
    """
    θ, its derivatives, F_s = θ|t|^s with derivatives, G_s = F_s F_s′, G_s′ and F̄.
    Raises: DomainError at t = 0 for variants with a negative power of |t|
    """
    which = _SMALL_ALIASES.get(which, which)
    if which not in SMALL_S_KINDS:
        raise ValueError(f"Unknown small-s variant {which!r}; expected one of {SMALL_S_KINDS}")
    arr, x, sg = _prepare(t)
    s = p.s
    singular = which in _SINGULAR_AT_ZERO or (which == "G_s'" and 2 * s - 2 < 0)
    if singular and np.any(x == 0):
        raise DomainError(f"{which} is singular at t=0 for s={s}")

    inner = x <= 1
    xi = np.where(inner, x, 1.0)
    c = 3.0 / 8.0

    if which == "theta":
        out = np.where(inner, c * _safe_pow(xi, 0.5) * theta_bracket(xi), 1.0)
    elif which == "theta'":
        out = np.where(inner, c * sg * _safe_pow(xi, -0.5) * (2.5 * xi ** 2 - 5 * xi + 2.5), 0.0)
    elif which == "theta''":
        out = np.where(inner, c * _safe_pow(xi, -1.5) * (15 / 4 * xi ** 2 - 2.5 * xi - 5 / 4), 0.0)
    elif which == "F_s":
        out = np.where(inner, c * _safe_pow(xi, s + 0.5) * theta_bracket(xi), _safe_pow(x, s))
    elif which == "F_s'":
        out = np.where(inner, c * sg * _safe_pow(xi, s - 0.5) * derivative_bracket(s, xi),
                       s * sg * _safe_pow(x, s - 1))
    elif which == "F_s''":
        out = np.where(inner, c * _safe_pow(xi, s - 1.5) * second_derivative_bracket(s, xi),
                       s * (s - 1) * _safe_pow(x, s - 2))
    elif which == "G_s":
        out = np.where(inner, c * c * sg * _safe_pow(xi, 2 * s) * theta_bracket(xi) * derivative_bracket(s, xi),
                       s * sg * _safe_pow(x, 2 * s - 1))
    elif which == "G_s'":
        out = np.where(inner, c * c * _safe_pow(xi, 2 * s - 1) * k_bracket(s, xi),
                       s * (2 * s - 1) * _safe_pow(x, 2 * s - 2))
    else:
        out = np.where(inner, 0.0, x)
    return _finish(out, t)


# ==================== CLAIM HELPERS ====================
def lemma_f(s: float, z: ArrayLike) -> ArrayLike:
    """f(z) = (2s²−s/2)(s+1)z² + 4s(1−s²)z + (2s²+s/2)(s−1); f(1) = 3s"""
    z = np.asarray(z, dtype=float)
    return (2 * s ** 2 - s / 2) * (s + 1) * z ** 2 + 4 * s * (1 - s ** 2) * z + (2 * s ** 2 + s / 2) * (s - 1)


def lemma_h(s: float, x: ArrayLike) -> ArrayLike:
    """h(x) = s x^(s−1) − s(s+1)/2 + s(s−1)/2·x⁻², vanishing at x = 1"""
    x = np.asarray(x, dtype=float)
    return s * x ** (s - 1) - 0.5 * s * (s + 1) + 0.5 * s * (s - 1) / x ** 2


# ==================== EXACT ↔ FLOAT BRIDGE ====================
def expr_value(e: Expr, s: float, t: ArrayLike) -> ArrayLike:
    """Float evaluation of an exact Expr at (s, t)"""
    arr, x, sg = _prepare(t)
    total = np.zeros_like(x)
    for (j, a, q), poly in e.terms:
        coeff = sum(float(c) * s ** i for i, c in enumerate(poly))
        term = coeff * _safe_pow(x, float(a) * s + float(q))
        if j:
            term = term * sg
        total = total + term
    return _finish(total, t)


# ==================== k_s ESTIMATION ====================
@cached(cache=LRUCache(maxsize=512))
def _k_s_supremum(s: float, grid_points: int) -> float:
    p = SmallSParams(s)
    grid = np.linspace(0.0, 1.0, grid_points + 1)[1:]
    G = np.abs(eval_small_s("G_s", p, grid))
    F = eval_small_s("F_s", p, grid)
    ratio = G / np.power(F, 2.0 - 1.0 / s)
    return float(np.max(ratio))


def estimate_k_s(s: float, grid_points: int = None, slack: float = None) -> float:
    """
    Upper estimate of k_s in |G_s| ≤ k_s·F_s^(2−1/s) on [−1, 1]:
    slack × max over a uniform grid of (0, 1] of the ratio.
    Returns: the estimate (valid on the sample grid by construction)
    """
    grid_points = settings.K_S_GRID_POINTS if grid_points is None else grid_points
    slack = settings.K_S_SLACK if slack is None else slack
    if grid_points < 1000:
        raise ParameterError(f"k_s estimation needs at least 1000 grid points, got {grid_points}")
    if not slack > 1:
        raise ParameterError(f"k_s slack must exceed 1, got {slack}")
    SmallSParams(s)
    k_s = slack * _k_s_supremum(float(s), int(grid_points))
    logger.debug(f"k_s({s}) ≈ {k_s:.6g} (grid {grid_points}, slack {slack})")
    return k_s

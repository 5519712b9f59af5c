"""
Exact rational computer-algebra kernel.

An Expr is a finite sum of terms

    c(s) · sign(t)^j · |t|^(a·s + q)

with c(s) a polynomial in s over the rationals, j ∈ {0, 1} and a, q rational.
Terms are keyed by (j, a, q) so the canonical form is automatic: no two terms
share a key and zero coefficients are dropped on construction. Plain
polynomials in t are the special case a = 0, q a non-negative integer and
j = q mod 2 (t^q = sign(t)^q |t|^q).

Only fractions.Fraction and Python ints are used; no float enters here.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from moserlab.core.sexpr import Node, Quoted, dumps, parse
from moserlab.exceptions import CounterexampleFound, InconclusiveCertification

logger = logging.getLogger(__name__)

Rational = Fraction
SPoly = Tuple[Fraction, ...]
Key = Tuple[int, Fraction, Fraction]
Number = Union[int, Fraction]

VARIABLES = ("t", "s")


# ==================== POLYNOMIALS IN s ====================
def _ptrim(coeffs: Iterable[Fraction]) -> SPoly:
    out = list(coeffs)
    while out and out[-1] == 0:
        out.pop()
    return tuple(out)


def _padd(p: SPoly, q: SPoly) -> SPoly:
    n = max(len(p), len(q))
    return _ptrim(
        (p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)
    )


def _pmul(p: SPoly, q: SPoly) -> SPoly:
    if not p or not q:
        return ()
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return _ptrim(out)


def _peval(p: SPoly, value: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * value + c
    return acc


def _pderiv(p: SPoly) -> SPoly:
    return _ptrim(i * c for i, c in enumerate(p) if i > 0)


def _horner(coeffs: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


# ==================== EXPRESSIONS ====================
class Expr:
    """Immutable canonical sum of c(s)·sign(t)^j·|t|^(a·s+q) terms"""

    __slots__ = ("_terms",)

    def __init__(self, terms: Optional[Mapping[Key, Sequence[Number]]] = None):
        clean: Dict[Key, SPoly] = {}
        for (j, a, q), coeff in (terms or {}).items():
            key = (j % 2, Fraction(a), Fraction(q))
            poly = _padd(clean.get(key, ()), _ptrim(Fraction(c) for c in coeff))
            if poly:
                clean[key] = poly
            else:
                clean.pop(key, None)
        self._terms = clean

    # ---- constructors ----
    @classmethod
    def const(cls, value: Number) -> "Expr":
        return cls({(0, 0, 0): (Fraction(value),)})

    @classmethod
    def t(cls) -> "Expr":
        return cls({(1, 0, 1): (1,)})

    @classmethod
    def s(cls) -> "Expr":
        return cls({(0, 0, 0): (0, 1)})

    @classmethod
    def abs_t(cls) -> "Expr":
        return cls({(0, 0, 1): (1,)})

    @classmethod
    def sign_t(cls) -> "Expr":
        return cls({(1, 0, 0): (1,)})

    @classmethod
    def abs_pow(cls, a: Number, q: Number) -> "Expr":
        """|t|^(a·s + q)"""
        return cls({(0, a, q): (1,)})

    @classmethod
    def polynomial(cls, coeffs: Sequence[Number]) -> "Expr":
        """Σ coeffs[k]·t^k"""
        return cls({(k % 2, 0, k): (c,) for k, c in enumerate(coeffs) if c != 0})

    # ---- ring structure ----
    @staticmethod
    def _lift(other) -> "Expr":
        if isinstance(other, Expr):
            return other
        if isinstance(other, (int, Fraction)):
            return Expr.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        merged: Dict[Key, SPoly] = dict(self._terms)
        for key, poly in other._terms.items():
            merged[key] = _padd(merged.get(key, ()), poly)
        return Expr(merged)

    __radd__ = __add__

    def __neg__(self):
        return Expr({key: tuple(-c for c in poly) for key, poly in self._terms.items()})

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        out: Dict[Key, SPoly] = {}
        for (j1, a1, q1), p1 in self._terms.items():
            for (j2, a2, q2), p2 in other._terms.items():
                key = ((j1 + j2) % 2, a1 + a2, q1 + q2)
                out[key] = _padd(out.get(key, ()), _pmul(p1, p2))
        return Expr(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError(f"Only non-negative integer powers are supported, got {n!r}")
        result = Expr.const(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __bool__(self):
        return bool(self._terms)

    def __repr__(self):
        return f"Expr({to_sexpr(self)})"

    # ---- inspection ----
    @property
    def terms(self) -> List[Tuple[Key, SPoly]]:
        """Terms ordered by descending exponent, sign power last"""
        return sorted(self._terms.items(), key=lambda kv: (-kv[0][1], -kv[0][2], kv[0][0]))

    def is_zero(self) -> bool:
        return not self._terms

    def is_polynomial_in_t(self) -> bool:
        return all(
            a == 0 and q.denominator == 1 and q >= 0 and j == int(q) % 2
            for (j, a, q) in self._terms
        )

    def is_free_of_s(self) -> bool:
        return all(a == 0 and len(poly) <= 1 for (j, a, q), poly in self._terms.items())


ZERO = Expr()
ONE = Expr.const(1)


# ==================== TREE → EXPR ====================
def _check_t_argument(node: Node, op: str) -> None:
    if node != "t":
        raise ValueError(f"({op} ...) only accepts the symbol t, got {dumps(node)}")


def expand_collect(e: Union[Expr, Node, str], var: str = "t",
                   env: Optional[Mapping[str, Node]] = None) -> Expr:
    """
    Expand an expression tree (or s-expression text) into its canonical Expr.

    var names the collection variable; use coefficients(result, var) to read the
    coefficient list of a plain polynomial. Already-canonical Exprs are returned
    unchanged, which makes the operation idempotent.
    """
    if var not in VARIABLES:
        raise ValueError(f"Unknown variable {var!r}; expected one of {VARIABLES}")
    if isinstance(e, Expr):
        return e
    if isinstance(e, str) and not isinstance(e, Quoted) and e.lstrip().startswith("("):
        e = parse(e)
    return _expand(e, env or {})


def _expand(node: Node, env: Mapping[str, Node]) -> Expr:
    if isinstance(node, Fraction):
        return Expr.const(node)
    if isinstance(node, Quoted):
        raise ValueError(f"String literal {node!r} is not an expression")
    if isinstance(node, str):
        if node == "t":
            return Expr.t()
        if node == "s":
            return Expr.s()
        if node in env:
            return _expand(env[node], env)
        raise ValueError(f"Unknown symbol {node!r}")
    if not node:
        raise ValueError("Empty form ()")

    op, args = node[0], node[1:]
    if op == "+":
        total = ZERO
        for arg in args:
            total = total + _expand(arg, env)
        return total
    if op == "*":
        product = ONE
        for arg in args:
            product = product * _expand(arg, env)
        return product
    if op == "-":
        if len(args) == 1:
            return -_expand(args[0], env)
        head = _expand(args[0], env)
        for arg in args[1:]:
            head = head - _expand(arg, env)
        return head
    if op == "^":
        base, n = args
        if not isinstance(n, Fraction) or n.denominator != 1 or n < 0:
            raise ValueError(f"(^ e n) needs a non-negative integer n, got {dumps(n)}")
        return _expand(base, env) ** int(n)
    if op == "abs":
        _check_t_argument(args[0], "abs")
        return Expr.abs_t()
    if op == "sign":
        _check_t_argument(args[0], "sign")
        return Expr.sign_t()
    if op == "abspow":
        a, q = args
        return Expr.abs_pow(a, q)
    if op == "diff":
        return differentiate(args[0], env=env)
    if op == "diff-s":
        return differentiate_s(_expand(args[0], env))
    if op == "subst":
        var, value, body = args
        return substitute(_expand(body, env), var, value)
    if op == "pos":
        return positive_axis(_expand(args[0], env))
    raise ValueError(f"Unknown operator {op!r} in {dumps(node)}")


# ==================== DIFFERENTIATION ====================
def _differentiate_expr(e: Expr) -> Expr:
    out: Dict[Key, SPoly] = {}
    for (j, a, q), poly in e._terms.items():
        if a == 0 and q == 0:
            # sign(t)^j is locally constant
            continue
        # d/dt[sign^j |t|^x] = x·sign^(j+1)·|t|^(x-1), x = a·s + q
        factor = _ptrim((q, a))
        key = ((j + 1) % 2, a, q - 1)
        out[key] = _padd(out.get(key, ()), _pmul(poly, factor))
    return Expr(out)


def _tree_derivative(node: Node, env: Mapping[str, Node]) -> Node:
    if isinstance(node, Fraction):
        return Fraction(0)
    if isinstance(node, str):
        if node == "t":
            return Fraction(1)
        if node == "s":
            return Fraction(0)
        if node in env:
            return _tree_derivative(env[node], env)
        raise ValueError(f"Unknown symbol {node!r}")

    op, args = node[0], node[1:]
    if op == "+":
        return ("+",) + tuple(_tree_derivative(arg, env) for arg in args)
    if op == "-":
        return ("-",) + tuple(_tree_derivative(arg, env) for arg in args)
    if op == "*":
        # product rule
        summands = []
        for i in range(len(args)):
            factors = list(args)
            factors[i] = _tree_derivative(args[i], env)
            summands.append(("*",) + tuple(factors))
        return ("+",) + tuple(summands)
    if op == "^":
        base, n = args
        if n == 0:
            return Fraction(0)
        return ("*", n, ("^", base, n - 1), _tree_derivative(base, env))
    if op == "abs":
        return ("sign", "t")
    if op == "sign":
        return Fraction(0)
    if op == "abspow":
        a, q = args
        return ("*", ("+", ("*", a, "s"), q), ("sign", "t"), ("abspow", a, q - 1))
    if op in ("diff", "diff-s", "subst", "pos"):
        # inner operator is not a tree rule; differentiate its expansion termwise
        return ("diff", node)
    raise ValueError(f"Unknown operator {op!r} in {dumps(node)}")


def differentiate(e: Union[Expr, Node, str], env: Optional[Mapping[str, Node]] = None) -> Expr:
    """
    d/dt, term-wise on a canonical Expr: d[c·|t|^x] = c·x·sign(t)·|t|^(x−1).
    Expression trees are differentiated with the sum/product/power rules first
    and expanded afterwards, which gives an independent route to the same Expr.
    """
    if isinstance(e, Expr):
        return _differentiate_expr(e)
    if isinstance(e, str) and not isinstance(e, Quoted) and e.lstrip().startswith("("):
        e = parse(e)
    env = env or {}
    if isinstance(e, tuple) and e and e[0] in ("diff", "diff-s", "subst", "pos"):
        return _differentiate_expr(_expand(e, env))
    return _expand(_tree_derivative(e, env), env)


def differentiate_s(e: Expr) -> Expr:
    """d/ds for expressions whose exponents do not depend on s"""
    out: Dict[Key, SPoly] = {}
    for (j, a, q), poly in e._terms.items():
        if a != 0:
            raise ValueError("d/ds is only supported when exponents are free of s")
        out[(j, a, q)] = _pderiv(poly)
    return Expr(out)


def positive_axis(e: Expr) -> Expr:
    """Restriction to t > 0: sign(t) → 1 and |t|^q → t^q for integer q"""
    out: Dict[Key, SPoly] = {}
    for (j, a, q), poly in e._terms.items():
        if a == 0 and q.denominator == 1:
            key = (int(q) % 2, a, q)
        else:
            key = (0, a, q)
        out[key] = _padd(out.get(key, ()), poly)
    return Expr(out)


# ==================== COMPARISON ====================
def equal_exact(e1: Expr, e2: Expr) -> bool:
    return expand_collect(e1) == expand_collect(e2)


# ==================== SUBSTITUTION & EVALUATION ====================
def _rational_power(base: Fraction, exponent: Fraction) -> Fraction:
    if base == 1:
        return Fraction(1)
    if base == 0:
        if exponent > 0:
            return Fraction(0)
        if exponent == 0:
            return Fraction(1)
        raise ValueError("0 raised to a negative exponent")
    if exponent.denominator != 1:
        raise ValueError(f"{base}^{exponent} is not rational in general")
    return base ** int(exponent)


def substitute(e: Expr, var: str, value: Number) -> Expr:
    """Exact substitution of a rational value for s or t"""
    value = Fraction(value)
    out: Dict[Key, SPoly] = {}
    if var == "s":
        for (j, a, q), poly in e._terms.items():
            key = (j, Fraction(0), a * value + q)
            out[key] = _padd(out.get(key, ()), (_peval(poly, value),))
        return Expr(out)
    if var == "t":
        magnitude = abs(value)
        sign = (value > 0) - (value < 0)
        for (j, a, q), poly in e._terms.items():
            if a != 0 and magnitude not in (0, 1):
                raise ValueError("t can only be substituted when exponents are free of s (or |t| ∈ {0, 1})")
            if a != 0 and magnitude == 0:
                raise ValueError("|0|^(a·s+q) depends on the sign of a·s+q")
            factor = _rational_power(magnitude, q) * (sign ** j if j else 1)
            if factor == 0:
                continue
            key = (0, Fraction(0), Fraction(0))
            out[key] = _padd(out.get(key, ()), tuple(c * factor for c in poly))
        return Expr(out)
    raise ValueError(f"Unknown variable {var!r}")


def evaluate(e: Expr, s: Number, t: Number) -> Fraction:
    """Exact value at (s, t); raises ValueError when the value is not rational"""
    reduced = substitute(substitute(e, "s", s), "t", t)
    if reduced.is_zero():
        return Fraction(0)
    (key, poly), = reduced.terms
    return poly[0]


def coefficients(e: Expr, var: str = "t") -> List[Fraction]:
    """Coefficient list [c0, c1, ...] of a plain univariate polynomial in var"""
    if var == "t":
        if not (e.is_polynomial_in_t() and e.is_free_of_s()):
            raise ValueError("Expression is not a plain polynomial in t with rational coefficients")
        degree = max((int(q) for (j, a, q) in e._terms), default=-1)
        out = [Fraction(0)] * (degree + 1)
        for (j, a, q), poly in e._terms.items():
            out[int(q)] = poly[0]
        return out
    if var == "s":
        if any(key != (0, 0, 0) for key in e._terms):
            raise ValueError("Expression depends on t; not a plain polynomial in s")
        return list(e._terms.get((0, Fraction(0), Fraction(0)), ()))
    raise ValueError(f"Unknown variable {var!r}")


# ==================== SERIALIZATION ====================
def _poly_node(poly: SPoly) -> Node:
    parts: List[Node] = []
    for i, c in enumerate(poly):
        if c == 0:
            continue
        if i == 0:
            parts.append(c)
        elif i == 1:
            parts.append(("*", c, "s"))
        else:
            parts.append(("*", c, ("^", "s", Fraction(i))))
    return parts[0] if len(parts) == 1 else ("+",) + tuple(parts)


def to_node(e: Expr) -> Node:
    summands: List[Node] = []
    for (j, a, q), poly in e.terms:
        factors: List[Node] = [_poly_node(poly)]
        if j:
            factors.append(("sign", "t"))
        if a != 0 or q != 0:
            factors.append(("abspow", a, q))
        summands.append(factors[0] if len(factors) == 1 else ("*",) + tuple(factors))
    if not summands:
        return Fraction(0)
    return summands[0] if len(summands) == 1 else ("+",) + tuple(summands)


def to_sexpr(e: Expr) -> str:
    return dumps(to_node(e))


def format_expr(e: Expr) -> str:
    """Human-readable rendering used in logs and failure witnesses"""
    if e.is_zero():
        return "0"
    pieces = []
    for (j, a, q), poly in e.terms:
        coeff = " + ".join(
            f"{c}" if i == 0 else (f"{c}*s" if i == 1 else f"{c}*s^{i}")
            for i, c in enumerate(poly) if c != 0
        )
        factor = f"({coeff})"
        if j:
            factor += "*sign(t)"
        if a != 0 or q != 0:
            exponent = f"{a}*s+{q}" if a != 0 else f"{q}"
            factor += f"*|t|^({exponent})"
        pieces.append(factor)
    return " + ".join(pieces)


# ==================== CERTIFIED POSITIVITY ====================
@dataclass(frozen=True)
class PositivityCertificate:
    """Proof by bisection that p > threshold on [lo, hi]"""
    coefficients: Tuple[Fraction, ...]
    lo: Fraction
    hi: Fraction
    threshold: Fraction
    leaves: int
    depth: int
    min_lower_bound: Fraction

    @property
    def margin(self) -> Fraction:
        return self.min_lower_bound - self.threshold


def certify_positive(p: Union[Expr, Sequence[Number]], interval: Tuple[Number, Number],
                     threshold: Number = 0, max_depth: int = 32,
                     var: str = "t") -> PositivityCertificate:
    """
    Certify p(x) > threshold on [lo, hi] by recursive bisection.

    On each subinterval [a, b] with midpoint m and half-width w the lower bound
    p(m) − w·max|p′| is computed exactly, with max|p′| bounded by Σ|k·c_k|·R^(k−1),
    R = max(|a|, |b|).

    Raises:
        CounterexampleFound: a midpoint with p(m) ≤ threshold (exact refutation)
        InconclusiveCertification: max_depth reached without a decision
    """
    coeffs = tuple(coefficients(p, var) if isinstance(p, Expr) else (Fraction(c) for c in p))
    lo, hi = Fraction(interval[0]), Fraction(interval[1])
    threshold = Fraction(threshold)
    if not lo < hi:
        raise ValueError(f"Empty interval [{lo}, {hi}]")

    deriv_abs = [abs(k * c) for k, c in enumerate(coeffs) if k > 0]

    leaves = 0
    deepest = 0
    min_lower: Optional[Fraction] = None
    stack = [(lo, hi, 0)]
    while stack:
        a, b, depth = stack.pop()
        deepest = max(deepest, depth)
        m = (a + b) / 2
        value = _horner(coeffs, m)
        if value <= threshold:
            raise CounterexampleFound(
                f"p({m}) = {value} <= {threshold}", t_star=m, value=value
            )
        radius = max(abs(a), abs(b))
        lower = value - (b - a) / 2 * _horner(deriv_abs, radius)
        if lower > threshold:
            leaves += 1
            min_lower = lower if min_lower is None else min(min_lower, lower)
            continue
        if depth >= max_depth:
            raise InconclusiveCertification(
                f"Depth {max_depth} exhausted on [{a}, {b}]", depth=depth, interval=(a, b)
            )
        stack.append((m, b, depth + 1))
        stack.append((a, m, depth + 1))

    logger.debug(f"Certified p > {threshold} on [{lo}, {hi}] with {leaves} leaves, depth {deepest}")
    return PositivityCertificate(
        coefficients=coeffs, lo=lo, hi=hi, threshold=threshold,
        leaves=leaves, depth=deepest, min_lower_bound=min_lower,
    )

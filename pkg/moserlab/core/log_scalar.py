"""
Signed numbers stored as sign · 2^(exp + frac).

exp is an arbitrary-precision int and frac a float in [0, 1), so magnitudes like
2^(-5^40) stay representable and exact in their integer exponent. Addition
factors out the larger exponent before combining mantissas.
"""

import math
from fractions import Fraction
from functools import total_ordering
from numbers import Rational
from typing import Tuple, Union

Number = Union[int, float, Fraction, "LogScalar"]

# below this many binary orders the smaller addend cannot change a double
_NEGLIGIBLE = 1100
_LN2 = math.log(2.0)


@total_ordering
class LogScalar:
    __slots__ = ("sign", "exp", "frac")

    def __init__(self, sign: int, exp: int = 0, frac: float = 0.0):
        if sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {sign}")
        if sign == 0:
            exp, frac = 0, 0.0
        else:
            carry = math.floor(frac)
            exp, frac = int(exp) + carry, float(frac - carry)
            if frac >= 1.0:  # frac - floor(frac) can round up to 1.0
                exp, frac = exp + 1, 0.0
        self.sign = sign
        self.exp = exp
        self.frac = frac

    # ---------- constructors ----------
    @classmethod
    def zero(cls) -> "LogScalar":
        return cls(0)

    @classmethod
    def from_float(cls, x: float) -> "LogScalar":
        if math.isnan(x) or math.isinf(x):
            raise ValueError(f"Cannot represent {x} as LogScalar")
        if x == 0:
            return cls(0)
        m, e = math.frexp(abs(x))
        return cls(1 if x > 0 else -1, e, math.log2(m))

    @classmethod
    def from_int(cls, n: int) -> "LogScalar":
        if n == 0:
            return cls(0)
        sign = 1 if n > 0 else -1
        n = abs(n)
        shift = max(n.bit_length() - 60, 0)
        return cls(sign, shift, math.log2(n >> shift))

    @classmethod
    def from_fraction(cls, q: Fraction) -> "LogScalar":
        q = Fraction(q)
        return cls.from_int(q.numerator) / cls.from_int(q.denominator)

    @classmethod
    def pow2(cls, e: Union[int, Fraction, float]) -> "LogScalar":
        """2^e for an exact (possibly huge) exponent"""
        if isinstance(e, float):
            return cls(1, math.floor(e), e - math.floor(e))
        e = Fraction(e)
        whole = e.numerator // e.denominator
        return cls(1, whole, float(e - whole))

    @classmethod
    def coerce(cls, x: Number) -> "LogScalar":
        if isinstance(x, LogScalar):
            return x
        if isinstance(x, bool):
            x = int(x)
        if isinstance(x, int):
            return cls.from_int(x)
        if isinstance(x, Rational):
            return cls.from_fraction(Fraction(x))
        return cls.from_float(float(x))

    # ---------- views ----------
    @property
    def log2(self) -> float:
        """log₂|x| as a float (−inf for zero)"""
        if self.sign == 0:
            return -math.inf
        return float(self.exp) + self.frac

    @property
    def log10(self) -> float:
        return self.log2 * math.log10(2.0)

    def log2_parts(self) -> Tuple[int, float]:
        return self.exp, self.frac

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.exp > _NEGLIGIBLE:
            return math.copysign(math.inf, self.sign)
        if self.exp < -_NEGLIGIBLE:
            return 0.0 * self.sign
        return self.sign * math.ldexp(2.0 ** self.frac, self.exp)

    def __float__(self) -> float:
        return self.to_float()

    def is_zero(self) -> bool:
        return self.sign == 0

    # ---------- arithmetic ----------
    def __neg__(self) -> "LogScalar":
        return LogScalar(-self.sign, self.exp, self.frac)

    def __abs__(self) -> "LogScalar":
        return LogScalar(abs(self.sign), self.exp, self.frac)

    def __mul__(self, other: Number) -> "LogScalar":
        o = LogScalar.coerce(other)
        if self.sign == 0 or o.sign == 0:
            return LogScalar(0)
        return LogScalar(self.sign * o.sign, self.exp + o.exp, self.frac + o.frac)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "LogScalar":
        o = LogScalar.coerce(other)
        if o.sign == 0:
            raise ZeroDivisionError("LogScalar division by zero")
        if self.sign == 0:
            return LogScalar(0)
        return LogScalar(self.sign * o.sign, self.exp - o.exp, self.frac - o.frac)

    def __rtruediv__(self, other: Number) -> "LogScalar":
        return LogScalar.coerce(other) / self

    def __pow__(self, p: Union[int, Fraction, float]) -> "LogScalar":
        if self.sign == 0:
            if p > 0:
                return LogScalar(0)
            raise ZeroDivisionError("0 cannot be raised to a non-positive power")
        if self.sign < 0 and not (isinstance(p, int) or Fraction(p).denominator == 1):
            raise ValueError("Negative LogScalar raised to a non-integer power")
        sign = self.sign if int(p) % 2 else 1
        if isinstance(p, float):
            q = Fraction(p)
        else:
            q = Fraction(p)
        scaled = q * self.exp
        whole = scaled.numerator // scaled.denominator
        return LogScalar(sign, whole, float(scaled - whole) + self.frac * float(q))

    def __add__(self, other: Number) -> "LogScalar":
        o = LogScalar.coerce(other)
        if o.sign == 0:
            return self
        if self.sign == 0:
            return o
        big, small = (self, o) if abs(self) >= abs(o) else (o, self)
        gap = (small.exp - big.exp) + (small.frac - big.frac)  # ≤ 0
        if gap < -_NEGLIGIBLE:
            return big
        ratio = 2.0 ** gap
        if big.sign == small.sign:
            shift = math.log1p(ratio) / _LN2
        else:
            if ratio >= 1.0:
                return LogScalar(0)
            shift = math.log1p(-ratio) / _LN2
        return LogScalar(big.sign, big.exp, big.frac + shift)

    __radd__ = __add__

    def __sub__(self, other: Number) -> "LogScalar":
        return self + (-LogScalar.coerce(other))

    def __rsub__(self, other: Number) -> "LogScalar":
        return LogScalar.coerce(other) - self

    # ---------- ordering ----------
    def _key(self) -> Tuple[int, int, float]:
        if self.sign >= 0:
            return (self.sign, self.exp, self.frac)
        return (-1, -self.exp, -self.frac)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, (LogScalar, int, float, Fraction)):
            return NotImplemented
        return self._key() == LogScalar.coerce(other)._key()

    def __lt__(self, other: Number) -> bool:
        return self._key() < LogScalar.coerce(other)._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        if self.sign == 0:
            return "LogScalar(0)"
        return f"LogScalar({'-' if self.sign < 0 else '+'}2^({self.exp} + {self.frac:.17g}))"


def log_sum(values) -> LogScalar:
    total = LogScalar(0)
    for v in values:
        total = total + v
    return total

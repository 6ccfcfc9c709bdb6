"""Directed-rounding interval arithmetic on IEEE-754 doubles.

Every operation returns an interval that encloses the exact real result for
all points of its input intervals.  Rounding is per-operation and stateless:
elementary arithmetic uses round-to-nearest followed by a one-ulp outward
bump (``math.nextafter``), transcendental functions are evaluated through
MPFR (gmpy2) with true directed rounding at 53 bits.  No global rounding
mode is ever touched, so values are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, ROUND_CEILING, ROUND_FLOOR

import gmpy2

__all__ = [
    "IVal",
    "PI",
    "TWO_PI",
    "HALF_PI",
    "ZeroDivisionIntervalError",
    "down",
    "up",
]

_INF = math.inf


class ZeroDivisionIntervalError(ZeroDivisionError):
    """Division by an interval that contains zero."""


def down(x: float) -> float:
    """Next float below ``x`` (identity on infinities)."""
    return math.nextafter(x, -_INF)


def up(x: float) -> float:
    """Next float above ``x`` (identity on infinities)."""
    return math.nextafter(x, _INF)


# MPFR contexts with binary64 semantics and directed rounding.  Entering a
# context only affects the current thread.
_CTX_DOWN = gmpy2.ieee(64)
_CTX_DOWN.round = gmpy2.RoundDown
_CTX_UP = gmpy2.ieee(64)
_CTX_UP.round = gmpy2.RoundUp


def _mpfr_pair(fn, x: float) -> tuple[float, float]:
    """Evaluate ``fn`` at the exact double ``x`` rounded down and up."""
    with gmpy2.context(_CTX_DOWN):
        lo = float(fn(gmpy2.mpfr(x)))
    with gmpy2.context(_CTX_UP):
        hi = float(fn(gmpy2.mpfr(x)))
    return lo, hi


# Error-free transformations give true directed rounding for + - * : the
# round-to-nearest result plus the exact sign of its rounding error decide
# whether to step one ulp outward.

def _add_err(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bp = s - a
    return s, (a - (s - bp)) + (b - bp)


_SPLITTER = 134217729.0  # 2**27 + 1, Dekker splitting constant


def _mul_err(a: float, b: float) -> tuple[float, float]:
    p = a * b
    if a == 0.0 or b == 0.0:
        return 0.0 * p, 0.0  # keep the IEEE sign of the exact zero
    if not math.isfinite(p) or abs(p) < 2.0 ** -970:
        # under/overflow region: error term unreliable, force outward step
        return p, math.nan
    ta = _SPLITTER * a
    ahi = ta - (ta - a)
    alo = a - ahi
    tb = _SPLITTER * b
    bhi = tb - (tb - b)
    blo = b - bhi
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, e


def _dir_down(v: float, err: float) -> float:
    if err == err and err >= 0.0:  # err is not NaN and nonnegative: v is a floor
        return v
    return down(v)


def _dir_up(v: float, err: float) -> float:
    if err == err and err <= 0.0:
        return v
    return up(v)


def _mul_down(a: float, b: float) -> float:
    p, e = _mul_err(a, b)
    if e == e:
        return p if e >= 0.0 else down(p)
    # underflowed product: only the sign is certain
    if math.isfinite(p) and (a > 0.0) == (b > 0.0):
        return max(0.0, down(p))
    return down(p)


def _mul_up(a: float, b: float) -> float:
    p, e = _mul_err(a, b)
    if e == e:
        return p if e <= 0.0 else up(p)
    if math.isfinite(p) and (a > 0.0) != (b > 0.0):
        return min(0.0, up(p))
    return up(p)


def _div_down(a: float, b: float) -> float:
    with gmpy2.context(_CTX_DOWN):
        return float(gmpy2.mpfr(a) / gmpy2.mpfr(b))


def _div_up(a: float, b: float) -> float:
    with gmpy2.context(_CTX_UP):
        return float(gmpy2.mpfr(a) / gmpy2.mpfr(b))


@dataclass(frozen=True, slots=True)
class IVal:
    """Closed interval [lo, hi] of reals, endpoints stored as doubles.

    Invariants: ``lo <= hi`` and neither endpoint is NaN.  Arithmetic is
    inclusion-monotone; errors (division by an interval containing zero)
    are raised explicitly, NaN never propagates silently.
    """

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("NaN endpoint in interval")
        if self.lo > self.hi:
            raise ValueError(f"inverted interval [{self.lo}, {self.hi}]")

    # -- constructors -------------------------------------------------

    @staticmethod
    def exact(x: float) -> "IVal":
        """Degenerate interval holding one representable value."""
        return IVal(float(x), float(x))

    @staticmethod
    def hull_of(*values: float) -> "IVal":
        return IVal(min(values), max(values))

    # -- queries -------------------------------------------------------

    @property
    def width(self) -> float:
        return up(self.hi - self.lo)

    @property
    def mid(self) -> float:
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = 0.5 * self.lo + 0.5 * self.hi
        return m

    @property
    def mag(self) -> float:
        """sup |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def encloses(self, other: "IVal") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def intersects(self, other: "IVal") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def intersect(self, other: "IVal") -> "IVal":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo > hi:
            raise ValueError(f"empty intersection of {self} and {other}")
        return IVal(lo, hi)

    def hull(self, other: "IVal") -> "IVal":
        return IVal(min(self.lo, other.lo), max(self.hi, other.hi))

    # -- arithmetic ----------------------------------------------------

    def __neg__(self) -> "IVal":
        return IVal(-self.hi, -self.lo)

    def __add__(self, other) -> "IVal":
        o = _coerce(other)
        s, e = _add_err(self.lo, o.lo)
        t, f = _add_err(self.hi, o.hi)
        return IVal(_dir_down(s, e), _dir_up(t, f))

    __radd__ = __add__

    def __sub__(self, other) -> "IVal":
        o = _coerce(other)
        s, e = _add_err(self.lo, -o.hi)
        t, f = _add_err(self.hi, -o.lo)
        return IVal(_dir_down(s, e), _dir_up(t, f))

    def __rsub__(self, other) -> "IVal":
        return _coerce(other).__sub__(self)

    def __mul__(self, other) -> "IVal":
        o = _coerce(other)
        pairs = [(a, b) for a in (self.lo, self.hi) for b in (o.lo, o.hi)]
        lo = min(_mul_down(a, b) for a, b in pairs)
        hi = max(_mul_up(a, b) for a, b in pairs)
        return IVal(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "IVal":
        o = _coerce(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionIntervalError(f"division by {o} which contains 0")
        lo = min(_div_down(a, b) for a in (self.lo, self.hi) for b in (o.lo, o.hi))
        hi = max(_div_up(a, b) for a in (self.lo, self.hi) for b in (o.lo, o.hi))
        return IVal(lo, hi)

    def __rtruediv__(self, other) -> "IVal":
        return _coerce(other).__truediv__(self)

    def __abs__(self) -> "IVal":
        if self.lo >= 0.0:
            return self
        if self.hi <= 0.0:
            return -self
        return IVal(0.0, max(-self.lo, self.hi))

    def sqr(self) -> "IVal":
        a = abs(self)
        return IVal(_mul_down(a.lo, a.lo), _mul_up(a.hi, a.hi))

    # -- transcendental ------------------------------------------------

    def sin(self) -> "IVal":
        return _sin_interval(self)

    def cos(self) -> "IVal":
        return _sin_interval(HALF_PI - self)

    # -- output ----------------------------------------------------------

    def format_outward(self, digits: int = 17) -> tuple[str, str]:
        """Decimal strings (lo rounded down, hi rounded up) to ``digits`` places.

        The printed interval always encloses the stored one, so certificates
        survive the binary-to-decimal trip.
        """
        q = Decimal(1).scaleb(-digits)
        lo = Decimal(self.lo).quantize(q, rounding=ROUND_FLOOR)
        hi = Decimal(self.hi).quantize(q, rounding=ROUND_CEILING)
        return format(lo, "f"), format(hi, "f")

    def __repr__(self) -> str:
        return f"IVal({self.lo!r}, {self.hi!r})"

    def __str__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


def _coerce(x) -> IVal:
    if isinstance(x, IVal):
        return x
    if isinstance(x, (int, float)):
        return IVal.exact(float(x))
    raise TypeError(f"cannot interpret {x!r} as an interval")


# Certified pi: the double closest to pi is below it.
_PI_LO = float.fromhex("0x1.921fb54442d18p+1")
PI = IVal(_PI_LO, up(_PI_LO))
TWO_PI = IVal(down(2.0 * _PI_LO), up(2.0 * up(_PI_LO)))
HALF_PI = IVal(0.5 * _PI_LO, 0.5 * up(_PI_LO))


def sin_point(x: float) -> IVal:
    """One-ulp enclosure of sin at a representable point (MPFR, directed)."""
    lo, hi = _mpfr_pair(gmpy2.sin, x)
    return IVal(lo, hi)


def cos_point(x: float) -> IVal:
    lo, hi = _mpfr_pair(gmpy2.cos, x)
    return IVal(lo, hi)


def acos_point(x: float) -> IVal:
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"acos argument {x} outside [-1, 1]")
    lo, hi = _mpfr_pair(gmpy2.acos, x)
    return IVal(lo, hi)


def acos_interval(a: IVal) -> IVal:
    """Enclosure of arccos over an interval (monotone decreasing)."""
    return IVal(acos_point(a.hi).lo, acos_point(a.lo).hi)


def _sin_interval(a: IVal) -> IVal:
    """Enclosure of sin over [a.lo, a.hi].

    Endpoint values come from MPFR; whether an interior critical point
    pi/2 + k*pi falls inside is decided with the certified pi enclosure, so
    the result is clamped to +-1 exactly when a maximum or minimum may be
    contained.
    """
    if a.width >= TWO_PI.hi:
        return IVal(-1.0, 1.0)
    slo = sin_point(a.lo)
    shi = sin_point(a.hi)
    lo = min(slo.lo, shi.lo)
    hi = max(slo.hi, shi.hi)
    # critical points pi/2 + k*pi with k chosen to cover the argument range
    k_min = math.floor(a.lo / PI.lo - 0.5) - 1
    k_max = math.ceil(a.hi / PI.lo - 0.5) + 1
    for k in range(k_min, k_max + 1):
        crit = HALF_PI + PI * k
        if crit.hi < a.lo or crit.lo > a.hi:
            continue
        # sin at pi/2 + k*pi is (-1)^k; the critical point may lie inside
        if k % 2 == 0:
            hi = 1.0
        else:
            lo = -1.0
    return IVal(lo, hi)

from __future__ import annotations

import math
from decimal import Decimal
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mpf_fraction
from arnoldnoise.intervals import (
    HALF_PI,
    PI,
    IVal,
    ZeroDivisionIntervalError,
    acos_point,
    cos_point,
    sin_point,
)

mpmath.mp.dps = 50


def ulp(x: float) -> float:
    return math.ulp(abs(x)) if x != 0 else math.ulp(0.0)


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def ivals(lo=-1e6, hi=1e6):
    return st.tuples(
        st.floats(min_value=lo, max_value=hi),
        st.floats(min_value=lo, max_value=hi),
    ).map(lambda p: IVal(min(p), max(p)))


class TestArithmetic:
    def test_exact_integers(self):
        assert IVal(1, 1) + IVal(2, 2) == IVal(3, 3)

    def test_sign_cases(self):
        assert IVal(0, 1) * IVal(-1, 1) == IVal(-1, 1)

    def test_decimal_tenths(self):
        r = IVal.exact(0.1) + IVal.exact(0.2)
        exact = Fraction(0.1) + Fraction(0.2)
        assert Fraction(r.lo) <= exact <= Fraction(r.hi)
        assert r.width <= 2 * ulp(0.3)

    def test_division_by_zero_interval(self):
        with pytest.raises(ZeroDivisionIntervalError):
            IVal(1, 1) / IVal(-1, 1)

    def test_abs(self):
        assert abs(IVal(-3, 2)) == IVal(0, 3)
        assert abs(IVal(-3, -2)) == IVal(2, 3)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            IVal(math.nan, 1.0)

    def test_inverted_rejected(self):
        with pytest.raises(ValueError):
            IVal(2.0, 1.0)

    @given(a=finite, b=finite)
    def test_point_containment_add_mul(self, a, b):
        for op, frop in ((lambda x, y: x + y, lambda x, y: x + y),
                         (lambda x, y: x - y, lambda x, y: x - y),
                         (lambda x, y: x * y, lambda x, y: x * y)):
            r = op(IVal.exact(a), IVal.exact(b))
            exact = frop(Fraction(a), Fraction(b))
            assert Fraction(r.lo) <= exact <= Fraction(r.hi)

    @given(a=finite, b=st.floats(min_value=1e-3, max_value=1e6))
    def test_point_containment_div(self, a, b):
        r = IVal.exact(a) / IVal.exact(b)
        exact = Fraction(a) / Fraction(b)
        assert Fraction(r.lo) <= exact <= Fraction(r.hi)

    @given(x=ivals(), y=ivals(), dx=st.floats(min_value=0, max_value=10),
           dy=st.floats(min_value=0, max_value=10))
    @settings(max_examples=200)
    def test_inclusion_monotonicity(self, x, y, dx, dy):
        wider_x = IVal(x.lo - dx, x.hi + dx)
        wider_y = IVal(y.lo - dy, y.hi + dy)
        for op in (lambda a, b: a + b, lambda a, b: a - b, lambda a, b: a * b):
            assert op(wider_x, wider_y).encloses(op(x, y))


class TestTranscendental:
    def test_pi_enclosure(self):
        assert Fraction(PI.lo) < mpf_fraction(mpmath.pi) < Fraction(PI.hi)
        assert PI.width <= 2 * ulp(3.14)

    def test_sin_zero(self):
        assert IVal.exact(0.0).sin() == IVal(0.0, 0.0)

    def test_sin_quarter_period(self):
        r = IVal(0.0, HALF_PI.hi).sin()
        assert r.lo <= 0.0 and r.hi == 1.0
        assert r.lo >= -1e-15

    def test_sin_at_one(self):
        r = IVal.exact(1.0).sin()
        ref = mpmath.sin(1)
        assert Fraction(r.lo) <= mpf_fraction(ref) <= Fraction(r.hi)
        assert r.width <= 4 * ulp(0.841)

    @given(x=st.floats(min_value=-10, max_value=10))
    @settings(max_examples=300)
    def test_sin_point_containment(self, x):
        r = sin_point(x)
        ref = mpf_fraction(mpmath.sin(mpmath.mpf(x)))
        assert Fraction(r.lo) <= ref <= Fraction(r.hi)
        assert r.width <= 4 * ulp(max(abs(r.lo), abs(r.hi), 1e-300))

    @given(x=ivals(-7, 7))
    @settings(max_examples=200)
    def test_sin_interval_containment(self, x):
        r = x.sin()
        for t in (x.lo, x.mid, x.hi):
            ref = mpf_fraction(mpmath.sin(mpmath.mpf(t)))
            assert Fraction(r.lo) <= ref <= Fraction(r.hi)
        assert -1.0 <= r.lo <= r.hi <= 1.0

    def test_cos_point(self):
        r = cos_point(0.5)
        ref = mpf_fraction(mpmath.cos(mpmath.mpf(0.5)))
        assert Fraction(r.lo) <= ref <= Fraction(r.hi)

    def test_acos(self):
        r = acos_point(0.5)
        ref = mpf_fraction(mpmath.acos(mpmath.mpf(0.5)))
        assert Fraction(r.lo) <= ref <= Fraction(r.hi)
        with pytest.raises(ValueError):
            acos_point(1.5)


class TestOutput:
    def test_outward_decimal(self):
        x = IVal.exact(0.1) + IVal.exact(0.2)
        lo, hi = x.format_outward(digits=6)
        assert Decimal(lo) <= Decimal(x.lo) and Decimal(hi) >= Decimal(x.hi)
        assert Decimal(hi) - Decimal(lo) <= Decimal("0.000002")

    def test_outward_is_valid_after_reparse(self):
        x = IVal(-1.2345678912345e-3, 7.5e-3)
        lo, hi = x.format_outward(digits=9)
        assert float(lo) <= x.lo and float(hi) >= x.hi

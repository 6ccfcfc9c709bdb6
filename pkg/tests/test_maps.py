from __future__ import annotations

from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mpf_fraction
from arnoldnoise.intervals import IVal
from arnoldnoise.maps import (
    Branch,
    NoiseKernel,
    NoisyMapParams,
    TangencyError,
    branch_decompose,
    kernel_l1_distance,
    lift_eval,
    lift_points,
    map_eval,
    observable,
)

mpmath.mp.dps = 40


def lift_oracle(tau, eps, x) -> Fraction:
    v = mpmath.mpf(x) + mpmath.mpf(tau) - mpmath.mpf(eps) / (2 * mpmath.pi) * mpmath.sin(2 * mpmath.pi * mpmath.mpf(x))
    return mpf_fraction(v)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            NoisyMapParams(tau=1.5, eps=0.0, xi=0.1)
        with pytest.raises(ValueError):
            NoisyMapParams(tau=0.5, eps=0.0, xi=1.5)
        with pytest.raises(ValueError):
            NoisyMapParams(tau=0.5, eps=-1.0, xi=0.1)

    def test_xi_zero_rejected_for_certified(self):
        p = NoisyMapParams(tau=0.5, eps=0.0, xi=0.0)
        with pytest.raises(ValueError):
            p.require_noise()


class TestKernel:
    def test_norms(self):
        k = NoiseKernel.for_width(0.1)
        assert k.density_height.contains(10.0)
        assert k.l1_norm == IVal(1.0, 1.0)
        assert k.var.contains(20.0)
        assert k.bv_norm.contains(21.0)

    def test_full_circle_kernel_is_smooth(self):
        k = NoiseKernel.for_width(1.0)
        assert k.var == IVal(0.0, 0.0)
        assert k.bv_norm.contains(1.0)

    def test_l1_distance(self):
        d = kernel_l1_distance(0.1, 0.11)
        exact = Fraction(2) * (1 - Fraction(0.1) / Fraction(0.11))
        assert Fraction(d.lo) <= exact <= Fraction(d.hi)
        assert d.width < 1e-14
        assert kernel_l1_distance(0.2, 0.2).contains(0.0)


class TestMapEval:
    def test_pure_rotation(self):
        p = NoisyMapParams(tau=0.5, eps=0.0, xi=0.1)
        arc = map_eval(p, IVal.exact(0.25))
        assert arc.lift_lo <= 0.75 <= arc.lift_hi
        assert arc.width < 1e-15

    def test_fixed_origin(self):
        p = NoisyMapParams(tau=0.0, eps=2.3, xi=0.1)
        arc = map_eval(p, IVal.exact(0.0))
        assert arc.lift_lo <= 0.0 <= arc.lift_hi
        assert arc.width < 1e-15

    def test_strongly_nonlinear_point(self):
        p = NoisyMapParams(tau=0.709, eps=1.4, xi=0.1)
        r = lift_eval(p, IVal.exact(0.25))
        exact = lift_oracle(0.709, 1.4, 0.25)
        assert Fraction(r.lo) <= exact <= Fraction(r.hi)
        assert abs(r.mid - 0.7361830796713465) < 1e-12

    @given(tau=st.floats(min_value=0, max_value=0.99),
           eps=st.floats(min_value=0, max_value=3),
           x=st.floats(min_value=0, max_value=1))
    @settings(max_examples=150)
    def test_lift_containment(self, tau, eps, x):
        p = NoisyMapParams(tau=tau, eps=eps, xi=0.1)
        r = lift_eval(p, IVal.exact(x))
        exact = lift_oracle(tau, eps, x)
        assert Fraction(r.lo) <= exact <= Fraction(r.hi)

    def test_lift_points_match_scalar(self):
        p = NoisyMapParams(tau=0.709, eps=1.4, xi=0.1)
        xs = np.linspace(0.0, 1.0, 257)
        lo, hi = lift_points(p, xs)
        for x, l, h in zip(xs[::16], lo[::16], hi[::16]):
            exact = lift_oracle(0.709, 1.4, float(x))
            assert Fraction(float(l)) <= exact <= Fraction(float(h))

    def test_conjugation_symmetry(self):
        # T_{1-tau}(1-x) = 1 - T_tau(x) up to enclosure width
        rng = np.random.default_rng(7)
        for _ in range(20):
            tau, eps, x = rng.uniform(0.01, 0.99), rng.uniform(0, 2.5), rng.uniform(0, 1)
            a = lift_eval(NoisyMapParams(tau, eps, 0.1), IVal.exact(x))
            b = lift_eval(NoisyMapParams(1 - tau, eps, 0.1), IVal.exact(1 - x))
            mirrored = IVal.exact(2.0) - a
            assert mirrored.intersects(b + IVal(-1e-12, 1e-12))


class TestBranches:
    def test_rotation_single_branch(self):
        p = NoisyMapParams(tau=0.3, eps=0.0, xi=0.1)
        d = branch_decompose(p)
        assert len(d.branches) == 1 and len(d.breakpoints) == 0
        assert d.branches[0].increasing

    def test_tangency_rejected(self):
        with pytest.raises(TangencyError):
            branch_decompose(NoisyMapParams(tau=0.3, eps=1.0 + 1e-12, xi=0.1))

    def test_eps_two_breakpoint(self):
        # arccos(1/2)/(2pi) = 1/6 exactly
        d = branch_decompose(NoisyMapParams(tau=0.3, eps=2.0, xi=0.1))
        c1, c2 = d.breakpoints
        assert Fraction(c1.lo) <= Fraction(1, 6) <= Fraction(c1.hi)
        assert Fraction(c2.lo) <= Fraction(5, 6) <= Fraction(c2.hi)
        assert [b.increasing for b in d.branches] == [False, True, False]

    def test_eps_14_breakpoint_oracle(self):
        d = branch_decompose(NoisyMapParams(tau=0.709, eps=1.4, xi=0.1))
        c1 = d.breakpoints[0]
        ref = mpf_fraction(mpmath.acos(1 / mpmath.mpf(1.4)) / (2 * mpmath.pi))
        assert Fraction(c1.lo) <= ref <= Fraction(c1.hi)
        assert c1.width < 1e-14

    def test_branch_inverse_composes(self):
        p = NoisyMapParams(tau=0.709, eps=1.4, xi=0.1)
        d = branch_decompose(p)
        for br in d.branches:
            img = br.image
            targets = np.linspace(img.lo + 0.05 * (img.hi - img.lo),
                                  img.hi - 0.05 * (img.hi - img.lo), 25)
            xlo, xhi = br.solve(targets)
            assert np.all(xhi - xlo < 1e-10)
            flo, fhi = lift_points(p, xlo)
            glo, ghi = lift_points(p, xhi)
            lo = np.minimum(flo, glo)
            hi = np.maximum(fhi, ghi)
            width = xhi - xlo
            slack = p.deriv_sup() * width + 1e-13
            assert np.all(lo - slack <= targets) and np.all(targets <= hi + slack)

    def test_monotone_for_small_eps(self):
        p = NoisyMapParams(tau=0.3, eps=0.5, xi=0.1)
        xs = np.linspace(0, 1, 101)
        lo, hi = lift_points(p, xs)
        assert np.all(np.diff(lo) > 0) or np.all(hi[:-1] <= lo[1:] + 1e-12)


class TestObservable:
    def test_rotation_constant(self):
        obs = observable(NoisyMapParams(tau=0.4, eps=0.0, xi=0.1))
        v = obs.eval(IVal(0.0, 1.0))
        assert v.contains(0.4) and v.width < 1e-14
        assert obs.sup_bound.contains(0.4)

    def test_displacement_value(self):
        obs = observable(NoisyMapParams(tau=0.707, eps=1.4, xi=0.1))
        v = obs.eval(IVal.exact(0.25))
        ref = mpf_fraction(mpmath.mpf("0.707") - mpmath.mpf("1.4") / (2 * mpmath.pi))
        # 0.707 and 1.4 are parsed as doubles; compare against the double-based oracle
        ref = mpf_fraction(mpmath.mpf(0.707) - mpmath.mpf(1.4) / (2 * mpmath.pi))
        assert Fraction(v.lo) <= ref <= Fraction(v.hi)
        assert abs(v.mid - 0.484183079671346) < 1e-12

    def test_sup_bound(self):
        obs = observable(NoisyMapParams(tau=0.716, eps=1.4, xi=0.1))
        ref = mpf_fraction(mpmath.mpf(0.716) + mpmath.mpf(1.4) / (2 * mpmath.pi))
        assert Fraction(obs.sup_bound.hi) >= ref
        assert obs.sup_bound.hi - float(ref) < 1e-12

    def test_cell_averages_against_quadrature(self):
        p = NoisyMapParams(tau=0.709, eps=1.4, xi=0.1)
        obs = observable(p)
        n = 32
        lo, hi = obs.cell_averages(n)
        for i in range(0, n, 5):
            a, b = mpmath.mpf(i) / n, mpmath.mpf(i + 1) / n
            exact = mpmath.quad(
                lambda t: mpmath.mpf(p.tau) - mpmath.mpf(p.eps) / (2 * mpmath.pi) * mpmath.sin(2 * mpmath.pi * t),
                [a, b]) * n
            assert float(lo[i]) - 1e-12 <= float(exact) <= float(hi[i]) + 1e-12

    def test_half_oscillation(self):
        obs = observable(NoisyMapParams(tau=0.5, eps=1.4, xi=0.1))
        assert abs(obs.half_oscillation.mid - 1.4 / (2 * np.pi)) < 1e-14

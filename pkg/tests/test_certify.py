from __future__ import annotations

from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest

from arnoldnoise.certify import (
    CertificationError,
    CertifiedRun,
    MixingCertificate,
    certify_mixing,
    cover_interval,
    extend_mixing_map,
    extend_mixing_noise,
    shifted_alpha,
    stationary_measure,
    verify_coverage,
)
from arnoldnoise.intervals import IVal
from arnoldnoise.maps import NoiseKernel, NoisyMapParams, kernel_l1_distance
from arnoldnoise.response import rotation_number


@pytest.fixture(scope="module")
def run_7502():
    p = NoisyMapParams(0.7502, 1.4, 0.1)
    return p, CertifiedRun.prepare(p, 1024, depth=24, freeze_tol=5e-4, resolvent=True)


class TestMixing:
    def test_table1_regime_certifies(self, run_7502):
        p, run = run_7502
        cert = certify_mixing(p, 1024, 24, run=run)
        assert cert.is_valid()
        theta = extend_mixing_map(cert)
        # paper-scale radius is about 8.0e-4; desk scale must clear 2e-4
        assert theta.lo >= 2e-4
        assert (1.0 - cert.alpha.hi) / cert.n >= 2 * 21 * 2e-4

    def test_full_circle_kernel_certifies_in_one_step(self):
        cert = certify_mixing(NoisyMapParams(0.7502, 1.4, 1.0), 64, 4)
        assert cert.n == 1
        assert cert.alpha.hi < 1e-9
        assert cert.e_n.hi <= 1.0 / 64

    def test_rotation_with_noise_certifies(self):
        p = NoisyMapParams(0.41421356, 0.0, 0.1)
        cert = certify_mixing(p, 1024, 150, depth=150, freeze_tol=1e-4,
                              operator="composed")
        assert cert.is_valid()

    def test_no_certificate_raises(self):
        p = NoisyMapParams(0.709, 1.4, 0.01)
        with pytest.raises(CertificationError, match="refine"):
            certify_mixing(p, 256, 6, depth=6)

    def test_smallest_strategy(self, run_7502):
        p, run = run_7502
        a = certify_mixing(p, 1024, 24, run=run, strategy="smallest")
        b = certify_mixing(p, 1024, 24, run=run, strategy="best-theta")
        assert a.n <= b.n

    def test_discrete_soundness_random_vectors(self, run_7502):
        # certified beta_n bounds ||M^n g|| / ||g|| for exact rational
        # zero-average test vectors
        p, run = run_7502
        n_steps = 8
        beta = run.profile.betas[n_steps]
        rng = np.random.default_rng(11)
        for _ in range(100):
            g = rng.integers(-8, 9, size=1024).astype(float) / 16.0
            g[0] -= g.sum()  # exact dyadic arithmetic: still a float vector
            norm_g = float(np.abs(g).sum())
            if norm_g == 0:
                continue
            lo = g.copy()
            hi = g.copy()
            for _ in range(n_steps):
                mlo, mhi = run.det.apply_interval(lo, hi)
                lo, hi = run.noise.apply_interval(mlo, mhi)
            from arnoldnoise.ivec import norm1_upper
            # the exact norm lies below the certified upper bound
            exact_upper = norm1_upper(lo, hi)
            assert exact_upper <= beta * norm_g * (1 + 1e-9) + 1e-12


class TestExtensions:
    def _cert(self, alpha, n, xi=0.1, tau=0.7502):
        p = NoisyMapParams(tau, 1.4, xi)
        return MixingCertificate(params=p, partition_n=64, n=n,
                                 alpha=IVal.exact(alpha), scope="true-operator",
                                 kernel_bv=NoiseKernel.for_width(xi).bv_norm,
                                 e_n=IVal.exact(0.0))

    def test_theta_formula(self):
        theta = extend_mixing_map(self._cert(0.5, 10))
        exact = Fraction(1, 2) / (2 * 10 * 21)
        assert abs(theta.lo - float(exact)) < 1e-12
        assert Fraction(theta.lo) <= exact

    def test_theta_monotone_in_alpha(self):
        thetas = [extend_mixing_map(self._cert(a, 10)).lo
                  for a in (0.2, 0.5, 0.8, 0.99)]
        assert all(a > b for a, b in zip(thetas, thetas[1:]))
        assert thetas[-1] > 0

    def test_theta_requires_contraction(self):
        with pytest.raises(CertificationError):
            extend_mixing_map(self._cert(1.0, 10))

    def test_shifted_alpha_inside_ball(self):
        cert = self._cert(0.5, 10)
        theta = extend_mixing_map(cert)
        a2 = shifted_alpha(cert, theta.lo / 2)
        assert 0.5 < a2.hi < 1.0

    def test_noise_extension(self):
        cert = self._cert(0.8, 10)
        a2, ok = extend_mixing_noise(cert, IVal.exact(0.01))
        assert ok and abs(a2.hi - 0.9) < 1e-12
        a3, ok3 = extend_mixing_noise(cert, IVal.exact(0.0))
        assert ok3 and a3.hi == cert.alpha.hi
        _, bad = extend_mixing_noise(cert, IVal.exact(0.05))
        assert not bad

    def test_kernel_l1_distance_value(self):
        d = kernel_l1_distance(0.1, 0.11)
        assert abs(d.mid - 2 * (1 - 0.1 / 0.11)) < 1e-14

    def test_recertify_inside_ball(self, run_7502):
        # extension consistency: certifying directly at tau' inside the
        # ball succeeds whenever the corollary leaves margin
        p, run = run_7502
        cert = certify_mixing(p, 1024, 24, run=run)
        theta = extend_mixing_map(cert)
        tau2 = p.tau + 0.5 * theta.lo
        a2 = shifted_alpha(cert, tau2 - p.tau)
        assert a2.hi < 0.9
        cert2 = certify_mixing(NoisyMapParams(tau2, 1.4, 0.1), 1024, 24)
        assert cert2.is_valid()


class TestStationary:
    def test_rotation_lebesgue_exact(self):
        p = NoisyMapParams(0.3, 0.0, 0.1)
        run = CertifiedRun.prepare(p, 1024, depth=40, freeze_tol=1e-6, resolvent=True)
        dens = stationary_measure(p, 1024, run=run)
        assert np.allclose(dens.masses, 1.0 / 1024, atol=1e-13)
        assert dens.l1_error.hi < 1e-6  # residual-driven, not projection-driven
        rot = rotation_number(dens)
        assert rot.value.contains(0.3)
        assert rot.value.width < 1e-10

    def test_residual_recheck(self, run_7502):
        p, run = run_7502
        dens = stationary_measure(p, 1024, run=run)
        vlo, vhi = dens.values()
        comp = run.composed_matrix()
        ylo, yhi = comp.apply_interval(vlo, vhi)
        moved = float(np.maximum(np.abs(ylo - vhi), np.abs(yhi - vlo)).sum())
        assert moved <= dens.residual.hi * (1 + 1e-6) + 1e-12

    def test_mass_contains_one(self, run_7502):
        p, run = run_7502
        dens = stationary_measure(p, 1024, run=run)
        assert dens.mass_bounds().contains(1.0)

    def test_refinement_consistency(self):
        vals = []
        for n in (512, 1024):
            p = NoisyMapParams(0.76, 1.4, 0.1)
            run = CertifiedRun.prepare(p, n, depth=24, freeze_tol=5e-4, resolvent=True)
            dens = stationary_measure(p, n, run=run)
            vals.append(rotation_number(dens).value)
        assert vals[0].intersects(vals[1])

    def test_densities_at_two_resolutions_close(self):
        ds = []
        for n in (512, 1024):
            p = NoisyMapParams(0.7502, 1.4, 0.1)
            run = CertifiedRun.prepare(p, n, depth=24, freeze_tol=5e-4, resolvent=True)
            ds.append(stationary_measure(p, n, run=run))
        coarse = np.repeat(ds[0].masses, 2) / 2
        dist = float(np.abs(coarse - ds[1].masses).sum())
        assert dist <= ds[0].l1_error.hi + ds[1].l1_error.hi


class TestCoverage:
    def test_small_interval(self):
        proof = cover_interval(1.4, 0.1, 0.75, 0.7505, 1024, 24, max_centers=8)
        assert proof.complete
        assert 1 <= len(proof.centers) <= 5
        pairs = [(Decimal(repr(c.tau)), Decimal(repr(c.theta.lo)))
                 for c in proof.centers]
        assert verify_coverage(pairs, Decimal("0.75"), Decimal("0.7505"))

    def test_checker_rejects_gaps(self):
        pairs = [(Decimal("0.75"), Decimal("0.0001")),
                 (Decimal("0.7504"), Decimal("0.0001"))]
        assert not verify_coverage(pairs, Decimal("0.75"), Decimal("0.7505"))

    def test_checker_rejects_uncovered_edges(self):
        pairs = [(Decimal("0.7502"), Decimal("0.0001"))]
        assert not verify_coverage(pairs, Decimal("0.75"), Decimal("0.7505"))

    def test_full_circle_kernel_single_center(self):
        proof = cover_interval(1.4, 1.0, 0.3, 0.32, 64, 3, max_centers=40)
        assert proof.complete
        # theta = (1 - alpha)/(2 * 1 * 1) is about 1/2: one ball suffices
        assert len(proof.centers) == 1
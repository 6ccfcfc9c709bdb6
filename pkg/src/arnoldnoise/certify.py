"""Rigorous certificates: mixing rates, stationary densities, coverage.

All claims are reduced to finite interval-arithmetic facts:

* mixing certificate (n, alpha): for every zero-average g in L1,
  ||L^n g||_1 <= alpha ||g||_1 for the TRUE annealed operator, via

    alpha(n) = beta_n + (eb + ec) * sum_{j=1}^{n-1} beta_j
               + (ea + eb + ec) + b_spike,

  where beta_k certifies the discrete contraction (engine profile) and
  the e/b constants price one telescoping step (ulam.error_constants;
  derivation in docs/certification.md);

* stationary density: the float fixed point f of the discrete operator
  together with the radius

    ||mu - f||_1 <= e_proj + R (rho + c_loc e_proj) / (1 - R eb)

  valid for EVERY stationary density mu of the true operator: e_proj
  bounds the projection gap of mu, rho is the certified residual of f
  under the closed-form composed matrix, R the certified resolvent bound
  || sum_k M^k |_V || of the two-factor discrete operator and R eb < 1
  bridges the two discretizations;

* extension of mixing in tau (radius theta = (1-alpha)/(2 n ||rho||_BV))
  and in the noise kernel (alpha' = alpha + n ||rho1 - rho2||_L1), and
  interval coverage by overlapping theta-balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

import numpy as np

from . import engine, ivec, transfer, ulam
from .intervals import IVal, up
from .maps import NoiseKernel, NoisyMapParams, kernel_l1_distance


class CertificationError(RuntimeError):
    """A requested certificate cannot be produced at this resolution."""


@dataclass(frozen=True)
class MixingCertificate:
    """Certified ||L^n|_V||_(L1 -> L1) <= alpha < 1 for the true operator."""

    params: NoisyMapParams
    partition_n: int
    n: int
    alpha: IVal
    scope: str
    kernel_bv: IVal
    e_n: IVal

    def is_valid(self) -> bool:
        return self.alpha.hi < 1.0

    def theta(self) -> IVal:
        return extend_mixing_map(self)


@dataclass(frozen=True)
class CertifiedDensity:
    """Float fixed-point vector with a rigorous L1 radius around it.

    masses holds the representative cell masses; together with mass_fix
    added to cell 0 the represented vector has total mass exactly 1.
    l1_error = proj_error + grid_error splits the radius into the
    projection gap of the true density and the grid-vector distance; the
    split lets integration against Lipschitz observables price the first
    part at Lip/2n instead of the full oscillation.
    """

    params: NoisyMapParams
    n: int
    masses: np.ndarray
    mass_fix: IVal
    l1_error: IVal
    proj_error: IVal
    grid_error: IVal
    residual: IVal

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        vlo = self.masses.copy()
        vhi = self.masses.copy()
        vlo[0] = vlo[0] + self.mass_fix.lo
        vhi[0] = vhi[0] + self.mass_fix.hi
        return np.maximum(vlo, 0.0), vhi

    def mass_bounds(self) -> IVal:
        s = ivec.sum_bounds(*self.values())
        return s


@dataclass
class CertifiedRun:
    """Shared heavy artifacts for one (params, partition) pair."""

    params: NoisyMapParams
    part: ulam.Partition
    kernel: NoiseKernel
    consts: ulam.ErrorConstants
    noise: ulam.StochasticIntervalMatrix
    det: ulam.StochasticIntervalMatrix
    op: engine.OperatorData
    result: engine.ProfileResult
    composed: ulam.StochasticIntervalMatrix | None = None

    @property
    def profile(self) -> engine.ContractionProfile:
        return self.result.profile

    @staticmethod
    def prepare(p: NoisyMapParams, n: int, depth: int = 40,
                freeze_tol: float = 1e-3, resolvent: bool = True,
                progress=None) -> "CertifiedRun":
        p.require_noise()
        part = ulam.Partition(n)
        kernel = NoiseKernel.for_params(p)
        det = ulam.assemble_deterministic(p, part)
        noise = ulam.assemble_noise(kernel, part)
        op = engine.OperatorData.build(noise, det)
        result = engine.contraction_profile(op, depth, freeze_tol=freeze_tol,
                                            resolvent=resolvent, progress=progress)
        return CertifiedRun(params=p, part=part, kernel=kernel,
                            consts=ulam.error_constants(p, kernel, part),
                            noise=noise, det=det, op=op, result=result)

    def composed_matrix(self) -> ulam.StochasticIntervalMatrix:
        if self.composed is None:
            self.composed = transfer.assemble_transfer(self.params, self.kernel, self.part)
        return self.composed


def certify_mixing(p: NoisyMapParams, n_grid: int, n_max: int, *,
                   run: CertifiedRun | None = None, depth: int | None = None,
                   freeze_tol: float = 1e-3, strategy: str = "best-theta",
                   operator: str = "two-factor") -> MixingCertificate:
    """Search for (n, alpha) with alpha < 1 bounding the true operator.

    strategy "smallest" returns the first certifying n; "best-theta"
    keeps going up to n_max and returns the n maximizing the extension
    radius (1 - alpha)/n.  operator "two-factor" telescopes against the
    noise-times-transport product (cheap iteration, defect (eb+ec) per
    step); "composed" iterates the closed-form one-step matrix, whose
    telescoping defects are per-cell zero-average and mostly die under
    projection, leaving

      alpha(n) = beta_n + 2 ea + c_loc ea sum_j beta_j + b_spike,

    which rescues slowly mixing systems (small eps) at moderate cost.
    """
    if run is None:
        run = CertifiedRun.prepare(p, n_grid, depth=depth or min(n_max, 40),
                                   freeze_tol=freeze_tol, resolvent=False)
    c = run.consts
    if operator == "two-factor":
        betas = run.profile.betas
        per_step = c.eb + c.ec
        fixed = c.step + c.b_spike
    elif operator == "composed":
        comp = run.composed_matrix()
        opc = engine.OperatorData.from_matrix(comp)
        resc = engine.contraction_profile(opc, depth or min(n_max, 40),
                                          freeze_tol=freeze_tol)
        betas = resc.profile.betas
        per_step = c.c_loc * c.ea
        fixed = c.ea * 2.0 + c.b_spike
    else:
        raise ValueError(f"unknown operator {operator!r}")
    e_n = c.step
    best = None
    acc = IVal.exact(0.0)  # sum of beta_j over past steps
    for n in range(1, min(n_max, len(betas) - 1) + 1):
        alpha = IVal.exact(betas[n]) + per_step * acc + fixed
        acc = acc + IVal.exact(betas[n])
        if alpha.hi < 1.0:
            cert = MixingCertificate(params=p, partition_n=run.part.n, n=n,
                                     alpha=IVal(min(alpha.lo, alpha.hi), alpha.hi),
                                     scope="true-operator",
                                     kernel_bv=run.kernel.bv_norm, e_n=e_n)
            if strategy == "smallest":
                return cert
            score = (1.0 - alpha.hi) / n
            if best is None or score > best[0]:
                best = (score, cert)
    if best is None:
        raise CertificationError(
            f"no certificate at n_grid={n_grid} within n_max={n_max}; refine")
    return best[1]


def extend_mixing_map(cert: MixingCertificate, kernel: NoiseKernel | None = None) -> IVal:
    """Radius theta: every map shifted by |dtau| < theta stays mixing.

    theta = (1 - alpha) / (2 n ||rho||_BV); the shifted system satisfies
    ||L'^n|_V|| <= alpha + 2 n |dtau| ||rho||_BV < 1.
    """
    if cert.alpha.hi >= 1.0:
        raise CertificationError("certificate does not contract (alpha >= 1)")
    bv = (kernel or NoiseKernel.for_params(cert.params)).bv_norm
    theta = (IVal.exact(1.0) - cert.alpha) / (bv * (2 * cert.n))
    return IVal(max(theta.lo, 0.0), max(theta.hi, 0.0))


def shifted_alpha(cert: MixingCertificate, dtau: float,
                  kernel: NoiseKernel | None = None) -> IVal:
    """alpha' for the tau-shifted map inside the theta ball."""
    bv = (kernel or NoiseKernel.for_params(cert.params)).bv_norm
    return cert.alpha + bv * (2 * cert.n) * IVal.exact(abs(dtau))


def extend_mixing_noise(cert: MixingCertificate, l1_dist: IVal) -> tuple[IVal, bool]:
    """alpha' = alpha + n ||rho1 - rho2||_L1 for a perturbed kernel."""
    alpha2 = cert.alpha + IVal.exact(float(cert.n)) * l1_dist
    return alpha2, alpha2.hi < 1.0


def stationary_measure(p: NoisyMapParams, n_grid: int, *,
                       cert: MixingCertificate | None = None,
                       run: CertifiedRun | None = None,
                       depth: int = 60, freeze_tol: float = 1e-3,
                       power_tol: float = 1e-14) -> CertifiedDensity:
    """Certified stationary density on the n-cell grid.

    The radius is valid for every stationary density of the true
    operator; a mixing certificate is not needed for its validity (it
    guarantees uniqueness).  Raises CertificationError when the discrete
    contraction data cannot close the bound (R * eb >= 1).
    """
    if run is None:
        run = CertifiedRun.prepare(p, n_grid, depth=depth,
                                   freeze_tol=freeze_tol, resolvent=True)
    if cert is not None and cert.params != p:
        raise CertificationError("certificate was issued for different parameters")
    c = run.consts
    res = run.result.resolvent_upper()
    if not math.isfinite(res):
        raise CertificationError("discrete contraction too weak; extend depth")

    fhat, iters = engine.power_iterate(run.op, tol=power_tol)
    mass = math.fsum(fhat.tolist())
    fix = IVal.exact(1.0) - IVal(mass, mass) + IVal(-abs(mass) * 2 ** -50, abs(mass) * 2 ** -50)

    comp = run.composed_matrix()
    vlo = fhat.copy()
    vhi = fhat.copy()
    vlo[0] += fix.lo
    vhi[0] += fix.hi
    ylo, yhi = comp.apply_interval(vlo, vhi)
    rlo, rhi = ivec.v_sub(ylo, yhi, vlo, vhi)
    rho = IVal.exact(ivec.norm1_upper(rlo, rhi))

    r_iv = IVal.exact(res)
    denom = IVal.exact(1.0) - r_iv * c.eb
    if denom.lo <= 0.0:
        raise CertificationError(
            f"resolvent bound {res:.3g} times bridge defect {c.eb.hi:.3g} reaches 1; refine")

    def close(e_proj: IVal) -> tuple[IVal, IVal]:
        bracket = r_iv * (rho + c.c_loc * e_proj) / denom
        bracket = IVal(max(bracket.lo, 0.0), bracket.hi)
        return bracket, e_proj + bracket

    # crude variation bound, then bootstrap: the variation of the true
    # stationary density is (1/xi) || g(.+s) - g(.-s) ||_1 with g its
    # pushforward, compared against the computed grid pushforward
    e_proj = run.kernel.var / (2 * n_grid)
    bracket, l1 = close(e_proj)
    var_cap = run.kernel.var.hi
    glo, ghi = run.det.apply_interval(vlo, vhi)
    e_push = transfer.projection_gap_upper(run, vlo, vhi, glo, ghi)
    tvar = transfer.shift_diff_norm_upper(glo, ghi, p.xi)
    for _ in range(3):
        var_boot = (tvar + 2.0 * (l1.hi + e_push)) / p.xi
        if not var_boot < var_cap:
            break
        var_cap = var_boot
        e_proj = IVal(0.0, up(var_boot / (2 * n_grid)))
        bracket, l1 = close(e_proj)

    return CertifiedDensity(params=p, n=n_grid, masses=fhat, mass_fix=fix,
                            l1_error=IVal(0.0, l1.hi),
                            proj_error=IVal(0.0, e_proj.hi),
                            grid_error=IVal(0.0, bracket.hi),
                            residual=rho)


# -- interval coverage -------------------------------------------------------


@dataclass
class CoverageCenter:
    tau: float
    theta: IVal
    n: int
    alpha: IVal
    partition_n: int


@dataclass
class CoverageProof:
    eps: float
    xi: float
    tau_lo: float
    tau_hi: float
    centers: list[CoverageCenter] = field(default_factory=list)
    complete: bool = False
    covered_hi: float = 0.0  # certified right end of the covered prefix

    def covered_interval(self) -> tuple[float, float]:
        if not self.centers:
            return (self.tau_lo, self.tau_lo)
        first = self.centers[0]
        left = up(first.tau - first.theta.lo)
        return (min(left, self.tau_lo), self.covered_hi)


def cover_interval(eps: float, xi: float, tau_lo: float, tau_hi: float,
                   n_grid: int, n_max: int, *, max_centers: int = 64,
                   depth: int | None = None, safety: float = 0.9,
                   progress=None) -> CoverageProof:
    """Cover [tau_lo, tau_hi] by certified mixing balls.

    Marches adaptively: the next center sits safety * (theta_prev +
    predicted theta) past the previous one, retreating on overlap
    failure.  Returns a partial proof (complete=False) when the budget
    runs out; the uncovered gap starts at covered_hi.
    """
    if not tau_lo < tau_hi:
        raise ValueError("need tau_lo < tau_hi")
    proof = CoverageProof(eps=eps, xi=xi, tau_lo=tau_lo, tau_hi=tau_hi)
    prev_right = tau_lo  # certified coverage reaches this point
    prev_theta = None
    tau_c = tau_lo
    for _ in range(max_centers):
        p = NoisyMapParams(tau=tau_c, eps=eps, xi=xi)
        try:
            cert = certify_mixing(p, n_grid, n_max, depth=depth,
                                  strategy="best-theta")
            theta = extend_mixing_map(cert)
        except CertificationError:
            theta = IVal.exact(0.0)
            cert = None
        if cert is None or theta.lo <= 0.0:
            if prev_theta is None:
                return proof
            # retreat halfway toward the last covered point
            tau_c = 0.5 * (max(prev_right - prev_theta.lo, tau_lo) + tau_c)
            prev_theta = IVal.exact(0.5 * prev_theta.lo)
            continue
        left = up(tau_c - theta.lo)
        right = float(Fraction(tau_c) + Fraction(theta.lo))
        right = math.nextafter(tau_c + theta.lo, -math.inf)
        if left > prev_right:
            # overlap failed: retreat toward the covered prefix
            tau_c = 0.5 * (prev_right + tau_c)
            continue
        proof.centers.append(CoverageCenter(tau=tau_c, theta=theta, n=cert.n,
                                            alpha=cert.alpha,
                                            partition_n=cert.partition_n))
        prev_right = right
        proof.covered_hi = right
        prev_theta = theta
        if progress is not None:
            progress(tau_c, theta.lo, prev_right)
        if prev_right > tau_hi:
            proof.complete = True
            return proof
        tau_c = min(tau_c + safety * (theta.lo + theta.lo), tau_hi)
        if tau_c <= proof.centers[-1].tau:
            tau_c = math.nextafter(proof.centers[-1].tau + theta.lo, math.inf)
    return proof


def verify_coverage(pairs: list[tuple[Decimal, Decimal]],
                    tau_lo: Decimal, tau_hi: Decimal) -> bool:
    """Standalone overlap-chain checker on (center, theta) decimal pairs.

    Exact decimal arithmetic only; no interval machinery, no assembly.
    """
    if not pairs:
        return False
    pairs = sorted(pairs)
    lo0 = pairs[0][0] - pairs[0][1]
    if lo0 > tau_lo:
        return False
    reach = pairs[0][0] + pairs[0][1]
    for tau, theta in pairs[1:]:
        if theta <= 0:
            return False
        if tau - theta > reach:
            return False
        reach = max(reach, tau + theta)
    return reach > tau_hi
"""Certified rotation numbers, the non-monotonicity prover, and the
linear response of the rotation number.

The rotation number is the integral of the displacement observable
phi(x) = tau - (eps/2pi) sin(2pi x) against the stationary density; it is
enclosed by pairing the certified density radius against phi in two
pieces: the grid-vector part pays the half-oscillation eps/2pi, the
sub-cell part only Lip(phi)/2n.  The enclosure contains the rotation
number of every stationary measure, hence THE rotation number whenever
the system is mixing.

The derivative formula is  d rho / d tau = 1 + int phi d[(Id-L)^{-1} h0]
with source h0 = (delta_{+xi/2} - delta_{-xi/2})/xi * (pushforward of the
stationary density), i.e. minus the distributional derivative of the
stationary density.  The resolvent is never formed: the Neumann sum runs
on the closed-form composed matrix whose per-step defect against the true
operator is a per-cell zero-average function, priced by the Lipschitz
pairing at its birth step and by one noise-localization factor afterward;
the truncation tail uses the mixing certificate in blocks of n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine, ivec
from .certify import (
    CertificationError,
    CertifiedDensity,
    CertifiedRun,
    MixingCertificate,
)
from .intervals import IVal, up
from .maps import NoisyMapParams, observable
from .transfer import projection_gap_upper


@dataclass(frozen=True)
class RotationEnclosure:
    params: NoisyMapParams
    n: int
    value: IVal
    dens_error: IVal
    quad_error: IVal

    def format(self, digits: int = 6) -> str:
        lo, hi = self.value.format_outward(digits)
        return f"[{lo}, {hi}]"


def rotation_number(dens: CertifiedDensity, p: NoisyMapParams | None = None) -> RotationEnclosure:
    """Enclosure of int phi d(mu) for every stationary density mu."""
    p = p or dens.params
    if p != dens.params:
        raise ValueError("density was certified for different parameters")
    obs = observable(p)
    alo, ahi = obs.cell_averages(dens.n)
    vlo, vhi = dens.values()
    base = ivec.dot_bounds(vlo, vhi, alo, ahi)
    grid_slack = (obs.half_oscillation * dens.grid_error).hi
    proj_slack = (obs.lip_bound * dens.proj_error / (2 * dens.n)).hi
    slack = up(grid_slack + proj_slack)
    value = IVal(down_sub(base.lo, slack), up(base.hi + slack))
    return RotationEnclosure(params=p, n=dens.n, value=value,
                             dens_error=dens.l1_error,
                             quad_error=IVal(0.0, up(base.width)))


def down_sub(a: float, b: float) -> float:
    return math.nextafter(a - b, -math.inf)


# -- non-monotonicity ----------------------------------------------------------


@dataclass(frozen=True)
class MonotonicityWitness:
    """Certified violation of monotonicity on a sorted tau-sweep."""

    decrease: tuple[int, int]          # indices i < j with max I_j < min I_i
    increase: tuple[int, int] | None   # indices j < k with min I_k > max I_j
    decrease_margin: float
    increase_margin: float | None

    @property
    def conclusive(self) -> bool:
        return self.increase is not None


class InconclusiveError(RuntimeError):
    def __init__(self, msg: str, needed_width: float):
        super().__init__(msg)
        self.needed_width = needed_width


def prove_nonmonotone(rows: list[RotationEnclosure]) -> MonotonicityWitness:
    """Certified decrease-then-increase witness on a tau-sorted sweep.

    Requires strictly disjoint interval pairs (no touching endpoints).
    Raises InconclusiveError with an estimate of the width reduction that
    would separate the closest candidate pair.
    """
    if len(rows) < 3:
        raise ValueError("need at least 3 rows")
    taus = [r.params.tau for r in rows]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("rows must be sorted by strictly increasing tau")

    best = None          # (score, i, j, k, dec_margin, inc_margin)
    best_dec = None      # (margin, i, j)
    m = len(rows)
    for j in range(m):
        dec = None
        for i in range(j):
            margin = rows[i].value.lo - rows[j].value.hi
            if margin > 0 and (dec is None or margin > dec[0]):
                dec = (margin, i)
        if dec is not None and (best_dec is None or dec[0] > best_dec[0]):
            best_dec = (dec[0], dec[1], j)
        if dec is None:
            continue
        for k in range(j + 1, m):
            inc = rows[k].value.lo - rows[j].value.hi
            if inc > 0:
                score = min(dec[0], inc)
                if best is None or score > best[0]:
                    best = (score, dec[1], j, k, dec[0], inc)
    if best is not None:
        _, i, j, k, dm, im = best
        return MonotonicityWitness(decrease=(i, j), increase=(j, k),
                                   decrease_margin=dm, increase_margin=im)
    if best_dec is not None:
        return MonotonicityWitness(decrease=(best_dec[1], best_dec[2]),
                                   increase=None,
                                   decrease_margin=best_dec[0],
                                   increase_margin=None)
    gap = min(rows[i].value.hi - rows[j].value.lo
              for i in range(m) for j in range(i + 1, m))
    raise InconclusiveError(
        "no certified decrease: all enclosures overlap", max(gap, 0.0))


def fd_quotient(left: RotationEnclosure, right: RotationEnclosure) -> IVal:
    """Certified centered difference quotient of two rotation enclosures."""
    h = right.params.tau - left.params.tau
    return (right.value - left.value) / IVal.exact(h)


# -- linear response -----------------------------------------------------------


@dataclass(frozen=True)
class DerivativeEnclosure:
    params: NoisyMapParams
    n: int
    value: IVal
    neumann_terms: int
    tail_bound: IVal
    defect_bound: IVal


def response_derivative(p: NoisyMapParams, dens: CertifiedDensity,
                        cert: MixingCertificate, *, run: CertifiedRun | None = None,
                        m_blocks: int = 12, tol: float | None = None) -> DerivativeEnclosure:
    """Certified enclosure of d rho / d tau at p.

    Requires a valid true-operator mixing certificate (assumption LR1);
    every error term is derived in docs/certification.md section 5.
    """
    if not cert.is_valid():
        raise CertificationError("mixing certificate does not contract")
    if cert.params != p or dens.params != p:
        raise CertificationError("certificate/density belong to different parameters")
    if run is None:
        run = CertifiedRun.prepare(p, dens.n, depth=20, freeze_tol=1e-3, resolvent=False)
    n = dens.n
    xi = p.xi
    s = 0.5 * xi
    obs = observable(p)
    consts = run.consts
    r_true = true_resolvent_bound(cert)  # sum_k ||L^k|_V|| <= n/(1-alpha)

    # grid pushforward of the density and its variation
    vlo, vhi = dens.values()
    glo, ghi = run.det.apply_interval(vlo, vhi)
    var_g = grid_variation_upper(glo, ghi)

    # source: two-tap realization of (delta_{+s} - delta_{-s})/(2s) * g
    hlo, hhi = shift_difference(glo, ghi, s, n)

    comp = run.composed_matrix()
    # Neumann sum of the composed matrix with certified per-step norms
    slo = hlo.copy()
    shi = hhi.copy()
    xlo, xhi = hlo, hhi
    norms = [ivec.norm1_upper(xlo, xhi)]
    k_max = max(2, m_blocks * cert.n)
    tol = tol if tol is not None else 1e-5 * max(norms[0], 1.0)
    k = 0
    for k in range(1, k_max):
        xlo, xhi = comp.apply_interval(xlo, xhi)
        slo, shi = ivec.v_add(slo, shi, xlo, xhi)
        norms.append(ivec.norm1_upper(xlo, xhi))
        if norms[-1] < tol:
            break
    m_sum = up(math.fsum(norms) * (1 + 1e-12))
    m_last = norms[-1]

    # main term: 1 + int phi dS
    alo, ahi = obs.cell_averages(n)
    base = ivec.dot_bounds(slo, shi, alo, ahi)

    half_osc = obs.half_oscillation.hi
    lip_pair = (obs.lip_bound / (2 * n)).hi
    c_loc = consts.c_loc.hi
    ea = consts.ea.hi

    # (i) density error through the source: eta = D_s pushforward(mu - f)
    eta = (dens.l1_error.hi / s)
    term_eta = up(half_osc * r_true * eta + 1e-300)
    # (ii) sub-cell parts of the source (pushforward oscillation and the
    # fractional-shift residue), priced at birth by the Lipschitz pairing
    # and afterwards through one noise localization
    e_push = projection_gap_upper(run, vlo, vhi, glo, ghi)
    shift_res = up(var_g / (4 * n * s))
    zeta0 = up((e_push / s) + 2 * shift_res)
    term_zeta = up(zeta0 * (lip_pair + half_osc * c_loc * r_true))
    # (iii) per-step projection defects of the Neumann iteration
    term_step = up(ea * m_sum * (lip_pair + half_osc * c_loc * r_true))
    # (iv) truncation tail through the certificate blocks
    blocks = max(0, (k + 1) // cert.n)
    tail_norm = up((m_last + ea * m_sum * (1 + c_loc)) * cert.n
                   * cert.alpha.hi ** blocks / (1.0 - cert.alpha.hi))
    term_tail = up(half_osc * tail_norm)

    defect = up(term_eta + term_zeta + term_step)
    slack = up(defect + term_tail)
    value = IVal(down_sub(1.0 + base.lo, slack), up(1.0 + base.hi + slack))
    return DerivativeEnclosure(params=p, n=n, value=value, neumann_terms=k + 1,
                               tail_bound=IVal(0.0, term_tail),
                               defect_bound=IVal(0.0, defect))


def true_resolvent_bound(cert: MixingCertificate) -> float:
    """Upper bound on sum_k ||L^k|_V||: n terms per block, blocks decay."""
    return up(cert.n / (1.0 - cert.alpha.hi))


def grid_variation_upper(vlo: np.ndarray, vhi: np.ndarray) -> float:
    """Upper bound on the grid variation of the step density n*v."""
    n = vlo.size
    d = np.maximum(np.abs(vhi - np.roll(vlo, 1)), np.abs(vlo - np.roll(vhi, 1)))
    return up(float(np.sum(d)) * n * (1 + 1e-12))


def shift_difference(glo: np.ndarray, ghi: np.ndarray, s: float, n: int):
    """Two-tap realization of [(delta_{+s} - delta_{-s})/(2s)] * g on the grid.

    The projected translate of a step function by +s mixes each cell with
    its neighbor with weights (1-frac, frac); exact up to rounding.
    """
    c = s * n
    k = int(math.floor(c))
    frac = c - k
    w0 = IVal.exact(1.0) - IVal.exact(frac)
    w1 = IVal.exact(frac)

    def tap(vlo, vhi, shift):
        a_lo, a_hi = ivec.v_scale(np.roll(vlo, shift), np.roll(vhi, shift), w0)
        b_lo, b_hi = ivec.v_scale(np.roll(vlo, shift + 1), np.roll(vhi, shift + 1), w1)
        return ivec.v_add(a_lo, a_hi, b_lo, b_hi)

    plo, phi_ = tap(glo, ghi, k)
    # translate by -s mixes with weights (frac, 1-frac) on offsets -k-1, -k
    m2lo, m2hi = ivec.v_scale(np.roll(glo, -k - 1), np.roll(ghi, -k - 1), w1)
    m3lo, m3hi = ivec.v_scale(np.roll(glo, -k), np.roll(ghi, -k), w0)
    mlo, mhi = ivec.v_add(m2lo, m2hi, m3lo, m3hi)
    dlo, dhi = ivec.v_sub(plo, phi_, mlo, mhi)
    scale = IVal.exact(1.0) / IVal.exact(2 * s)
    return ivec.v_scale(dlo, dhi, scale)

"""Ulam discretization of the annealed transfer operator.

The one-step operator is L f = rho_xi * (pushforward of f by T); its finite
rank approximation on the uniform n-cell partition is the product of two
column-stochastic interval matrices:

  * a deterministic factor whose entry (i, j) encloses the fraction of
    cell j carried into cell i by T, assembled per monotone branch from
    certified preimages of the cell grid;
  * a circulant noise factor whose column is the exact cell-averaged
    circle convolution of the uniform kernel with a cell indicator
    (piecewise quadratic closed form, evaluated in interval arithmetic).

Columns index source cells, rows index target cells.  Source cells whose
closure meets a critical-point enclosure get the full-cell fallback column
with the column-sum repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp

from . import ivec
from .intervals import IVal, down, up
from .maps import (
    Branch,
    NoiseKernel,
    NoisyMapParams,
    branch_decompose,
    lift_eval,
)

Mode = Literal["certified", "float"]


@dataclass(frozen=True)
class Partition:
    """Uniform partition of the circle into n cells [i/n, (i+1)/n)."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("partition needs at least 2 cells")

    @property
    def width(self) -> float:
        return 1.0 / self.n

    def edges(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n


class ColumnSumError(AssertionError):
    """A certified column sum failed to contain 1."""


class StochasticIntervalMatrix:
    """Interval enclosure of a column-stochastic matrix.

    structure is one of "deterministic" (sparse lo/hi pair),
    "circulant-noise" (a single interval stencil column) or "composed"
    (noise applied after deterministic).  mode "float" keeps midpoints
    only and carries no guarantees.
    """

    def __init__(self, n: int, structure: str, mode: Mode, *,
                 det_lo: sp.csr_matrix | None = None,
                 det_hi: sp.csr_matrix | None = None,
                 stencil_lo: np.ndarray | None = None,
                 stencil_hi: np.ndarray | None = None,
                 parts: tuple["StochasticIntervalMatrix", "StochasticIntervalMatrix"] | None = None):
        self.n = n
        self.structure = structure
        self.mode = mode
        self.det_lo = det_lo
        self.det_hi = det_hi
        self.stencil_lo = stencil_lo
        self.stencil_hi = stencil_hi
        self.parts = parts
        self._float_csr: sp.csr_matrix | None = None
        if structure == "deterministic":
            self.colw_half = np.asarray((det_hi - det_lo).sum(axis=0)).ravel() * 0.5
            self.colw_half = ivec.bump_up(self.colw_half)
        elif structure == "circulant-noise":
            w = float(np.sum(stencil_hi - stencil_lo))
            self.colw_half = np.full(n, up(0.5 * up(w * (1 + 1e-15))))
            self.plateau, self.d0, self.taps = _plateau_structure(stencil_lo, stencil_hi)
        elif structure == "composed":
            self.colw_half = None
        else:
            raise ValueError(f"unknown structure {structure!r}")

    # -- generic access -------------------------------------------------

    def entry(self, i: int, j: int) -> IVal:
        if self.structure == "deterministic":
            return IVal(self.det_lo[i, j], self.det_hi[i, j])
        if self.structure == "circulant-noise":
            d = (i - j) % self.n
            return IVal(float(self.stencil_lo[d]), float(self.stencil_hi[d]))
        lo, hi = self.dense()
        return IVal(float(lo[i, j]), float(hi[i, j]))

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense lo/hi arrays; intended for small n (tests, oracles)."""
        if self.structure == "deterministic":
            return self.det_lo.toarray(), self.det_hi.toarray()
        if self.structure == "circulant-noise":
            idx = (np.arange(self.n)[:, None] - np.arange(self.n)[None, :]) % self.n
            return self.stencil_lo[idx], self.stencil_hi[idx]
        noise, det = self.parts
        nlo, nhi = noise.dense()
        dlo, dhi = det.dense()
        # all factors nonnegative: directed product with 1-ulp bumps
        lo = ivec.bump_down(nlo @ dlo)
        hi = ivec.bump_up(nhi @ dhi)
        pad = len(nlo) * np.spacing(np.maximum(hi, 1e-300))
        return np.maximum(lo - pad, 0.0), hi + pad

    def column_sums(self) -> tuple[np.ndarray, np.ndarray]:
        if self.structure == "deterministic":
            slo = np.asarray(self.det_lo.sum(axis=0)).ravel()
            shi = np.asarray(self.det_hi.sum(axis=0)).ravel()
            pad = (self.n + 2) * 2.0 ** -53 * np.maximum(shi, 1.0)
            return ivec.bump_down(slo - pad), ivec.bump_up(shi + pad)
        if self.structure == "circulant-noise":
            s = ivec.sum_bounds(self.stencil_lo, self.stencil_hi)
            return np.full(self.n, s.lo), np.full(self.n, s.hi)
        noise, det = self.parts
        nlo, nhi = noise.column_sums()
        dlo, dhi = det.column_sums()
        return ivec.bump_down(np.min(nlo) * dlo), ivec.bump_up(np.max(nhi) * dhi)

    def verify_column_stochastic(self) -> None:
        slo, shi = self.column_sums()
        if not (np.all(slo <= 1.0) and np.all(shi >= 1.0)):
            worst = float(np.max(np.abs(0.5 * (slo + shi) - 1.0)))
            raise ColumnSumError(f"column sums fail to contain 1 (worst dev {worst:.3e})")

    def to_float(self) -> sp.csr_matrix | np.ndarray:
        """Midpoint float representation, columns renormalized to sum to 1.

        Exploration only; never an input to certification.
        """
        if self.structure == "deterministic":
            if self._float_csr is None:
                m = sp.csr_matrix((self.det_lo + self.det_hi) * 0.5)
                sums = np.asarray(m.sum(axis=0)).ravel()
                m = m @ sp.diags(1.0 / sums)
                self._float_csr = sp.csr_matrix(m)
            return self._float_csr
        if self.structure == "circulant-noise":
            c = 0.5 * (self.stencil_lo + self.stencil_hi)
            return c / c.sum()
        raise ValueError("composed matrices have no single float form")

    def export_triplets(self, path: str, digits: int = 17) -> None:
        """Sparse snapshot `row col lo hi` (outward-rounded decimals)."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# n={self.n} structure={self.structure} mode={self.mode}\n")
            if self.structure == "circulant-noise":
                nz = np.nonzero(self.stencil_hi)[0]
                for d in nz:
                    lo, hi = IVal(float(self.stencil_lo[d]), float(self.stencil_hi[d])).format_outward(digits)
                    fh.write(f"* {d} {lo} {hi}\n")
                return
            coo = self.det_hi.tocoo()
            lo_csr = self.det_lo.tocsr()
            for i, j in zip(coo.row, coo.col):
                v = IVal(lo_csr[i, j], self.det_hi[i, j])
                lo, hi = v.format_outward(digits)
                fh.write(f"{i} {j} {lo} {hi}\n")

    # -- interval application -------------------------------------------

    def apply_interval(self, vlo: np.ndarray, vhi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.structure == "deterministic":
            return _det_apply_interval(self.det_lo, self.det_hi, vlo, vhi)
        if self.structure == "circulant-noise":
            return _circulant_apply_interval(self.stencil_lo, self.stencil_hi, vlo, vhi,
                                             self.plateau, self.d0, self.taps)
        noise, det = self.parts
        mlo, mhi = det.apply_interval(vlo, vhi)
        return noise.apply_interval(mlo, mhi)


def compose(noise: StochasticIntervalMatrix, det: StochasticIntervalMatrix) -> StochasticIntervalMatrix:
    if noise.n != det.n:
        raise ValueError(f"dimension mismatch: noise n={noise.n}, det n={det.n}")
    if noise.structure != "circulant-noise" or det.structure != "deterministic":
        raise ValueError("compose expects (circulant-noise, deterministic)")
    return StochasticIntervalMatrix(det.n, "composed", det.mode, parts=(noise, det))


def compose_and_apply(noise: StochasticIntervalMatrix, det: StochasticIntervalMatrix,
                      vlo: np.ndarray, vhi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Enclosure of (noise . det) v without forming the dense product."""
    if noise.n != det.n or vlo.shape[0] != det.n:
        raise ValueError("dimension mismatch")
    mlo, mhi = det.apply_interval(vlo, vhi)
    return noise.apply_interval(mlo, mhi)


def _det_apply_interval(dlo: sp.csr_matrix, dhi: sp.csr_matrix,
                        vlo: np.ndarray, vhi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interval matvec for a nonnegative interval matrix."""
    vlo_p, vlo_n = np.maximum(vlo, 0.0), np.minimum(vlo, 0.0)
    vhi_p, vhi_n = np.maximum(vhi, 0.0), np.minimum(vhi, 0.0)
    lo = dlo @ vlo_p + dhi @ vlo_n
    hi = dhi @ vhi_p + dlo @ vhi_n
    mag = dhi @ np.maximum(np.abs(vlo), np.abs(vhi))
    pad = ivec.bump_up(mag * (32 * 2.0 ** -53))
    return ivec.bump_down(lo - pad), ivec.bump_up(hi + pad)


def _plateau_structure(clo: np.ndarray, chi: np.ndarray):
    """Split a circulant stencil into a flat plateau plus edge taps.

    The interior of the uniform-kernel stencil consists of identical
    entries (the same closed-form computation), so the apply can use one
    sliding-window sum plus a handful of explicit taps.
    """
    n = clo.shape[0]
    pl = IVal(float(clo[0]), float(chi[0]))
    d0 = 0
    while d0 + 1 <= n // 2:
        d = d0 + 1
        if (clo[d] == pl.lo and chi[d] == pl.hi
                and clo[-d % n] == pl.lo and chi[-d % n] == pl.hi
                and 2 * d < n):
            d0 = d
        else:
            break
    offsets = []
    for d in range(n):
        if chi[d] == 0.0 and clo[d] == 0.0:
            continue
        signed = d if d <= n // 2 else d - n
        if abs(signed) <= d0:
            continue
        offsets.append(d)
    taps = [(d, IVal(float(clo[d]), float(chi[d]))) for d in offsets]
    return pl, d0, taps


def _window_sums(v: np.ndarray, d0: int) -> tuple[np.ndarray, float]:
    """Circular sums over offsets |d| <= d0 and a bound on their float error.

    Returns raw round-to-nearest sums; the absolute error of each is at
    most gamma_(n+L) * sum|v|, accounted by the caller.
    """
    n = v.shape[0]
    ext = np.concatenate([v, v[: 2 * d0]])
    c = np.concatenate([[0.0], np.cumsum(ext)])
    w = c[2 * d0 + 1:] - c[: n]
    return np.roll(w, d0), float(np.sum(np.abs(v)))


def _circulant_apply_interval(clo: np.ndarray, chi: np.ndarray,
                              vlo: np.ndarray, vhi: np.ndarray,
                              plateau: IVal | None = None, d0: int = 0,
                              taps=None) -> tuple[np.ndarray, np.ndarray]:
    """Interval circulant apply: plateau window sum plus edge taps."""
    n = clo.shape[0]
    if plateau is None:
        plateau, d0, taps = _plateau_structure(clo, chi)
    g = ivec.gamma_n(n + 2 * d0 + 4)
    wlo, mag_lo = _window_sums(vlo, d0)
    whi, mag_hi = _window_sums(vhi, d0)
    err = up(4.0 * g * max(mag_lo, mag_hi))
    wlo = wlo - err
    whi = whi + err
    lo, hi = ivec.v_mul(wlo, whi, np.asarray(plateau.lo), np.asarray(plateau.hi))
    acc_lo, acc_hi = lo, hi
    for d, a in taps:
        t_lo, t_hi = ivec.v_mul(np.roll(vlo, d), np.roll(vhi, d),
                                np.asarray(a.lo), np.asarray(a.hi))
        acc_lo, acc_hi = ivec.v_add(acc_lo, acc_hi, t_lo, t_hi)
    return acc_lo, acc_hi


# -- noise circulant assembly ----------------------------------------------


def _triangle_window_integral(d: int, n: int, xi: float) -> IVal:
    """integral over v of (1/n - |v|)+ restricted to v + d/n in the kernel
    support (mod 1); the exact overlap driving stencil entry d."""
    h = IVal.exact(1.0) / n
    xi2 = IVal.exact(xi) / 2
    dn = IVal.exact(float(d)) / n
    total = IVal.exact(0.0)
    for m in (-1.0, 0.0, 1.0):
        a = -xi2 - dn + m
        b = xi2 - dn + m
        a_cl = IVal(min(max(a.lo, -h.hi), h.hi), min(max(a.hi, -h.hi), h.hi))
        b_cl = IVal(min(max(b.lo, -h.hi), h.hi), min(max(b.hi, -h.hi), h.hi))
        if b_cl.hi <= a_cl.lo:
            continue
        total = total + _tri_antideriv(b_cl, h) - _tri_antideriv(a_cl, h)
    return IVal(max(total.lo, 0.0), max(total.hi, 0.0))


def _tri_antideriv(v: IVal, h: IVal) -> IVal:
    """Antiderivative G(v) = h v - sign(v) v^2 / 2 of (h - |v|), clamped
    evaluation points only."""
    lo_val = _tri_antideriv_pt(v.lo, h)
    hi_val = _tri_antideriv_pt(v.hi, h)
    return lo_val.hull(hi_val)


def _tri_antideriv_pt(x: float, h: IVal) -> IVal:
    xv = IVal.exact(x)
    q = xv.sqr() * 0.5
    return h * xv - q if x >= 0 else h * xv + q


def assemble_noise(kernel: NoiseKernel, part: Partition, mode: Mode = "certified") -> StochasticIntervalMatrix:
    """Circulant matrix of the cell-averaged circle convolution.

    Stencil entry d = (n/xi) * (triangle-window overlap), the mass fraction
    a uniform cell density sends d cells ahead.
    """
    n = part.n
    xi = kernel.xi
    reach = int(math.ceil(n * (xi / 2) + 1)) + 1
    scale = IVal.exact(float(n)) / IVal.exact(xi)
    clo = np.zeros(n)
    chi = np.zeros(n)
    # one canonical signed offset per residue class
    for d in range(-min(n // 2, reach), min(n - n // 2, reach + 1)):
        q = scale * _triangle_window_integral(d, n, xi)
        q = IVal(max(0.0, q.lo), min(1.0, q.hi))
        idx = d % n
        clo[idx], chi[idx] = q.lo, q.hi
    m = StochasticIntervalMatrix(n, "circulant-noise", mode,
                                 stencil_lo=clo, stencil_hi=chi)
    if mode == "certified":
        m.verify_column_stochastic()
    return m


# -- deterministic assembly --------------------------------------------------


def _branch_bands(br: Branch, n: int):
    """Band boundaries (enclosures) and target cell labels for one branch."""
    img = br.image
    k_start = math.ceil(img.lo * n - 1e-12)
    k_end = math.floor(img.hi * n + 1e-12)
    if k_start > k_end:
        lab = np.array([int(math.floor(img.lo * n)) % n])
        b_lo = np.array([br.lo.lo, br.hi.lo])
        b_hi = np.array([br.lo.hi, br.hi.hi])
        return b_lo, b_hi, lab
    targets = np.arange(k_start, k_end + 1, dtype=np.float64) / n
    if not br.increasing:
        targets = targets[::-1]
    xlo, xhi = br.solve(targets)
    xlo = np.minimum(np.maximum(xlo, br.lo.lo), br.hi.hi)
    xhi = np.minimum(np.maximum(xhi, br.lo.lo), br.hi.hi)
    b_lo = np.concatenate([[br.lo.lo], xlo, [br.hi.lo]])
    b_hi = np.concatenate([[br.lo.hi], xhi, [br.hi.hi]])
    b_lo = np.maximum.accumulate(b_lo)
    b_hi = np.maximum.accumulate(b_hi)
    ks = np.arange(k_start, k_end + 1)
    if br.increasing:
        lab = np.concatenate([[k_start - 1], ks]) % n
    else:
        lab = np.concatenate([[k_end], ks[::-1] - 1]) % n
    return b_lo, b_hi, lab


def assemble_deterministic(p: NoisyMapParams, part: Partition,
                           mode: Mode = "certified") -> StochasticIntervalMatrix:
    """Ulam matrix of the deterministic map (column-stochastic enclosure).

    Cells holding a critical point are swept like any other: the branch
    domains end at the breakpoint enclosures, so their preimage bands tile
    such a cell up to slivers of the enclosure width, and band solves
    clamped at the fold stay a few ulps wide away from it (about
    sqrt(eps_machine) at the fold itself, the attainable resolution
    there).  A coarse [0, 1] fallback would instead put an irreducible
    unit of radius into every certified iteration, making certificates
    impossible.
    """
    n = part.n
    decomp = branch_decompose(p)

    rows_all, cols_all, lo_all, hi_all = [], [], [], []
    for br in decomp.branches:
        b_lo, b_hi, lab = _branch_bands(br, n)
        u_lo, u_hi = b_lo[:-1], b_hi[:-1]
        v_lo, v_hi = b_lo[1:], b_hi[1:]
        j_first = np.floor(u_lo * n).astype(np.int64)
        j_last = np.floor(ivec.bump_down(v_hi) * n).astype(np.int64)
        j_last = np.maximum(j_last, j_first)
        counts = j_last - j_first + 1
        band_idx = np.repeat(np.arange(lab.size), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        j = j_first[band_idx] + offs
        cl = j / n
        cr = (j + 1) / n
        ul, uh = u_lo[band_idx], u_hi[band_idx]
        vl, vh = v_lo[band_idx], v_hi[band_idx]
        len_lo = np.maximum(0.0, ivec.bump_down(np.minimum(vl, cr) - np.maximum(uh, cl)))
        len_hi = np.maximum(0.0, ivec.bump_up(np.minimum(vh, cr) - np.maximum(ul, cl)))
        e_lo = np.maximum(0.0, ivec.bump_down(len_lo * n))
        e_hi = np.minimum(1.0, ivec.bump_up(len_hi * n))
        keep = e_hi > 0.0
        rows_all.append(lab[band_idx][keep])
        cols_all.append((j % n)[keep])
        lo_all.append(e_lo[keep])
        hi_all.append(e_hi[keep])

    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    lo = np.concatenate(lo_all)
    hi = np.concatenate(hi_all)

    # group duplicate (row, col) pairs with a directed-rounding pad
    key = rows.astype(np.int64) * n + cols
    order = np.argsort(key, kind="stable")
    key, rows, cols, lo, hi = key[order], rows[order], cols[order], lo[order], hi[order]
    boundary = np.concatenate([[True], key[1:] != key[:-1]])
    starts = np.nonzero(boundary)[0]
    counts = np.diff(np.concatenate([starts, [key.size]]))
    g_lo = np.add.reduceat(lo, starts)
    g_hi = np.add.reduceat(hi, starts)
    pad = counts * np.spacing(np.maximum(g_hi, 1e-300))
    g_lo = np.maximum(0.0, g_lo - pad)
    g_hi = np.minimum(1.0, g_hi + pad)
    r, c = rows[starts], cols[starts]

    det_lo = sp.csr_matrix((g_lo, (r, c)), shape=(n, n))
    det_hi = sp.csr_matrix((g_hi, (r, c)), shape=(n, n))
    m = StochasticIntervalMatrix(n, "deterministic", mode, det_lo=det_lo, det_hi=det_hi)
    if mode == "certified":
        m.verify_column_stochastic()
    return m


# -- discretization error constants ------------------------------------------


@dataclass(frozen=True)
class ErrorConstants:
    """Assembled per-step constants of the certified telescoping.

    With kappa = Var(rho_xi), c_edge = min(1/n, xi, 1-xi)/xi and
    D = sup|T'| / n:

      ea      = kappa / (2n)        projection defect of a post-noise image
      eb      = 2 c_edge            noise of a per-cell zero-mass residue
      ec      = ea                  projection of the chain input (k >= 2)
      step    = ea + eb + ec        one-step defect ||(L - A)h|| <= step ||h||
      c_loc   = min(1, min(D, xi, 1-xi)/xi)
                one noise step applied to per-cell zero-mass mass m costs
                <= c_loc * m after transport by T
      b_spike = min(2, 2 c_loc)     unprojected input correction
    """

    ea: IVal
    eb: IVal
    ec: IVal
    step: IVal
    c_loc: IVal
    b_spike: IVal


def error_constants(p: NoisyMapParams, kernel: NoiseKernel, part: Partition) -> ErrorConstants:
    p.require_noise()
    n = part.n
    xi = kernel.xi
    one = IVal.exact(1.0)
    ea = kernel.var / (2 * n)
    # 1 - xi is exact for xi >= 1/2 (Sterbenz), so xi = 1 gives sep = 0
    one_minus = (1.0 - xi) if xi >= 0.5 else up(1.0 - xi)
    sep = min(xi, one_minus)
    edge = IVal.exact(min(1.0 / n, sep)) / IVal.exact(xi) if sep > 0 else IVal.exact(0.0)
    eb = edge * 2.0
    step = ea + eb + ea
    d_max = IVal.exact(p.deriv_sup()) / n
    num = IVal.exact(min(d_max.hi, sep)) if sep > 0 else IVal.exact(0.0)
    c_loc = num / IVal.exact(xi)
    if c_loc.hi > 1.0:
        c_loc = IVal(min(c_loc.lo, 1.0), 1.0)
    b_spike = c_loc * 2.0
    if b_spike.hi > 2.0:
        b_spike = IVal(min(b_spike.lo, 2.0), 2.0)
    return ErrorConstants(ea=ea, eb=eb, ec=ea, step=step, c_loc=c_loc, b_spike=b_spike)


def discretization_error(p: NoisyMapParams, kernel: NoiseKernel, part: Partition) -> IVal:
    """Per-step defect E_N of the composed discretized operator.

    ||(L - A) h||_L1 <= E_N ||h||_L1 along the certified iteration chain,
    where A projects, transports, projects and convolves on the n-cell
    grid; see docs/certification.md for the derivation of the three
    ingredients.
    """
    return error_constants(p, kernel, part).step

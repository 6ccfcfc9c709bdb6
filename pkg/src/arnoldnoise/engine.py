"""Certified high-throughput iteration of the discretized operator.

The contraction profile needs every basis vector e_i - u pushed through
dozens of operator steps, which is the dominant cost of a certificate.
Vectors are carried in midpoint-radius ("ball") form: a float64 matrix of
column midpoints plus one rigorous L1 radius per column.  One operator
step costs a sparse gather (deterministic factor), a sliding window sum
plus a few taps (noise factor) and two reductions; every float error made
along the way is folded into the radii through precomputed constants.

For an interval matrix enclosure [A_lo, A_hi] with stored float center C,
true A and a column x_true = x + e with ||e||_1 <= r:

  ||A x_true - fl(C x)||_1 <= sum_j w_j |x_j|  +  (1 + om) r  +  fl-error

with w_j an upper bound on the column-j L1 distance of A to C and
1 + om an upper bound on the column L1 norms of A.  The fl-error of the
sparse product is gamma_K (1 + om) ||x||_1 and of the window recurrence
gamma_{2n+4} * 4 ||x||_1 per unit plateau height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from . import ivec
from .intervals import IVal, up
from .ulam import StochasticIntervalMatrix

_U = 2.0 ** -53


# -- numba kernels ----------------------------------------------------------


@numba.njit(cache=True, parallel=True, fastmath=False)
def _csr_apply(indptr, indices, data, x, out):
    n, b = out.shape
    for i in numba.prange(n):
        for c in range(b):
            out[i, c] = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            v = data[k]
            for c in range(b):
                out[i, c] += v * x[j, c]


_CHUNKS = 32


@numba.njit(cache=True, parallel=True, fastmath=False)
def _abs_reductions(x, w, s_out, t_out):
    """s = column sums of |x|, t = column sums of w_i |x_i :|."""
    n, b = x.shape
    s_part = np.zeros((_CHUNKS, b))
    t_part = np.zeros((_CHUNKS, b))
    for tid in numba.prange(_CHUNKS):
        i0 = tid * n // _CHUNKS
        i1 = (tid + 1) * n // _CHUNKS
        for i in range(i0, i1):
            wi = w[i]
            for c in range(b):
                a = abs(x[i, c])
                s_part[tid, c] += a
                t_part[tid, c] += wi * a
    for c in range(b):
        s = 0.0
        t = 0.0
        for tid in range(_CHUNKS):
            s += s_part[tid, c]
            t += t_part[tid, c]
        s_out[c] = s
        t_out[c] = t


@numba.njit(cache=True, parallel=True, fastmath=False)
def _window_apply(x, d0, scale, out):
    """out[i] = scale * sum_{|d| <= d0} x[(i - d) mod n] per column chunk."""
    n, b = x.shape
    for tid in numba.prange(_CHUNKS):
        c0 = tid * b // _CHUNKS
        c1 = (tid + 1) * b // _CHUNKS
        if c0 >= c1:
            continue
        acc = np.zeros(c1 - c0)
        for j in range(-d0, d0 + 1):
            jj = j % n
            for c in range(c0, c1):
                acc[c - c0] += x[jj, c]
        for c in range(c0, c1):
            out[0, c] = scale * acc[c - c0]
        for i in range(1, n):
            jin = (i + d0) % n
            jout = (i - d0 - 1) % n
            for c in range(c0, c1):
                acc[c - c0] += x[jin, c] - x[jout, c]
                out[i, c] = scale * acc[c - c0]


@numba.njit(cache=True, parallel=True, fastmath=False)
def _add_taps(y, x, offs, vals):
    n, b = y.shape
    for i in numba.prange(n):
        for k in range(offs.shape[0]):
            j = (i - offs[k]) % n
            v = vals[k]
            for c in range(b):
                y[i, c] += v * x[j, c]


# -- operator data -----------------------------------------------------------


@dataclass
class OperatorData:
    """Float centers and rigorous perturbation constants of noise . det."""

    n: int
    det_indptr: np.ndarray
    det_indices: np.ndarray
    det_data: np.ndarray
    det_colw: np.ndarray      # per-column L1 distance bound to the center
    det_cmax: float           # max column L1 norm of the float center
    det_gamma: float          # sparse product float-error factor
    pl_mid: float             # noise plateau center
    d0: int
    tap_offs: np.ndarray
    tap_vals: np.ndarray
    noise_w: float            # column L1 distance bound of noise to center
    noise_gamma: float        # window recurrence + taps float-error factor
    has_noise: bool = True

    @staticmethod
    def from_matrix(m: StochasticIntervalMatrix) -> "OperatorData":
        """Iteration data for a bare sparse interval matrix (no noise stage)."""
        if m.structure != "deterministic" or m.mode != "certified":
            raise ValueError("need a certified sparse interval matrix")
        n = m.n
        mid = sp.csr_matrix((m.det_lo + m.det_hi) * 0.5)
        mid.sort_indices()
        nnz_col = np.asarray((m.det_hi != 0).sum(axis=0)).ravel()
        colw = ivec.bump_up(m.colw_half + (nnz_col + 2) * _U)
        cs = np.abs(mid).sum(axis=0)
        det_cmax = up(float(np.max(cs)) * (1.0 + (n + 2) * _U))
        row_nnz = int(np.max(np.diff(mid.indptr))) if mid.nnz else 1
        return OperatorData(
            n=n, det_indptr=mid.indptr, det_indices=mid.indices, det_data=mid.data,
            det_colw=colw, det_cmax=det_cmax, det_gamma=ivec.gamma_n(row_nnz + 2),
            pl_mid=1.0, d0=0, tap_offs=np.zeros(0, dtype=np.int64),
            tap_vals=np.zeros(0), noise_w=0.0, noise_gamma=0.0, has_noise=False,
        )

    @staticmethod
    def build(noise: StochasticIntervalMatrix, det: StochasticIntervalMatrix) -> "OperatorData":
        if noise.structure != "circulant-noise" or det.structure != "deterministic":
            raise ValueError("need a (circulant-noise, deterministic) pair")
        if noise.mode != "certified" or det.mode != "certified":
            raise ValueError("certified iteration requires certified matrices")
        n = det.n
        mid = (det.det_lo + det.det_hi) * 0.5
        mid = sp.csr_matrix(mid)
        mid.sort_indices()
        nnz_col = np.asarray((det.det_hi != 0).sum(axis=0)).ravel()
        colw = ivec.bump_up(det.colw_half + (nnz_col + 2) * _U)
        cs = np.abs(mid).sum(axis=0)
        det_cmax = up(float(np.max(cs)) * (1.0 + (n + 2) * _U))
        row_nnz = int(np.max(np.diff(mid.indptr))) if mid.nnz else 1
        det_gamma = ivec.gamma_n(row_nnz + 2)

        pl = noise.plateau
        pl_mid = 0.5 * (pl.lo + pl.hi)
        taps = noise.taps
        tap_offs = np.array([d for d, _ in taps], dtype=np.int64)
        tap_vals = np.array([0.5 * (a.lo + a.hi) for _, a in taps])
        width_sum = float(np.sum(noise.stencil_hi - noise.stencil_lo))
        nz = int(np.count_nonzero(noise.stencil_hi))
        noise_w = up(0.5 * width_sum + (nz + 2) * _U)

        # window recurrence: 2n adds on partials bounded by the column L1
        # norm; each of the n output entries inherits that error, so the
        # L1 total is pl * 2 n^2 u per unit column norm.  Taps and the
        # final scaling add a few ulps more.
        tapabs = float(np.sum(np.abs(tap_vals)))
        noise_gamma = up(pl_mid * 2.2 * n * n * _U + 4.0 * _U * (tapabs + 1.0) * (len(taps) + 2))
        return OperatorData(
            n=n, det_indptr=mid.indptr, det_indices=mid.indices, det_data=mid.data,
            det_colw=colw, det_cmax=det_cmax, det_gamma=det_gamma,
            pl_mid=pl_mid, d0=noise.d0, tap_offs=tap_offs, tap_vals=tap_vals,
            noise_w=noise_w, noise_gamma=noise_gamma,
        )

    # -- one certified ball step -----------------------------------------

    def step(self, x: np.ndarray, rad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply noise . det to ball columns; returns new midpoints and radii."""
        n, b = x.shape
        s = np.empty(b)
        t = np.empty(b)
        _abs_reductions(x, self.det_colw, s, t)
        y = np.empty_like(x)
        _csr_apply(self.det_indptr, self.det_indices, self.det_data, x, y)
        # the true factor is exactly column-stochastic, so it cannot grow
        # the carried radius; only the center distance and float error add
        rad1 = rad + t + self.det_gamma * self.det_cmax * s
        rad1 = ivec.bump_up(rad1 * (1.0 + 8 * _U))
        if not self.has_noise:
            return y, rad1

        s2 = np.empty(b)
        t2 = np.empty(b)
        _abs_reductions(y, np.zeros(n), s2, t2)
        z = np.empty_like(y)
        _window_apply(y, self.d0, self.pl_mid, z)
        if self.tap_offs.size:
            _add_taps(z, y, self.tap_offs, self.tap_vals)
        rad2 = rad1 + (self.noise_w + self.noise_gamma) * s2
        rad2 = ivec.bump_up(rad2 * (1.0 + 8 * _U))
        return z, rad2

    def norm_upper(self, x: np.ndarray, rad: np.ndarray) -> np.ndarray:
        """Rigorous per-column upper bounds on the L1 norms of the balls."""
        n, b = x.shape
        s = np.empty(b)
        t = np.empty(b)
        _abs_reductions(x, np.zeros(n), s, t)
        g = ivec.gamma_n(n + 2)
        return ivec.bump_up(s * (1.0 + g) + rad)

    def apply_float(self, v: np.ndarray) -> np.ndarray:
        """Plain float application (power iteration); no guarantees."""
        y = np.empty((self.n, 1))
        _csr_apply(self.det_indptr, self.det_indices, self.det_data,
                   v.reshape(-1, 1), y)
        if not self.has_noise:
            return y.ravel()
        z = np.empty_like(y)
        _window_apply(y, self.d0, self.pl_mid, z)
        if self.tap_offs.size:
            _add_taps(z, y, self.tap_offs, self.tap_vals)
        return z.ravel()


# -- contraction profile ------------------------------------------------------


@dataclass
class ContractionProfile:
    """Certified upper bounds beta_k >= ||M^k|_V||_(L1) for k = 0..depth.

    Extended beyond depth by submultiplicativity.  Requires
    beta_depth < 1 for infinite sums.
    """

    betas: list[float]  # betas[k] for k = 0..depth, betas[0] = 1

    @property
    def depth(self) -> int:
        return len(self.betas) - 1

    def beta(self, k: int) -> float:
        if k <= self.depth:
            return self.betas[k]
        q, r = divmod(k, self.depth)
        b = self.betas[self.depth] ** q * self.betas[r]
        return up(up(b) * (1.0 + 4 * _U * (q + 1)))

    def sum_all(self) -> float:
        """Upper bound on sum_{k>=0} beta_k (geometric grouping)."""
        tail = self.betas[self.depth]
        if tail >= 1.0:
            return math.inf
        s0 = math.fsum(self.betas[:self.depth])
        return up(s0 / (1.0 - tail) * (1.0 + 8 * _U * self.depth))

    def sum_partial(self, kmax: int) -> float:
        """Upper bound on sum_{k=0}^{kmax-1} beta_k."""
        if kmax <= self.depth:
            return up(math.fsum(self.betas[:kmax]) * (1 + 4 * _U * kmax))
        return min(self.sum_all(), math.inf)


def basis_block(n: int, j0: int, j1: int) -> np.ndarray:
    """Columns e_j - u of the zero-average test family, C-order."""
    x = np.full((n, j1 - j0), -1.0 / n)
    for c, j in enumerate(range(j0, j1)):
        x[j, c] += 1.0
    return x


@dataclass
class ProfileResult:
    """Contraction profile plus (optionally) resolvent column data.

    res_head bounds max_i || sum_{k<depth} M^k (e_i - u) ||_1 except that a
    frozen column contributes its partial sum plus (frozen norm) * X where
    X must be an upper bound on sum_k beta_k; `resolvent_upper` assembles
    the geometric bootstrap ||R_inf|| <= ||R_depth|| / (1 - beta_depth).
    """

    profile: ContractionProfile
    res_live: float = 0.0
    res_frozen_s: float = 0.0
    res_frozen_v: float = 0.0

    def resolvent_upper(self) -> float:
        tail = self.profile.betas[self.profile.depth]
        if tail >= 1.0:
            return math.inf
        head = max(self.res_live, self.res_frozen_s + self.res_frozen_v * self.profile.sum_all())
        return up(head / (1.0 - tail) * (1.0 + 16 * _U))


def contraction_profile(op: OperatorData, depth: int,
                        block_cols: int | None = None,
                        freeze_tol: float = 0.0,
                        resolvent: bool = False,
                        progress=None) -> ProfileResult:
    """Push all n basis vectors through `depth` steps, tracking norm maxima.

    A column freezes once its certified norm bound drops below freeze_tol;
    column norms never grow under a stochastic step, so the frozen bound
    stays valid for every later k and joins the running maxima.  With
    `resolvent` the partial sums over k are accumulated as well.
    """
    n = op.n
    if block_cols is None:
        budget = (1 << 28) if resolvent else (1 << 29)
        block_cols = max(256, min(n, budget // (8 * n)))
    maxima = np.zeros(depth + 1)
    maxima[0] = 1.0
    res_live = 0.0
    res_frozen_s = 0.0
    res_frozen_v = 0.0
    for j0 in range(0, n, block_cols):
        j1 = min(n, j0 + block_cols)
        x = basis_block(n, j0, j1)
        rad = np.zeros(j1 - j0)
        if resolvent:
            s_mid = x.copy()
            s_rad = rad.copy()
        frozen_max = 0.0
        for k in range(1, depth + 1):
            x, rad = op.step(x, rad)
            norms = op.norm_upper(x, rad)
            m = float(np.max(norms)) if norms.size else 0.0
            maxima[k] = max(maxima[k], m, frozen_max)
            if resolvent and k < depth:
                s_mid += x
                s_rad = ivec.bump_up(s_rad + rad)
            if freeze_tol > 0.0 and norms.size:
                keep = norms > freeze_tol
                if not np.all(keep):
                    frozen_max = max(frozen_max, float(np.max(norms[~keep])))
                    if resolvent:
                        s_norms = op.norm_upper(s_mid, s_rad)
                        res_frozen_s = max(res_frozen_s, float(np.max(s_norms[~keep])))
                        res_frozen_v = max(res_frozen_v, float(np.max(norms[~keep])))
                        s_mid = np.ascontiguousarray(s_mid[:, keep])
                        s_rad = s_rad[keep]
                    x = np.ascontiguousarray(x[:, keep])
                    rad = rad[keep]
            if progress is not None:
                progress(j0, k, maxima[k])
            if not rad.size:
                for kk in range(k + 1, depth + 1):
                    maxima[kk] = max(maxima[kk], frozen_max)
                break
        if resolvent and rad.size:
            s_norms = op.norm_upper(s_mid, s_rad)
            res_live = max(res_live, float(np.max(s_norms)))
    prof = ContractionProfile(betas=[float(b) for b in maxima])
    return ProfileResult(profile=prof, res_live=res_live,
                         res_frozen_s=res_frozen_s, res_frozen_v=res_frozen_v)


# -- stationary vector (float) -----------------------------------------------


def power_iterate(op: OperatorData, tol: float = 1e-14, max_iter: int = 1_000_000):
    """Float fixed-point vector of the composed operator, L1-normalized.

    Stops when successive iterates differ by less than tol in L1.
    """
    v = np.full(op.n, 1.0 / op.n)
    for i in range(max_iter):
        w = op.apply_float(v)
        w = np.maximum(w, 0.0)
        w /= w.sum()
        if float(np.abs(w - v).sum()) < tol:
            return w, i + 1
        v = w
    return v, max_iter

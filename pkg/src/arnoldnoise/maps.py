"""The noisy circle map: parameters, noise kernel, branches, observable.

The deterministic step is T(x) = x + tau - (eps/2pi) sin(2pi x) mod 1, the
random step adds noise uniform on [-xi/2, xi/2].  Everything rigorous is
phrased through the lift  T~(x) = x + tau - (eps/2pi) sin(2pi x)  evaluated
in interval arithmetic; circle arcs keep lift coordinates plus an explicit
wrap test instead of being renormalized into [0,1] boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import ivec
from .intervals import TWO_PI, IVal, acos_interval, down, up

TANGENCY_TOL = 1e-9


class TangencyError(ValueError):
    """eps too close to 1: the branch structure is not decidable."""


@dataclass(frozen=True)
class NoisyMapParams:
    """(tau, eps, xi) of the noisy map; xi = 0 is tolerated for Monte Carlo
    use only, every certified entry point rejects it."""

    tau: float
    eps: float
    xi: float

    def __post_init__(self):
        if not (0.0 <= self.tau < 1.0) or not math.isfinite(self.eps):
            raise ValueError(f"bad parameters tau={self.tau}, eps={self.eps}")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")
        if not (0.0 <= self.xi <= 1.0):
            raise ValueError(f"noise width xi={self.xi} outside [0, 1]")

    def require_noise(self) -> None:
        if self.xi <= 0.0:
            raise ValueError("certified computations require xi > 0")

    @cached_property
    def eps_over_2pi(self) -> IVal:
        return IVal.exact(self.eps) / TWO_PI

    @cached_property
    def tau_ival(self) -> IVal:
        return IVal.exact(self.tau)

    def deriv_sup(self) -> float:
        """Upper bound on sup |T'| = 1 + eps."""
        return up(1.0 + self.eps)


@dataclass(frozen=True)
class NoiseKernel:
    """Uniform density on the arc [-xi/2, xi/2] and its norm data.

    On the circle the two jumps of height 1/xi cancel when xi = 1 (the
    kernel is constant), so var is 0 there rather than 2/xi.
    """

    xi: float
    density_height: IVal
    l1_norm: IVal
    var: IVal
    bv_norm: IVal

    @staticmethod
    def for_width(xi: float) -> "NoiseKernel":
        if not 0.0 < xi <= 1.0:
            raise ValueError(f"kernel width {xi} outside (0, 1]")
        one = IVal.exact(1.0)
        height = one / IVal.exact(xi)
        var = IVal.exact(0.0) if xi == 1.0 else IVal.exact(2.0) / IVal.exact(xi)
        return NoiseKernel(xi=xi, density_height=height, l1_norm=one,
                           var=var, bv_norm=one + var)

    @staticmethod
    def for_params(p: NoisyMapParams) -> "NoiseKernel":
        p.require_noise()
        return NoiseKernel.for_width(p.xi)


def kernel_l1_distance(xi1: float, xi2: float) -> IVal:
    """Exact L1 distance between two centered uniform kernels.

    For widths a <= b the densities differ by (1/a - 1/b) on the common
    core and by 1/b on the two flanks: total 2(1 - a/b).
    """
    a, b = sorted((xi1, xi2))
    if not 0.0 < a <= b <= 1.0:
        raise ValueError("kernel widths must lie in (0, 1]")
    return IVal.exact(2.0) * (IVal.exact(1.0) - IVal.exact(a) / IVal.exact(b))


# -- lift evaluation -------------------------------------------------------


def lift_eval(p: NoisyMapParams, x: IVal) -> IVal:
    """Enclosure of the lift T~ over the interval x."""
    s = (TWO_PI * x).sin()
    return x + p.tau_ival - p.eps_over_2pi * s


def sin_2pi_points(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Certified enclosure of sin(2 pi x) at representable points."""
    x = np.asarray(x, dtype=np.float64)
    t1, t2 = TWO_PI.lo * x, TWO_PI.hi * x
    ulo = ivec.bump_down(np.minimum(t1, t2))
    uhi = ivec.bump_up(np.maximum(t1, t2))
    slo1, shi1 = ivec.sin_points(ulo)
    slo2, shi2 = ivec.sin_points(uhi)
    w = ivec.bump_up(uhi - ulo)
    slo = np.maximum(np.minimum(slo1, slo2) - w, -1.0)
    shi = np.minimum(np.maximum(shi1, shi2) + w, 1.0)
    return slo, shi


def lift_points(p: NoisyMapParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized lift enclosure at representable points."""
    x = np.asarray(x, dtype=np.float64)
    slo, shi = sin_2pi_points(x)
    c = p.eps_over_2pi
    tlo, thi = ivec.v_mul(slo, shi, np.asarray(c.lo), np.asarray(c.hi))
    blo, bhi = ivec.v_add(x, x, np.asarray(p.tau), np.asarray(p.tau))
    return ivec.v_sub(blo, bhi, tlo, thi)


@dataclass(frozen=True)
class CircleArc:
    """Arc given by lift endpoints; wraps when it crosses an integer."""

    lift_lo: float
    lift_hi: float

    @property
    def wraps(self) -> bool:
        return math.floor(self.lift_lo) != math.floor(self.lift_hi) and self.width < 1.0

    @property
    def width(self) -> float:
        return self.lift_hi - self.lift_lo

    def start(self) -> float:
        return self.lift_lo - math.floor(self.lift_lo)

    def end(self) -> float:
        return self.lift_hi - math.floor(self.lift_lo)

    def contains_mod1(self, x: float) -> bool:
        if self.width >= 1.0:
            return True
        x = x - math.floor(x)
        s, e = self.start(), self.end()
        return s <= x <= e or s <= x + 1.0 <= e


def map_eval(p: NoisyMapParams, x: IVal) -> CircleArc:
    """Arc enclosing T(x) mod 1 for x within one fundamental domain."""
    if x.lo < 0.0 or x.hi > 1.0:
        raise ValueError("map_eval expects circle coordinates in [0, 1]")
    lift = lift_eval(p, x)
    return CircleArc(lift.lo, lift.hi)


# -- monotone branch structure --------------------------------------------


@dataclass(frozen=True)
class Branch:
    """Restriction of the lift to an arc where T' keeps one sign."""

    params: NoisyMapParams
    lo: IVal          # left endpoint enclosure
    hi: IVal          # right endpoint enclosure
    increasing: bool

    @cached_property
    def image(self) -> IVal:
        ia = lift_eval(self.params, self.lo)
        ib = lift_eval(self.params, self.hi)
        return ia.hull(ib)

    def solve(self, targets: np.ndarray, iterations: int = 80) -> tuple[np.ndarray, np.ndarray]:
        """Certified preimages of lift values inside the branch image.

        Bisection keeps an interval [alo, ahi] around each preimage.  A
        probe is inconclusive when the target falls inside the certified
        enclosure of the lift value there; the probe fraction cycles
        through detuned values so a tie at one point cannot stall the
        bracket (by strict monotonicity only a thin argument window can
        tie).  Near a critical point the attainable width is limited by
        the flatness of the lift; callers absorb the residual widths.
        Targets outside the image are clamped to the branch ends.
        """
        fracs = (0.5, 0.5, 0.5, 0.38196601125010515, 0.5, 0.5, 0.5, 0.618033988749895)
        t = np.asarray(targets, dtype=np.float64)
        alo = np.full(t.shape, self.lo.lo)
        ahi = np.full(t.shape, self.hi.hi)
        active = np.ones(t.shape, dtype=bool)
        p = self.params
        for it in range(iterations):
            if not active.any():
                break
            m = alo + fracs[it % len(fracs)] * (ahi - alo)
            flo, fhi = lift_points(p, m[active])
            below = np.zeros(t.shape, dtype=bool)
            above = np.zeros(t.shape, dtype=bool)
            if self.increasing:
                below[active] = fhi < t[active]
                above[active] = flo > t[active]
            else:
                below[active] = flo > t[active]
                above[active] = fhi < t[active]
            alo = np.where(below, m, alo)
            ahi = np.where(above, m, ahi)
            narrow = ivec.bump_up(ahi - alo) <= 4 * np.spacing(np.maximum(np.abs(alo), 1.0))
            active &= ~narrow
        return alo, ahi


@dataclass(frozen=True)
class BranchDecomposition:
    params: NoisyMapParams
    breakpoints: tuple[IVal, ...]
    branches: tuple[Branch, ...]


def branch_decompose(p: NoisyMapParams) -> BranchDecomposition:
    """Monotone pieces of T on [0, 1].

    For eps < 1 the lift is increasing on the whole circle.  For eps > 1
    the derivative 1 - eps cos(2pi x) vanishes at c1 = arccos(1/eps)/2pi
    and c2 = 1 - c1, giving a decreasing / increasing / decreasing split.
    """
    if abs(p.eps - 1.0) <= TANGENCY_TOL:
        raise TangencyError(f"eps={p.eps} within {TANGENCY_TOL} of the tangent case")
    zero = IVal.exact(0.0)
    one = IVal.exact(1.0)
    if p.eps < 1.0:
        return BranchDecomposition(p, (), (Branch(p, zero, one, True),))
    inv_eps = one / IVal.exact(p.eps)
    c1 = acos_interval(inv_eps) / TWO_PI
    c2 = one - c1
    branches = (
        Branch(p, zero, c1, False),
        Branch(p, c1, c2, True),
        Branch(p, c2, one, False),
    )
    return BranchDecomposition(p, (c1, c2), branches)


# -- rotation observable ---------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """phi(x) = tau - (eps/2pi) sin(2pi x), the per-step lift displacement."""

    params: NoisyMapParams

    def eval(self, x: IVal) -> IVal:
        p = self.params
        return p.tau_ival - p.eps_over_2pi * (TWO_PI * x).sin()

    @property
    def sup_bound(self) -> IVal:
        p = self.params
        return abs(p.tau_ival) + p.eps_over_2pi

    @property
    def lip_bound(self) -> IVal:
        return IVal.exact(self.params.eps)

    @property
    def half_oscillation(self) -> IVal:
        """(sup phi - inf phi)/2 = eps/2pi; the slack constant for pairing
        phi against zero-mass error terms."""
        return self.params.eps_over_2pi

    def cell_averages(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Certified per-cell averages of phi on the uniform n-partition.

        The cell integral has the closed form
        tau/n + (eps/4pi^2)(cos(2pi b) - cos(2pi a)).
        """
        p = self.params
        edges = np.arange(n + 1) / n
        ulo = ivec.bump_down(TWO_PI.lo * edges)
        uhi = ivec.bump_up(TWO_PI.hi * edges)
        clo1, chi1 = ivec.cos_points(ulo)
        clo2, chi2 = ivec.cos_points(uhi)
        w = ivec.bump_up(uhi - ulo)
        clo = np.minimum(clo1, clo2) - w
        chi = np.maximum(chi1, chi2) + w
        dlo, dhi = ivec.v_sub(clo[1:], chi[1:], clo[:-1], chi[:-1])
        coef = p.eps_over_2pi / TWO_PI  # eps/4pi^2
        tlo, thi = ivec.v_scale(dlo, dhi, coef)
        # average over the cell: multiply the integral by n => coef * n * d
        tlo, thi = ivec.v_scale(tlo, thi, IVal.exact(float(n)))
        return ivec.v_add(tlo, thi, np.asarray(p.tau), np.asarray(p.tau))


def observable(p: NoisyMapParams) -> Observable:
    return Observable(p)

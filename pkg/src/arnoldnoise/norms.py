"""Norm badges and the convolution regularization toolbox.

A badge tags a scalar upper bound with the norm it bounds: L1 (for signed
measures this is the total-variation mass), BV (L1 plus variation) or W
(the dual-Lipschitz norm against test functions with sup <= 1 and Lip <= 1).

``convolution_norm_bounds`` turns badges for f and g into badges for f*g
using the four standard regularization inequalities of circle convolution:

  (mass)       ||f*g||_L1 <= ||f||_L1 ||g||_L1
  (weak)       ||f*g||_W  <= ||f||_W  ||g||_L1
  (smoothing)  ||f*g||_L1 <= 2 ||f||_W ||g||_BV     (f of zero total mass)
  (variation)  ||f*g||_BV <= ||f||_L1 ||g||_BV
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intervals import IVal

L1 = "L1"
BV = "BV"
W = "W"
_KINDS = (L1, BV, W)


class MissingNormError(ValueError):
    """A convolution inequality was requested without its prerequisite norms."""


@dataclass(frozen=True, slots=True)
class NormBadge:
    kind: str
    value: IVal

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.value.lo < 0:
            object.__setattr__(self, "value", IVal(0.0, self.value.hi))


def _as_map(badges) -> dict[str, IVal]:
    out: dict[str, IVal] = {}
    for b in badges:
        if b.kind in out:
            cur = out[b.kind]
            out[b.kind] = cur if cur.hi <= b.value.hi else b.value
        else:
            out[b.kind] = b.value
    return out


_RULES = (
    # (output kind, f kind, g kind, factor, needs zero mass f, label)
    (L1, L1, L1, 1.0, False, "mass inequality ||f*g||_L1 <= ||f||_L1 ||g||_L1"),
    (W, W, L1, 1.0, False, "weak-norm inequality ||f*g||_W <= ||f||_W ||g||_L1"),
    (L1, W, BV, 2.0, True,
     "smoothing inequality ||f*g||_L1 <= 2 ||f||_W ||g||_BV (zero-mass f)"),
    (BV, L1, BV, 1.0, False, "variation inequality ||f*g||_BV <= ||f||_L1 ||g||_BV"),
)


def convolution_norm_bounds(f_norms, g_norms, f_zero_mass: bool = False,
                            require: str | None = None) -> set[NormBadge]:
    """Badges for f*g derivable from badges for f and g.

    ``require`` names an output kind that must be produced; if no inequality
    for it has its prerequisites, MissingNormError reports which norms the
    applicable inequalities are missing.
    """
    f = _as_map(f_norms)
    g = _as_map(g_norms)
    best: dict[str, IVal] = {}
    missing: list[str] = []
    for out_kind, fk, gk, factor, needs_zero, label in _RULES:
        if needs_zero and not f_zero_mass:
            continue
        if fk not in f or gk not in g:
            missing.append(f"{label}: needs ||f||_{fk} and ||g||_{gk}")
            continue
        v = f[fk] * g[gk] * factor
        if out_kind in best and best[out_kind].hi <= v.hi:
            continue
        best[out_kind] = v
    if require is not None and require not in best:
        detail = "; ".join(missing) or "no applicable inequality"
        raise MissingNormError(f"cannot bound ||f*g||_{require}: {detail}")
    return {NormBadge(k, v) for k, v in best.items()}


# -- exact norms of piecewise-constant densities on the uniform grid -----

def step_l1(masses: np.ndarray) -> float:
    """L1 norm of the step density with the given per-cell masses."""
    return float(np.abs(masses).sum())


def step_variation(masses: np.ndarray) -> float:
    """Circle variation of the step density (masses * N are the values)."""
    n = masses.size
    dens = masses * n
    return float(np.abs(dens - np.roll(dens, 1)).sum())


def step_w_upper(masses: np.ndarray) -> float:
    """Upper bound on the W norm of a zero-mass step measure.

    For zero-mass mu with cdf F, sup over 1-Lipschitz g of int g dmu equals
    min_c ||F - c||_L1; the sup-norm cap on test functions only lowers it.
    """
    n = masses.size
    cdf = np.cumsum(masses)
    c = np.median(cdf)
    return float(np.abs(cdf - c).sum() / n)

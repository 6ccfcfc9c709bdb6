"""Non-rigorous Monte Carlo estimators for cross-validation.

Three estimators: a sampled Ulam matrix (one random step per sample), an
invariant-measure histogram from long orbits, and rotation-number
statistics over independent noise realizations.  Streams are counter
based: every consumer derives its generator from (seed, stream id)
through Philox, so results are bit-identical regardless of scheduling
and chunking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .maps import NoisyMapParams


@dataclass(frozen=True)
class McConfig:
    """Budgets and the seed that fully determines all random streams."""

    seed: int = 20200624
    samples_per_cell: int = 1 << 17
    n_ic: int = 100
    n_it: int = 100_000
    n_bins: int = 10_000

    def __post_init__(self):
        if min(self.samples_per_cell, self.n_ic, self.n_it, self.n_bins) < 1:
            raise ValueError("all Monte Carlo budgets must be >= 1")


def _stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64([seed & (2**64 - 1),
                                                               stream_id & (2**64 - 1)])))


def _map_mod1(p: NoisyMapParams, x: np.ndarray) -> np.ndarray:
    return (x + p.tau - p.eps / (2 * np.pi) * np.sin(2 * np.pi * x)) % 1.0


def _displacement(p: NoisyMapParams, x: np.ndarray) -> np.ndarray:
    return p.tau - p.eps / (2 * np.pi) * np.sin(2 * np.pi * x)


def ulam_mc(p: NoisyMapParams, n: int, cfg: McConfig) -> np.ndarray:
    """Row-stochastic sampled Ulam matrix: row j holds the image
    distribution of cell j after one random step (the transpose of the
    certified column convention)."""
    m = cfg.samples_per_cell
    out = np.zeros((n, n))
    for j in range(n):
        rng = _stream(cfg.seed, j)
        x = (j + rng.random(m)) / n
        y = _map_mod1(p, x)
        if p.xi > 0:
            y = (y + p.xi * (rng.random(m) - 0.5)) % 1.0
        idx = np.minimum((y * n).astype(np.int64), n - 1)
        out[j, :] = np.bincount(idx, minlength=n) / m
    return out


def orbit_histogram(p: NoisyMapParams, cfg: McConfig) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative histogram over n_bins from n_ic noisy orbits of length
    n_it, normalized to unit area.  Returns (bin_centers, density)."""
    counts = np.zeros(cfg.n_bins, dtype=np.int64)
    for i0 in range(0, cfg.n_ic, 64):
        i1 = min(cfg.n_ic, i0 + 64)
        rngs = [_stream(cfg.seed, 1_000_000 + i) for i in range(i0, i1)]
        x = np.array([r.random() for r in rngs])
        block = 4096
        done = 0
        while done < cfg.n_it:
            steps = min(block, cfg.n_it - done)
            noises = np.stack([r.random(steps) for r in rngs], axis=1)
            for t in range(steps):
                x = _map_mod1(p, x)
                if p.xi > 0:
                    x = (x + p.xi * (noises[t] - 0.5)) % 1.0
                idx = np.minimum((x * cfg.n_bins).astype(np.int64), cfg.n_bins - 1)
                np.add.at(counts, idx, 1)
            done += steps
    centers = (np.arange(cfg.n_bins) + 0.5) / cfg.n_bins
    density = counts * (cfg.n_bins / counts.sum())
    return centers, density


def rotation_mc(p: NoisyMapParams, cfg: McConfig, realizations: int) -> tuple[float, float]:
    """Sample mean and standard deviation of the rotation number over
    independent noise realizations (lift displacement per iterate)."""
    rhos = np.empty(realizations)
    block = 4096
    for r0 in range(0, realizations, 256):
        r1 = min(realizations, r0 + 256)
        w = r1 - r0
        rngs = [_stream(cfg.seed, 2_000_000 + r) for r in range(r0, r1)]
        x = np.array([g.random() for g in rngs])
        disp = np.zeros(w)
        done = 0
        while done < cfg.n_it:
            steps = min(block, cfg.n_it - done)
            noises = np.stack([g.random(steps) for g in rngs], axis=1)
            for t in range(steps):
                d = _displacement(p, x)
                om = p.xi * (noises[t] - 0.5) if p.xi > 0 else 0.0
                disp += d + om
                x = (x + d + om) % 1.0
            done += steps
        rhos[r0:r1] = disp / cfg.n_it
    mean = float(np.mean(rhos))
    std = float(np.std(rhos, ddof=1)) if realizations > 1 else 0.0
    return mean, std


def rotation_mc_sweep(taus, eps: float, xi: float, cfg: McConfig,
                      realizations: int) -> list[tuple[float, float, float]]:
    """(tau, mean, std) rows over a tau grid; rows share the seed layout."""
    out = []
    for tau in taus:
        mean, std = rotation_mc(NoisyMapParams(tau=tau, eps=eps, xi=xi), cfg, realizations)
        out.append((float(tau), mean, std))
    return out


def two_sample_t(mean1: float, std1: float, n1: int,
                 mean2: float, std2: float, n2: int) -> float:
    """Welch t statistic for 'are these two rotation means equal'."""
    denom = math.sqrt(std1 ** 2 / n1 + std2 ** 2 / n2)
    if denom == 0.0:
        return math.inf if mean1 != mean2 else 0.0
    return (mean1 - mean2) / denom


def histogram_rebin(density: np.ndarray, n_cells: int) -> np.ndarray:
    """Average a fine histogram down to n_cells masses (sum 1)."""
    n_bins = density.size
    if n_bins % n_cells:
        raise ValueError("n_bins must be a multiple of the cell count")
    r = n_bins // n_cells
    return density.reshape(n_cells, r).mean(axis=1) / n_cells


def l1_distance_to_masses(density: np.ndarray, masses: np.ndarray) -> float:
    """L1 distance between a histogram density and a step density given
    by cell masses on a coarser grid."""
    coarse = histogram_rebin(density, masses.size)
    return float(np.abs(coarse - masses).sum())
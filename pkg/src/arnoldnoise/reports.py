"""Machine-readable outputs: JSON/CSV with provenance, and figures.

Every interval that leaves the process is printed as a pair of decimal
strings rounded outward, so re-parsing a report can only widen claims.
Certificate and coverage files can be re-validated without re-running
any assembly (see `check_certificate_dict` and `certify.verify_coverage`).
"""

from __future__ import annotations

import csv
import json
import time
from decimal import Decimal
from pathlib import Path

from . import __version__
from .certify import CoverageProof, MixingCertificate
from .intervals import IVal
from .maps import NoiseKernel

DIGITS = 17


def outward(v: IVal, digits: int = DIGITS) -> tuple[str, str]:
    return v.format_outward(digits)


def provenance(config: dict, started: float) -> dict:
    return {
        "code_version": __version__,
        "config": config,
        "wall_time_s": round(time.time() - started, 3),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# -- certificates -------------------------------------------------------------


def certificate_dict(cert: MixingCertificate) -> dict:
    a_lo, a_hi = outward(cert.alpha)
    th = cert.theta()
    th_lo, th_hi = outward(th)
    e_lo, e_hi = outward(cert.e_n)
    return {
        "tau": repr(cert.params.tau),
        "eps": repr(cert.params.eps),
        "xi": repr(cert.params.xi),
        "N": cert.partition_n,
        "n": cert.n,
        "alpha_lo": a_lo,
        "alpha_hi": a_hi,
        "theta_lo": th_lo,
        "theta_hi": th_hi,
        "e_n": e_hi,
        "scope": cert.scope,
        "kernel_bv_hi": outward(cert.kernel_bv)[1],
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "code_version": __version__,
    }


def check_certificate_dict(d: dict) -> bool:
    """Re-validate the printed relations of a certificate file.

    Checks in exact decimal arithmetic: alpha < 1, theta consistent with
    (1 - alpha)/(2 n ||rho||_BV) for the kernel of width xi, n >= 1.
    """
    alpha_hi = Decimal(d["alpha_hi"])
    theta_lo = Decimal(d["theta_lo"])
    n = int(d["n"])
    xi = Decimal(repr(float(d["xi"])))
    if not (0 <= alpha_hi < 1 and n >= 1):
        return False
    if xi == 1:
        bv = Decimal(1)
    else:
        bv = 1 + 2 / xi  # decimal division, 28 significant digits
    bound = (1 - alpha_hi) / (2 * n * bv)
    # theta_lo must not overstate the radius; allow the outward-rounding
    # slack of the stored decimals
    return theta_lo <= bound * Decimal("1.0000000000001")


def coverage_dict(proof: CoverageProof) -> dict:
    centers = []
    for c in proof.centers:
        th_lo, th_hi = outward(c.theta)
        a_lo, a_hi = outward(c.alpha)
        centers.append({
            "tau": repr(c.tau), "theta_lo": th_lo, "theta_hi": th_hi,
            "n": c.n, "alpha_lo": a_lo, "alpha_hi": a_hi,
            "N": c.partition_n,
        })
    lo, hi = proof.covered_interval()
    return {
        "eps": repr(proof.eps),
        "xi": repr(proof.xi),
        "tau_lo": repr(proof.tau_lo),
        "tau_hi": repr(proof.tau_hi),
        "complete": proof.complete,
        "covered_lo": repr(lo),
        "covered_hi": repr(hi),
        "centers": centers,
        "code_version": __version__,
    }


def check_coverage_dict(d: dict) -> bool:
    """Standalone re-verification of a coverage file from (tau, theta) only."""
    from .certify import verify_coverage
    pairs = [(Decimal(repr(float(c["tau"]))), Decimal(c["theta_lo"]))
             for c in d["centers"]]
    return verify_coverage(pairs, Decimal(repr(float(d["tau_lo"]))),
                           Decimal(repr(float(d["tau_hi"]))))


# -- figures ------------------------------------------------------------------


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def density_figure(path, centers, density_mc, cell_edges, masses, title=""):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8, 4))
    n = masses.size
    ax.step(cell_edges[:-1], masses * n, where="post", color="k", lw=1.2,
            label="certified (cell averages)")
    if density_mc is not None:
        ax.plot(centers, density_mc, color="tab:red", lw=0.6, alpha=0.8,
                label="long-orbit Monte Carlo")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(path, rows, title=""):
    """rows: (tau, lo, hi) triples."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4))
    taus = [r[0] for r in rows]
    mid = [(r[1] + r[2]) / 2 for r in rows]
    err = [(r[2] - r[1]) / 2 for r in rows]
    ax.errorbar(taus, mid, yerr=err, fmt="o-", ms=3, lw=0.8, capsize=2, color="k")
    ax.set_xlabel("tau")
    ax.set_ylabel("rotation number")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mc_profile_figure(path, sweeps: dict[str, list[tuple[float, float, float]]], title=""):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, rows in sweeps.items():
        taus = [r[0] for r in rows]
        means = [r[1] for r in rows]
        stds = [r[2] for r in rows]
        ax.errorbar(taus, means, yerr=stds, fmt="o-", ms=3, lw=0.9, capsize=2, label=label)
    ax.set_xlabel("tau")
    ax.set_ylabel("rotation number (sample mean)")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cover_figure(path, proof: CoverageProof, title=""):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 2.4))
    for i, c in enumerate(proof.centers):
        ax.plot([c.tau - c.theta.lo, c.tau + c.theta.lo], [i % 4, i % 4], lw=3)
        ax.plot([c.tau], [i % 4], "k.", ms=3)
    ax.axvline(proof.tau_lo, color="k", ls=":", lw=0.8)
    ax.axvline(proof.tau_hi, color="k", ls=":", lw=0.8)
    ax.set_xlabel("tau")
    ax.set_yticks([])
    ax.set_title(title or "certified mixing intervals")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
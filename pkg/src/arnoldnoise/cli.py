"""Command-line interface.

Subcommands cover certification (certify-mixing, cover, stationary,
rotation, sweep-rotation, prove-nonmonotone, derivative), Monte Carlo
estimators (mc-ulam, mc-orbit, mc-rotation, compare-measures) and the
standalone proof checkers (check-certificate, check-cover).  Every
command writes JSON and/or CSV with provenance into --out; report-style
commands also render figures next to the delimited output unless
--no-plots is given.

Exit codes: 0 proof/computation succeeded, 2 inconclusive result,
1 invalid input or runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, montecarlo, reports
from .certify import (
    CertificationError,
    CertifiedRun,
    certify_mixing,
    cover_interval,
    stationary_measure,
)
from .maps import NoisyMapParams
from .response import (
    InconclusiveError,
    fd_quotient,
    prove_nonmonotone,
    response_derivative,
    rotation_number,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2


def _tau_range(spec: str) -> list[float]:
    """Parse 'a', 'a:b' (two points) or 'a:b:step' into a tau grid."""
    parts = spec.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) == 2:
        return [float(parts[0]), float(parts[1])]
    a, b, step = map(float, parts)
    k = int(round((b - a) / step))
    return [a + i * step for i in range(k + 1)]


def _common(sub: argparse.ArgumentParser, rigorous: bool = True) -> None:
    sub.add_argument("--tau", required=True, help="tau value or range a:b[:step]")
    sub.add_argument("--eps", type=float, required=True)
    sub.add_argument("--xi", type=float, required=True)
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--no-plots", action="store_true",
                     help="suppress figure rendering")
    if rigorous:
        sub.add_argument("-N", "--grid-n", type=int, default=4096,
                         help="Ulam partition size")
        sub.add_argument("--depth", type=int, default=40,
                         help="contraction profile depth")
        sub.add_argument("--mode", choices=["certified", "fast"], default="certified")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="arnoldnoise",
        description="Certified statistics of noisy circle maps and Monte Carlo cross-checks.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="key=value file; command-line flags override")
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("ARNOLDNOISE_THREADS", "0")) or None,
                    help="worker threads for sweeps (default: env ARNOLDNOISE_THREADS)")
    sp = ap.add_subparsers(dest="command", required=True)

    s = sp.add_parser("certify-mixing", help="certified (n, alpha) and extension radius")
    _common(s)
    s.add_argument("--n-max", type=int, default=40)
    s.add_argument("--operator", choices=["two-factor", "composed"], default="two-factor")

    s = sp.add_parser("cover", help="cover a tau interval by certified mixing balls")
    _common(s)
    s.add_argument("--n-max", type=int, default=30)
    s.add_argument("--max-centers", type=int, default=64)

    s = sp.add_parser("stationary", help="certified stationary density")
    _common(s)

    s = sp.add_parser("rotation", help="certified rotation number")
    _common(s)

    s = sp.add_parser("sweep-rotation", help="certified rotation numbers over a tau grid")
    _common(s)
    s.add_argument("--n-per-tau", default="",
                   help="per-tau overrides 'tau=N,tau=N' for hard rows")
    s.add_argument("--depth-per-tau", default="", help="per-tau depth overrides")

    s = sp.add_parser("prove-nonmonotone", help="certified non-monotonicity witness")
    _common(s)
    s.add_argument("--n-per-tau", default="")
    s.add_argument("--depth-per-tau", default="")

    s = sp.add_parser("derivative", help="certified linear-response derivative")
    _common(s)
    s.add_argument("--n-max", type=int, default=40)
    s.add_argument("--m-blocks", type=int, default=12)

    s = sp.add_parser("mc-ulam", help="sampled Ulam matrix (non-rigorous)")
    _common(s, rigorous=False)
    s.add_argument("-N", "--grid-n", type=int, default=64)
    s.add_argument("--samples", type=int, default=1 << 17)
    s.add_argument("--seed", type=int, default=20200624)

    s = sp.add_parser("mc-orbit", help="long-orbit histogram (non-rigorous)")
    _common(s, rigorous=False)
    s.add_argument("--n-ic", type=int, default=100)
    s.add_argument("--n-it", type=int, default=100_000)
    s.add_argument("--n-bins", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=20200624)

    s = sp.add_parser("mc-rotation", help="rotation statistics over noise realizations")
    _common(s, rigorous=False)
    s.add_argument("--realizations", type=int, default=1000)
    s.add_argument("--n-it", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=20200624)

    s = sp.add_parser("compare-measures", help="certified vs Monte Carlo density")
    _common(s)
    s.add_argument("--n-ic", type=int, default=100)
    s.add_argument("--n-it", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=20200624)

    s = sp.add_parser("check-certificate", help="re-validate a certificate file")
    s.add_argument("file")

    s = sp.add_parser("check-cover", help="re-validate a coverage file")
    s.add_argument("file")
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse args with key=value file values as subcommand defaults."""
    ns, _ = ap.parse_known_args(argv)
    cfg_file = getattr(ns, "config", None)
    command = getattr(ns, "command", None)
    if cfg_file and command:
        sub = None
        for action in ap._actions:
            if isinstance(action, argparse._SubParsersAction):  # noqa: SLF001
                sub = action.choices.get(command)
        if sub is not None:
            defaults = {}
            for line in Path(cfg_file).read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, value = line.partition("=")
                key = key.strip().replace("-", "_")
                for act in sub._actions:
                    if act.dest == key:
                        defaults[key] = act.type(value.strip()) if act.type else value.strip()
            sub.set_defaults(**defaults)
    return ap.parse_args(argv)


def _params(ns, tau: float) -> NoisyMapParams:
    return NoisyMapParams(tau=tau, eps=ns.eps, xi=ns.xi)


def _outdir(ns) -> Path:
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _overrides(spec: str) -> dict[float, int]:
    out = {}
    if spec:
        for item in spec.split(","):
            k, _, v = item.partition("=")
            out[round(float(k), 12)] = int(v)
    return out


def _sweep(ns, taus, threads=None):
    """Certified rotation rows over a tau grid (optionally threaded)."""
    n_over = _overrides(ns.n_per_tau) if hasattr(ns, "n_per_tau") else {}
    d_over = _overrides(ns.depth_per_tau) if hasattr(ns, "depth_per_tau") else {}

    def row(tau):
        t0 = time.time()
        key = round(tau, 12)
        n = n_over.get(key, ns.grid_n)
        depth = d_over.get(key, ns.depth)
        p = _params(ns, tau)
        run = CertifiedRun.prepare(p, n, depth=depth, freeze_tol=1e-4, resolvent=True)
        dens = stationary_measure(p, n, run=run)
        rot = rotation_number(dens)
        return rot, time.time() - t0

    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(row, taus))
    return [row(t) for t in taus]


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        ns = _apply_config(ap, list(sys.argv[1:] if argv is None else argv))
    except SystemExit as e:
        return int(e.code or 0)
    started = time.time()
    out = _outdir(ns) if hasattr(ns, "out") else Path(".")
    try:
        return _dispatch(ns, out, started)
    except (CertificationError, InconclusiveError) as e:
        reports.write_json(out / f"{ns.command}-inconclusive.json",
                           {"error": str(e), **reports.provenance(vars(ns), started)})
        print(f"inconclusive: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


def _dispatch(ns, out: Path, started: float) -> int:
    cmd = ns.command
    config = {k: v for k, v in vars(ns).items() if k not in ("config",)}

    if cmd == "check-certificate":
        import json
        ok = reports.check_certificate_dict(json.loads(Path(ns.file).read_text()))
        print("certificate OK" if ok else "certificate INVALID")
        return EXIT_OK if ok else EXIT_INCONCLUSIVE

    if cmd == "check-cover":
        import json
        ok = reports.check_coverage_dict(json.loads(Path(ns.file).read_text()))
        print("coverage OK" if ok else "coverage INVALID")
        return EXIT_OK if ok else EXIT_INCONCLUSIVE

    taus = _tau_range(ns.tau)

    if cmd == "certify-mixing":
        p = _params(ns, taus[0])
        cert = certify_mixing(p, ns.grid_n, ns.n_max, depth=ns.depth,
                              operator=ns.operator)
        payload = reports.certificate_dict(cert)
        payload["provenance"] = reports.provenance(config, started)
        reports.write_json(out / "certificate.json", payload)
        print(f"certified: n={cert.n} alpha<={cert.alpha.hi:.6f} "
              f"theta>={cert.theta().lo:.3e}")
        return EXIT_OK

    if cmd == "cover":
        lo, hi = taus[0], taus[-1]
        proof = cover_interval(ns.eps, ns.xi, lo, hi, ns.grid_n, ns.n_max,
                               max_centers=ns.max_centers, depth=ns.depth)
        payload = reports.coverage_dict(proof)
        payload["provenance"] = reports.provenance(config, started)
        reports.write_json(out / "coverage.json", payload)
        reports.write_csv(out / "coverage.csv",
                          ["tau", "theta_lo", "n", "alpha_hi", "N"],
                          [[c.tau, c.theta.lo, c.n, c.alpha.hi, c.partition_n]
                           for c in proof.centers])
        if not ns.no_plots:
            reports.cover_figure(out / "coverage.png", proof,
                                 f"eps={ns.eps} xi={ns.xi}")
        print(f"centers={len(proof.centers)} complete={proof.complete} "
              f"covered=({proof.covered_interval()[0]!r}, {proof.covered_hi!r})")
        return EXIT_OK if proof.complete else EXIT_INCONCLUSIVE

    if cmd == "stationary":
        p = _params(ns, taus[0])
        run = CertifiedRun.prepare(p, ns.grid_n, depth=ns.depth,
                                   freeze_tol=1e-4, resolvent=True)
        dens = stationary_measure(p, ns.grid_n, run=run)
        vlo, vhi = dens.values()
        lo_s, hi_s = reports.outward(dens.l1_error)
        reports.write_csv(out / "density.csv",
                          ["cell_lo", "cell_hi", "mass_lo", "mass_hi"],
                          [[i / dens.n, (i + 1) / dens.n, vlo[i], vhi[i]]
                           for i in range(dens.n)])
        reports.write_json(out / "density.json", {
            "l1_error_hi": hi_s, "proj_error_hi": reports.outward(dens.proj_error)[1],
            "grid_error_hi": reports.outward(dens.grid_error)[1],
            "residual_hi": reports.outward(dens.residual)[1],
            "N": dens.n, "provenance": reports.provenance(config, started)})
        if not ns.no_plots:
            edges = np.arange(dens.n + 1) / dens.n
            reports.density_figure(out / "density.png", None, None, edges,
                                   dens.masses, f"tau={p.tau} eps={p.eps} xi={p.xi}")
        print(f"stationary density: N={dens.n} l1_error <= {dens.l1_error.hi:.3e}")
        return EXIT_OK

    if cmd == "rotation":
        p = _params(ns, taus[0])
        run = CertifiedRun.prepare(p, ns.grid_n, depth=ns.depth,
                                   freeze_tol=1e-4, resolvent=True)
        dens = stationary_measure(p, ns.grid_n, run=run)
        rot = rotation_number(dens)
        lo_s, hi_s = reports.outward(rot.value)
        reports.write_json(out / "rotation.json", {
            "tau": repr(p.tau), "eps": repr(p.eps), "xi": repr(p.xi),
            "rho_lo": lo_s, "rho_hi": hi_s, "N": dens.n,
            "l1_error_hi": reports.outward(dens.l1_error)[1],
            "provenance": reports.provenance(config, started)})
        print(f"rho in [{lo_s}, {hi_s}]")
        return EXIT_OK

    if cmd in ("sweep-rotation", "prove-nonmonotone"):
        threads = getattr(ns, "threads", None)
        timed = _sweep(ns, taus, threads=threads)
        rows = [r for r, _ in timed]
        seconds = [round(t, 1) for _, t in timed]
        csv_rows = []
        for r in rows:
            lo_s, hi_s = reports.outward(r.value)
            csv_rows.append([r.params.tau, ns.eps, ns.xi, r.n, lo_s, hi_s, "certified"])
        reports.write_csv(out / "sweep.csv",
                          ["tau", "eps", "xi", "N", "rho_lo", "rho_hi", "status"],
                          csv_rows)
        if not ns.no_plots:
            reports.sweep_figure(out / "sweep.png",
                                 [(r.params.tau, r.value.lo, r.value.hi) for r in rows],
                                 f"eps={ns.eps} xi={ns.xi}")
        if cmd == "sweep-rotation":
            reports.write_json(out / "sweep.json", {
                "rows": csv_rows, "row_seconds": seconds,
                "provenance": reports.provenance(config, started)})
            print(f"{len(rows)} certified rows written")
            return EXIT_OK
        witness = prove_nonmonotone(rows)
        payload = {
            "decrease": {"i_tau": rows[witness.decrease[0]].params.tau,
                         "j_tau": rows[witness.decrease[1]].params.tau,
                         "margin": witness.decrease_margin},
            "increase": None if witness.increase is None else
                        {"j_tau": rows[witness.increase[0]].params.tau,
                         "k_tau": rows[witness.increase[1]].params.tau,
                         "margin": witness.increase_margin},
            "rows": csv_rows,
            "row_seconds": seconds,
            "provenance": reports.provenance(config, started),
        }
        reports.write_json(out / "witness.json", payload)
        if witness.conclusive:
            print(f"non-monotonicity certified: decrease "
                  f"{payload['decrease']['i_tau']}->{payload['decrease']['j_tau']}"
                  f" then increase at {payload['increase']['k_tau']}")
            return EXIT_OK
        print("only a certified decrease found (non-increasing violation)")
        return EXIT_INCONCLUSIVE

    if cmd == "derivative":
        p = _params(ns, taus[0])
        run = CertifiedRun.prepare(p, ns.grid_n, depth=ns.depth,
                                   freeze_tol=1e-4, resolvent=True)
        cert = certify_mixing(p, ns.grid_n, ns.n_max, run=run)
        dens = stationary_measure(p, ns.grid_n, run=run)
        der = response_derivative(p, dens, cert, run=run, m_blocks=ns.m_blocks)
        lo_s, hi_s = reports.outward(der.value)
        reports.write_json(out / "derivative.json", {
            "tau": repr(p.tau), "eps": repr(p.eps), "xi": repr(p.xi),
            "drho_lo": lo_s, "drho_hi": hi_s,
            "neumann_terms": der.neumann_terms,
            "tail_hi": reports.outward(der.tail_bound)[1],
            "defect_hi": reports.outward(der.defect_bound)[1],
            "N": der.n, "provenance": reports.provenance(config, started)})
        print(f"d rho/d tau in [{lo_s}, {hi_s}]")
        return EXIT_OK

    if cmd == "mc-ulam":
        p = _params(ns, taus[0])
        cfg = montecarlo.McConfig(seed=ns.seed, samples_per_cell=ns.samples)
        mat = montecarlo.ulam_mc(p, ns.grid_n, cfg)
        np.savetxt(out / "mc_ulam.csv", mat, delimiter=",")
        reports.write_json(out / "mc_ulam.json", {
            "N": ns.grid_n, "row_stochastic": True,
            "norm_note": "power iteration on this matrix uses the Euclidean norm",
            "provenance": reports.provenance(config, started)})
        print(f"sampled Ulam matrix {ns.grid_n}x{ns.grid_n} written")
        return EXIT_OK

    if cmd == "mc-orbit":
        p = _params(ns, taus[0])
        cfg = montecarlo.McConfig(seed=ns.seed, n_ic=ns.n_ic, n_it=ns.n_it,
                                  n_bins=ns.n_bins)
        centers, density = montecarlo.orbit_histogram(p, cfg)
        reports.write_csv(out / "mc_orbit.csv", ["bin_center", "density"],
                          list(map(list, zip(centers, density))))
        if not ns.no_plots:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
            fig, ax = plt.subplots(figsize=(8, 4))
            ax.plot(centers, density, lw=0.5)
            ax.set_xlabel("x")
            ax.set_ylabel("density")
            fig.tight_layout()
            fig.savefig(out / "mc_orbit.png", dpi=150)
            plt.close(fig)
        print(f"histogram over {ns.n_bins} bins written")
        return EXIT_OK

    if cmd == "mc-rotation":
        cfg = montecarlo.McConfig(seed=ns.seed, n_it=ns.n_it)
        rows = montecarlo.rotation_mc_sweep(taus, ns.eps, ns.xi, cfg, ns.realizations)
        reports.write_csv(out / "mc_rotation.csv", ["tau", "mean", "std"],
                          [list(r) for r in rows])
        reports.write_json(out / "mc_rotation.json", {
            "rows": [list(r) for r in rows],
            "realizations": ns.realizations, "n_it": ns.n_it,
            "provenance": reports.provenance(config, started)})
        if not ns.no_plots:
            reports.mc_profile_figure(out / "mc_rotation.png",
                                      {f"xi={ns.xi}": rows},
                                      f"eps={ns.eps}, {ns.realizations} realizations")
        print(f"{len(rows)} Monte Carlo rows written")
        return EXIT_OK

    if cmd == "compare-measures":
        p = _params(ns, taus[0])
        run = CertifiedRun.prepare(p, ns.grid_n, depth=ns.depth,
                                   freeze_tol=1e-4, resolvent=True)
        dens = stationary_measure(p, ns.grid_n, run=run)
        n_bins = ns.grid_n * max(1, 8192 // ns.grid_n)
        cfg = montecarlo.McConfig(seed=ns.seed, n_ic=ns.n_ic, n_it=ns.n_it,
                                  n_bins=n_bins)
        centers, density = montecarlo.orbit_histogram(p, cfg)
        dist = montecarlo.l1_distance_to_masses(density, dens.masses)
        sigma_env = float(np.sqrt(dens.n / (cfg.n_ic * cfg.n_it)))
        reports.write_csv(out / "compare.csv",
                          ["cell_lo", "mass_certified", "mass_mc"],
                          [[i / dens.n, dens.masses[i],
                            montecarlo.histogram_rebin(density, dens.n)[i]]
                           for i in range(dens.n)])
        payload = {
            "l1_distance": dist,
            "certified_radius_hi": reports.outward(dens.l1_error)[1],
            "stat_envelope_3sigma": 3 * sigma_env,
            "within": dist <= dens.l1_error.hi + 3 * sigma_env,
            "provenance": reports.provenance(config, started),
        }
        reports.write_json(out / "compare.json", payload)
        if not ns.no_plots:
            edges = np.arange(dens.n + 1) / dens.n
            reports.density_figure(out / "compare.png", centers, density, edges,
                                   dens.masses, f"tau={p.tau} eps={p.eps} xi={p.xi}")
        print(f"L1 distance {dist:.4f} vs radius+3sigma "
              f"{dens.l1_error.hi + 3 * sigma_env:.4f}")
        return EXIT_OK if payload["within"] else EXIT_INCONCLUSIVE

    raise ValueError(f"unhandled command {cmd}")


if __name__ == "__main__":
    sys.exit(main())
from __future__ import annotations

import json
from pathlib import Path

import pytest

from arnoldnoise.cli import EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK, main


def run_cli(*args) -> int:
    return main(list(args))


class TestRotation:
    def test_trivial_rotation_contains_tau(self, tmp_path):
        rc = run_cli("rotation", "--tau", "0.3", "--eps", "0", "--xi", "0.1",
                     "-N", "512", "--depth", "60", "--out", str(tmp_path))
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "rotation.json").read_text())
        assert float(payload["rho_lo"]) <= 0.3 <= float(payload["rho_hi"])
        assert payload["provenance"]["code_version"]

    def test_invalid_xi_is_an_error(self, tmp_path):
        rc = run_cli("rotation", "--tau", "0.3", "--eps", "0", "--xi", "1.5",
                     "--out", str(tmp_path))
        assert rc == EXIT_ERROR

    def test_certified_mode_rejects_zero_noise(self, tmp_path):
        rc = run_cli("rotation", "--tau", "0.3", "--eps", "0", "--xi", "0",
                     "--out", str(tmp_path))
        assert rc == EXIT_ERROR


class TestCertificates:
    def test_certificate_roundtrip(self, tmp_path):
        rc = run_cli("certify-mixing", "--tau", "0.7502", "--eps", "1.4",
                     "--xi", "0.1", "-N", "512", "--n-max", "24",
                     "--depth", "24", "--out", str(tmp_path))
        assert rc == EXIT_OK
        cert_file = tmp_path / "certificate.json"
        payload = json.loads(cert_file.read_text())
        assert float(payload["alpha_hi"]) < 1
        assert float(payload["theta_lo"]) > 0
        assert run_cli("check-certificate", str(cert_file)) == EXIT_OK

    def test_checker_rejects_tampered_theta(self, tmp_path):
        rc = run_cli("certify-mixing", "--tau", "0.7502", "--eps", "1.4",
                     "--xi", "0.1", "-N", "512", "--n-max", "24",
                     "--depth", "24", "--out", str(tmp_path))
        assert rc == EXIT_OK
        f = tmp_path / "certificate.json"
        payload = json.loads(f.read_text())
        payload["theta_lo"] = str(10 * float(payload["theta_lo"]))
        f.write_text(json.dumps(payload))
        assert run_cli("check-certificate", str(f)) == EXIT_INCONCLUSIVE

    def test_unattainable_certificate_is_inconclusive(self, tmp_path):
        rc = run_cli("certify-mixing", "--tau", "0.709", "--eps", "1.4",
                     "--xi", "0.01", "-N", "256", "--n-max", "6",
                     "--depth", "6", "--out", str(tmp_path))
        assert rc == EXIT_INCONCLUSIVE
        assert (tmp_path / "certify-mixing-inconclusive.json").exists()


class TestCover:
    def test_cover_and_recheck(self, tmp_path):
        rc = run_cli("cover", "--tau", "0.75:0.7505", "--eps", "1.4",
                     "--xi", "0.1", "-N", "1024", "--n-max", "24",
                     "--depth", "24", "--out", str(tmp_path))
        assert rc == EXIT_OK
        cover_file = tmp_path / "coverage.json"
        assert run_cli("check-cover", str(cover_file)) == EXIT_OK
        assert (tmp_path / "coverage.png").exists()
        assert (tmp_path / "coverage.csv").read_text().startswith("tau,")

    def test_cover_no_plots(self, tmp_path):
        rc = run_cli("cover", "--tau", "0.75:0.7502", "--eps", "1.4",
                     "--xi", "0.1", "-N", "1024", "--n-max", "24",
                     "--depth", "24", "--no-plots", "--out", str(tmp_path))
        assert rc == EXIT_OK
        assert not (tmp_path / "coverage.png").exists()


class TestSweepAndWitness:
    def test_sweep_csv_schema_and_figure(self, tmp_path):
        rc = run_cli("sweep-rotation", "--tau", "0.3:0.32:0.01", "--eps", "0.5",
                     "--xi", "0.25", "-N", "256", "--depth", "30",
                     "--out", str(tmp_path))
        assert rc == EXIT_OK
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "tau,eps,xi,N,rho_lo,rho_hi,status"
        assert len(lines) == 4
        assert (tmp_path / "sweep.png").exists()

    def test_synthetic_nonmonotone_inconclusive_on_flat(self, tmp_path):
        rc = run_cli("prove-nonmonotone", "--tau", "0.30:0.32:0.01",
                     "--eps", "0", "--xi", "0.25", "-N", "256",
                     "--depth", "30", "--out", str(tmp_path))
        # pure rotation is strictly increasing: no decrease witness
        assert rc == EXIT_INCONCLUSIVE


class TestMonteCarlo:
    def test_mc_rotation_rows(self, tmp_path):
        rc = run_cli("mc-rotation", "--tau", "0.30:0.32:0.01", "--eps", "0",
                     "--xi", "0.1", "--realizations", "8", "--n-it", "1000",
                     "--out", str(tmp_path))
        assert rc == EXIT_OK
        lines = (tmp_path / "mc_rotation.csv").read_text().splitlines()
        assert lines[0] == "tau,mean,std"
        assert len(lines) == 4

    def test_mc_orbit(self, tmp_path):
        rc = run_cli("mc-orbit", "--tau", "0.3", "--eps", "0", "--xi", "0.1",
                     "--n-ic", "4", "--n-it", "2000", "--n-bins", "50",
                     "--no-plots", "--out", str(tmp_path))
        assert rc == EXIT_OK
        assert (tmp_path / "mc_orbit.csv").exists()

    def test_mc_ulam(self, tmp_path):
        rc = run_cli("mc-ulam", "--tau", "0.3", "--eps", "1.4", "--xi", "0.1",
                     "-N", "16", "--samples", "4096", "--out", str(tmp_path))
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "mc_ulam.json").read_text())
        assert payload["row_stochastic"] is True
        assert "Euclidean" in payload["norm_note"]

    def test_compare_measures(self, tmp_path):
        rc = run_cli("compare-measures", "--tau", "0.3", "--eps", "0",
                     "--xi", "0.25", "-N", "128", "--depth", "40",
                     "--n-ic", "8", "--n-it", "5000", "--out", str(tmp_path))
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "compare.json").read_text())
        assert payload["within"] is True
        assert (tmp_path / "compare.png").exists()


class TestConfigFile:
    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("grid-n=128\ndepth=60\n")
        rc = run_cli("--config", str(cfg), "rotation", "--tau", "0.3",
                     "--eps", "0", "--xi", "0.25", "-N", "256",
                     "--out", str(tmp_path))
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "rotation.json").read_text())
        assert payload["N"] == 256  # flag wins over the file

    def test_config_provides_defaults(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("grid-n=128\ndepth=60\n")
        rc = run_cli("--config", str(cfg), "rotation", "--tau", "0.3",
                     "--eps", "0", "--xi", "0.25", "--out", str(tmp_path))
        assert rc == EXIT_OK
        payload = json.loads((tmp_path / "rotation.json").read_text())
        assert payload["N"] == 128
"""Snapshot format and the command-line front end."""

import json
import struct

import numpy as np
import pytest

from viscoflow import load_field, random_field, save_field
from viscoflow.cli import main
from viscoflow.errors import InputError
from viscoflow.snapshots import MAGIC


class TestSnapshots:
    @pytest.mark.parametrize("rank", ["scalar", "vector", "matrix"])
    def test_roundtrip(self, tmp_path, grid2d, rng, rank):
        f = random_field(grid2d, rank, rng)
        path = tmp_path / "f.vfs"
        save_field(path, f)
        g = load_field(path)
        assert g.grid.compatible(f.grid)
        assert np.array_equal(g.coeff, f.coeff)

    def test_header_layout(self, tmp_path, grid2d, rng):
        f = random_field(grid2d, "vector", rng)
        path = tmp_path / "f.vfs"
        save_field(path, f)
        raw = path.read_bytes()
        assert raw[:8] == MAGIC
        version, dim, rank_code, n, length, ncomp, frac = struct.unpack(
            "<IIIIdId", raw[8:8 + struct.calcsize("<IIIIdId")])
        assert (version, dim, rank_code, n, ncomp) == (1, 2, 1, 32, 2)
        assert length == 8.0
        # payload: ncomp * n^dim complex entries as little-endian f8 pairs
        assert len(raw) == 8 + struct.calcsize("<IIIIdId") + 2 * 32 * 32 * 16

    def test_3d_roundtrip(self, tmp_path, grid3d, rng):
        f = random_field(grid3d, "matrix", rng)
        path = tmp_path / "f.vfs"
        save_field(path, f)
        assert np.array_equal(load_field(path).coeff, f.coeff)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.vfs"
        path.write_bytes(b"NOTAFILE" + b"\x00" * 64)
        with pytest.raises(InputError):
            load_field(path)


def _write_config(path, body):
    path.write_text(body)
    return str(path)


class TestCli:
    def test_unknown_key_is_input_error(self, tmp_path, capsys):
        cfg = _write_config(tmp_path / "c.ini", "[grid]\nbogus = 1\n")
        assert main(["scaling", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
        assert "input error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["scaling", "--config", str(tmp_path / "none.ini")]) == 1

    def test_scaling_mode(self, tmp_path):
        cfg = _write_config(tmp_path / "c.ini",
                            "[run]\nseed = 7\n\n[grid]\ndim = 2\nn = 32\nlength = 8.0\n"
                            "\n[scaling]\ns_values = -1,0,1\n")
        out = tmp_path / "out"
        assert main(["scaling", "--config", cfg, "--strict", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["mode"] == "scaling"
        names = {a["name"]: a["sha256"] for a in manifest["artifacts"]}
        assert names["scaling.csv"] is not None
        body = (out / "scaling.csv").read_text()
        assert body.startswith("# viscoflow csv schema v1")

    def test_determinism(self, tmp_path):
        cfg = _write_config(tmp_path / "c.ini",
                            "[run]\nseed = 11\n\n[grid]\nn = 32\n\n[scaling]\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["scaling", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["scaling", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "scaling.csv").read_bytes() == (out2 / "scaling.csv").read_bytes()

    def test_analyze_mode(self, tmp_path, grid2d, rng):
        f = random_field(grid2d, "scalar", rng)
        snap = tmp_path / "f.vfs"
        save_field(snap, f)
        cfg = _write_config(
            tmp_path / "c.ini",
            f"[analyze]\ninput = {snap}\ns_values = 0,1\nhybrid_pairs = 0,1;1,2\n")
        out = tmp_path / "out"
        assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "norms.csv").read_text().strip().splitlines()
        assert len(lines) == 2 + 4  # schema comment + header + 4 rows

    def test_analyze_equilibrium_zero(self, tmp_path, grid2d):
        from viscoflow import SpectralField
        f = SpectralField.from_physical(grid2d, np.ones((32, 32)))
        snap = tmp_path / "eq.vfs"
        save_field(snap, f)
        cfg = _write_config(tmp_path / "c.ini",
                            f"[analyze]\ninput = {snap}\ns_values = 0,1\n")
        out = tmp_path / "out"
        assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
        rows = (out / "norms.csv").read_text().strip().splitlines()[2:]
        for row in rows:
            assert float(row.split(",")[-1]) == 0.0

    def test_linear_mode_rates(self, tmp_path):
        cfg = _write_config(
            tmp_path / "c.ini",
            "[grid]\nn = 32\nlength = 1.0\n\n[physics]\nmu = 1.0\nlambda = -0.5\n"
            "\n[linear]\npairs = rho_d\nxi_values = 1\nsamples = 400\n")
        out = tmp_path / "out"
        assert main(["linear", "--config", cfg, "--strict", "--out", str(out)]) == 0
        rows = (out / "decay.csv").read_text().strip().splitlines()[2:]
        pair, xi, fitted, oracle, rel = rows[0].split(",")
        assert pair == "rho_d"
        # nu = lambda + 2 mu = 1.5: complex regime rate nu |xi|^2/2 = 0.75
        assert float(oracle) == pytest.approx(0.75)
        assert float(rel) < 0.02

    def test_constraints_mode(self, tmp_path):
        cfg = _write_config(
            tmp_path / "c.ini",
            "[grid]\nn = 32\nlength = 1.0\n\n[constraints]\n"
            "eps = 0.02\nrefine_levels = 16,32\ndt = 0.05\nt_final = 0.3\n")
        out = tmp_path / "out"
        assert main(["constraints", "--config", cfg, "--strict", "--out", str(out)]) == 0
        rows = (out / "residuals.csv").read_text().strip().splitlines()[2:]
        res = [float(r.split(",")[1]) for r in rows]
        assert res[1] < res[0]

    def test_simulate_mode_quick(self, tmp_path):
        cfg = _write_config(
            tmp_path / "c.ini",
            "[run]\nseed = 3\n\n[grid]\nn = 32\nlength = 8.0\n"
            "\n[physics]\nalpha = 2.0\n\n[simulate]\ndt = 0.05\nt_final = 0.5\n"
            "amplitude = 0.005\n")
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--strict", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["sup_instant"] <= 10.0 * summary["initial_norm"]
        rows = (out / "norms.csv").read_text().strip().splitlines()[2:]
        assert len(rows) == 11  # a sample at every accepted step incl. t=0

    def test_iterate_mode_quick(self, tmp_path):
        cfg = _write_config(
            tmp_path / "c.ini",
            "[run]\nseed = 3\n\n[grid]\nn = 32\nlength = 8.0\n"
            "\n[physics]\nalpha = 2.0\n\n[iterate]\ndt = 0.02\nt_final = 0.2\n"
            "amplitude = 0.005\niterations = 4\n")
        out = tmp_path / "out"
        assert main(["iterate", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert not summary["flagged"]
        rows = (out / "contraction.csv").read_text().strip().splitlines()[2:]
        assert len(rows) == 4  # one row per sweep

    def test_sweep_fans_out(self, tmp_path):
        cfg = _write_config(tmp_path / "c.ini",
                            "[run]\nseed = 5\n\n[grid]\nn = 32\n\n[scaling]\n")
        out = tmp_path / "sweep"
        assert main(["scaling", "--config", cfg, "--out", str(out),
                     "--sweep", "grid.length=1.0,8.0"]) == 0
        assert (out / "grid_length=1.0" / "scaling.csv").exists()
        assert (out / "grid_length=8.0" / "scaling.csv").exists()
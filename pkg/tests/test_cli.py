import json
import os

import numpy as np
import pytest

from rotstar.cli import EXIT_AMBIGUOUS, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main


def write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


RADIAL_CFG = {
    "eos": {"kind": "polytropic", "c_minus": 1.0, "gamma0": 1.6666666666666667},
    "mu_grid": {"start": 0.5, "stop": 2.0, "num": 10, "spacing": "geometric"},
}


def test_radial_scan_monotone_mass(tmp_path):
    cfg = write(tmp_path, "cfg.json", RADIAL_CFG)
    out = tmp_path / "out"
    assert main(["radial-scan", cfg, "--out-dir", str(out)]) == EXIT_OK
    rows = (out / "radial_scan.csv").read_text().strip().splitlines()[1:]
    masses = [float(r.split(",")[2]) for r in rows]
    assert all(b > a for a, b in zip(masses, masses[1:]))
    manifest = json.loads((out / "manifest.json").read_text())
    assert "config_hash" in manifest and "versions" in manifest
    assert "radial_scan.csv" in manifest["artifacts"]


def test_unknown_key_rejected_before_compute(tmp_path):
    cfg = write(tmp_path, "cfg.json", {**RADIAL_CFG, "mystery": 1})
    out = tmp_path / "out"
    assert main(["radial-scan", cfg, "--out-dir", str(out)]) == EXIT_CONFIG
    err = json.loads((out / "error.json").read_text())
    assert err["exit_code"] == EXIT_CONFIG
    assert not (out / "radial_scan.csv").exists()


def test_missing_eos_is_config_error(tmp_path):
    cfg = write(tmp_path, "cfg.json", {"mu_grid": {"start": 1, "stop": 2, "num": 5}})
    assert main(["radial-scan", cfg, "--out-dir", str(tmp_path / "o")]) == EXIT_CONFIG


def test_solver_failure_exit_code(tmp_path):
    cfg = write(
        tmp_path,
        "cfg.json",
        {
            "eos": {"kind": "polytropic", "c_minus": 1.0, "gamma0": 1.2000001},
            "mu_grid": {"start": 0.5, "stop": 2.0, "num": 5},
        },
    )
    out = tmp_path / "out"
    assert main(["radial-scan", cfg, "--out-dir", str(out)]) == EXIT_SOLVER
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "solver"


def test_equilibrium_and_stability_commands(tmp_path):
    cfg = write(
        tmp_path,
        "cfg.json",
        {
            "eos": {"kind": "polytropic", "c_minus": 1.0, "gamma0": 1.6666666666666667},
            "rotation": {"form": "rigid", "omega_c": 1.0, "kappa": 0.05},
            "mu": 1.0,
            "grid": {"nr": 56, "nz": 56},
            "basis": {"deg_r": 8, "deg_z": 4},
        },
    )
    out1 = tmp_path / "eq"
    assert main(["equilibrium", cfg, "--out-dir", str(out1)]) == EXIT_OK
    meta = json.loads((out1 / "equilibrium.json").read_text())
    assert meta["residual"] < 1e-8
    assert (out1 / "star" / "density.csv").exists()

    out2 = tmp_path / "st"
    assert main(["stability", cfg, "--out-dir", str(out2)]) == EXIT_OK
    rep = json.loads((out2 / "stability.json").read_text())
    assert rep["verdict"] == "stable"
    assert rep["n_minus_L"] == 1


def test_spectrum_and_evolve_commands(tmp_path):
    cfg = write(
        tmp_path,
        "cfg.json",
        {
            "eos": {"kind": "polytropic", "c_minus": 1.0, "gamma0": 1.3},
            "rotation": {"form": "power_tail", "omega_c": 1.0, "r_c": 0.4, "p": 2.0, "kappa": 0.25},
            "mu": 1.0,
            "grid": {"nr": 64, "nz": 64},
            "spectrum": {"levels": 2, "ring_knots": 10},
            "evolve": {"T": 20.0, "dt_factor": 0.05, "mode": "eigenmode"},
        },
    )
    out = tmp_path / "sp"
    assert main(["spectrum", cfg, "--out-dir", str(out)]) == EXIT_OK
    rep = json.loads((out / "spectrum.json").read_text())
    assert rep["a"] > 0
    assert rep["eta0"] <= -rep["a"] + 1e-9

    out2 = tmp_path / "ev"
    assert main(["evolve", cfg, "--out-dir", str(out2)]) == EXIT_OK
    lines = (out2 / "trajectory.csv").read_text().strip().splitlines()
    assert lines[0] == "t,Y_norm,E"
    info = json.loads((out2 / "evolve.json").read_text())
    assert info["eta0"] < 0
    assert info["growth_rate"] > 0


def test_tpp_scan_command(tmp_path):
    cfg = write(
        tmp_path,
        "cfg.json",
        {
            "eos": {"kind": "polytropic", "c_minus": 1.0, "gamma0": 1.6666666666666667},
            "rotation": {"form": "power_j", "coeff": 1.0, "exponent": 2.0, "eps": 0.2},
            "mu_grid": {"start": 0.9, "stop": 1.2, "num": 5, "spacing": "linear"},
            "grid": {"nr": 56, "nz": 56},
            "basis": {"deg_r": 8, "deg_z": 4},
        },
    )
    out = tmp_path / "tpp"
    assert main(["tpp-scan", cfg, "--out-dir", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["kind"] == "fixed_j"
    rows = (out / "scan.csv").read_text().strip().splitlines()
    assert rows[0] == "mu,M,dMdmu,n_u,verdict"


def test_determinism_byte_identical(tmp_path):
    cfg = write(tmp_path, "cfg.json", RADIAL_CFG)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["radial-scan", cfg, "--out-dir", str(out), "--seed", "7"]) == EXIT_OK
        outs.append(out)
    for fname in ("radial_scan.csv", "radial_scan_summary.json"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_print_defaults():
    assert main(["print-defaults"]) == EXIT_OK


def test_bb1974_command_reports_turning_point(tmp_path):
    cfg = write(tmp_path, "cfg.json", {})
    out = tmp_path / "bb"
    assert main(["bb1974", cfg, "--out-dir", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["tpp_verdict"] == "TPP-holds"
    assert summary["mu_star_kind"] == "min"
    curve = (out / "mass_curve.csv").read_text().strip().splitlines()
    masses = [float(r.split(",")[1]) for r in curve[1:]]
    assert min(masses) < masses[0] and min(masses) < masses[-1]

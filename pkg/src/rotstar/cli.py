"""Command-line front end: config validation, orchestration, artifacts.

Subcommands read one JSON config file, validate it against a strict schema
(unknown keys are rejected), run the requested experiment, and write CSV/JSON
artifacts plus a manifest into the output directory.  Identical configs and
seeds produce byte-identical data artifacts; the manifest additionally
records wall-clock runtimes and therefore is not byte-reproducible.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 ambiguous
spectral classification.  Failures leave a machine-readable error.json.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np
import jsonschema
import scipy

import rotstar
from rotstar.eos import EquationOfState
from rotstar.equilibria import (
    GridTooSmallError,
    InsufficientResolutionError,
    NoEquilibriumError,
    save_axistar,
    solve_fixed_j,
    solve_fixed_omega,
)
from rotstar.families import bb1974_example, scan_fixed_j, scan_fixed_omega
from rotstar.radial import UnboundedStarError, family_scan_radial
from rotstar.rotlaw import law_from_config, momentum_from_config
from rotstar.spectral import (
    AmbiguousClassificationError,
    assemble_meridional_form,
    evolve_second_order,
    spectrum_report,
    velocity_basis,
)
from rotstar.stability import stability_report
from rotstar.bases import perturbation_basis

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_AMBIGUOUS = 4

_EOS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "c_minus", "gamma0"],
    "properties": {
        "kind": {"enum": ["polytropic", "asymptotically-polytropic"]},
        "c_minus": {"type": "number", "exclusiveMinimum": 0},
        "gamma0": {"type": "number"},
        "c_plus": {"type": "number"},
        "gamma_inf": {"type": "number"},
        "blend": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        },
    },
}

_ROTATION_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["form"],
    "properties": {
        "form": {"enum": ["rigid", "power_tail", "table", "bb_j", "power_j", "unit_mass_j"]},
        "omega_c": {"type": "number"},
        "r_c": {"type": "number", "exclusiveMinimum": 0},
        "p": {"type": "number"},
        "path": {"type": "string"},
        "coeff": {"type": "number"},
        "exponent": {"type": "number"},
        "kappa": {"type": "number"},
        "eps": {"type": "number"},
    },
}

_GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "nr": {"type": "integer", "minimum": 16, "maximum": 256},
        "nz": {"type": "integer", "minimum": 16, "maximum": 256},
        "pad": {"type": "number", "exclusiveMinimum": 1.0},
    },
}

_MU_GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["start", "stop", "num"],
    "properties": {
        "start": {"type": "number", "exclusiveMinimum": 0},
        "stop": {"type": "number", "exclusiveMinimum": 0},
        "num": {"type": "integer", "minimum": 2},
        "spacing": {"enum": ["linear", "geometric"]},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "eos": _EOS_SCHEMA,
        "rotation": _ROTATION_SCHEMA,
        "grid": _GRID_SCHEMA,
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "mu_grid": _MU_GRID_SCHEMA,
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "deg_r": {"type": "integer", "minimum": 1, "maximum": 20},
                "deg_z": {"type": "integer", "minimum": 1, "maximum": 12},
            },
        },
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "levels": {"type": "integer", "minimum": 2, "maximum": 5},
                "ring_knots": {"type": "integer", "minimum": 4, "maximum": 128},
                "strict": {"type": "boolean"},
            },
        },
        "evolve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "number", "exclusiveMinimum": 0},
                "dt_factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "mode": {"enum": ["eigenmode", "random"]},
            },
        },
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["fixed_omega", "fixed_j"]},
            },
        },
        "with_generator": {"type": "boolean"},
    },
}

DEFAULTS = {
    "grid": {"nr": 96, "nz": 96, "pad": 1.35},
    "solver": {"tol": 1e-10, "max_iter": 400, "damping": 0.5},
    "basis": {"deg_r": 10, "deg_z": 6},
    "spectrum": {"levels": 3, "ring_knots": 10, "strict": False},
    "evolve": {"T": 30.0, "dt_factor": 0.05, "mode": "random"},
    "with_generator": False,
}


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config validation failed: {exc.message}") from exc
    merged = json.loads(json.dumps(DEFAULTS))
    for key, value in cfg.items():
        if isinstance(value, dict) and key in merged:
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def build_eos(cfg: dict) -> EquationOfState:
    spec = cfg.get("eos")
    if spec is None:
        raise ConfigError("config requires an 'eos' section")
    kw = dict(spec)
    blend = kw.pop("blend", None)
    if blend is not None:
        kw["rho_blend_lo"], kw["rho_blend_hi"] = blend
    try:
        return EquationOfState(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid eos: {exc}") from exc


def build_mu_grid(cfg: dict) -> np.ndarray:
    spec = cfg.get("mu_grid")
    if spec is None:
        raise ConfigError("config requires a 'mu_grid' section")
    fn = np.geomspace if spec.get("spacing", "geometric") == "geometric" else np.linspace
    return fn(spec["start"], spec["stop"], spec["num"])


def solve_configured_star(cfg: dict):
    rot = cfg.get("rotation")
    if rot is None:
        raise ConfigError("config requires a 'rotation' section")
    eos = build_eos(cfg)
    mu = cfg.get("mu")
    if mu is None:
        raise ConfigError("config requires 'mu'")
    g, s = cfg["grid"], cfg["solver"]
    common = dict(
        nr=g["nr"], nz=g["nz"], pad=g["pad"],
        tol=s["tol"], max_iter=s["max_iter"], damping=s["damping"],
    )
    if rot["form"] in ("rigid", "power_tail", "table"):
        law = law_from_config(rot)
        return solve_fixed_omega(eos, law, rot.get("kappa", 0.0), mu, **common)
    momentum = momentum_from_config(rot)
    return solve_fixed_j(eos, momentum, rot.get("eps", 0.0), mu, **common)


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


class _Runner:
    def __init__(self, cfg: dict, out_dir: str, seed: int, jobs: int):
        self.cfg = cfg
        self.out = out_dir
        self.seed = seed
        self.jobs = jobs
        self.artifacts = []
        self.t0 = time.time()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        self.artifacts.append(name)
        return os.path.join(self.out, name)

    def manifest(self) -> None:
        _write_json(
            os.path.join(self.out, "manifest.json"),
            {
                "config_hash": _config_hash(self.cfg),
                "seed": self.seed,
                "versions": {
                    "rotstar": rotstar.__version__,
                    "numpy": np.__version__,
                    "scipy": scipy.__version__,
                },
                "artifacts": sorted(self.artifacts),
                "runtime_seconds": time.time() - self.t0,
            },
        )


def cmd_radial_scan(run: _Runner) -> int:
    eos = build_eos(run.cfg)
    curves = family_scan_radial(eos, build_mu_grid(run.cfg))
    curves.to_csv(run.path("radial_scan.csv"))
    _write_json(
        run.path("radial_scan_summary.json"),
        {
            "mass_extrema": curves.mass_extrema,
            "mu_tilde": curves.mu_tilde if math.isfinite(curves.mu_tilde) else "inf",
        },
    )
    return EXIT_OK


def cmd_equilibrium(run: _Runner) -> int:
    star = solve_configured_star(run.cfg)
    save_axistar(star, run.path("star"))
    _write_json(
        run.path("equilibrium.json"),
        {
            "mu": star.mu,
            "mass": star.mass,
            "support_radius": star.support_radius,
            "support_height": star.support_height,
            "c_const": star.c_const,
            "residual": star.residual,
        },
    )
    return EXIT_OK


def cmd_stability(run: _Runner) -> int:
    star = solve_configured_star(run.cfg)
    b = run.cfg["basis"]
    basis = perturbation_basis(star, deg_r=b["deg_r"], deg_z=b["deg_z"])
    report = stability_report(
        star, basis, with_generator=run.cfg.get("with_generator", False)
    )
    _write_json(run.path("stability.json"), report)
    return EXIT_OK


def cmd_spectrum(run: _Runner) -> int:
    star = solve_configured_star(run.cfg)
    sp = run.cfg["spectrum"]
    report = spectrum_report(
        star,
        levels=sp["levels"],
        ring_knots0=sp["ring_knots"],
        strict=sp["strict"],
    )
    _write_json(run.path("spectrum.json"), report.as_dict())
    return EXIT_OK


def cmd_evolve(run: _Runner) -> int:
    star = solve_configured_star(run.cfg)
    vb = velocity_basis(star, ring_knots=run.cfg["spectrum"]["ring_knots"] * 2)
    form = assemble_meridional_form(star, vb)
    ev = run.cfg["evolve"]
    n = form.eigenvalues.size
    if ev["mode"] == "eigenmode":
        u0 = np.zeros(n)
        u0[0] = 1.0
        v0 = np.zeros(n)
        lam0 = form.eigenvalues[0]
        if lam0 < 0:
            v0[0] = math.sqrt(-lam0)
    else:
        rng = np.random.default_rng(run.seed)
        u0 = rng.standard_normal(n)
        u0 /= np.linalg.norm(u0)
        v0 = np.zeros(n)
    traj = evolve_second_order(form, u0, v0, T=ev["T"], dt_factor=ev["dt_factor"])
    with open(run.path("trajectory.csv"), "w") as fh:
        fh.write("t,Y_norm,E\n")
        for t, nn, e in zip(traj.times, traj.norms, traj.energies):
            fh.write(f"{t:.11e},{nn:.11e},{e:.11e}\n")
    _write_json(
        run.path("evolve.json"),
        {
            "growth_rate": traj.growth_rate(),
            "energy_drift": traj.energy_drift,
            "eta0": float(form.eigenvalues[0]),
        },
    )
    return EXIT_OK


def cmd_tpp_scan(run: _Runner) -> int:
    rot = run.cfg.get("rotation")
    if rot is None:
        raise ConfigError("tpp-scan requires a 'rotation' section")
    eos = build_eos(run.cfg)
    mu_grid = build_mu_grid(run.cfg)
    g, b = run.cfg["grid"], run.cfg["basis"]
    kwargs = dict(
        nr=g["nr"], nz=g["nz"], deg_r=b["deg_r"], deg_z=b["deg_z"], jobs=run.jobs
    )
    if rot["form"] in ("rigid", "power_tail", "table"):
        law = law_from_config(rot)
        scan = scan_fixed_omega(eos, law, rot.get("kappa", 0.0), mu_grid, **kwargs)
    else:
        momentum = momentum_from_config(rot)
        scan = scan_fixed_j(eos, momentum, rot.get("eps", 0.0), mu_grid, **kwargs)
    _finish_scan(run, scan)
    return EXIT_OK


def cmd_bb1974(run: _Runner) -> int:
    scan, plot = bb1974_example(jobs=run.jobs)
    _finish_scan(run, scan)
    with open(run.path("mass_curve.csv"), "w") as fh:
        fh.write("mu,M\n")
        for mu, M in plot:
            fh.write(f"{mu:.11e},{M:.11e}\n")
    return EXIT_OK


def _finish_scan(run: _Runner, scan) -> None:
    scan.to_csv(run.path("scan.csv"))
    with open(run.path("plot_data.csv"), "w") as fh:
        fh.write("mu,M\n")
        for mu, M, _, _, _ in scan.table():
            fh.write(f"{mu:.11e},{M:.11e}\n")
    _write_json(run.path("summary.json"), scan.summary())


COMMANDS = {
    "radial-scan": cmd_radial_scan,
    "equilibrium": cmd_equilibrium,
    "stability": cmd_stability,
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "tpp-scan": cmd_tpp_scan,
    "bb1974": cmd_bb1974,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rotstar",
        description="Rotating-star equilibria, stability scans, and spectra.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS) + ["print-defaults"])
    parser.add_argument("config", nargs="?", help="JSON configuration file")
    parser.add_argument("--out-dir", default="rotstar_out")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--print-defaults", action="store_true", help="dump default settings and exit"
    )
    args = parser.parse_args(argv)

    if args.command == "print-defaults" or args.print_defaults:
        json.dump(DEFAULTS, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
        return EXIT_OK

    def fail(code: int, kind: str, message: str) -> int:
        payload = {"error": kind, "message": message, "exit_code": code}
        try:
            os.makedirs(args.out_dir, exist_ok=True)
            _write_json(os.path.join(args.out_dir, "error.json"), payload)
        except OSError:
            pass
        print(f"error ({kind}): {message}", file=sys.stderr)
        return code

    if args.config is None:
        return fail(EXIT_CONFIG, "config", "missing config file argument")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return fail(EXIT_CONFIG, "config", str(exc))

    run = _Runner(cfg, args.out_dir, args.seed, args.jobs)
    np.random.seed(args.seed)
    try:
        code = COMMANDS[args.command](run)
    except ConfigError as exc:
        return fail(EXIT_CONFIG, "config", str(exc))
    except AmbiguousClassificationError as exc:
        return fail(EXIT_AMBIGUOUS, "classification", str(exc))
    except (
        NoEquilibriumError,
        GridTooSmallError,
        UnboundedStarError,
        InsufficientResolutionError,
        RuntimeError,
        ValueError,
    ) as exc:
        return fail(EXIT_SOLVER, "solver", str(exc))
    run.manifest()
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Axisymmetric rotating equilibria by self-consistent-field iteration.

Both slow-rotation families are solved on a half-plane (r, z >= 0) grid with
even reflection:

* fixed angular velocity: the centrifugal potential kappa^2 int_0^r w^2 s ds
  is a fixed function of radius;
* fixed momentum distribution: the rotational potential
  eps^2 int_0^r J(m(s), M) s^-3 ds is rebuilt each sweep from the current
  iterate's cylinder mass.

Each sweep solves the Poisson problem for the current density, forms the
effective enthalpy h = rot - V - c with the constant c pinned so that
h(0, 0) equals the target center enthalpy, and maps back through the
enthalpy inverse.  Updates are damped and the damping halves whenever the
defect grows.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from rotstar.eos import EquationOfState
from rotstar.poisson import Grid, RingKernel
from rotstar.radial import RadialStar, solve_radial
from rotstar.rotlaw import (
    AngularVelocityLaw,
    MomentumDistribution,
    law_from_config,
    momentum_from_config,
)

__all__ = [
    "NoEquilibriumError",
    "GridTooSmallError",
    "InsufficientResolutionError",
    "RotationSpec",
    "AxiStar",
    "make_grid",
    "solve_fixed_omega",
    "solve_fixed_j",
    "axistar_from_radial",
    "boundary_asymptotics_check",
    "save_axistar",
    "load_axistar",
]

DENSITY_FLOOR_REL = 1e-12


class NoEquilibriumError(RuntimeError):
    """The self-consistent-field iteration failed to contract."""


class GridTooSmallError(RuntimeError):
    """The support of the density touched the grid boundary."""


class InsufficientResolutionError(RuntimeError):
    """Too few usable grid rows for the requested diagnostic."""


@dataclass(frozen=True)
class RotationSpec:
    """Rotation metadata of an equilibrium.

    kind is 'none', 'fixed_omega' (law, kappa) or 'fixed_j' (j, eps).  The
    actual azimuthal velocity is kappa * law.omega(r) * r for the first
    family and eps * j(m(r), M) / r for the second.
    """

    kind: str
    law: AngularVelocityLaw | None = None
    kappa: float = 0.0
    momentum: MomentumDistribution | None = None
    eps: float = 0.0


@dataclass
class AxiStar:
    """Axisymmetric equilibrium on a half-plane grid (even in z)."""

    eos: EquationOfState
    grid: Grid
    rho: np.ndarray
    potential: np.ndarray
    mu: float
    c_const: float
    residual: float
    support_radius: float  # R0
    support_height: float  # Z0
    mass: float
    m_of_r: np.ndarray  # cylinder mass per grid radius, m(R0) = M / (2 pi)
    rotation: RotationSpec
    floor: float
    _kernel: RingKernel | None = field(default=None, repr=False, compare=False)

    @property
    def support_mask(self) -> np.ndarray:
        return self.rho > self.floor

    @property
    def kernel(self) -> RingKernel:
        if self._kernel is None:
            self._kernel = RingKernel(self.grid)
        return self._kernel

    def h_column(self) -> np.ndarray:
        """int rho dz per radius (full line, even reflection)."""
        return self.grid.z_integral(self.rho)

    def grad_h(self):
        """Gradient of the effective enthalpy field, (d/dr, d/dz).

        The potential is differenced (it is smooth through the surface) and
        the rotational part is added analytically; h = rot - V - c, so
        grad h = (rot'(r) - dV/dr, -dV/dz).  Used to form grad rho =
        grad h / h'(rho) without ever differencing the density itself.
        """
        dVdr = _gradient_nonuniform(self.potential, self.grid.rs, axis=0)
        dVdz = np.empty_like(self.potential)
        hz = self.grid.hz
        dVdz[:, 1:-1] = (self.potential[:, 2:] - self.potential[:, :-2]) / (2 * hz)
        dVdz[:, 0] = 0.0  # even reflection
        dVdz[:, -1] = (self.potential[:, -1] - self.potential[:, -2]) / hz
        rotp = self.rotational_gradient()
        return rotp[:, None] - dVdr, -dVdz

    def rotational_gradient(self) -> np.ndarray:
        """d/dr of the rotational potential, per grid radius."""
        rs = self.grid.rs
        rot = self.rotation
        if rot.kind == "none":
            return np.zeros_like(rs)
        if rot.kind == "fixed_omega":
            return rot.kappa**2 * np.asarray(rot.law.omega(rs)) ** 2 * rs
        out = np.zeros_like(rs)
        off = rs > 0
        M = self.mass
        out[off] = rot.eps**2 * rot.momentum.J(self.m_of_r[off], M) / rs[off] ** 3
        return out

    def azimuthal_velocity_profiles(self):
        """Consistent rotation profiles on the grid radii.

        Returns (omega, d(omega r^2)/dr, Upsilon) for the actual rotation,
        built from the same arrays everywhere so that discrete identities
        relating the reduced rotational correction and the azimuthal-lift
        energy hold to round-off.
        """
        rs = self.grid.rs
        rot = self.rotation
        if rot.kind == "none":
            z = np.zeros_like(rs)
            return z, z.copy(), z.copy()
        if rot.kind == "fixed_omega":
            omega = rot.kappa * np.asarray(rot.law.omega(rs))
            d_om_r2 = rot.kappa * np.asarray(rot.law.d_omega_r2(rs))
            ups = np.empty_like(rs)
            ups[0] = 4.0 * omega[0] ** 2
            ups[1:] = rot.kappa**2 * rot.law.omega_sq_r4_derivative(rs[1:]) / rs[1:] ** 3
            return omega, d_om_r2, ups
        # fixed_j: omega = eps j(m(r), M)/r^2; chain rule through m'(r) = r h1(r)
        M = self.mass
        h1 = self.h_column()
        m = self.m_of_r
        omega = np.empty_like(rs)
        off = rs > 0
        omega[off] = rot.eps * rot.momentum.j(m[off], M) / rs[off] ** 2
        omega[0] = float(rot.eps * rot.momentum.dj_dp(0.0, M) * 0.5 * h1[0]) if np.isfinite(
            rot.momentum.dj_dp(0.0, M)
        ) else 0.0
        # d/dr (omega r^2) = eps dj/dp(m) m'(r)
        d_om_r2 = rot.eps * rot.momentum.dj_dp(m, M) * rs * h1
        ups = np.empty_like(rs)
        ups[off] = rot.eps**2 * rot.momentum.dJ_dp(m[off], M) * h1[off] / rs[off] ** 2
        ups[0] = 4.0 * omega[0] ** 2
        return omega, d_om_r2, ups


def _gradient_nonuniform(f: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    return np.gradient(f, x, axis=axis, edge_order=2)


def make_grid(
    r_max: float,
    z_max: float,
    nr: int,
    nz: int,
    refine_at: float | None = None,
    refine_fraction: float = 0.45,
    refine_halfwidth: float = 0.14,
) -> Grid:
    """Uniform tensor grid, optionally r-graded around ``refine_at``.

    Grading keeps z uniform (the Poisson kernel convolves in z) and places a
    denser uniform band of radii around the requested radius, which surface
    diagnostics need.
    """
    zs = np.linspace(0.0, z_max, nz)
    if refine_at is None:
        return Grid(np.linspace(0.0, r_max, nr), zs)
    band = refine_halfwidth * refine_at
    lo, hi = max(refine_at - band, 0.0), min(refine_at + band, r_max)
    n_fine = max(int(refine_fraction * nr), 8)
    n_coarse = nr - n_fine
    coarse = np.linspace(0.0, r_max, n_coarse)
    fine = np.linspace(lo, hi, n_fine)
    rs = np.unique(np.concatenate([coarse, fine]))
    keep = np.concatenate([[True], np.diff(rs) > 1e-9 * r_max])
    return Grid(rs[keep], zs)


def _scf_iterate(
    eos: EquationOfState,
    grid: Grid,
    kernel: RingKernel,
    mu: float,
    rho0: np.ndarray,
    rot_potential,  # callable(rho, m_of_r) -> per-radius rotational potential
    tol: float,
    max_iter: int,
    damping: float,
):
    h_center = eos.enthalpy(mu)
    floor = DENSITY_FLOOR_REL * mu
    rho = rho0.copy()
    theta = damping
    prev_err = math.inf
    grow_count = 0
    err = math.inf
    for _ in range(max_iter):
        V = kernel.potential(rho)
        rot = rot_potential(rho)
        c = -V[0, 0] - h_center
        h = rot[:, None] - V - c
        rho_raw = eos.enthalpy_inverse(np.clip(h, 0.0, None))
        rho_new = (1.0 - theta) * rho + theta * rho_raw
        err = float(np.max(np.abs(rho_new - rho))) / mu
        rho = rho_new
        if err < tol:
            break
        if err > prev_err * (1.0 + 1e-12):
            grow_count += 1
            if grow_count >= 3:
                theta *= 0.5
                grow_count = 0
                if theta < 1e-3:
                    raise NoEquilibriumError(
                        f"iteration diverged at mu={mu:g} (defect {err:.3e})"
                    )
        else:
            grow_count = 0
        prev_err = err
    else:
        raise NoEquilibriumError(
            f"no convergence in {max_iter} sweeps at mu={mu:g} (defect {err:.3e})"
        )

    if np.any(rho[-1, :] > floor) or np.any(rho[:, -1] > floor):
        raise GridTooSmallError("density support touches the grid boundary")

    # final consistent fields and residual
    V = kernel.potential(rho)
    rot = rot_potential(rho)
    c = -V[0, 0] - h_center
    h = rot[:, None] - V - c
    mask = rho > floor
    residual = float(np.max(np.abs(eos.enthalpy(rho[mask]) - h[mask])))
    return rho, V, float(c), residual, floor


def _support_extent(grid: Grid, h_equator: np.ndarray, h_axis: np.ndarray):
    """Zero crossings of the effective enthalpy along the equator and axis."""

    def crossing(x, f):
        pos = np.nonzero(f > 0)[0]
        if pos.size == 0:
            return 0.0
        i = pos[-1]
        if i + 1 >= f.size:
            return float(x[-1])
        f0, f1 = f[i], f[i + 1]
        return float(x[i] + (x[i + 1] - x[i]) * f0 / (f0 - f1))

    return crossing(grid.rs, h_equator), crossing(grid.zs, h_axis)


def _finish(eos, grid, kernel, mu, rho, V, c, residual, floor, rotation) -> AxiStar:
    m_of_r = grid.cylinder_mass(rho)
    mass = 2.0 * math.pi * float(m_of_r[-1])
    star = AxiStar(
        eos=eos,
        grid=grid,
        rho=rho,
        potential=V,
        mu=mu,
        c_const=c,
        residual=residual,
        support_radius=0.0,
        support_height=0.0,
        mass=mass,
        m_of_r=m_of_r,
        rotation=rotation,
        floor=floor,
        _kernel=kernel,
    )
    rot_arr = _rot_potential_of(star)
    h = rot_arr[:, None] - V - c
    R0, Z0 = _support_extent(grid, h[:, 0], h[0, :])
    star.support_radius = R0
    star.support_height = Z0
    return star


def _rot_potential_of(star: AxiStar) -> np.ndarray:
    rot = star.rotation
    if rot.kind == "none":
        return np.zeros_like(star.grid.rs)
    if rot.kind == "fixed_omega":
        return rot.kappa**2 * np.asarray(rot.law.centrifugal_integral(star.grid.rs))
    return _momentum_potential(star.grid, star.rho, rot.momentum, rot.eps)


def _momentum_potential(
    grid: Grid, rho: np.ndarray, momentum: MomentumDistribution, eps: float
) -> np.ndarray:
    """eps^2 int_0^r J(m(s), M) s^-3 ds on the grid radii.

    The integrand vanishes at the axis because J = O(m^2) and m = O(s^2).
    """
    rs = grid.rs
    m = grid.cylinder_mass(rho)
    M = 2.0 * math.pi * float(m[-1])
    integrand = np.zeros_like(rs)
    off = rs > 0
    integrand[off] = momentum.J(m[off], M) / rs[off] ** 3
    out = np.zeros_like(rs)
    out[1:] = np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(rs)) * eps**2
    return out


def solve_fixed_omega(
    eos: EquationOfState,
    law: AngularVelocityLaw,
    kappa: float,
    mu: float,
    grid: Grid | None = None,
    tol: float = 1e-10,
    max_iter: int = 400,
    damping: float = 0.5,
    nr: int = 96,
    nz: int = 96,
    pad: float = 1.35,
) -> AxiStar:
    """Equilibrium with azimuthal velocity kappa * law.omega(r) * r.

    Starts from the non-rotating profile with the same center density; the
    kappa = 0 limit therefore reproduces it up to grid interpolation.
    """
    seed = solve_radial(eos, mu)
    if grid is None:
        grid = make_grid(pad * seed.radius, pad * seed.radius, nr, nz)
    if grid.rs[-1] <= seed.radius:
        raise GridTooSmallError("grid does not contain the non-rotating support")
    kernel = RingKernel(grid)
    RG, ZG = grid.meshes()
    rho0 = seed.rho_of(np.sqrt(RG**2 + ZG**2))
    rot_arr = kappa**2 * np.asarray(law.centrifugal_integral(grid.rs))

    rho, V, c, residual, floor = _scf_iterate(
        eos, grid, kernel, mu, rho0, lambda r_: rot_arr, tol, max_iter, damping
    )
    rotation = RotationSpec(kind="fixed_omega", law=law, kappa=kappa)
    return _finish(eos, grid, kernel, mu, rho, V, c, residual, floor, rotation)


def solve_fixed_j(
    eos: EquationOfState,
    momentum: MomentumDistribution,
    eps: float,
    mu: float,
    grid: Grid | None = None,
    tol: float = 1e-10,
    max_iter: int = 400,
    damping: float = 0.5,
    nr: int = 96,
    nz: int = 96,
    pad: float = 1.35,
) -> AxiStar:
    """Equilibrium whose specific angular momentum follows a fixed
    distribution over cylinder mass; the rotational potential is rebuilt
    from the current iterate each sweep."""
    seed = solve_radial(eos, mu)
    momentum.validate_origin(seed.mass)
    if grid is None:
        grid = make_grid(pad * seed.radius, pad * seed.radius, nr, nz)
    if grid.rs[-1] <= seed.radius:
        raise GridTooSmallError("grid does not contain the non-rotating support")
    kernel = RingKernel(grid)
    RG, ZG = grid.meshes()
    rho0 = seed.rho_of(np.sqrt(RG**2 + ZG**2))

    rho, V, c, residual, floor = _scf_iterate(
        eos,
        grid,
        kernel,
        mu,
        rho0,
        lambda r_: _momentum_potential(grid, r_, momentum, eps),
        tol,
        max_iter,
        damping,
    )
    rotation = RotationSpec(kind="fixed_j", momentum=momentum, eps=eps)
    return _finish(eos, grid, kernel, mu, rho, V, c, residual, floor, rotation)


def axistar_from_radial(
    star: RadialStar,
    grid: Grid | None = None,
    nr: int = 96,
    nz: int = 96,
    pad: float = 1.35,
) -> AxiStar:
    """Sample a non-rotating profile onto a half-plane grid.

    The potential comes from the radial profile (exterior monopole included),
    so no field solve is needed; useful as the exact kappa = 0 reference and
    as the substrate for stability assemblies on non-rotating stars.
    """
    if grid is None:
        grid = make_grid(pad * star.radius, pad * star.radius, nr, nz)
    if grid.rs[-1] <= star.radius:
        raise GridTooSmallError("grid does not contain the support")
    RG, ZG = grid.meshes()
    S = np.sqrt(RG**2 + ZG**2)
    rho = star.rho_of(S)
    V = star.potential_of(S)
    floor = DENSITY_FLOOR_REL * star.mu
    m_of_r = grid.cylinder_mass(rho)
    return AxiStar(
        eos=star.eos,
        grid=grid,
        rho=rho,
        potential=V,
        mu=star.mu,
        c_const=star.mass / star.radius,
        residual=0.0,
        support_radius=star.radius,
        support_height=star.radius,
        mass=2.0 * math.pi * float(m_of_r[-1]),
        m_of_r=m_of_r,
        rotation=RotationSpec(kind="none"),
        floor=floor,
    )


def boundary_asymptotics_check(
    star: AxiStar,
    lam: float,
    band: tuple[float, float] = (0.01, 0.1),
    min_rows: int = 8,
):
    """Fit the decay exponent of r -> int rho^lam dz toward the support edge.

    Returns (fitted_slope, target_slope) where the target is
    lam / (gamma0 - 1) + 1/2.  Radii with support distance in
    ``band`` (fractions of R0) enter the fit; fewer than ``min_rows`` usable
    rows raises InsufficientResolutionError.
    """
    if lam <= 0:
        raise ValueError("exponent lambda must be positive")
    R0 = star.support_radius
    rs = star.grid.rs
    q = star.grid.z_integral(np.where(star.rho > star.floor, star.rho, 0.0) ** lam)
    dist = R0 - rs
    sel = (dist > band[0] * R0) & (dist < band[1] * R0) & (q > 0)
    if np.count_nonzero(sel) < min_rows:
        raise InsufficientResolutionError(
            f"only {np.count_nonzero(sel)} usable radii in the fit band"
        )
    slope = float(np.polyfit(np.log(dist[sel]), np.log(q[sel]), 1)[0])
    target = lam / (star.eos.gamma0 - 1.0) + 0.5
    return slope, target


# -- persistence --------------------------------------------------------------


def save_axistar(star: AxiStar, path: str) -> None:
    """Write a self-describing bundle: metadata JSON + row-major density CSV."""
    os.makedirs(path, exist_ok=True)
    rot = star.rotation
    rot_meta: dict = {"kind": rot.kind}
    if rot.kind == "fixed_omega":
        rot_meta["kappa"] = rot.kappa
        rot_meta["law"] = _law_config(rot.law)
    elif rot.kind == "fixed_j":
        rot_meta["eps"] = rot.eps
        rot_meta["momentum"] = _momentum_config(rot.momentum)
    eos = star.eos
    meta = {
        "mu": star.mu,
        "mass": star.mass,
        "support_radius": star.support_radius,
        "support_height": star.support_height,
        "c_const": star.c_const,
        "residual": star.residual,
        "floor": star.floor,
        "rotation": rot_meta,
        "eos": {
            "kind": eos.kind,
            "c_minus": eos.c_minus,
            "gamma0": eos.gamma0,
            "c_plus": eos.c_plus,
            "gamma_inf": eos.gamma_inf,
            "rho_blend_lo": eos.rho_blend_lo,
            "rho_blend_hi": eos.rho_blend_hi,
        },
        "grid": {"rs": star.grid.rs.tolist(), "zs": star.grid.zs.tolist()},
    }
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    np.savetxt(os.path.join(path, "density.csv"), star.rho, delimiter=",", fmt="%.16e")
    np.savetxt(
        os.path.join(path, "potential.csv"), star.potential, delimiter=",", fmt="%.16e"
    )


def _law_config(law) -> dict:
    from rotstar import rotlaw

    if isinstance(law, rotlaw.RigidLaw):
        return {"form": "rigid", "omega_c": law.omega_c}
    if isinstance(law, rotlaw.PowerTailLaw):
        return {"form": "power_tail", "omega_c": law.omega_c, "r_c": law.r_c, "p": law.p}
    if isinstance(law, rotlaw.TabulatedLaw):
        return {
            "form": "table",
            "r": law.r_samples.tolist(),
            "omega": law.omega_samples.tolist(),
        }
    raise ValueError("unknown angular velocity law")


def _momentum_config(momentum) -> dict:
    from rotstar import rotlaw

    if isinstance(momentum, rotlaw.FixedTotalMomentum):
        return {"form": "bb_j"}
    if isinstance(momentum, rotlaw.PowerLawMomentum):
        return {"form": "power_j", "coeff": momentum.coeff, "exponent": momentum.exponent}
    if isinstance(momentum, rotlaw.UnitMassMomentum):
        return {
            "form": "unit_mass_j",
            "coeff": momentum.coeff,
            "exponent": momentum.exponent,
        }
    raise ValueError("unknown momentum distribution")


def load_axistar(path: str) -> AxiStar:
    with open(os.path.join(path, "meta.json")) as fh:
        meta = json.load(fh)
    eos_meta = {k: v for k, v in meta["eos"].items() if v is not None}
    eos = EquationOfState(**eos_meta)
    grid = Grid(np.asarray(meta["grid"]["rs"]), np.asarray(meta["grid"]["zs"]))
    rho = np.loadtxt(os.path.join(path, "density.csv"), delimiter=",")
    V = np.loadtxt(os.path.join(path, "potential.csv"), delimiter=",")
    rot_meta = meta["rotation"]
    if rot_meta["kind"] == "fixed_omega":
        rotation = RotationSpec(
            kind="fixed_omega",
            law=law_from_config(rot_meta["law"]),
            kappa=rot_meta["kappa"],
        )
    elif rot_meta["kind"] == "fixed_j":
        rotation = RotationSpec(
            kind="fixed_j",
            momentum=momentum_from_config(rot_meta["momentum"]),
            eps=rot_meta["eps"],
        )
    else:
        rotation = RotationSpec(kind="none")
    m_of_r = grid.cylinder_mass(rho)
    return AxiStar(
        eos=eos,
        grid=grid,
        rho=rho,
        potential=V,
        mu=meta["mu"],
        c_const=meta["c_const"],
        residual=meta["residual"],
        support_radius=meta["support_radius"],
        support_height=meta["support_height"],
        mass=meta["mass"],
        m_of_r=m_of_r,
        rotation=rotation,
        floor=meta["floor"],
    )

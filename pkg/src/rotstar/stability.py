"""Quadratic stability forms, mass-zero restriction, and mode counting.

The linearized dynamics around a rotating equilibrium conserve a quadratic
energy; its density block is the perturbation-energy form

    E[dr] = int h''(rho0) dr^2 dx - int int dr(x) dr(y) / |x - y| dx dy,

and for a centrifugally stable rotation the number of growing-mode pairs
equals the number of negative directions of the reduced form

    E[dr] + 2 pi int_0^R0 W(r) F(r)^2 dr,   F(r) = int_0^r s int dr dz ds,

restricted to zero total mass, where the rotational weight W is
Upsilon(r) / (r * int rho0 dz) for a prescribed angular velocity and
eps^2 dJ/dp(m(r), M) / r^3 for a prescribed momentum distribution (the two
agree identically through Upsilon = 2 omega d(omega r^2)/dr / r).

A matched discretization of the full linearized generator is provided as a
cross-check: its construction is exactly Hamiltonian at the matrix level, so
eigenvalues come in {l, -l, conj l, -conj l} quadruples and the implicit
midpoint evolution conserves the discrete energy to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import eig

from rotstar.bases import PerturbationBasis, perturbation_basis, tensor_shapes
from rotstar.equilibria import AxiStar
from rotstar.forms import QuadraticForm, restrict_to_complement

__all__ = [
    "VERDICT_ZERO_TOL",
    "assemble_perturbation_energy",
    "assemble_reduced_energy",
    "restrict_mass_zero",
    "mass_constraint",
    "density_form_value",
    "AzimuthalLift",
    "lift_azimuthal_velocity",
    "LinearState",
    "casimir_second_variation",
    "Generator",
    "assemble_generator",
    "generator_spectrum",
    "generator_unstable_count",
    "LinearTrajectory",
    "evolve_linearized",
    "evolve_linearized_state",
    "stability_report",
]

#: kernel band used for verdict-level inertia: discrete kernels of the
#: continuum forms (the vertical-shift mode) carry O(quadrature) leakage,
#: well above the raw 1e-8 pencil band but far below the physical gaps.
VERDICT_ZERO_TOL = 1e-3


def _volume_weights(star: AxiStar) -> np.ndarray:
    g = star.grid
    return 2.0 * math.pi * np.outer(g.wr * g.rs, g.wz_line())


def _pair_integrals(weighted_fields: np.ndarray, fields: np.ndarray) -> np.ndarray:
    n = fields.shape[0]
    a = weighted_fields.reshape(n, -1)
    b = fields.reshape(n, -1)
    return a @ b.T


def _zero_cross_parity(mat: np.ndarray, parity: np.ndarray) -> np.ndarray:
    cross = parity[:, None] != parity[None, :]
    out = mat.copy()
    out[cross] = 0.0
    return out


def assemble_perturbation_energy(
    star: AxiStar, basis: PerturbationBasis, zero_tol: float | None = None
) -> QuadraticForm:
    """Pressure-plus-self-gravity energy form on the basis, with its
    weighted-L2 Gram.  Opposite-parity couplings vanish identically and are
    zeroed instead of quadratured."""
    w = _volume_weights(star)
    fields = basis.fields
    gram = _pair_integrals(fields * (w * basis.phi2)[None], fields)
    gram = _zero_cross_parity(gram, basis.parity)

    pots = np.empty_like(fields)
    for k in range(basis.count):
        par = "even" if basis.parity[k] > 0 else "odd"
        pots[k] = star.kernel.potential(fields[k], parity=par)
    grav = _pair_integrals(fields * w[None], pots)
    grav = _zero_cross_parity(0.5 * (grav + grav.T), basis.parity)

    kwargs = {} if zero_tol is None else {"zero_tol": zero_tol}
    return QuadraticForm(gram + grav, gram, **kwargs)


def rotational_weight(star: AxiStar):
    """Per-radius weight W(r) of the reduced rotational correction, on the
    radial support mask (zero outside)."""
    rs = star.grid.rs
    h1 = star.h_column()
    sup = (h1 > 0) & (rs <= star.support_radius)
    w = np.zeros_like(rs)
    rot = star.rotation
    if rot.kind == "none":
        return w, sup
    if rot.kind == "fixed_j":
        m = star.m_of_r
        off = sup & (rs > 0)
        w[off] = rot.eps**2 * rot.momentum.dJ_dp(m[off], star.mass) / rs[off] ** 3
        return w, sup
    _, _, ups = star.azimuthal_velocity_profiles()
    off = sup & (rs > 0)
    w[off] = ups[off] / (rs[off] * h1[off])
    return w, sup


def cumulative_cylinder_integrals(star: AxiStar, basis: PerturbationBasis) -> np.ndarray:
    """F_k(r) = int_0^r s [int delta_rho_k dz] ds for every basis field.

    Odd fields integrate to zero over z and get F identically zero.
    """
    g = star.grid
    n = basis.count
    F = np.zeros((n, g.nr))
    dr = np.diff(g.rs)
    for k in range(n):
        if basis.parity[k] < 0:
            continue
        integrand = g.rs * g.z_integral(basis.fields[k])
        F[k, 1:] = np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * dr)
    return F


def mass_constraint(star: AxiStar, basis: PerturbationBasis) -> np.ndarray:
    """Total-mass functionals int delta_rho_k dx, consistent with the
    cumulative cylinder integrals (2 pi F_k at the outer grid edge)."""
    F = cumulative_cylinder_integrals(star, basis)
    return 2.0 * math.pi * F[:, -1]


def assemble_reduced_energy(
    star: AxiStar, basis: PerturbationBasis, zero_tol: float | None = None
) -> QuadraticForm:
    """Perturbation energy plus the rotational correction of the reduced
    stability form.  For a non-rotating star the correction vanishes and the
    result equals the plain energy form."""
    base = assemble_perturbation_energy(star, basis, zero_tol=zero_tol)
    rot = star.rotation
    if rot.kind == "none":
        return base
    if rot.kind == "fixed_omega" and rot.kappa == 0.0:
        return base
    w, sup = rotational_weight(star)
    if np.any(w[sup] < 0):
        raise ValueError(
            "rotation is Rayleigh unstable on this star; the reduced form "
            "does not apply, use the second-order meridional analysis"
        )
    F = cumulative_cylinder_integrals(star, basis)
    wr = star.grid.wr
    R = 2.0 * math.pi * (F * (wr * w)[None, :]) @ F.T
    kwargs = {} if zero_tol is None else {"zero_tol": zero_tol}
    return QuadraticForm(base.matrix + R, base.gram, **kwargs)


def restrict_mass_zero(form: QuadraticForm, star: AxiStar, basis: PerturbationBasis) -> QuadraticForm:
    """Restrict a form to perturbations with zero total mass.

    When every basis function already integrates to zero the constraint is
    vacuous; the input is returned with a warning flag set.
    """
    return restrict_to_complement(form, mass_constraint(star, basis))


def density_form_value(star: AxiStar, fld: np.ndarray, parity: str = "even") -> float:
    """Energy-form value of a single density perturbation field."""
    w = _volume_weights(star)
    mask = star.support_mask
    phi2 = np.zeros_like(star.rho)
    phi2[mask] = star.eos.enthalpy_second(star.rho[mask])
    pressure = float(np.sum(w * phi2 * fld * fld))
    pot = star.kernel.potential(fld, parity=parity)
    return pressure + float(np.sum(w * fld * pot))


@dataclass
class AzimuthalLift:
    """Azimuthal velocity induced by a mass-zero density perturbation."""

    u_theta: np.ndarray  # per grid radius
    ratio: float  # ||u_theta||_{L2 rho0} / ||delta_rho||_{L2 h''}
    energy: float  # rotational kinetic quadratic value of the lift
    accessibility_residual: float


def lift_azimuthal_velocity(
    star: AxiStar, basis: PerturbationBasis, coeffs: np.ndarray
) -> AzimuthalLift:
    """Lift of a constrained density perturbation to the azimuthal velocity
    that keeps the pair dynamically accessible.

    Requires a centrifugally stable rotation and zero total mass; the
    returned energy satisfies  reduced_form = energy_form + lift energy
    exactly at the discrete level, because all three are built from the same
    grid profiles.
    """
    rot = star.rotation
    if rot.kind == "none":
        raise ValueError("lift needs a rotating star")
    omega, d_om_r2, ups = star.azimuthal_velocity_profiles()
    rs = star.grid.rs
    h1 = star.h_column()
    sup = (h1 > 0) & (rs <= star.support_radius)
    if np.any(ups[sup] <= 0):
        raise ValueError("lift needs a centrifugally (Rayleigh) stable rotation")
    total = float(mass_constraint(star, basis) @ np.asarray(coeffs))
    F = np.asarray(coeffs) @ cumulative_cylinder_integrals(star, basis)
    scale = np.max(np.abs(F)) + 1e-300
    if abs(total) > 1e-8 * 2.0 * math.pi * scale:
        raise ValueError("lift needs a zero-total-mass perturbation")

    u = np.zeros_like(rs)
    off = sup & (rs > 0)
    u[off] = d_om_r2[off] / rs[off] ** 2 * F[off] / h1[off]

    wr = star.grid.wr
    u_norm_sq = 2.0 * math.pi * float(np.sum(wr[off] * rs[off] * u[off] ** 2 * h1[off]))
    aw = np.zeros_like(rs)
    aw[off] = 4.0 * omega[off] ** 2 / ups[off]
    energy = 2.0 * math.pi * float(
        np.sum(wr[off] * aw[off] * rs[off] * u[off] ** 2 * h1[off])
    )

    dfield = basis.combine(coeffs)
    w = _volume_weights(star)
    d_norm_sq = float(np.sum(w * basis.phi2 * dfield * dfield))
    ratio = math.sqrt(u_norm_sq / d_norm_sq) if d_norm_sq > 0 else math.inf

    lhs = u * h1
    rhs = np.zeros_like(rs)
    rhs[off] = d_om_r2[off] / rs[off] ** 2 * F[off]
    acc = float(np.max(np.abs(lhs - rhs))) / (np.max(np.abs(rhs)) + 1e-300)
    return AzimuthalLift(u_theta=u, ratio=ratio, energy=energy, accessibility_residual=acc)


@dataclass
class LinearState:
    """Grid representation of a perturbation (rho, v_theta; v_r, v_z)."""

    rho: np.ndarray
    v_theta: np.ndarray
    v_r: np.ndarray
    v_z: np.ndarray
    parity: str = "even"  # parity of the density component


def casimir_second_variation(star: AxiStar, state: LinearState) -> float:
    """Conserved quadratic of the linearized dynamics:
    energy form of rho + rotational kinetic form of v_theta + meridional
    kinetic energy.  Needs a centrifugally stable rotation for the v_theta
    weight to exist."""
    w = _volume_weights(star)
    val = density_form_value(star, state.rho, parity=state.parity)
    if np.any(state.v_theta != 0):
        omega, _, ups = star.azimuthal_velocity_profiles()
        rs = star.grid.rs
        h1 = star.h_column()
        sup = (h1 > 0) & (rs <= star.support_radius)
        if np.any(ups[sup] <= 0):
            raise ValueError("v_theta energy needs a Rayleigh stable rotation")
        aw = np.zeros_like(rs)
        aw[sup] = 4.0 * omega[sup] ** 2 / ups[sup]
        val += float(np.sum(w * (aw[:, None] * star.rho) * state.v_theta**2))
    val += float(np.sum(w * star.rho * (state.v_r**2 + state.v_z**2)))
    return val


# -- linearized generator -----------------------------------------------------


@dataclass
class Generator:
    """Whitened Galerkin matrices of the linearized dynamics (one z-parity).

    Coordinates: q = (density, azimuthal velocity) and p = meridional
    velocity, all pre-whitened so every Gram is the identity.  The evolution
    is dq/dt = P p, dp/dt = -P^T (Lh q)  with Lh = blockdiag(Lq, Aq); the
    quadratic q^T Lh q + p^T p is conserved exactly.
    """

    n_density: int
    n_theta: int
    n_merid: int
    P: np.ndarray  # (n_density + n_theta, n_merid)
    Lh: np.ndarray  # (n_density + n_theta, n_density + n_theta), symmetric
    projectors: tuple | None = None  # weighted maps from grid fields to coords
    matrix: np.ndarray = field(init=False)

    def __post_init__(self):
        nq = self.n_density + self.n_theta
        npp = self.n_merid
        G = np.zeros((nq + npp, nq + npp))
        G[:nq, nq:] = self.P
        G[nq:, :nq] = -self.P.T @ self.Lh
        self.matrix = G
        self._lh_norm = float(np.linalg.norm(self.Lh, 2))

    def eigenvalues(self) -> np.ndarray:
        return eig(self.matrix, right=False)

    def energy(self, z: np.ndarray) -> float:
        nq = self.n_density + self.n_theta
        q, p = z[:nq], z[nq:]
        return float(q @ self.Lh @ q + p @ p)

    def energy_scale(self, z: np.ndarray) -> float:
        nq = self.n_density + self.n_theta
        q, p = z[:nq], z[nq:]
        return float(np.abs(q @ self.Lh @ q) + q @ q * self._lh_norm + p @ p)

    def project(self, state: "LinearState") -> np.ndarray:
        """Coefficients of the grid state in the generator's coordinates."""
        if self.projectors is None:
            raise ValueError("generator was assembled without projection data")
        w_rho, w_theta, w_vr, w_vz = self.projectors
        return np.concatenate(
            [
                w_rho @ state.rho.ravel(),
                w_theta @ state.v_theta.ravel(),
                w_vr @ state.v_r.ravel() + w_vz @ state.v_z.ravel(),
            ]
        )

    def state_norm_sq(self, z: np.ndarray) -> float:
        return float(z @ z)


def _whiten(gram: np.ndarray, cutoff: float = 1e-12):
    w, u = np.linalg.eigh(gram)
    keep = w > cutoff * w[-1]
    return u[:, keep] / np.sqrt(w[keep])


def assemble_generator(
    star: AxiStar,
    parity: str = "even",
    deg_r: int = 8,
    deg_z: int = 4,
    vel_deg_r: int = 8,
    vel_deg_z: int = 4,
) -> Generator:
    """Discretize the linearized dynamics on one z-parity sector.

    Density and azimuthal-velocity scalars share tensor-polynomial shapes;
    meridional velocities are gradients of a second scalar family (opposite
    vertical parity bookkeeping is handled internally: an 'even' sector means
    even density, even v_theta, even v_r and odd v_z).
    """
    rot = star.rotation
    if rot.kind == "none":
        raise ValueError("the generator needs a rotating star (kappa or eps > 0)")
    omega, d_om_r2, ups = star.azimuthal_velocity_profiles()
    g = star.grid
    rs = g.rs
    h1 = star.h_column()
    sup = (h1 > 0) & (rs <= star.support_radius)
    if np.any(ups[sup] <= 0):
        raise ValueError("the generator needs a Rayleigh stable rotation")

    mask = star.support_mask
    w = _volume_weights(star)
    phi2 = np.zeros_like(star.rho)
    phi2[mask] = star.eos.enthalpy_second(star.rho[mask])
    inv_phi2 = np.zeros_like(star.rho)
    inv_phi2[mask] = 1.0 / phi2[mask]

    # density shapes: delta_rho = chi * inv_phi2 ; v_theta shapes: plain chi
    dens = tensor_shapes(rs, g.zs, star.support_radius, star.support_height,
                         deg_r, deg_z, parity=parity)
    dfields = dens.values * inv_phi2[None]
    # v_theta lives in L2_rho0; same scalar shapes
    tfields = dens.values

    vel = tensor_shapes(rs, g.zs, star.support_radius, star.support_height,
                        vel_deg_r, vel_deg_z, parity=parity)
    # drop the constant shape: zero gradient
    keep = [k for k, (i, j) in enumerate(vel.degrees) if (i, j) != (0, 0)]
    vr = vel.grad_r[keep]
    vz = vel.grad_z[keep]

    # Grams
    G1 = _pair_integrals(dfields * (w * phi2)[None], dfields)
    rho_w = w * star.rho
    G2 = _pair_integrals(tfields * rho_w[None], tfields)
    GY = np.einsum("aij,bij->ab", vr * rho_w[None], vr) + np.einsum(
        "aij,bij->ab", vz * rho_w[None], vz
    )

    B1 = _whiten(G1)
    B2 = _whiten(G2)
    BY = _whiten(GY)

    # density energy block
    pots = np.empty_like(dfields)
    for k in range(dfields.shape[0]):
        pots[k] = star.kernel.potential(dfields[k], parity=parity)
    Lq = G1 + _pair_integrals(dfields * w[None], pots)
    Lq = 0.5 * (Lq + Lq.T)

    # azimuthal kinetic block: weight 4 omega^2 rho0 / Upsilon
    aw = np.zeros_like(rs)
    aw[sup] = 4.0 * omega[sup] ** 2 / ups[sup]
    Aq = _pair_integrals(tfields * (w * aw[:, None] * star.rho)[None], tfields)

    # couplings: M1[j, a] = int rho0 grad(xi_a) . grad(chi_j) dx
    M1 = np.einsum("jkl,akl->ja", dens.grad_r * rho_w[None], vr) + np.einsum(
        "jkl,akl->ja", dens.grad_z * rho_w[None], vz
    )
    # M2[j, a] = -int rho0 chi_j (d(omega r^2)/dr / r) v_r(a) dx
    dor_over_r = np.zeros_like(rs)
    dor_over_r[rs > 0] = d_om_r2[rs > 0] / rs[rs > 0]
    dor_over_r[0] = 2.0 * omega[0]
    M2 = -np.einsum("jkl,akl->ja", tfields * (rho_w * dor_over_r[:, None])[None], vr)

    # whitened blocks
    Lt = B1.T @ Lq @ B1
    At = B2.T @ Aq @ B2
    P1 = B1.T @ M1 @ BY
    P2 = B2.T @ M2 @ BY
    n1, n2, ny = P1.shape[0], P2.shape[0], P1.shape[1]
    P = np.vstack([P1, P2])
    Lh = np.zeros((n1 + n2, n1 + n2))
    Lh[:n1, :n1] = 0.5 * (Lt + Lt.T)
    Lh[n1:, n1:] = 0.5 * (At + At.T)
    npts = w.size
    projectors = (
        B1.T @ (dfields * (w * phi2)[None]).reshape(-1, npts),
        B2.T @ (tfields * rho_w[None]).reshape(-1, npts),
        BY.T @ (vr * rho_w[None]).reshape(-1, npts),
        BY.T @ (vz * rho_w[None]).reshape(-1, npts),
    )
    return Generator(
        n_density=n1, n_theta=n2, n_merid=ny, P=P, Lh=Lh, projectors=projectors
    )


def generator_unstable_count(gen: Generator, rel_tol: float = 1e-6):
    """Number of eigenvalues with real part above tol, the growth rate, and
    the worst quadruple-symmetry defect (relative)."""
    lam = gen.eigenvalues()
    scale = np.max(np.abs(lam)) + 1e-300
    tol = rel_tol * scale
    count = int(np.sum(lam.real > tol))
    growth = float(np.max(lam.real))
    # quadruple symmetry: spectrum maps to itself under negation
    defect = 0.0
    for v in lam:
        defect = max(defect, float(np.min(np.abs(lam + v))) / scale)
    return count, growth, defect


@dataclass
class LinearTrajectory:
    times: np.ndarray
    energies: np.ndarray
    norms: np.ndarray
    states: np.ndarray  # (n_steps + 1, dim)
    energy_scales: np.ndarray  # magnitude of the energy terms per step

    @property
    def energy_drift(self) -> float:
        """Conservation defect relative to the size of the energy terms.

        On growing trajectories the conserved quadratic is an O(eps)
        cancellation of huge terms, so the defect is normalized by the term
        magnitude rather than by the (possibly tiny) conserved value.
        """
        scale = np.max(self.energy_scales) + 1e-300
        return float(np.max(np.abs(self.energies - self.energies[0]))) / scale

    def growth_rate(self, window: float = 0.5) -> float:
        """Log-slope of the state norm over the trailing fraction of the run."""
        n = self.times.size
        i0 = int((1.0 - window) * n)
        y = np.log(self.norms[i0:])
        return float(np.polyfit(self.times[i0:], y, 1)[0])


def evolve_linearized(gen: Generator, z0: np.ndarray, T: float, dt: float) -> LinearTrajectory:
    """Implicit-midpoint evolution of the generator; conserves the discrete
    energy (the Casimir second variation in whitened coordinates) exactly up
    to linear-solver round-off."""
    n_steps = max(int(round(T / dt)), 1)
    dim = gen.matrix.shape[0]
    z = np.asarray(z0, dtype=float).copy()
    if z.shape != (dim,):
        raise ValueError(f"state dimension should be {dim}")
    A = np.eye(dim) - 0.5 * dt * gen.matrix
    B = np.eye(dim) + 0.5 * dt * gen.matrix
    lu, piv = sla.lu_factor(A)
    times = np.empty(n_steps + 1)
    energies = np.empty(n_steps + 1)
    norms = np.empty(n_steps + 1)
    scales = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, dim))
    for i in range(n_steps + 1):
        times[i] = i * dt
        energies[i] = gen.energy(z)
        scales[i] = gen.energy_scale(z)
        norms[i] = math.sqrt(gen.state_norm_sq(z))
        states[i] = z
        if i < n_steps:
            z = sla.lu_solve((lu, piv), B @ z)
    return LinearTrajectory(times, energies, norms, states, scales)


def generator_spectrum(star: AxiStar, parities=("even", "odd"), **kwargs) -> np.ndarray:
    """Eigenvalues of the discretized linearized generator over the requested
    parity sectors (concatenated)."""
    lams = [assemble_generator(star, parity=p, **kwargs).eigenvalues() for p in parities]
    return np.concatenate(lams)


def evolve_linearized_state(
    star: AxiStar,
    state0: LinearState,
    T: float,
    dt: float | None = None,
    **generator_kwargs,
) -> LinearTrajectory:
    """Project a grid perturbation onto the generator's parity sector and
    evolve it; the default step resolves the fastest oscillation."""
    gen = assemble_generator(star, parity=state0.parity, **generator_kwargs)
    if dt is None:
        lam_max = float(np.max(np.abs(gen.eigenvalues().imag)))
        dt = 0.1 / max(lam_max, 1e-12)
    return evolve_linearized(gen, gen.project(state0), T, dt)


def stability_report(
    star: AxiStar,
    basis: PerturbationBasis | None = None,
    with_generator: bool = False,
    zero_tol: float = VERDICT_ZERO_TOL,
) -> dict:
    """Counts and verdict in the report schema used by the command line."""
    if basis is None:
        basis = perturbation_basis(star)
    L = assemble_perturbation_energy(star, basis, zero_tol=zero_tol)
    K = assemble_reduced_energy(star, basis, zero_tol=zero_tol)
    Kc = restrict_mass_zero(K, star, basis)
    inertia = Kc.inertia()
    report = {
        "n_minus_L": L.n_minus(),
        "n_minus_K_constrained": inertia.n_minus,
        "n_zero": inertia.n_zero,
        "verdict": "stable" if inertia.n_minus == 0 else "unstable",
    }
    if with_generator and star.rotation.kind != "none":
        gen_counts = []
        growth = 0.0
        for parity in ("even", "odd"):
            gen = assemble_generator(star, parity=parity)
            c, gr, _ = generator_unstable_count(gen)
            gen_counts.append(c)
            growth = max(growth, gr)
        report["generator_unstable_count"] = int(sum(gen_counts))
        report["growth_rate"] = growth
    return report

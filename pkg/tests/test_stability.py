import math

import numpy as np
import pytest

from rotstar.bases import PerturbationBasis, perturbation_basis
from rotstar.equilibria import axistar_from_radial
from rotstar.forms import QuadraticForm
from rotstar.radial import solve_radial
from rotstar.stability import (
    LinearState,
    assemble_generator,
    assemble_perturbation_energy,
    assemble_reduced_energy,
    casimir_second_variation,
    cumulative_cylinder_integrals,
    density_form_value,
    evolve_linearized,
    generator_unstable_count,
    lift_azimuthal_velocity,
    mass_constraint,
    restrict_mass_zero,
    stability_report,
)

KERNEL_BAND = 1e-3


@pytest.fixture(scope="module")
def basis53(axi53):
    return perturbation_basis(axi53)


@pytest.fixture(scope="module")
def L53(axi53, basis53):
    return assemble_perturbation_energy(axi53, basis53)


def test_energy_form_symmetric(L53):
    q = L53.matrix
    assert np.max(np.abs(q - q.T)) <= 1e-12 * np.max(np.abs(q))


def test_nonrotating_inertia(axi53, basis53, L53):
    even = basis53.parity > 0
    assert L53.n_minus(KERNEL_BAND) == 1
    inertia = L53.inertia(KERNEL_BAND)
    assert inertia.n_zero == 1  # vertical-shift mode


def test_kernel_vector_is_vertical_density_shift(axi53, basis53, L53):
    i0 = int(np.argmin(np.abs(L53.eigenvalues)))
    fld = basis53.combine(L53.eigenvector(i0))
    # exact direction for a spherical star: rho'(s) z / s
    star = solve_radial(axi53.eos, axi53.mu)
    RG, ZG = axi53.grid.meshes()
    S = np.maximum(np.sqrt(RG**2 + ZG**2), 1e-12)
    drho = np.gradient(star.rho, star.r)
    from scipy.interpolate import PchipInterpolator

    target = np.where(
        S < star.radius, PchipInterpolator(star.r, drho)(np.clip(S, 0, star.radius)), 0.0
    ) * ZG / S
    w = 2 * math.pi * np.outer(axi53.grid.wr * axi53.grid.rs, axi53.grid.wz_line())
    phi2 = basis53.phi2
    corr = abs(np.sum(w * phi2 * fld * target)) / math.sqrt(
        np.sum(w * phi2 * fld**2) * np.sum(w * phi2 * target**2)
    )
    assert corr > 0.99


def test_single_function_value_against_spherical_oracle(axi53, star53):
    """<L rho0, rho0> against an independent 1-D spherical quadrature."""
    val = density_form_value(axi53, axi53.rho, parity="even")
    s = np.linspace(0, star53.radius, 6000)
    f = star53.rho_of(s)
    w = np.gradient(s)
    phi2 = star53.eos.enthalpy_second(np.clip(f, 1e-290, None))
    pressure = 4 * math.pi * np.sum(w * phi2 * f**2 * s**2)
    A = f * s**2 * w
    ker = 1.0 / np.maximum.outer(np.maximum(s, 1e-12), s)
    grav = (4 * math.pi) ** 2 * float(A @ ker @ A)
    oracle = pressure - grav
    assert val == pytest.approx(oracle, rel=1e-3)


def test_reduced_equals_energy_without_rotation(axi53, basis53, L53):
    K = assemble_reduced_energy(axi53, basis53)
    assert np.array_equal(K.matrix, L53.matrix)


def test_reduced_correction_psd(rot53):
    basis = perturbation_basis(rot53)
    L = assemble_perturbation_energy(rot53, basis)
    K = assemble_reduced_energy(rot53, basis)
    diff = K.matrix - L.matrix
    w = np.linalg.eigvalsh(0.5 * (diff + diff.T))
    assert w[0] >= -1e-12 * max(w[-1], 1e-300)


def test_odd_rows_unchanged_by_rotation(rot53):
    basis = perturbation_basis(rot53)
    L = assemble_perturbation_energy(rot53, basis)
    K = assemble_reduced_energy(rot53, basis)
    odd = basis.parity < 0
    assert np.array_equal(K.matrix[odd][:, odd], L.matrix[odd][:, odd])


def test_constrained_counts(axi53, axi13):
    for star, expected in ((axi53, 0), (axi13, 1)):
        basis = perturbation_basis(star)
        K = assemble_reduced_energy(star, basis)
        Kc = restrict_mass_zero(K, star, basis)
        assert Kc.n_minus(KERNEL_BAND) == expected


def test_interlacing(axi13):
    basis = perturbation_basis(axi13)
    K = assemble_reduced_energy(axi13, basis)
    Kc = restrict_mass_zero(K, axi13, basis)
    drop = K.n_minus(KERNEL_BAND) - Kc.n_minus(KERNEL_BAND)
    assert drop in (0, 1)


def test_constraint_vacuous_flag(axi53):
    basis = perturbation_basis(axi53, parity="odd", append_mu_direction=False)
    K = assemble_reduced_energy(axi53, basis)
    Kc = restrict_mass_zero(K, axi53, basis)
    assert Kc.constraint_vacuous


def test_eigenvalue_ordering_between_restricted_forms(rot53):
    basis = perturbation_basis(rot53)
    L = assemble_perturbation_energy(rot53, basis)
    K = assemble_reduced_energy(rot53, basis)
    Lc = restrict_mass_zero(L, rot53, basis)
    Kc = restrict_mass_zero(K, rot53, basis)
    n = min(Lc.eigenvalues.size, Kc.eigenvalues.size)
    assert np.all(Kc.eigenvalues[:n] >= Lc.eigenvalues[:n] - 1e-10)


# -- azimuthal lift -----------------------------------------------------------


def _random_constrained_coeffs(star, basis, rng):
    c = rng.standard_normal(basis.count)
    v = mass_constraint(star, basis)
    ref = np.zeros_like(c)
    ref[np.argmax(np.abs(v))] = 1.0
    c -= (v @ c) / (v @ ref) * ref if abs(v @ ref) > 0 else 0.0
    return c


def test_lift_identity_for_random_constrained(rot53):
    basis = perturbation_basis(rot53)
    L = assemble_perturbation_energy(rot53, basis)
    K = assemble_reduced_energy(rot53, basis)
    rng = np.random.default_rng(42)
    for _ in range(10):
        c = _random_constrained_coeffs(rot53, basis, rng)
        lift = lift_azimuthal_velocity(rot53, basis, c)
        lhs = float(c @ K.matrix @ c)
        rhs = float(c @ L.matrix @ c) + lift.energy
        assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs), 1e-300)
        assert lift.accessibility_residual < 1e-12


def test_lift_odd_perturbation_vanishes(rot53):
    basis = perturbation_basis(rot53)
    c = np.zeros(basis.count)
    odd = np.nonzero(basis.parity < 0)[0]
    c[odd[0]] = 1.0
    lift = lift_azimuthal_velocity(rot53, basis, c)
    assert np.max(np.abs(lift.u_theta)) == 0.0
    assert lift.energy == 0.0


def test_lift_requires_zero_mass(rot53):
    basis = perturbation_basis(rot53)
    v = mass_constraint(rot53, basis)
    c = np.zeros(basis.count)
    c[np.argmax(np.abs(v))] = 1.0
    with pytest.raises(ValueError):
        lift_azimuthal_velocity(rot53, basis, c)


def test_hardy_ratio_stable_under_refinement(eos53):
    from rotstar.equilibria import solve_fixed_omega
    from rotstar.rotlaw import RigidLaw

    maxima = []
    for n in (64, 96):
        st = solve_fixed_omega(eos53, RigidLaw(1.0), 0.05, 1.0, nr=n, nz=n)
        basis = perturbation_basis(st)
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(50):
            c = _random_constrained_coeffs(st, basis, rng)
            worst = max(worst, lift_azimuthal_velocity(st, basis, c).ratio)
        maxima.append(worst)
    ratio = max(maxima) / min(maxima)
    assert ratio < 2.0


# -- conserved quadratic ------------------------------------------------------


def test_casimir_zero_state(rot53):
    z = np.zeros_like(rot53.rho)
    state = LinearState(rho=z, v_theta=z, v_r=z, v_z=z)
    assert casimir_second_variation(rot53, state) == 0.0


def test_casimir_meridional_state_is_kinetic_norm(rot53):
    z = np.zeros_like(rot53.rho)
    rng = np.random.default_rng(0)
    vr = rng.standard_normal(rot53.rho.shape)
    vz = rng.standard_normal(rot53.rho.shape)
    state = LinearState(rho=z, v_theta=z, v_r=vr, v_z=vz)
    w = 2 * math.pi * np.outer(rot53.grid.wr * rot53.grid.rs, rot53.grid.wz_line())
    expected = float(np.sum(w * rot53.rho * (vr**2 + vz**2)))
    assert casimir_second_variation(rot53, state) == pytest.approx(expected, rel=1e-12)


# -- generator ----------------------------------------------------------------


def test_generator_counts_match_reduced_form(rot53, rot13):
    for star, expected in ((rot53, 0), (rot13, 1)):
        basis = perturbation_basis(star)
        Kc = restrict_mass_zero(assemble_reduced_energy(star, basis), star, basis)
        assert Kc.n_minus(KERNEL_BAND) == expected
        total = 0
        for parity in ("even", "odd"):
            gen = assemble_generator(star, parity=parity)
            count, _, defect = generator_unstable_count(gen)
            total += count
            assert defect < 1e-10
        assert total == expected


def test_generator_quadruple_symmetry(rot13):
    gen = assemble_generator(rot13, "even")
    lam = gen.eigenvalues()
    scale = np.max(np.abs(lam))
    for v in (lam[np.argmax(lam.real)], lam[np.argmax(np.abs(lam.imag))]):
        assert np.min(np.abs(lam - np.conj(v))) < 1e-8 * scale
        assert np.min(np.abs(lam + v)) < 1e-8 * scale


def test_generator_needs_rotation(axi53):
    with pytest.raises(ValueError):
        assemble_generator(axi53, "even")


def test_stable_evolution_bounded_and_conservative(rot53):
    gen = assemble_generator(rot53, "even")
    lam_max = np.max(np.abs(gen.eigenvalues().imag))
    rng = np.random.default_rng(1)
    z0 = rng.standard_normal(gen.matrix.shape[0])
    z0 /= np.linalg.norm(z0)
    traj = evolve_linearized(gen, z0, T=40.0, dt=0.1 / lam_max)
    assert np.max(traj.norms) < 10.0 * traj.norms[0]
    assert traj.energy_drift < 1e-6


def test_unstable_growth_rate_matches_eigenvalue(rot13):
    gen = assemble_generator(rot13, "even")
    count, growth, _ = generator_unstable_count(gen)
    assert count == 1
    lam_max = np.max(np.abs(gen.eigenvalues().imag))
    rng = np.random.default_rng(2)
    z0 = rng.standard_normal(gen.matrix.shape[0])
    z0 /= np.linalg.norm(z0)
    traj = evolve_linearized(gen, z0, T=12.0 / growth, dt=0.1 / lam_max)
    assert traj.growth_rate() == pytest.approx(growth, rel=0.05)
    assert traj.energy_drift < 1e-6


def test_verdict_equivalence(rot53, rot13):
    for star in (rot53, rot13):
        basis = perturbation_basis(star)
        Kc = restrict_mass_zero(assemble_reduced_energy(star, basis), star, basis)
        reduced_stable = Kc.n_minus(KERNEL_BAND) == 0
        lam = np.concatenate(
            [assemble_generator(star, p).eigenvalues() for p in ("even", "odd")]
        )
        scale = np.max(np.abs(lam))
        generator_stable = np.max(lam.real) < 1e-6 * scale
        assert reduced_stable == generator_stable


def test_stability_report_schema(rot53):
    report = stability_report(rot53, with_generator=True)
    assert set(report) >= {"n_minus_L", "n_minus_K_constrained", "n_zero", "verdict"}
    assert report["verdict"] == "stable"
    assert report["generator_unstable_count"] == 0


def test_state_level_evolution(rot53, rot13):
    from rotstar.stability import evolve_linearized_state

    rng = np.random.default_rng(3)
    shape = rot53.rho.shape
    state = LinearState(
        rho=rng.standard_normal(shape) * rot53.rho,
        v_theta=np.zeros(shape),
        v_r=rng.standard_normal(shape),
        v_z=np.zeros(shape),
        parity="even",
    )
    traj = evolve_linearized_state(rot53, state, T=25.0)
    assert traj.energy_drift < 1e-6
    assert np.max(traj.norms) < 10.0 * traj.norms[0]
    # on the unstable star the same data grows at the generator rate
    gen = assemble_generator(rot13, "even")
    _, growth, _ = generator_unstable_count(gen)
    state13 = LinearState(
        rho=rng.standard_normal(shape) * rot13.rho,
        v_theta=np.zeros(shape),
        v_r=rng.standard_normal(shape),
        v_z=np.zeros(shape),
        parity="even",
    )
    traj13 = evolve_linearized_state(rot13, state13, T=12.0 / growth)
    assert traj13.growth_rate() == pytest.approx(growth, rel=0.05)


def test_reduced_form_rejects_rayleigh_unstable(rayleigh_unstable_star):
    basis = perturbation_basis(rayleigh_unstable_star, deg_r=4, deg_z=2)
    with pytest.raises(ValueError, match="meridional"):
        assemble_reduced_energy(rayleigh_unstable_star, basis)


def test_fixed_j_weight_agrees_with_induced_law(eos53):
    """The momentum-distribution form of the rotational weight must agree
    with the discriminant of the induced angular-velocity profile."""
    from scipy.interpolate import PchipInterpolator

    from rotstar.equilibria import solve_fixed_j
    from rotstar.rotlaw import PowerLawMomentum, discriminant, omega_from_j
    from rotstar.stability import rotational_weight

    mom = PowerLawMomentum(1.0, 2.0)
    star = solve_fixed_j(eos53, mom, 0.4, 1.0, nr=96, nz=96)
    w_direct, sup = rotational_weight(star)

    rs = star.grid.rs
    m_interp = PchipInterpolator(rs, star.m_of_r)
    law = omega_from_j(mom, m_interp, star.mass, star.rotation.eps, rs)
    ups_spline = discriminant(law, rs)
    h1 = star.h_column()
    interior = sup & (rs > 0.05 * star.support_radius) & (
        rs < 0.9 * star.support_radius
    )
    w_spline = ups_spline[interior] / (rs[interior] * h1[interior])
    rel = np.abs(w_spline - w_direct[interior]) / np.max(np.abs(w_direct[interior]))
    assert np.max(rel) < 5e-3

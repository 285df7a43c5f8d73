import math

import numpy as np
import pytest

from rotstar.spectral import (
    assemble_meridional_form,
    evolve_second_order,
    spectrum_report,
    upsilon_range,
    velocity_basis,
)


@pytest.fixture(scope="module")
def vb(rayleigh_unstable_star):
    return velocity_basis(rayleigh_unstable_star, ring_knots=24)


@pytest.fixture(scope="module")
def form(rayleigh_unstable_star, vb):
    return assemble_meridional_form(rayleigh_unstable_star, vb)


def test_needs_unstable_rotation(rot53):
    with pytest.raises(ValueError):
        assemble_meridional_form(rot53, velocity_basis(rot53))


def test_divergence_free_zero_radial_velocity_gives_zero(rayleigh_unstable_star):
    """A field with no radial component and vanishing mass-flux divergence
    scores exactly zero in the form."""
    star = rayleigh_unstable_star
    from rotstar.bases import PerturbationBasis
    from rotstar.spectral import VelocityBasis

    vz = np.where(star.support_mask, 1.0, 0.0) * star.grid.rs[:, None] * 0 + np.where(
        star.support_mask, 0.3, 0.0
    )
    basis = VelocityBasis(
        star=star,
        fields_r=np.zeros((1,) + star.rho.shape),
        fields_z=vz[None],
        div_fields=np.zeros((1,) + star.rho.shape),
        kinds=["ring"],
        parity="even",
    )
    form = assemble_meridional_form(star, basis)
    assert abs(form.matrix[0, 0]) < 1e-14 * abs(form.gram[0, 0])


def test_ring_quotients_inside_upsilon_range(rayleigh_unstable_star):
    star = rayleigh_unstable_star
    lo, hi = upsilon_range(star)
    basis = velocity_basis(star, ring_knots=16, grad_deg_r=0, grad_deg_z=0)
    ring = [k for k, kind in enumerate(basis.kinds) if kind == "ring"]
    assert len(ring) == len(basis.kinds)  # no gradient shapes requested
    form = assemble_meridional_form(star, basis)
    lam = form.eigenvalues
    assert lam[0] >= lo - 1e-9
    assert lam[-1] <= hi + 1e-9


def test_localized_ring_quotient_near_local_discriminant(rayleigh_unstable_star):
    """The radial-kinetic quotient of a narrow stream field stays within the
    local oscillation of the discriminant over the field's radial support."""
    star = rayleigh_unstable_star
    _, _, ups = star.azimuthal_velocity_profiles()
    rs = star.grid.rs
    w = 2 * math.pi * np.outer(star.grid.wr * star.grid.rs, star.grid.wz_line())
    basis = velocity_basis(star, ring_knots=40, grad_deg_r=0, grad_deg_z=0, ring_deg_z=1)
    checked = 0
    for k in range(basis.count):
        vr2 = basis.fields_r[k] ** 2 * star.rho * w
        total = vr2.sum()
        if total <= 0:
            continue
        quotient = float((vr2 * ups[:, None]).sum() / total)
        radial_weight = vr2.sum(axis=1)
        support = radial_weight > 1e-10 * radial_weight.max()
        local_lo, local_hi = ups[support].min(), ups[support].max()
        pad = 1e-9 * max(abs(local_lo), abs(local_hi))
        assert local_lo - pad <= quotient <= local_hi + pad
        checked += 1
    assert checked > 20


def test_lower_bound_inequality(rayleigh_unstable_star, vb, form):
    """[form u, u] + m ||u||^2 >= || div(rho0 u) ||^2 in the weighted space,
    with m the assembled gravitational norm bound."""
    star = rayleigh_unstable_star
    g = star.grid
    w = 2 * math.pi * np.outer(g.wr * g.rs, g.wz_line())
    mask = star.support_mask
    phi2 = np.zeros_like(star.rho)
    phi2[mask] = star.eos.enthalpy_second(star.rho[mask])
    n = vb.count
    D = vb.div_fields.reshape(n, -1)
    WD = (vb.div_fields * (w * phi2)[None]).reshape(n, -1)
    div_norm = WD @ D.T
    lo, _ = upsilon_range(star)
    # gravitational term plus the discriminant term are bounded below by
    # -m ||u||_Y^2 with a computable m; verify the matrix inequality
    resid = form.matrix - div_norm
    gram = form.gram
    vals = np.linalg.eigvalsh(np.linalg.solve(gram, resid + resid.T) / 2.0)
    m_bound = -vals[0]
    assert np.all(
        np.linalg.eigvalsh(form.matrix + (m_bound + 1e-10) * gram - div_norm) > -1e-8
    )


def test_spectrum_classification(rayleigh_unstable_star):
    rep = spectrum_report(rayleigh_unstable_star, levels=3, ring_knots0=16,
                          grad_deg_r=3, grad_deg_z=3)
    assert rep.essential_lo < 0 < rep.essential_hi
    assert rep.eta0 <= rep.essential_lo + 1e-9
    assert len(rep.discrete_below) == 1  # gravity-driven mode below the interval
    assert not rep.flags
    # the count below the interval is stable across the refinement levels
    margin = 0.1 * (rep.essential_hi - rep.essential_lo)
    for lv in rep.levels:
        assert np.sum(lv < rep.essential_lo - margin) == 1


def test_spectrum_upper_family_grows_with_basis(rayleigh_unstable_star):
    counts = []
    for deg in (3, 5, 7):
        basis = velocity_basis(
            rayleigh_unstable_star, grad_deg_r=deg, grad_deg_z=deg, ring_knots=8
        )
        form = assemble_meridional_form(rayleigh_unstable_star, basis)
        _, hi = upsilon_range(rayleigh_unstable_star)
        counts.append(int(np.sum(form.eigenvalues > hi + 0.1)))
    assert counts[0] < counts[1] < counts[2]


def test_eta0_monotone_under_enrichment(rayleigh_unstable_star):
    etas = []
    for knots in (8, 16, 32):
        basis = velocity_basis(rayleigh_unstable_star, ring_knots=knots)
        form = assemble_meridional_form(rayleigh_unstable_star, basis)
        etas.append(form.eigenvalues[0])
    assert etas[0] >= etas[1] >= etas[2] - 1e-12


def test_eigenmode_growth(form):
    lam0 = form.eigenvalues[0]
    assert lam0 < 0
    n = form.eigenvalues.size
    u0, v0 = np.zeros(n), np.zeros(n)
    u0[0] = 1.0
    v0[0] = math.sqrt(-lam0)
    traj = evolve_second_order(form, u0, v0, T=8.0 / math.sqrt(-lam0), dt_factor=0.015)
    assert traj.growth_rate() == pytest.approx(math.sqrt(-lam0), rel=0.01)
    assert traj.energy_drift < 1e-6


def test_energy_drift_quarters_when_step_halves(form):
    lam0 = form.eigenvalues[0]
    n = form.eigenvalues.size
    rng = np.random.default_rng(5)
    u0 = rng.standard_normal(n)
    u0 /= np.linalg.norm(u0)
    v0 = np.zeros(n)
    d = []
    for f in (0.08, 0.04):
        traj = evolve_second_order(form, u0, v0, T=4.0 / math.sqrt(-lam0), dt_factor=f)
        d.append(traj.energy_drift)
    assert d[1] < 0.5 * d[0]


def test_generic_growth_bounded(form):
    lam0 = form.eigenvalues[0]
    n = form.eigenvalues.size
    rng = np.random.default_rng(11)
    u0 = rng.standard_normal(n)
    u0 /= np.linalg.norm(u0)
    traj = evolve_second_order(
        form, u0, np.zeros(n), T=10.0 / math.sqrt(-lam0), dt_factor=0.02
    )
    assert traj.growth_rate() <= math.sqrt(-lam0) * 1.05


def test_step_size_guard(form):
    n = form.eigenvalues.size
    with pytest.raises(ValueError):
        evolve_second_order(form, np.zeros(n), np.zeros(n), T=1.0, dt=1e9)


def test_nonfinite_divergence_rejected(rayleigh_unstable_star):
    from rotstar.spectral import VelocityBasis

    star = rayleigh_unstable_star
    bad = VelocityBasis(
        star=star,
        fields_r=np.zeros((1,) + star.rho.shape),
        fields_z=np.zeros((1,) + star.rho.shape),
        div_fields=np.full((1,) + star.rho.shape, np.nan),
        kinds=["grad"],
        parity="even",
    )
    with pytest.raises(ValueError):
        assemble_meridional_form(star, bad)


def test_strict_mode_escalates_ambiguity(rayleigh_unstable_star):
    from rotstar.spectral import AmbiguousClassificationError

    with pytest.raises(AmbiguousClassificationError):
        spectrum_report(
            rayleigh_unstable_star,
            levels=2,
            ring_knots0=10,
            discrete_drift_tol=0.0,
            strict=True,
        )

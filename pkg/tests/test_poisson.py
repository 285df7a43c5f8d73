import math

import numpy as np
import pytest
from scipy.special import ellipk

from rotstar.eos import polytrope
from rotstar.poisson import Grid, RingKernel, agm_ellipk, rect_log_mean
from rotstar.radial import solve_radial


def test_agm_matches_reference():
    m = np.linspace(0.0, 1.0 - 1e-13, 20000)
    assert np.max(np.abs(agm_ellipk(m) - ellipk(m))) < 1e-13


def test_agm_domain():
    with pytest.raises(ValueError):
        agm_ellipk(np.array([1.0]))
    with pytest.raises(ValueError):
        agm_ellipk(-0.1)


def test_rect_log_mean_against_midpoint_quadrature():
    a, b = 0.013, 0.021
    n = 3000
    x = (np.arange(n) + 0.5) / n * a
    y = (np.arange(n) + 0.5) / n * b
    X, Y = np.meshgrid(x, y, indexing="ij")
    ref = np.mean(np.log(np.hypot(X, Y)))
    assert rect_log_mean(a, b) == pytest.approx(ref, abs=1e-7)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(np.array([0.1, 0.2]), np.array([0.0, 0.1]))  # rs not starting at 0
    with pytest.raises(ValueError):
        Grid(np.array([0.0, 0.2]), np.array([0.0, 0.1, 0.3]))  # z not uniform


def test_potential_of_spherical_star(star53):
    R = star53.radius
    errs = {}
    for n in (48, 96):
        g = Grid(np.linspace(0, 1.4 * R, n + 1), np.linspace(0, 1.4 * R, n + 1))
        RG, ZG = g.meshes()
        S = np.sqrt(RG**2 + ZG**2)
        rho = star53.rho_of(S)
        V = RingKernel(g).potential(rho)
        errs[n] = np.max(np.abs(V - star53.potential_of(S))) / abs(star53.potential_of(np.array([0.0]))[0])
    assert errs[96] < 2e-3
    assert errs[96] < 0.5 * errs[48]  # at least first-order-in-area convergence


def test_multipole_oracle_for_interaction(star53):
    """Ring-kernel double integral against the spherical-expansion oracle."""
    R = star53.radius
    g = Grid(np.linspace(0, 1.25 * R, 97), np.linspace(0, 1.25 * R, 97))
    RG, ZG = g.meshes()
    S = np.sqrt(RG**2 + ZG**2)
    rho = star53.rho_of(S)
    val = RingKernel(g).interaction(rho, rho)

    # oracle: (4 pi)^2 int int f(s) f(t) s^2 t^2 / max(s, t) ds dt on the profile
    s = np.linspace(0, R, 4000)
    f = star53.rho_of(s)
    w = np.gradient(s)
    A = f * s**2 * w
    ker = 1.0 / np.maximum.outer(np.maximum(s, 1e-12), s)
    oracle = (4 * math.pi) ** 2 * float(A @ ker @ A)
    assert val == pytest.approx(oracle, rel=1e-3)


def test_far_field_probe_matches_monopole(axi53):
    R = axi53.support_radius
    rp = np.array([5 * R, 0.0, 3.5 * R])
    zp = np.array([0.0, 5 * R, 3.5 * R])
    V = axi53.kernel.potential_at(axi53.rho, rp, zp)
    S = np.sqrt(rp**2 + zp**2)
    assert np.max(np.abs(V + axi53.mass / S) / (axi53.mass / S)) < 0.01


def test_odd_parity_potential_antisymmetric(axi53):
    # an odd source must produce zero potential on the midplane
    g = axi53.grid
    RG, ZG = g.meshes()
    src = axi53.rho * ZG
    V = axi53.kernel.potential(src, parity="odd")
    interior = np.max(np.abs(V[:, 1:]))
    assert abs(V[:, 0]).max() < 1e-12 * interior


def test_mass_quadrature_consistency(axi53):
    total = axi53.grid.integrate(axi53.rho)
    assert total == pytest.approx(2.0 * math.pi * axi53.m_of_r[-1], rel=1e-12)

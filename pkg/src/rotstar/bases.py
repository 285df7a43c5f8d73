"""Galerkin bases on a star's support.

Density perturbations are represented as delta_rho = chi / h''(rho0) with
chi smooth tensor-polynomial shape functions (Legendre in r/R0 and z/Z0,
z-parity given by the vertical degree).  The 1/h'' weighting keeps every
basis function inside the weighted space the stability forms act on (the
weight decays like rho0^(2-gamma0) toward the surface) and lets the grid
quadrature see smooth integrands.

Two physically distinguished directions can be appended: the center-density
derivative of the non-rotating family (even sector) and the vertical-shift
direction d(rho0)/dz (odd sector, the expected kernel of the perturbation
forms).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from rotstar.equilibria import AxiStar
from rotstar.radial import solve_radial

__all__ = ["ScalarShapes", "PerturbationBasis", "perturbation_basis"]


@dataclass
class ScalarShapes:
    """Tensor Legendre shapes chi_(i,j)(r, z) with values and gradients on a grid."""

    values: np.ndarray  # (n, nr, nz)
    grad_r: np.ndarray  # (n, nr, nz)
    grad_z: np.ndarray  # (n, nr, nz)
    parity: np.ndarray  # (n,), +1 even / -1 odd in z
    degrees: list  # (i, j) per shape

    @property
    def count(self) -> int:
        return self.values.shape[0]


def tensor_shapes(
    rs: np.ndarray,
    zs: np.ndarray,
    r_scale: float,
    z_scale: float,
    deg_r: int,
    deg_z: int,
    parity: str = "both",
) -> ScalarShapes:
    """Legendre tensor shapes on the (r, z) grid.

    The radial argument is 2 r / r_scale - 1 and the vertical argument
    z / z_scale, so vertical parity equals the parity of the z degree.
    """
    x = 2.0 * rs / r_scale - 1.0
    zeta = zs / z_scale
    eye_r = np.eye(deg_r + 1)
    eye_z = np.eye(deg_z + 1)
    Pr = np.stack([npleg.legval(x, eye_r[i]) for i in range(deg_r + 1)])
    dPr = np.stack(
        [npleg.legval(x, npleg.legder(eye_r[i])) for i in range(deg_r + 1)]
    ) * (2.0 / r_scale)
    Pz = np.stack([npleg.legval(zeta, eye_z[j]) for j in range(deg_z + 1)])
    dPz = np.stack(
        [npleg.legval(zeta, npleg.legder(eye_z[j])) for j in range(deg_z + 1)]
    ) / z_scale

    vals, gr, gz, par, degs = [], [], [], [], []
    for j in range(deg_z + 1):
        p = +1 if j % 2 == 0 else -1
        if parity == "even" and p < 0:
            continue
        if parity == "odd" and p > 0:
            continue
        for i in range(deg_r + 1):
            vals.append(np.outer(Pr[i], Pz[j]))
            gr.append(np.outer(dPr[i], Pz[j]))
            gz.append(np.outer(Pr[i], dPz[j]))
            par.append(p)
            degs.append((i, j))
    return ScalarShapes(
        values=np.stack(vals),
        grad_r=np.stack(gr),
        grad_z=np.stack(gz),
        parity=np.array(par),
        degrees=degs,
    )


@dataclass
class PerturbationBasis:
    """Density perturbation fields delta_rho_k on a star grid with parity tags."""

    star: AxiStar
    fields: np.ndarray  # (n, nr, nz)
    parity: np.ndarray  # (n,), +1 / -1
    labels: list
    phi2: np.ndarray = field(init=False)  # h''(rho0) on the mask, 0 outside

    def __post_init__(self):
        star = self.star
        mask = star.support_mask
        phi2 = np.zeros_like(star.rho)
        phi2[mask] = star.eos.enthalpy_second(star.rho[mask])
        self.phi2 = phi2

    @property
    def count(self) -> int:
        return self.fields.shape[0]

    def select(self, parity: int) -> np.ndarray:
        return np.nonzero(self.parity == parity)[0]

    def combine(self, coeffs: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(coeffs), self.fields, axes=(0, 0))


def perturbation_basis(
    star: AxiStar,
    deg_r: int = 10,
    deg_z: int = 6,
    parity: str = "both",
    append_mu_direction: bool = True,
    append_vertical_shift: bool = True,
    mu_step_rel: float = 1e-3,
) -> PerturbationBasis:
    """Tensor-polynomial perturbation basis weighted by 1/h''(rho0).

    ``append_mu_direction`` adds the finite-difference derivative of the
    non-rotating family with the star's center density (basis enrichment in
    the even sector); ``append_vertical_shift`` adds grad_z(h)/h''(rho0),
    the discrete vertical-translation mode, to the odd sector.
    """
    grid = star.grid
    mask = star.support_mask
    phi2 = np.zeros_like(star.rho)
    phi2[mask] = star.eos.enthalpy_second(star.rho[mask])
    inv_phi2 = np.zeros_like(star.rho)
    inv_phi2[mask] = 1.0 / phi2[mask]

    shapes = tensor_shapes(
        grid.rs,
        grid.zs,
        r_scale=star.support_radius,
        z_scale=star.support_height,
        deg_r=deg_r,
        deg_z=deg_z,
        parity=parity,
    )
    fields = shapes.values * inv_phi2[None, :, :]
    tags = list(shapes.parity)
    labels = [f"p{i}q{j}" for (i, j) in shapes.degrees]
    extra_fields = []

    if append_mu_direction and parity in ("both", "even"):
        h = mu_step_rel * star.mu
        sp = solve_radial(star.eos, star.mu + h)
        sm = solve_radial(star.eos, star.mu - h)
        RG, ZG = grid.meshes()
        S = np.sqrt(RG**2 + ZG**2)
        dmu = (sp.rho_of(S) - sm.rho_of(S)) / (2.0 * h)
        dmu[~mask] = 0.0
        extra_fields.append(dmu)
        tags.append(+1)
        labels.append("mu_direction")

    if append_vertical_shift and parity in ("both", "odd"):
        _, hz_grad = star.grad_h()
        shift = hz_grad * inv_phi2
        shift[~mask] = 0.0
        extra_fields.append(shift)
        tags.append(-1)
        labels.append("vertical_shift")

    if extra_fields:
        fields = np.concatenate([fields, np.stack(extra_fields)], axis=0)
    return PerturbationBasis(
        star=star, fields=fields, parity=np.array(tags), labels=labels
    )

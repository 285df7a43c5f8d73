"""Spectrum and growth analysis for centrifugally unstable rotation.

When the discriminant Upsilon dips below zero the azimuthal-velocity weight
of the first-order formulation blows up, and the meridional velocity obeys
the second-order system  u_tt = -(L1 + L2) u  instead, with

    [L1 u, u] = int h''(rho0) D(u)^2 dx - int int D(u)(x) D(u)(y)/|x-y|,
    [L2 u, u] = int rho0 Upsilon(r) u_r^2 dx,        D(u) = div(rho0 u).

Its essential spectrum is the closed range of Upsilon, an interval [-a, b]
with a > 0; finitely many eigenvalues sit below -a and a sequence of
eigenvalues escapes upward.  The Galerkin velocity space combines gradient
fields (which feel the compressible part L1) with exactly divergence-free
stream-function fields built from radial spline bumps; refining the bump
family makes the discrete spectrum fill the essential interval while the
edges sharpen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.interpolate import BSpline

from rotstar.equilibria import AxiStar
from rotstar.forms import QuadraticForm

__all__ = [
    "AmbiguousClassificationError",
    "VelocityBasis",
    "velocity_basis",
    "assemble_meridional_form",
    "SpectrumReport",
    "spectrum_report",
    "WaveTrajectory",
    "evolve_second_order",
    "upsilon_range",
]


class AmbiguousClassificationError(RuntimeError):
    """An eigenvalue could not be classified as essential-cluster or discrete."""


@dataclass
class VelocityBasis:
    """Meridional velocity fields with their mass-flux divergences.

    ``div_fields`` stores div(rho0 u); it is identically zero for the stream
    (ring) members by construction, so the compressible part of the form
    never sees quadrature noise from them.
    """

    star: AxiStar
    fields_r: np.ndarray  # (n, nr, nz)
    fields_z: np.ndarray
    div_fields: np.ndarray
    kinds: list  # 'grad' | 'ring'
    parity: str

    @property
    def count(self) -> int:
        return self.fields_r.shape[0]

    def combine(self, coeffs):
        c = np.asarray(coeffs)
        return (
            np.tensordot(c, self.fields_r, axes=(0, 0)),
            np.tensordot(c, self.fields_z, axes=(0, 0)),
            np.tensordot(c, self.div_fields, axes=(0, 0)),
        )


def _grad_rho(star: AxiStar):
    """grad rho0 = grad h / h''(rho0) on the support, zero outside."""
    mask = star.support_mask
    inv_phi2 = np.zeros_like(star.rho)
    inv_phi2[mask] = 1.0 / star.eos.enthalpy_second(star.rho[mask])
    ghr, ghz = star.grad_h()
    return ghr * inv_phi2, ghz * inv_phi2


def _legendre_1d(arg, deg):
    eye = np.eye(deg + 1)
    vals = np.stack([npleg.legval(arg, eye[i]) for i in range(deg + 1)])
    ders = np.stack([npleg.legval(arg, npleg.legder(eye[i])) for i in range(deg + 1)])
    der2 = np.stack(
        [npleg.legval(arg, npleg.legder(eye[i], 2)) for i in range(deg + 1)]
    )
    return vals, ders, der2


def velocity_basis(
    star: AxiStar,
    parity: str = "even",
    grad_deg_r: int = 4,
    grad_deg_z: int = 4,
    ring_knots: int = 12,
    ring_deg_z: int = 3,
) -> VelocityBasis:
    """Gradient plus divergence-free stream fields on the star.

    Gradient potentials use an r^2 radial argument so their axis behaviour
    is regular (the mass-flux divergence stays square-integrable in the
    h''-weighted space).  Stream functions are r^2 rho0^2 times a spline
    bump in radius and a Legendre factor in z; parity bookkeeping: an
    'even' basis has even v_r and odd v_z.
    """
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    g = star.grid
    rs, zs = g.rs, g.zs
    R0, Z0 = star.support_radius, star.support_height
    mask = star.support_mask
    rho = np.where(mask, star.rho, 0.0)
    drho_r, drho_z = _grad_rho(star)

    RG = rs[:, None]
    fields_r, fields_z, divs, kinds = [], [], [], []

    # gradient fields: xi = P_i(2 (r/R0)^2 - 1) * P_j(z/Z0)
    x = 2.0 * (rs / R0) ** 2 - 1.0
    zeta = zs / Z0
    Pr, dPr, d2Pr = _legendre_1d(x, grad_deg_r)
    Pz, dPz, d2Pz = _legendre_1d(zeta, grad_deg_z)
    x_r = (4.0 / R0**2) * rs
    for j in range(grad_deg_z + 1):
        even_j = j % 2 == 0
        if (parity == "even") != even_j:
            continue
        for i in range(grad_deg_r + 1):
            if i == 0 and j == 0:
                continue  # constant potential: zero field
            xi_r = np.outer(dPr[i] * x_r, Pz[j])
            xi_z = np.outer(Pr[i], dPz[j]) / Z0
            # laplacian: xi_rr + xi_r / r + xi_zz, with the r^2 argument
            lap = (
                np.outer(d2Pr[i] * x_r**2 + dPr[i] * (8.0 / R0**2), Pz[j])
                + np.outer(Pr[i], d2Pz[j]) / Z0**2
            )
            div = rho * lap + drho_r * xi_r + drho_z * xi_z
            fields_r.append(np.where(mask, xi_r, 0.0))
            fields_z.append(np.where(mask, xi_z, 0.0))
            divs.append(np.where(mask, div, 0.0))
            kinds.append("grad")

    # stream fields: Psi = r^2 rho0^2 beta_i(r) Z_j(z); u = curl-type, div-free
    kz = [j for j in range(ring_deg_z + 1) if (j % 2 == 1) == (parity == "even")]
    knots = np.linspace(0.0, R0, ring_knots + 1)
    deg = 2
    t = np.concatenate([[0.0] * deg, knots, [R0] * deg])
    n_bumps = len(t) - deg - 1
    for ib in range(n_bumps):
        coef = np.zeros(n_bumps)
        coef[ib] = 1.0
        spl = BSpline(t, coef, deg, extrapolate=False)
        beta = np.nan_to_num(spl(rs))
        dbeta = np.nan_to_num(spl.derivative()(rs))
        if not np.any(beta):
            continue
        for j in kz:
            Z = npleg.legval(zeta, np.eye(ring_deg_z + 1)[j])
            dZ = npleg.legval(zeta, npleg.legder(np.eye(ring_deg_z + 1)[j])) / Z0
            bZ = np.outer(beta, Z)
            # u_r = r (2 rho_z q + rho q_z), u_z = -(2 rho q + r (2 rho_r q + rho q_r))
            q = bZ
            q_r = np.outer(dbeta, Z)
            q_z = np.outer(beta, dZ)
            ur = RG * (2.0 * drho_z * q + rho * q_z)
            uz = -(2.0 * rho * q + RG * (2.0 * drho_r * q + rho * q_r))
            fields_r.append(np.where(mask, ur, 0.0))
            fields_z.append(np.where(mask, uz, 0.0))
            divs.append(np.zeros_like(ur))
            kinds.append("ring")

    return VelocityBasis(
        star=star,
        fields_r=np.stack(fields_r),
        fields_z=np.stack(fields_z),
        div_fields=np.stack(divs),
        kinds=kinds,
        parity=parity,
    )


def upsilon_range(star: AxiStar, n_samples: int = 2048):
    """Range [min, max] of the actual discriminant over the support radii."""
    rs = star.grid.rs
    _, _, ups = star.azimuthal_velocity_profiles()
    sup = rs <= star.support_radius
    fine = np.interp(
        np.linspace(0.0, star.support_radius, n_samples), rs[sup], ups[sup]
    )
    return float(np.min(fine)), float(np.max(fine))


def assemble_meridional_form(star: AxiStar, basis: VelocityBasis) -> QuadraticForm:
    """Quadratic form of the second-order meridional dynamics over the
    kinetic-energy Gram.  Requires a centrifugally unstable rotation (the
    first-order route handles the stable case)."""
    lo, _ = upsilon_range(star)
    if lo >= 0:
        raise ValueError(
            "rotation is Rayleigh stable on this star; use the reduced "
            "first-order stability analysis instead"
        )
    g = star.grid
    w = 2.0 * math.pi * np.outer(g.wr * g.rs, g.wz_line())
    mask = star.support_mask
    rho = np.where(mask, star.rho, 0.0)
    phi2 = np.zeros_like(star.rho)
    phi2[mask] = star.eos.enthalpy_second(star.rho[mask])
    _, _, ups = star.azimuthal_velocity_profiles()

    n = basis.count
    D = basis.div_fields.reshape(n, -1)
    if not np.all(np.isfinite(D)):
        raise ValueError("velocity basis has entries with undefined divergence norm")
    WD = (basis.div_fields * (w * phi2)[None]).reshape(n, -1)
    Q = WD @ D.T
    nz_div = [k for k in range(n) if basis.kinds[k] == "grad"]
    pots = {}
    for k in nz_div:
        pots[k] = star.kernel.potential(basis.div_fields[k], parity=basis.parity)
    if nz_div:
        P = np.zeros_like(basis.div_fields[: len(nz_div)])
        for idx, k in enumerate(nz_div):
            P[idx] = pots[k]
        WF = (basis.div_fields[nz_div] * w[None]).reshape(len(nz_div), -1)
        grav = WF @ P.reshape(len(nz_div), -1).T
        for a, ka in enumerate(nz_div):
            for b, kb in enumerate(nz_div):
                Q[ka, kb] += 0.5 * (grav[a, b] + grav[b, a])

    wu = w * (rho * ups[:, None])
    Q += (basis.fields_r * wu[None]).reshape(n, -1) @ basis.fields_r.reshape(n, -1).T
    Q = 0.5 * (Q + Q.T)

    wk = w * rho
    G = (basis.fields_r * wk[None]).reshape(n, -1) @ basis.fields_r.reshape(n, -1).T
    G += (basis.fields_z * wk[None]).reshape(n, -1) @ basis.fields_z.reshape(n, -1).T
    return QuadraticForm(Q, 0.5 * (G + G.T))


@dataclass
class SpectrumReport:
    essential_lo: float  # -a
    essential_hi: float  # b
    eta0: float
    eigenvalues: np.ndarray  # finest level
    discrete_below: list
    discrete_above_count: int
    cluster_fraction: float
    flags: list
    levels: list  # eigenvalue arrays per refinement level

    def as_dict(self) -> dict:
        return {
            "a": -self.essential_lo,
            "b": self.essential_hi,
            "eta0": self.eta0,
            "discrete_below": list(map(float, self.discrete_below)),
            "discrete_above_count": int(self.discrete_above_count),
            "cluster_fraction": float(self.cluster_fraction),
            "flags": list(self.flags),
        }


def spectrum_report(
    star: AxiStar,
    parity: str = "even",
    levels: int = 3,
    ring_knots0: int = 10,
    grad_deg_r: int = 4,
    grad_deg_z: int = 4,
    edge_margin: float = 0.10,
    discrete_drift_tol: float = 1e-3,
    strict: bool = False,
) -> SpectrumReport:
    """Eigenvalues of the meridional form across nested bases with
    essential / discrete classification.

    An eigenvalue is binned essential when its local spacing contracts by at
    least a factor two per refinement (the cluster filling the interval);
    discrete when it moves by less than ``discrete_drift_tol`` relatively
    between the two finest levels while staying outside the interval.
    Ambiguous values are flagged; ``strict`` escalates them to an error.
    """
    if levels < 2:
        raise ValueError("need at least two refinement levels")
    lo, hi = upsilon_range(star)
    spectra = []
    for lev in range(levels):
        vb = velocity_basis(
            star,
            parity=parity,
            grad_deg_r=grad_deg_r,
            grad_deg_z=grad_deg_z,
            ring_knots=ring_knots0 * 2**lev,
        )
        form = assemble_meridional_form(star, vb)
        spectra.append(np.sort(form.eigenvalues))

    lam = spectra[-1]
    prev = spectra[-2]
    scale = max(abs(lo), abs(hi), np.max(np.abs(lam)))
    margin = edge_margin * (hi - lo)
    inside = (lam >= lo - margin) & (lam <= hi + margin)

    def local_spacing(arr, v):
        i = np.searchsorted(arr, v)
        cands = []
        if 0 < i < arr.size:
            cands.append(arr[i] - arr[i - 1])
        if i + 1 < arr.size:
            cands.append(arr[i + 1] - arr[i])
        if i >= 2:
            cands.append(arr[i - 1] - arr[i - 2])
        return float(np.median(cands)) if cands else math.inf

    discrete_below, flags = [], []
    n_above = int(np.sum(lam > hi + margin))
    for v in lam[lam < lo - margin]:
        nearest = prev[np.argmin(np.abs(prev - v))]
        drift = abs(nearest - v) / scale
        if drift < discrete_drift_tol:
            discrete_below.append(float(v))
            continue
        # a late-arriving cluster member crowding the lower edge contracts
        # its local spacing under refinement; anything else is ambiguous
        sp_fine = local_spacing(lam, v)
        sp_coarse = local_spacing(prev, nearest)
        if not sp_coarse / max(sp_fine, 1e-300) >= 2.0:
            flags.append(float(v))
    if flags and strict:
        raise AmbiguousClassificationError(
            f"{len(flags)} eigenvalue(s) drifted across the interval edge: {flags}"
        )
    return SpectrumReport(
        essential_lo=lo,
        essential_hi=hi,
        eta0=float(lam[0]),
        eigenvalues=lam,
        discrete_below=discrete_below,
        discrete_above_count=n_above,
        cluster_fraction=float(np.mean(inside)),
        flags=flags,
        levels=spectra,
    )


@dataclass
class WaveTrajectory:
    times: np.ndarray
    norms: np.ndarray  # kinetic-Gram norm of u
    energies: np.ndarray  # ||u_t||_Y^2 + [L u, u]
    energy_scales: np.ndarray

    @property
    def energy_drift(self) -> float:
        scale = np.max(self.energy_scales) + 1e-300
        return float(np.max(np.abs(self.energies - self.energies[0]))) / scale

    def growth_rate(self, window: float = 0.5) -> float:
        n = self.times.size
        i0 = int((1.0 - window) * n)
        return float(np.polyfit(self.times[i0:], np.log(self.norms[i0:]), 1)[0])


def evolve_second_order(
    form: QuadraticForm,
    u0: np.ndarray,
    v0: np.ndarray,
    T: float,
    dt: float | None = None,
    dt_factor: float = 0.1,
) -> WaveTrajectory:
    """Leapfrog integration of  u_tt = -(form) u  in whitened coordinates.

    ``u0``/``v0`` are coefficients in the whitened eigenbasis of the pencil
    (see ``QuadraticForm.vectors``): pass ``form.eigen_coefficients(field)``
    helpers or eigen unit vectors directly.  The default step is
    dt_factor / sqrt(max eigenvalue), within the leapfrog stability bound.
    """
    lam = form.eigenvalues
    lam_max = float(np.max(np.abs(lam)))
    if dt is None:
        dt = dt_factor / math.sqrt(lam_max)
    if dt * math.sqrt(lam_max) >= 2.0:
        raise ValueError("time step exceeds the leapfrog stability bound")
    n_steps = max(int(round(T / dt)), 1)
    # whitened coordinates diagonalize the pencil: u'' = -diag(lam) u
    c = np.asarray(u0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    if c.shape != lam.shape or v.shape != lam.shape:
        raise ValueError("state must be given in pencil eigen-coordinates")
    times = np.empty(n_steps + 1)
    norms = np.empty(n_steps + 1)
    energies = np.empty(n_steps + 1)
    scales = np.empty(n_steps + 1)
    a = -lam * c
    for i in range(n_steps + 1):
        times[i] = i * dt
        norms[i] = float(np.linalg.norm(c))
        energies[i] = float(v @ v + lam @ (c * c))
        scales[i] = float(v @ v + np.abs(lam) @ (c * c))
        if i < n_steps:
            c = c + dt * v + 0.5 * dt * dt * a
            a_new = -lam * c
            v = v + 0.5 * dt * (a + a_new)
            a = a_new
    return WaveTrajectory(times, norms, energies, scales)

"""Non-rotating equilibria: radial profiles, mass-radius curves, oracle form.

The hydrostatic balance for a spherical star is integrated in the enthalpy
variable y(r) = h(rho(r)), which stays C^1 across the stellar surface even
when the density derivative blows up there (gamma0 < 2):

    y'' + (2/r) y' = -4 pi rho(y),   y(0) = h(mu),  y'(0) = 0,

with rho(y) the enthalpy inverse clipped at vacuum.  The support radius is
the first zero of y, found by event detection, and the total mass follows
from the exterior matching M = -R^2 y'(R).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BSpline, PchipInterpolator

from rotstar.eos import EquationOfState
from rotstar.forms import QuadraticForm

__all__ = [
    "RadialStar",
    "UnboundedStarError",
    "solve_radial",
    "mass_derivative",
    "surface_potential_derivative",
    "RadialFamilyCurves",
    "family_scan_radial",
    "OracleMesh",
    "OracleForm",
    "assemble_oracle_form",
]

MAX_RADIUS_FACTOR = 100.0


class UnboundedStarError(RuntimeError):
    """The enthalpy never reached zero inside the allowed radius."""


@dataclass(frozen=True)
class RadialStar:
    """Spherical equilibrium: monotone profile of (r, rho, enthalpy, potential)."""

    eos: EquationOfState
    mu: float
    radius: float
    mass: float
    r: np.ndarray
    rho: np.ndarray
    enthalpy: np.ndarray
    potential: np.ndarray
    surface_slope: float  # y'(R) < 0
    _rho_interp: PchipInterpolator = field(repr=False, default=None)

    def rho_of(self, s):
        """Density at spherical radius s (0 outside the support)."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = s < self.radius
        out[inside] = np.clip(self._rho_interp(s[inside]), 0.0, None)
        return out

    def enthalpy_of(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.radius, self._y_interp(s), 0.0)

    def potential_of(self, s):
        """Gravitational potential, matched to -M/s outside the support."""
        s = np.asarray(s, dtype=float)
        inner = -self.mass / self.radius - self.enthalpy_of(s)
        return np.where(s < self.radius, inner, -self.mass / np.maximum(s, 1e-300))

    def enclosed_mass(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < self.radius, self._menc_interp(s), self.mass)

    def __post_init__(self):
        object.__setattr__(
            self, "_rho_interp", PchipInterpolator(self.r, self.rho, extrapolate=False)
        )
        object.__setattr__(
            self, "_y_interp", PchipInterpolator(self.r, self.enthalpy, extrapolate=False)
        )
        menc = _cumulative_mass(self.r, self.rho)
        object.__setattr__(self, "_menc_interp", PchipInterpolator(self.r, menc))


def _cumulative_mass(r, rho):
    integrand = 4.0 * math.pi * rho * r**2
    out = np.zeros_like(r)
    out[1:] = np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(r))
    return out


def solve_radial(
    eos: EquationOfState,
    mu: float,
    tol: float = 1e-11,
    n_profile: int = 800,
) -> RadialStar:
    """Integrate the spherical balance outward from center density mu.

    Raises UnboundedStarError when no surface is found within
    MAX_RADIUS_FACTOR times the central length scale sqrt(h(mu)/(4 pi mu)).
    """
    if mu <= 0:
        raise ValueError("center density must be positive")
    y0 = eos.enthalpy(mu)
    r_scale = math.sqrt(y0 / (4.0 * math.pi * mu))
    r_start = 1e-8 * r_scale
    r_max = MAX_RADIUS_FACTOR * r_scale

    def rhs(r, state):
        y, yp = state
        rho = eos.enthalpy_inverse(max(y, 0.0))
        return (yp, -4.0 * math.pi * rho - 2.0 * yp / r)

    def surface(r, state):
        return state[0]

    surface.terminal = True
    surface.direction = -1

    ic = (y0 - (2.0 * math.pi / 3.0) * mu * r_start**2,
          -(4.0 * math.pi / 3.0) * mu * r_start)
    sol = solve_ivp(
        rhs,
        (r_start, r_max),
        ic,
        method="DOP853",
        rtol=tol,
        atol=(tol * y0, tol * y0 / r_scale),
        events=surface,
        dense_output=True,
    )
    if not sol.t_events[0].size:
        raise UnboundedStarError(
            f"no surface within {MAX_RADIUS_FACTOR} central length scales (mu={mu:g})"
        )
    radius = float(sol.t_events[0][0])
    y_slope = float(sol.y_events[0][0][1])
    mass = -(radius**2) * y_slope

    r = _profile_grid(radius, n_profile)
    y = np.empty_like(r)
    y[0], y[-1] = y0, 0.0
    y[1:-1] = np.clip(sol.sol(r[1:-1])[0], 0.0, None)
    rho = eos.enthalpy_inverse(y)
    potential = -mass / radius - y
    return RadialStar(
        eos=eos,
        mu=mu,
        radius=radius,
        mass=mass,
        r=r,
        rho=rho,
        enthalpy=y,
        potential=potential,
        surface_slope=y_slope,
    )


def _profile_grid(radius: float, n: int) -> np.ndarray:
    # bulk of the points uniform, the rest log-clustered into the surface layer
    n_surf = max(n // 4, 16)
    bulk = np.linspace(0.0, 0.9, n - n_surf, endpoint=False)
    dist = 0.1 * 10.0 ** (-np.linspace(0.0, 6.0, n_surf - 1))
    surf = 1.0 - dist  # ascending toward the surface
    return radius * np.concatenate([bulk, surf, [1.0]])


# -- family scans ----------------------------------------------------------


def mass_derivative(eos: EquationOfState, mu: float, h_rel: float = 1e-3,
                    tol: float = 1e-11) -> float:
    """dM/dmu by central differences with one Richardson extrapolation."""

    def central(h):
        return (solve_radial(eos, mu + h, tol).mass - solve_radial(eos, mu - h, tol).mass) / (2 * h)

    h = h_rel * mu
    return (4.0 * central(h / 2) - central(h)) / 3.0


def surface_potential_derivative(eos: EquationOfState, mu: float,
                                 h_rel: float = 1e-3, tol: float = 1e-11) -> float:
    """d/dmu of the surface potential -M/R, by the same difference scheme."""

    def central(h):
        sp = solve_radial(eos, mu + h, tol)
        sm = solve_radial(eos, mu - h, tol)
        return (-sp.mass / sp.radius + sm.mass / sm.radius) / (2 * h)

    h = h_rel * mu
    return (4.0 * central(h / 2) - central(h)) / 3.0


@dataclass
class RadialFamilyCurves:
    """Mass/radius curves over a center-density grid with located extrema."""

    mu: np.ndarray
    radius: np.ndarray
    mass: np.ndarray
    dM_dmu: np.ndarray
    mass_over_radius: np.ndarray
    mass_extrema: list  # (mu_value, "max"|"min")
    mu_tilde: float  # first critical point of M/R, +inf when absent

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("mu,R,M,dMdmu,MoverR\n")
            for row in zip(self.mu, self.radius, self.mass, self.dM_dmu,
                           self.mass_over_radius):
                fh.write(",".join(f"{v:.11e}" for v in row) + "\n")


def family_scan_radial(
    eos: EquationOfState,
    mu_grid,
    tol: float = 1e-11,
    refine: bool = True,
) -> RadialFamilyCurves:
    """Solve along mu_grid and locate mass extrema and the first M/R critical point."""
    mu = np.asarray(mu_grid, dtype=float)
    if mu.size < 5 or np.any(np.diff(mu) <= 0):
        raise ValueError("mu_grid must be strictly increasing with >= 5 points")
    stars = []
    for m in mu:
        try:
            stars.append(solve_radial(eos, m, tol))
        except UnboundedStarError as exc:
            raise UnboundedStarError(f"scan failed at mu={m:g}: {exc}") from exc
    radius = np.array([s.radius for s in stars])
    mass = np.array([s.mass for s in stars])
    dM = np.gradient(mass, mu)
    ratio = mass / radius

    extrema = []
    diffs = np.diff(mass)
    for i in _sign_changes(diffs):
        mu_star = _refine_extremum(
            lambda m: mass_derivative(eos, m, tol=tol), mu[i], mu[i + 1]
        ) if refine else 0.5 * (mu[i] + mu[i + 1])
        extrema.append((mu_star, "max" if diffs[i] > 0 else "min"))

    mu_tilde = math.inf
    ratio_changes = _sign_changes(np.diff(ratio))
    if ratio_changes:
        i = ratio_changes[0]
        if refine:
            def ratio_derivative(m):
                h = 5e-4 * m

                def central(hh):
                    sp = solve_radial(eos, m + hh, tol)
                    sm = solve_radial(eos, m - hh, tol)
                    return (sp.mass / sp.radius - sm.mass / sm.radius) / (2 * hh)

                return (4.0 * central(h / 2) - central(h)) / 3.0

            mu_tilde = _refine_extremum(ratio_derivative, mu[i], mu[i + 1])
        else:
            mu_tilde = 0.5 * (mu[i] + mu[i + 1])

    return RadialFamilyCurves(mu, radius, mass, dM, ratio, extrema, mu_tilde)


def _sign_changes(diffs):
    idx = []
    for i in range(len(diffs) - 1):
        if diffs[i] == 0:
            continue
        j = i + 1
        while j < len(diffs) and diffs[j] == 0:
            j += 1
        if j < len(diffs) and diffs[i] * diffs[j] < 0:
            idx.append(i)
    return idx


def _refine_extremum(derivative, lo, hi, iters: int = 12):
    """Bisection on a derivative sign change (one solver-based refinement pass)."""
    dlo = derivative(lo)
    dhi = derivative(hi)
    if dlo == 0:
        return lo
    if dhi == 0 or dlo * dhi > 0:
        return 0.5 * (lo + hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        dm = derivative(mid)
        if dm == 0:
            return mid
        if dm * dlo < 0:
            hi = mid
        else:
            lo, dlo = mid, dm
        if (hi - lo) < 1e-4 * hi:
            break
    return 0.5 * (lo + hi)


# -- oracle quadratic form --------------------------------------------------


@dataclass(frozen=True)
class OracleMesh:
    """Discretization of the potential-side oracle form.

    Radial cubic B-splines live on [0, outer_factor * R]; the axisymmetric
    test space is a direct sum of spherical-harmonic sectors up to lmax with
    the exact harmonic exterior folded in through a boundary term, so the
    whole-space energy is represented without domain truncation error.
    """

    n_radial: int = 36
    lmax: int = 4
    outer_factor: float = 2.0
    quad_points: int = 8


@dataclass
class OracleForm:
    """Assembled oracle form with enough structure to evaluate eigenvectors."""

    form: QuadraticForm
    spline_basis: list
    ells: np.ndarray  # harmonic degree per basis column
    radius_outer: float

    def radial_component(self, coeffs: np.ndarray, ell: int, s: np.ndarray) -> np.ndarray:
        """Radial profile of the degree-ell part of a coefficient vector."""
        sel = self.ells == ell
        out = np.zeros_like(np.asarray(s, dtype=float))
        for c, spl in zip(np.asarray(coeffs)[sel], [b for b, m in zip(self.spline_basis, sel) if m]):
            out += c * spl(s)
        return out


def assemble_oracle_form(
    star: RadialStar, mesh: OracleMesh = OracleMesh(), parity: str = "even"
) -> OracleForm:
    """Galerkin matrix of the reduced potential-side form.

    The form is  int |grad psi|^2 dx - 4 pi int psi^2 / h'(rho) dx  over
    axisymmetric psi of the requested z-parity; its negative-mode count is an
    independent oracle for the density-side perturbation form.  The Gram is
    the (whole-space) Dirichlet energy.
    """
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    if mesh.outer_factor <= 1.0:
        raise ValueError("oracle mesh must strictly contain the star support")
    R = star.radius
    R_out = mesh.outer_factor * R

    # knots: denser inside the support than outside
    n_in = max(int(0.7 * mesh.n_radial), 6)
    n_out = max(mesh.n_radial - n_in, 3)
    interior = np.concatenate(
        [np.linspace(0.0, R, n_in, endpoint=False),
         np.linspace(R, R_out, n_out + 1)]
    )
    k = 3
    t = np.concatenate([[interior[0]] * k, interior, [interior[-1]] * k])
    n_basis = len(t) - k - 1
    splines = []
    for j in range(n_basis):
        coeff = np.zeros(n_basis)
        coeff[j] = 1.0
        splines.append(BSpline(t, coeff, k, extrapolate=False))

    def eval_basis(s):
        vals = np.zeros((n_basis, s.size))
        ders = np.zeros((n_basis, s.size))
        for j, spl in enumerate(splines):
            vals[j] = np.nan_to_num(spl(s))
            ders[j] = np.nan_to_num(spl.derivative()(s))
        return vals, ders

    # Gauss nodes per knot span
    gx, gw = np.polynomial.legendre.leggauss(mesh.quad_points)
    spans = np.unique(interior)
    nodes, weights = [], []
    for a, b in zip(spans[:-1], spans[1:]):
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * gx)
        weights.append(0.5 * (b - a) * gw)
    s = np.concatenate(nodes)
    w = np.concatenate(weights)
    fvals, fders = eval_basis(s)

    inside = s < R
    pot_weight = np.zeros_like(s)
    rho_in = star.rho_of(s[inside])
    pos = rho_in > 0
    pw = np.zeros_like(rho_in)
    pw[pos] = 4.0 * math.pi / star.eos.enthalpy_second(rho_in[pos])
    pot_weight[inside] = pw

    A_dd = (fders * (w * s**2)) @ fders.T          # int f' g' s^2 ds
    A_00 = (fvals * w) @ fvals.T                   # int f g ds
    A_pp = (fvals * (w * s**2 * pot_weight)) @ fvals.T  # potential term
    f_end = np.array([np.nan_to_num(spl(R_out)) for spl in splines])

    ells = range(0, mesh.lmax + 1, 2) if parity == "even" else range(1, mesh.lmax + 1, 2)
    blocks_q, blocks_g, ell_tags = [], [], []
    for ell in ells:
        pref = 4.0 * math.pi / (2 * ell + 1)
        dtn = (ell + 1) * R_out * np.outer(f_end, f_end)
        energy = A_dd + ell * (ell + 1) * A_00 + dtn
        blocks_q.append(pref * (energy - A_pp))
        blocks_g.append(pref * energy)
        ell_tags.extend([ell] * n_basis)

    def blockdiag(blocks):
        n = sum(b.shape[0] for b in blocks)
        out = np.zeros((n, n))
        at = 0
        for b in blocks:
            out[at:at + b.shape[0], at:at + b.shape[0]] = b
            at += b.shape[0]
        return out

    form = QuadraticForm(blockdiag(blocks_q), blockdiag(blocks_g))
    return OracleForm(
        form=form,
        spline_basis=splines * max(1, len(blocks_q)),
        ells=np.array(ell_tags),
        radius_outer=R_out,
    )

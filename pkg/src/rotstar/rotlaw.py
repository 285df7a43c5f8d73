"""Rotation laws, the Rayleigh discriminant, and related profiles.

An angular velocity law omega(r) is centrifugally stable when the Rayleigh
discriminant

    Upsilon(r) = d/dr (omega^2 r^4) / r^3

is positive on the whole support; at the axis the removable singularity is
evaluated through its limit 4*omega(0)^2.  Rotation can also be specified
through a momentum distribution j(p, q), the specific angular momentum as a
function of cylinder mass p and total mass q, which induces
omega(r) = eps * j(m(r), M) / r^2 on a given star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline, CubicHermiteSpline
from scipy.optimize import minimize_scalar

__all__ = [
    "AngularVelocityLaw",
    "RigidLaw",
    "PowerTailLaw",
    "TabulatedLaw",
    "RayleighVerdict",
    "discriminant",
    "classify_rayleigh",
    "casimir_profile",
    "MomentumDistribution",
    "PowerLawMomentum",
    "FixedTotalMomentum",
    "UnitMassMomentum",
    "omega_from_j",
    "law_from_config",
    "momentum_from_config",
]

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(6)


class AngularVelocityLaw:
    """C^1 angular velocity profile omega(r) with its analytic derivatives."""

    def omega(self, r):
        raise NotImplementedError

    def omega_sq_r4_derivative(self, r):
        """d/dr (omega^2 r^4); subclasses supply the analytic form."""
        raise NotImplementedError

    def d_omega_r2(self, r):
        """d/dr (omega r^2), used by the azimuthal lift and the generator."""
        raise NotImplementedError

    def centrifugal_integral(self, r):
        """int_0^r omega(s)^2 s ds, per-interval Gauss quadrature, vectorized."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return _cumulative_gauss(lambda s: self.omega(s) ** 2 * s, r)


@dataclass(frozen=True)
class RigidLaw(AngularVelocityLaw):
    omega_c: float = 1.0

    def omega(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.omega_c)

    def omega_sq_r4_derivative(self, r):
        r = np.asarray(r, dtype=float)
        return 4.0 * self.omega_c**2 * r**3

    def d_omega_r2(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self.omega_c * r

    def centrifugal_integral(self, r):
        r = np.asarray(r, dtype=float)
        return 0.5 * self.omega_c**2 * r**2


@dataclass(frozen=True)
class PowerTailLaw(AngularVelocityLaw):
    """omega(r) = omega_c * (1 + (r/r_c)^2)**(-p)."""

    omega_c: float = 1.0
    r_c: float = 1.0
    p: float = 1.0

    def omega(self, r):
        u = (np.asarray(r, dtype=float) / self.r_c) ** 2
        return self.omega_c * (1.0 + u) ** (-self.p)

    def omega_sq_r4_derivative(self, r):
        r = np.asarray(r, dtype=float)
        u = (r / self.r_c) ** 2
        return (
            self.omega_c**2
            * r**3
            * (1.0 + u) ** (-2.0 * self.p - 1.0)
            * (4.0 + (4.0 - 4.0 * self.p) * u)
        )

    def d_omega_r2(self, r):
        r = np.asarray(r, dtype=float)
        u = (r / self.r_c) ** 2
        # d/dr [omega_c r^2 (1+u)^{-p}] = omega_c r (1+u)^{-p-1} (2 + (2-2p) u)
        return self.omega_c * r * (1.0 + u) ** (-self.p - 1.0) * (2.0 + (2.0 - 2.0 * self.p) * u)


class TabulatedLaw(AngularVelocityLaw):
    """Law built from (r, omega) samples; derivatives come from a C^2 spline."""

    def __init__(self, r_samples, omega_samples):
        r = np.asarray(r_samples, dtype=float)
        w = np.asarray(omega_samples, dtype=float)
        if r.ndim != 1 or r.size < 4 or np.any(np.diff(r) <= 0):
            raise ValueError("need >= 4 strictly increasing radius samples")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(w))):
            raise ValueError("tabulated law must be finite everywhere")
        self.r_samples = r
        self.omega_samples = w
        self.r_max = float(r[-1])
        self._spline = CubicSpline(r, w, bc_type="not-a-knot")
        self._dspline = self._spline.derivative()

    def omega(self, r):
        r = np.clip(np.asarray(r, dtype=float), 0.0, self.r_max)
        return self._spline(r)

    def omega_sq_r4_derivative(self, r):
        r = np.asarray(r, dtype=float)
        w = self.omega(r)
        dw = self._dspline(np.clip(r, 0.0, self.r_max))
        return 2.0 * w * dw * r**4 + 4.0 * w**2 * r**3

    def d_omega_r2(self, r):
        r = np.asarray(r, dtype=float)
        w = self.omega(r)
        dw = self._dspline(np.clip(r, 0.0, self.r_max))
        return dw * r**2 + 2.0 * w * r


def discriminant(law: AngularVelocityLaw, r):
    """Rayleigh discriminant; the axis value is the limit 4*omega(0)^2."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = np.empty_like(r)
    on_axis = r == 0.0
    if np.any(on_axis):
        out[on_axis] = 4.0 * float(np.atleast_1d(law.omega(0.0))[0]) ** 2
    off = ~on_axis
    out[off] = law.omega_sq_r4_derivative(r[off]) / r[off] ** 3
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class RayleighVerdict:
    stable: bool
    minimum: float
    maximum: float
    witness: float | None  # minimizing radius when unstable

    @property
    def interval(self):
        return (self.minimum, self.maximum)


def classify_rayleigh(
    law: AngularVelocityLaw, r_interval, n_samples: int = 512, tol: float = 1e-8
) -> RayleighVerdict:
    """Stable iff min Upsilon > 0 on the interval; extrema refined by
    bounded golden-section search around the coarse grid optimum."""
    lo, hi = float(r_interval[0]), float(r_interval[1])
    if not (0.0 <= lo < hi):
        raise ValueError("invalid radius interval")
    r = np.linspace(lo, hi, n_samples)
    ups = discriminant(law, r)

    def refine(sign):
        i = int(np.argmin(sign * ups))
        a = r[max(i - 1, 0)]
        b = r[min(i + 1, n_samples - 1)]
        if a == b:
            return r[i], ups[i]
        res = minimize_scalar(
            lambda x: sign * discriminant(law, x),
            bounds=(a, b),
            method="bounded",
            options={"xatol": tol * max(hi, 1.0)},
        )
        return float(res.x), float(sign * res.fun)

    r_min, u_min = refine(+1.0)
    _, u_max = refine(-1.0)
    u_min = min(u_min, float(np.min(ups)))
    u_max = max(u_max, float(np.max(ups)))
    if u_min > 0:
        return RayleighVerdict(True, u_min, u_max, None)
    return RayleighVerdict(False, u_min, u_max, r_min)


def casimir_profile(law: AngularVelocityLaw, r_grid):
    """Tabulate the Casimir function g(s) along s = omega(r) r^2.

    Requires the discriminant to be positive on the grid so that s is
    strictly monotone.  Returns a cubic Hermite interpolant with the exact
    derivative data g'(s) = -omega(r(s)), anchored at g(s(0)) = 0, together
    with the (s, g) table.
    """
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or r.size < 4 or np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("r_grid must be increasing and nonnegative")
    interior = r[r > 0]
    ups = discriminant(law, interior)
    if np.any(ups <= 0):
        raise ValueError("Casimir profile needs a Rayleigh-stable law on the grid")
    w = law.omega(r)
    s = w * r**2
    if np.any(np.diff(s) <= 0):
        raise ValueError("omega * r^2 must be strictly monotone on the grid")
    # g(s(r)) = - int_0^r omega(t) s'(t) dt, accumulated by Gauss quadrature
    def integrand(t):
        return law.omega(t) * _d_s(law, t)

    g = -_cumulative_gauss(integrand, r)
    return CubicHermiteSpline(s, g, -w), s, g


def _d_s(law: AngularVelocityLaw, t):
    return law.d_omega_r2(t)


def _cumulative_gauss(f, r):
    """Cumulative integral of f from 0 along increasing nodes r (Gauss per cell)."""
    out = np.zeros_like(r)
    prev = 0.0
    acc = 0.0
    for i, cur in enumerate(r):
        if cur > prev:
            mid, half = 0.5 * (prev + cur), 0.5 * (cur - prev)
            nodes = mid + half * _GAUSS_NODES
            acc += half * float(np.dot(_GAUSS_WEIGHTS, f(nodes)))
        out[i] = acc
        prev = cur
    return out


# -- momentum distributions --------------------------------------------------


class MomentumDistribution:
    """Specific angular momentum j(p, q) of cylinder mass p and total mass q."""

    def j(self, p, q):
        raise NotImplementedError

    def dj_dp(self, p, q):
        raise NotImplementedError

    def J(self, p, q):
        """J = j^2."""
        return self.j(p, q) ** 2

    def dJ_dp(self, p, q):
        return 2.0 * self.j(p, q) * self.dj_dp(p, q)

    def validate_origin(self, q: float, scale: float = 1e-6):
        """Check the smoothness requirements at p = 0: j(0, q) = 0 and a
        finite one-sided slope.  Raises ValueError on violation."""
        j0 = float(self.j(0.0, q))
        if abs(j0) > 1e-12 * max(abs(float(self.j(scale * q, q))), 1e-300):
            raise ValueError("momentum distribution must vanish at zero cylinder mass")
        slope = float(self.dj_dp(scale * q, q))
        if not math.isfinite(slope):
            raise ValueError("momentum distribution slope must stay finite at p = 0")

    def check_rayleigh_monotone(self, q: float, p_max: float, n: int = 256) -> bool:
        p = np.linspace(p_max / n, p_max, n)
        return bool(np.all(self.dJ_dp(p, q) > 0))


@dataclass(frozen=True)
class PowerLawMomentum(MomentumDistribution):
    """j(p, q) = coeff * p**exponent, exponent >= 1."""

    coeff: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        if self.exponent < 1:
            raise ValueError("exponent < 1 violates j(0, q) = 0 smoothly")

    def j(self, p, q):
        return self.coeff * np.asarray(p, dtype=float) ** self.exponent

    def dj_dp(self, p, q):
        p = np.asarray(p, dtype=float)
        return self.coeff * self.exponent * p ** (self.exponent - 1.0)


@dataclass(frozen=True)
class FixedTotalMomentum(MomentumDistribution):
    """j(p, q) = (1/q) * [1 - (1 - p/q)**(2/3)]: fixed total angular momentum."""

    def j(self, p, q):
        x = np.clip(np.asarray(p, dtype=float) / q, 0.0, 1.0)
        return (1.0 - (1.0 - x) ** (2.0 / 3.0)) / q

    def dj_dp(self, p, q):
        x = np.clip(np.asarray(p, dtype=float) / q, 0.0, 1.0 - 1e-12)
        return (2.0 / 3.0) * (1.0 - x) ** (-1.0 / 3.0) / q**2


@dataclass(frozen=True)
class UnitMassMomentum(MomentumDistribution):
    """j(p, q) = coeff * (p/q)**exponent: per-unit-mass distribution."""

    coeff: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        if self.exponent < 1:
            raise ValueError("exponent < 1 violates j(0, q) = 0 smoothly")

    def j(self, p, q):
        return self.coeff * (np.asarray(p, dtype=float) / q) ** self.exponent

    def dj_dp(self, p, q):
        p = np.asarray(p, dtype=float)
        return self.coeff * self.exponent * p ** (self.exponent - 1.0) / q**self.exponent


def omega_from_j(
    j: MomentumDistribution, m_of_r: Callable, total_mass: float, eps: float, r_grid
) -> TabulatedLaw:
    """Angular velocity induced by a momentum distribution on a given star.

    ``m_of_r`` maps radius to cylinder mass with m(0) = 0; since m = O(r^2)
    and j vanishes at zero mass, eps*j(m(r), M)/r^2 has a finite axis limit,
    evaluated here by quadratic extrapolation from the first interior nodes.
    """
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or r.size < 6 or np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("r_grid must be increasing and nonnegative")
    j.validate_origin(total_mass)
    m = np.asarray(m_of_r(r), dtype=float)
    m_scale = max(abs(m[-1]), 1e-300)
    if np.any(np.diff(m) < -1e-12 * m_scale):
        raise ValueError("cylinder mass must be nondecreasing")
    if r[0] == 0 and abs(m[0]) > 1e-10 * m_scale:
        raise ValueError("cylinder mass must vanish at the axis")
    omega = np.empty_like(r)
    off = r > 0
    omega[off] = eps * j.j(m[off], total_mass) / r[off] ** 2
    if np.any(~off):
        ro = r[off][:3]
        wo = omega[off][:3]
        omega[~off] = np.polynomial.polynomial.polyfit(ro, wo, 2)[0]
    return TabulatedLaw(r, omega)


# -- configuration helpers ----------------------------------------------------


def law_from_config(cfg: dict) -> AngularVelocityLaw:
    form = cfg.get("form")
    if form == "rigid":
        return RigidLaw(omega_c=cfg.get("omega_c", 1.0))
    if form == "power_tail":
        return PowerTailLaw(
            omega_c=cfg.get("omega_c", 1.0),
            r_c=cfg.get("r_c", 1.0),
            p=cfg.get("p", 1.0),
        )
    if form == "table":
        if "path" in cfg:
            table = np.loadtxt(cfg["path"], delimiter=",")
            return TabulatedLaw(table[:, 0], table[:, 1])
        return TabulatedLaw(np.asarray(cfg["r"]), np.asarray(cfg["omega"]))
    raise ValueError(f"unknown angular velocity form {form!r}")


def momentum_from_config(cfg: dict) -> MomentumDistribution:
    form = cfg.get("form")
    if form == "bb_j":
        return FixedTotalMomentum()
    if form == "power_j":
        return PowerLawMomentum(coeff=cfg.get("coeff", 1.0), exponent=cfg.get("exponent", 2.0))
    if form == "unit_mass_j":
        return UnitMassMomentum(coeff=cfg.get("coeff", 1.0), exponent=cfg.get("exponent", 2.0))
    raise ValueError(f"unknown momentum distribution form {form!r}")

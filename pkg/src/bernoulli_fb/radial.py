"""Closed-form radial solutions and one-dimensional reductions.

These profiles are the ground truth the grid solvers are validated against,
so everything here is exact arithmetic on the analytic formulas; no grids,
no iteration.  Two families:

* capacitary: w equals the cone |x| inside the contact ball and is the
  harmonic radial bridge to zero at the outer sphere;
* dead-core: w vanishes inside the core ball and bridges harmonically to one
  at the outer sphere.

The dead-core bridge is written as (r_eps^(2-d) - r^(2-d)) / (r_eps^(2-d) -
R^(2-d)): the sign convention in which both endpoint conditions u(r_eps) = 0
and u(R) = 1 hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grid import VectorField, unit_ball_volume


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """An exact radial profile with its energy and interface slope."""

    dim: int
    r_eps: float
    outer_radius: float
    kind: str  # "capacitary" or "dead_core"
    samples: np.ndarray  # (n, 2) columns r, value
    energy: float
    interface_gradient: float

    @property
    def contact_measure(self) -> float:
        return unit_ball_volume(self.dim) * self.r_eps ** self.dim

    @property
    def energy_rate(self) -> float:
        """Energy per unit contact measure (capacitary profiles)."""
        return self.energy / self.contact_measure

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return _profile_value(self.kind, self.dim, self.r_eps, self.outer_radius, r)


def _annulus_capacity(d: int, r_in: float, r_out: float) -> float:
    """Dirichlet energy of the harmonic radial bridge 1 -> 0 on the annulus."""
    om = unit_ball_volume(d)
    if d >= 3:
        return d * om * (d - 2) / (r_in ** (2 - d) - r_out ** (2 - d))
    if d == 2:
        return 2.0 * math.pi / math.log(r_out / r_in)
    raise ValidationError("annulus capacity defined for d >= 2 only")


def _profile_value(kind, d, r_eps, outer, r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r <= r_eps
    outside = (r > r_eps) & (r <= outer)
    if kind == "capacitary":
        out[inside] = r[inside]
        if d >= 3:
            den = r_eps ** (2 - d) - outer ** (2 - d)
            out[outside] = r_eps * (r[outside] ** (2 - d) - outer ** (2 - d)) / den
        else:
            out[outside] = r_eps * np.log(outer / r[outside]) / math.log(outer / r_eps)
    else:
        if d >= 3:
            den = r_eps ** (2 - d) - outer ** (2 - d)
            out[outside] = (r_eps ** (2 - d) - r[outside] ** (2 - d)) / den
        else:
            out[outside] = np.log(r[outside] / r_eps) / math.log(outer / r_eps)
        out[r > outer] = 1.0
    return out


def capacitary_profile(d: int, r_eps: float, outer_radius: float = 1.0,
                       n_samples: int = 513) -> RadialProfile:
    """Cone datum inside the contact ball, harmonic bridge to zero outside.

    Exact energy: contact part omega_d * r_eps^d plus the annulus part
    d * omega_d * (d-2) * r_eps^2 / (r_eps^(2-d) - R^(2-d)); per unit contact
    measure this is 1 + d(d-2) / (1 - (r_eps/R)^(d-2)) when R = 1, an
    increasing function of the contact measure with limit 1 + d(d-2) at zero.

    For d = 2 the bridge is log-harmonic and the rate degenerates to
    1 + 2/log(R/r_eps), which tends to 1: the two-dimensional family carries
    no excess over the datum energy in the small-contact limit.
    """
    if d < 2:
        raise ValidationError("capacitary profile needs d >= 2")
    if not (0.0 < r_eps < outer_radius):
        raise ValidationError("need 0 < r_eps < outer radius")
    om = unit_ball_volume(d)
    eps = om * r_eps ** d
    annulus = r_eps ** 2 * _annulus_capacity(d, r_eps, outer_radius)
    energy = eps + annulus
    if d >= 3:
        den = r_eps ** (2 - d) - outer_radius ** (2 - d)
        slope_out = r_eps * (d - 2) * r_eps ** (1 - d) / den
    else:
        slope_out = 1.0 / math.log(outer_radius / r_eps)
    rs = np.linspace(0.0, outer_radius, n_samples)
    samples = np.column_stack([rs, _profile_value("capacitary", d, r_eps, outer_radius, rs)])
    return RadialProfile(dim=d, r_eps=r_eps, outer_radius=outer_radius,
                         kind="capacitary", samples=samples, energy=energy,
                         interface_gradient=slope_out)


def dead_core_profile(d: int, r_eps: float, outer_radius: float = 1.0,
                      n_samples: int = 513) -> RadialProfile:
    """Zero core, harmonic radial bridge to one at the outer sphere.

    Interface gradient (d-2) r_eps^(1-d) / (r_eps^(2-d) - R^(2-d)) for d >= 3,
    1 / (r_eps log(R/r_eps)) for d = 2; times r_eps it tends to d - 2 as the
    core shrinks, which is why these profiles are not equi-Lipschitz.
    """
    if d < 2:
        raise ValidationError("dead-core profile needs d >= 2")
    if not (0.0 < r_eps < outer_radius):
        raise ValidationError("need 0 < r_eps < outer radius")
    if d >= 3:
        den = r_eps ** (2 - d) - outer_radius ** (2 - d)
        slope = (d - 2) * r_eps ** (1 - d) / den
    else:
        slope = 1.0 / (r_eps * math.log(outer_radius / r_eps))
    energy = _annulus_capacity(d, r_eps, outer_radius)
    rs = np.linspace(0.0, outer_radius, n_samples)
    samples = np.column_stack([rs, _profile_value("dead_core", d, r_eps, outer_radius, rs)])
    return RadialProfile(dim=d, r_eps=r_eps, outer_radius=outer_radius,
                         kind="dead_core", samples=samples, energy=energy,
                         interface_gradient=slope)


def profile_energy_quadrature(profile: RadialProfile, n: int = 200001) -> float:
    """Dense-midpoint quadrature of the profile's radial energy integral.

    Pure-arithmetic cross-check of the closed forms; the integrand is the
    exact derivative of each piece, so the only error is quadrature error.
    """
    d = profile.dim
    om = unit_ball_volume(d)
    r_eps, outer = profile.r_eps, profile.outer_radius
    total = 0.0
    if profile.kind == "capacitary":
        total += om * r_eps ** d  # |grad| = 1 on the contact ball
    # annulus piece by midpoint rule on the exact derivative
    rs = np.linspace(r_eps, outer, n)
    mid = 0.5 * (rs[1:] + rs[:-1])
    dr = rs[1] - rs[0]
    if profile.kind == "capacitary":
        if d >= 3:
            den = r_eps ** (2 - d) - outer ** (2 - d)
            du = r_eps * (2 - d) * mid ** (1 - d) / den
        else:
            du = -r_eps / (mid * math.log(outer / r_eps))
    else:
        if d >= 3:
            den = r_eps ** (2 - d) - outer ** (2 - d)
            du = (d - 2) * mid ** (1 - d) / den
        else:
            du = 1.0 / (mid * math.log(outer / r_eps))
    total += float(np.sum(du ** 2 * d * om * mid ** (d - 1)) * dr)
    return total


@dataclass(frozen=True, eq=False)
class RadialScan:
    """Result of scanning contact radii in the 1-d reduced minimization."""

    radii: np.ndarray
    ratios: np.ndarray
    best_radius: float
    best_ratio: float


def _check_gauge(gauge, probe):
    vals = np.array([gauge(t) for t in probe])
    if abs(gauge(0.0)) > 1e-12:
        raise ValidationError("gauge must vanish at zero")
    if np.any(vals[probe > 0] <= 0.0):
        raise ValidationError("gauge must be positive away from zero")
    mid = np.array([gauge(0.5 * (a + b)) for a, b in zip(probe[:-2], probe[2:])])
    if np.any(mid > 0.5 * (vals[:-2] + vals[2:]) + 1e-12 * (1.0 + np.abs(vals[2:]))):
        raise ValidationError("gauge must be convex")


def reduce_radial(obstacle, gauge, d: int, radii, outer_radius: float = 1.0) -> RadialScan:
    """Scan contact radii for the radial quotient energy / gauge(contact measure).

    `obstacle` selects the radial datum: the string "identity" for f(x) = |x|,
    a float c for the constant datum f = c, or a pair (f, inner_energy) of
    callables giving the datum value at radius r and the Dirichlet energy of
    the datum restricted to the ball of radius r.  For each scanned radius
    the annulus piece is the exact harmonic bridge, so the quotient is exact
    up to the obstacle's own inner-energy rule.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii <= 0) or np.any(radii >= outer_radius):
        raise ValidationError("scan radii must lie strictly inside (0, outer_radius)")
    om = unit_ball_volume(d)
    _check_gauge(gauge, np.linspace(0.0, om * outer_radius ** d, 41))

    if obstacle == "identity":
        def f_val(r):
            return r

        def f_inner(r):
            return om * r ** d
    elif isinstance(obstacle, (int, float)):
        c = float(obstacle)

        def f_val(r):
            return c

        def f_inner(r):
            return 0.0
    else:
        f_val, f_inner = obstacle

    ratios = np.empty(radii.size)
    for i, r in enumerate(radii):
        energy = f_inner(r) + f_val(r) ** 2 * _annulus_capacity(d, r, outer_radius)
        ratios[i] = energy / gauge(om * r ** d)
    best = int(np.argmin(ratios))
    return RadialScan(radii=radii, ratios=ratios,
                      best_radius=float(radii[best]), best_ratio=float(ratios[best]))


def reflect_symmetrize(w: VectorField, nu) -> tuple[VectorField, VectorField]:
    """One-sided reflections of a grid field across the hyperplane {x . nu = 0}.

    `nu` is an axis index or an axis-aligned unit vector; the cell-centered
    grid is mirror-symmetric along every axis, so the reflection is an exact
    permutation of cells.  Returns (w_plus, w_minus): w_plus keeps the
    positive half, w_minus the negative half.
    """
    d = w.domain.dim
    if isinstance(nu, (int, np.integer)):
        axis = int(nu)
        positive = True
    else:
        nu = np.asarray(nu, dtype=float)
        nz = np.nonzero(np.abs(nu) > 1e-14)[0]
        if nu.shape != (d,) or nz.size != 1 or abs(abs(nu[nz[0]]) - 1.0) > 1e-12:
            raise ValidationError("reflection direction must be an axis-aligned unit vector")
        axis = int(nz[0])
        positive = nu[axis] > 0
    if not (0 <= axis < d):
        raise ValidationError("reflection axis out of range")

    coords = w.domain.axis_coords(axis) + np.zeros(w.domain.box_shape)
    pos_half = coords > 0
    flipped_vals = np.flip(w.values, axis=1 + axis)
    flipped_fix = np.flip(w.fixed, axis=axis)

    def one_sided(keep_positive):
        vals = np.where(pos_half[None] if keep_positive else ~pos_half[None],
                        w.values, flipped_vals)
        fix = np.where(pos_half if keep_positive else ~pos_half, w.fixed, flipped_fix)
        return VectorField(w.domain, np.ascontiguousarray(vals), fix)

    w_plus = one_sided(positive)
    w_minus = one_sided(not positive)
    return w_plus, w_minus

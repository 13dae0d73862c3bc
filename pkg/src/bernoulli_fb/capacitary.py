"""Inner linear solve of the optimal-constant pipeline: the minimal-energy
field pinned to its linear datum on a contact set and to zero on the outer
boundary, per reduced component."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datum import LinearDatum, diagonal_form
from .errors import ValidationError
from .grid import (ContactMask, GridDomain, VectorField, component_energies,
                   dilate, laplace_solve)


@dataclass(eq=False)
class CapacitarySolution:
    """Solution of one contact problem with its energy split."""

    field: VectorField
    contact: ContactMask
    weights: np.ndarray
    per_component_energy: np.ndarray

    @property
    def energy(self) -> float:
        return float(np.dot(self.weights, self.per_component_energy))

    @property
    def energy_rate(self) -> float:
        """Weighted energy per unit contact measure."""
        return self.energy / self.contact.measure


def contact_ball(domain: GridDomain, radius: float, center=None) -> ContactMask:
    """Contact-set representation of a ball: centers within radius + h/2.

    A pinned cell acts on the discrete Laplacian at its center, so the
    effective Dirichlet interface of a pinned set is the surface through its
    outermost centers.  Selecting centers within radius + h/2 puts that
    surface on the requested sphere to first order; selecting by
    `centers < radius` instead would bias the interface half a cell inward
    and the capacity visibly low.
    """
    from .grid import ball_mask
    half = 0.5 * domain.spacing
    return ContactMask(domain, ball_mask(domain, radius + half, center=center))


def coordinate_datum_values(domain: GridDomain, n: int) -> np.ndarray:
    """Datum values for the reduced problem: component j is the coordinate x_j."""
    vals = np.zeros((n,) + domain.box_shape)
    for j in range(n):
        vals[j] = domain.axis_coords(j) + np.zeros(domain.box_shape)
    return vals


def _check_contact(domain: GridDomain, contact: ContactMask):
    if contact.is_empty():
        raise ValidationError("contact set is empty")
    if contact.domain is not domain and contact.domain.box_shape != domain.box_shape:
        raise ValidationError("contact mask belongs to a different grid")
    if np.any(dilate(contact.members) & domain.boundary):
        raise ValidationError("contact set must be strictly inside the domain")


def solve_contact(domain: GridDomain, contact: ContactMask, datum: LinearDatum,
                  *, tol: float = 1e-10, maxiter: int | None = None,
                  x0: np.ndarray | None = None) -> CapacitarySolution:
    """Reduced capacitary solve: w_j = x_j on the contact set, 0 on the outer
    shell, discretely harmonic in between; energy weighted by the Gram
    eigenvalues of the datum.

    The grid dimension must equal the datum's rank (callers reduce first).
    """
    n = datum.rank
    if domain.dim != n:
        raise ValidationError(
            f"grid dimension {domain.dim} does not match the reduced rank {n}")
    _check_contact(domain, contact)
    weights = diagonal_form(datum)
    fixed = contact.members | domain.boundary
    fixed_values = coordinate_datum_values(domain, n)
    fixed_values[:, ~contact.members] = np.where(
        domain.boundary[None, ~contact.members], 0.0, fixed_values[:, ~contact.members])
    fixed_values[:, domain.boundary] = 0.0
    fld = laplace_solve(domain, fixed, fixed_values, tol=tol, maxiter=maxiter, x0=x0)
    return CapacitarySolution(field=fld, contact=contact, weights=weights,
                              per_component_energy=component_energies(fld))


def solve_scalar_contact(domain: GridDomain, contact: ContactMask, datum_values,
                         *, weight: float = 1.0, tol: float = 1e-10,
                         maxiter: int | None = None,
                         x0: np.ndarray | None = None) -> CapacitarySolution:
    """Scalar contact solve with an arbitrary per-cell datum (e.g. |x|)."""
    _check_contact(domain, contact)
    vals = np.asarray(datum_values, dtype=float)
    if vals.shape == domain.box_shape:
        vals = vals[None]
    fixed = contact.members | domain.boundary
    fixed_values = vals.copy()
    fixed_values[:, domain.boundary] = 0.0
    fld = laplace_solve(domain, fixed, fixed_values, tol=tol, maxiter=maxiter, x0=x0)
    return CapacitarySolution(field=fld, contact=contact,
                              weights=np.array([weight]),
                              per_component_energy=component_energies(fld))


def harmonic_replacement(w: VectorField, contact: ContactMask, datum_values,
                         *, tol: float = 1e-10,
                         maxiter: int | None = None) -> VectorField:
    """Replace `w` outside the contact set by the harmonic field with the
    given datum on the contact set and zero on the outer boundary.

    By the Dirichlet principle the result never has more energy than any
    field satisfying the same constraints, `w` included.
    """
    dom = w.domain
    if contact.is_empty():
        raise ValidationError("contact set is empty")
    vals = np.asarray(datum_values, dtype=float)
    if vals.shape == dom.box_shape:
        vals = vals[None]
    if vals.shape[0] != w.k:
        raise ValidationError("datum component count does not match the field")
    fixed = contact.members | dom.boundary
    fixed_values = vals.copy()
    fixed_values[:, dom.boundary] = 0.0
    if not np.any(dom.interior & ~fixed):
        out = VectorField.zeros(dom, w.k)
        out.values[:, contact.members] = vals[:, contact.members]
        out.fixed = fixed
        return out
    return laplace_solve(dom, fixed, fixed_values, tol=tol, maxiter=maxiter, x0=w.values)

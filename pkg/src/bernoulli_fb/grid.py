"""Uniform cell-centered Cartesian grids, discrete Dirichlet energy, and the
masked Laplace solver that every other module builds on.

Geometry convention
-------------------
A grid covering the ball or box of radius ``R`` with spacing ``h`` stores a
box of ``n + 2`` cells per axis, where ``n = 2*round(R/h)``: the inner ``n``
cells have centers at ``(i + 1/2 - n/2) * h`` (symmetric about the origin,
never on a coordinate plane) and the outermost ring is a one-cell halo.  The
interior mask selects cell centers inside the declared shape; the boundary
mask is the first layer of cells outside the interior, where Dirichlet values
live.  Energy is assembled on faces, so the discrete Dirichlet principle
holds exactly for the solver output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import SolverError, ValidationError

SUPPORTED_DIMS = (1, 2, 3, 4)
DEFAULT_TOL = 1e-10


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in d dimensions."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(eq=False)
class GridDomain:
    """Immutable description of a discretized ball or box.

    Arrays are shared, never mutated after construction.
    """

    dim: int
    radius: float
    spacing: float
    shape: str  # "ball" or "box"
    centers_1d: np.ndarray  # (n_axis,) per-axis cell-center coordinates
    interior: np.ndarray    # bool, stored-box shape
    boundary: np.ndarray    # bool, first cell layer outside the interior
    _radius_sq: np.ndarray | None = field(default=None, repr=False)

    @property
    def box_shape(self) -> tuple:
        return self.interior.shape

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def cell_count(self) -> int:
        return int(self.interior.sum())

    @property
    def measure(self) -> float:
        return self.cell_count * self.cell_volume

    @property
    def active(self) -> np.ndarray:
        return self.interior | self.boundary

    @property
    def strides(self) -> np.ndarray:
        s = np.empty(self.dim, dtype=np.int64)
        acc = 1
        for a in range(self.dim - 1, -1, -1):
            s[a] = acc
            acc *= self.box_shape[a]
        return s

    def axis_coords(self, axis: int) -> np.ndarray:
        """Centers along one axis, shaped for broadcasting over the box."""
        shp = [1] * self.dim
        shp[axis] = len(self.centers_1d)
        return self.centers_1d.reshape(shp)

    def radius_sq(self, center=None) -> np.ndarray:
        """Squared distance of every cell center to `center` (default origin)."""
        if center is None:
            if self._radius_sq is None:
                self._radius_sq = self._dist_sq(np.zeros(self.dim))
            return self._radius_sq
        return self._dist_sq(np.asarray(center, dtype=float))

    def _dist_sq(self, center: np.ndarray) -> np.ndarray:
        out = np.zeros(self.box_shape)
        for a in range(self.dim):
            out = out + (self.axis_coords(a) - center[a]) ** 2
        return out

    def boundary_distance(self) -> np.ndarray:
        """Distance of each cell center to the domain boundary (both shapes)."""
        if self.shape == "ball":
            return self.radius - np.sqrt(self.radius_sq())
        dist = np.full(self.box_shape, np.inf)
        for a in range(self.dim):
            dist = np.minimum(dist, self.radius - np.abs(self.axis_coords(a))
                              + np.zeros(self.box_shape))
        return dist

    def face_mask(self, axis: int) -> np.ndarray:
        """Faces (c, c+e_axis) carrying energy: both active, at least one interior."""
        act = self.active
        inter = self.interior
        lo = tuple(slice(0, -1) if a == axis else slice(None) for a in range(self.dim))
        hi = tuple(slice(1, None) if a == axis else slice(None) for a in range(self.dim))
        return act[lo] & act[hi] & (inter[lo] | inter[hi])

    def perimeter_cell_count(self) -> int:
        """Interior cells with at least one non-interior face neighbor."""
        return int((self.interior & ~erode(self.interior)).sum())


def make_grid(d: int, radius: float, spacing: float, shape: str = "ball") -> GridDomain:
    """Build the cell-centered grid covering B_radius (or [-radius, radius]^d)."""
    if d not in SUPPORTED_DIMS:
        raise ValidationError(f"dimension {d} unsupported; expected one of {SUPPORTED_DIMS}")
    if shape not in ("ball", "box"):
        raise ValidationError(f"shape must be 'ball' or 'box', got {shape!r}")
    if not (0.0 < spacing < radius):
        raise ValidationError(f"need 0 < spacing < radius, got spacing={spacing}, radius={radius}")
    n_inner = 2 * int(round(radius / spacing))
    if n_inner < 2:
        raise ValidationError("grid would have fewer than 2 cells per axis")
    n_axis = n_inner + 2
    centers = (np.arange(n_axis) - 1 + 0.5 - n_inner / 2.0) * spacing

    dom = GridDomain(dim=d, radius=float(radius), spacing=float(spacing), shape=shape,
                     centers_1d=centers,
                     interior=np.zeros((n_axis,) * d, dtype=bool),
                     boundary=np.zeros((n_axis,) * d, dtype=bool))
    if shape == "ball":
        interior = dom.radius_sq(center=np.zeros(d)) < radius * radius
    else:
        interior = np.ones(dom.box_shape, dtype=bool)
        for a in range(d):
            interior &= np.abs(dom.axis_coords(a)) < radius + np.zeros(dom.box_shape)
    # halo ring is never interior
    halo = np.zeros(dom.box_shape, dtype=bool)
    for a in range(d):
        idx = [slice(None)] * d
        idx[a] = 0
        halo[tuple(idx)] = True
        idx[a] = -1
        halo[tuple(idx)] = True
    interior &= ~halo
    dom.interior = interior
    dom.boundary = dilate(interior) & ~interior
    dom._radius_sq = None
    return dom


def dilate(mask: np.ndarray) -> np.ndarray:
    """Face-neighbor dilation (includes the mask itself)."""
    out = mask.copy()
    d = mask.ndim
    for a in range(d):
        lo = tuple(slice(0, -1) if i == a else slice(None) for i in range(d))
        hi = tuple(slice(1, None) if i == a else slice(None) for i in range(d))
        out[lo] |= mask[hi]
        out[hi] |= mask[lo]
    return out


def erode(mask: np.ndarray) -> np.ndarray:
    """Cells whose full face-neighbor stencil lies in the mask."""
    out = mask.copy()
    d = mask.ndim
    for a in range(d):
        shifted_lo = np.zeros_like(mask)
        shifted_hi = np.zeros_like(mask)
        lo = tuple(slice(0, -1) if i == a else slice(None) for i in range(d))
        hi = tuple(slice(1, None) if i == a else slice(None) for i in range(d))
        shifted_lo[lo] = mask[hi]
        shifted_hi[hi] = mask[lo]
        out &= shifted_lo & shifted_hi
    return out


@dataclass(eq=False)
class VectorField:
    """Grid samples of a vector-valued field with per-cell fixed tags.

    `values` has shape (k, *box); `fixed` flags cells whose values a solve
    must not touch.
    """

    domain: GridDomain
    values: np.ndarray
    fixed: np.ndarray

    def __post_init__(self):
        if self.values.ndim != self.domain.dim + 1:
            raise ValidationError("component array rank does not match the grid")
        if self.values.shape[1:] != self.domain.box_shape:
            raise ValidationError("component arrays must have one value per stored cell")
        if self.values.shape[0] < 1:
            raise ValidationError("need at least one component")
        if self.fixed.shape != self.domain.box_shape:
            raise ValidationError("fixed-tag array must have one entry per stored cell")

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "VectorField":
        return VectorField(self.domain, self.values.copy(), self.fixed.copy())

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm over components."""
        return np.sqrt(np.sum(self.values ** 2, axis=0))

    @classmethod
    def zeros(cls, domain: GridDomain, k: int) -> "VectorField":
        return cls(domain, np.zeros((k,) + domain.box_shape),
                   np.zeros(domain.box_shape, dtype=bool))


def field_from_function(domain: GridDomain, fn, k: int) -> VectorField:
    """Sample an analytic field on every stored cell (halo included).

    `fn` receives a list of d broadcastable coordinate arrays and must return
    an array of shape (k, *box) or (*box,) when k == 1.
    """
    coords = [domain.axis_coords(a) for a in range(domain.dim)]
    vals = np.asarray(fn(coords), dtype=float)
    if vals.shape == domain.box_shape:
        vals = vals[None]
    vals = np.ascontiguousarray(np.broadcast_to(vals, (k,) + domain.box_shape).copy())
    return VectorField(domain, vals, np.zeros(domain.box_shape, dtype=bool))


def linear_field(domain: GridDomain, matrix: np.ndarray) -> VectorField:
    """The field x -> A x sampled on the grid."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[1] != domain.dim:
        raise ValidationError("matrix column count must equal the grid dimension")

    def fn(coords):
        out = np.zeros((a.shape[0],) + domain.box_shape)
        for i in range(a.shape[0]):
            for j in range(domain.dim):
                out[i] += a[i, j] * coords[j]
        return out

    return field_from_function(domain, fn, a.shape[0])


def dirichlet_energy(fld: VectorField, weights=None) -> float:
    """Weighted Dirichlet energy assembled on faces.

    Forward differences on faces carrying at least one interior cell; adding
    a constant to any component leaves the value unchanged.
    """
    dom = fld.domain
    if weights is None:
        w = np.ones(fld.k)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (fld.k,):
            raise ValidationError("weights must supply one entry per component")
        if np.any(w <= 0):
            raise ValidationError("weights must be strictly positive")
    scale = dom.spacing ** (dom.dim - 2)
    total = 0.0
    for a in range(dom.dim):
        fm = dom.face_mask(a)
        lo = tuple(slice(0, -1) if i == a else slice(None) for i in range(dom.dim))
        hi = tuple(slice(1, None) if i == a else slice(None) for i in range(dom.dim))
        for c in range(fld.k):
            diff = fld.values[c][hi] - fld.values[c][lo]
            total += w[c] * scale * float(np.sum(diff[fm] ** 2))
    return total


def component_energies(fld: VectorField) -> np.ndarray:
    """Unweighted per-component Dirichlet energies."""
    dom = fld.domain
    scale = dom.spacing ** (dom.dim - 2)
    out = np.zeros(fld.k)
    for a in range(dom.dim):
        fm = dom.face_mask(a)
        lo = tuple(slice(0, -1) if i == a else slice(None) for i in range(dom.dim))
        hi = tuple(slice(1, None) if i == a else slice(None) for i in range(dom.dim))
        for c in range(fld.k):
            diff = fld.values[c][hi] - fld.values[c][lo]
            out[c] += scale * float(np.sum(diff[fm] ** 2))
    return out


def default_maxiter(domain: GridDomain) -> int:
    return 50 * max(1, int(math.ceil(domain.cell_count ** (1.0 / domain.dim))))


def laplace_solve(domain: GridDomain, fixed: np.ndarray, fixed_values: np.ndarray,
                  *, tol: float = DEFAULT_TOL, maxiter: int | None = None,
                  x0: np.ndarray | None = None) -> VectorField:
    """Solve the discrete Laplace equation on the free cells.

    `fixed` is a boolean cell mask; `fixed_values` has shape (k, *box) and is
    read on fixed cells only.  Every boundary cell must be fixed (the system
    is then symmetric positive definite on the free cells).  Conjugate
    gradients with diagonal preconditioning; raises SolverError carrying the
    final residual on non-convergence.
    """
    fixed = fixed & domain.active
    if not fixed.any():
        raise ValidationError("need at least one fixed cell for a well-posed solve")
    if np.any(domain.boundary & ~fixed):
        raise ValidationError("every boundary cell must carry a fixed value")
    fixed_values = np.asarray(fixed_values, dtype=float)
    if fixed_values.ndim == domain.dim:
        fixed_values = fixed_values[None]
    k = fixed_values.shape[0]
    free = domain.interior & ~fixed
    if maxiter is None:
        maxiter = default_maxiter(domain)

    values = np.zeros((k,) + domain.box_shape)
    for c in range(k):
        values[c][fixed] = fixed_values[c][fixed]
        if x0 is not None:
            values[c][free] = x0[c][free]

    free_flat = np.ascontiguousarray(free).reshape(-1)
    strides = domain.strides
    n_free = int(free.sum())
    if n_free > 0:
        for c in range(k):
            vals = np.ascontiguousarray(values[c]).reshape(-1)
            fixed_flat = np.ascontiguousarray(fixed).reshape(-1)
            b = np.zeros(vals.size)
            _kernels.lap_rhs(vals, fixed_flat, free_flat, strides, b)
            res, its, ok = _kernels.cg_masked(vals, b, free_flat, strides, tol, maxiter)
            if not ok:
                raise SolverError(
                    f"conjugate gradients stalled at relative residual {res:.3e} "
                    f"after {its} iterations", residual=res, iterations=its)
            values[c] = vals.reshape(domain.box_shape)
    return VectorField(domain, values, fixed.copy())


def exterior_harmonic_extension(v: VectorField, inner_radius: float, far_radius: float,
                                *, tol: float = DEFAULT_TOL,
                                maxiter: int | None = None) -> VectorField:
    """Harmonic extension of `v` from the sphere of radius `inner_radius` into
    the truncated exterior annulus, zero at `far_radius`.

    The truncation error of replacing the unbounded exterior by the annulus
    decays like |x|^(2-d) (log-harmonically for d = 2), so far_radius is
    required to be at least 4 * inner_radius.
    """
    dom = v.domain
    if far_radius < 4.0 * inner_radius:
        raise ValidationError("far radius must be at least 4x the inner radius")
    ext = make_grid(dom.dim, far_radius, dom.spacing, "ball")
    if len(v.domain.centers_1d) > len(ext.centers_1d):
        raise ValidationError("source grid is larger than the extension grid")

    rsq = ext.radius_sq()
    inner = rsq <= inner_radius * inner_radius
    fixed = (inner & ext.interior) | ext.boundary
    fixed_values = np.zeros((v.k,) + ext.box_shape)
    # grids share spacing and centering, so cells correspond by index offset
    off = (len(ext.centers_1d) - len(v.domain.centers_1d)) // 2
    src = tuple(slice(off, off + len(v.domain.centers_1d)) for _ in range(dom.dim))
    for c in range(v.k):
        fixed_values[(c,) + src] = v.values[c]
    return laplace_solve(ext, fixed, fixed_values, tol=tol, maxiter=maxiter)


@dataclass(eq=False)
class ContactMask:
    """A set of interior cells on which a field is pinned to its datum."""

    domain: GridDomain
    members: np.ndarray

    def __post_init__(self):
        if self.members.shape != self.domain.box_shape:
            raise ValidationError("mask shape does not match the grid")
        if np.any(self.members & ~self.domain.interior):
            raise ValidationError("contact cells must lie in the grid interior")

    @property
    def count(self) -> int:
        return int(self.members.sum())

    @property
    def measure(self) -> float:
        return self.count * self.domain.cell_volume

    def is_empty(self) -> bool:
        return not self.members.any()


def select_cells(domain: GridDomain, count: int, key: np.ndarray,
                 allowed: np.ndarray | None = None) -> np.ndarray:
    """Deterministically pick `count` allowed cells with the smallest key.

    Ties break by flat cell index (stable sort), so repeated runs agree.
    """
    if allowed is None:
        allowed = domain.interior
    flat_key = np.where(allowed, key, np.inf).reshape(-1)
    if count > int(allowed.sum()):
        raise ValidationError("not enough cells available for the requested selection")
    order = np.argsort(flat_key, kind="stable")[:count]
    mask = np.zeros(flat_key.size, dtype=bool)
    mask[order] = True
    return mask.reshape(domain.box_shape)


def ball_mask(domain: GridDomain, radius: float, center=None) -> np.ndarray:
    """Interior cells with centers inside the given ball."""
    rsq = domain.radius_sq(center=center)
    return (rsq < radius * radius) & domain.interior

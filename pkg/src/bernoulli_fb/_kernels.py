"""Numba kernels for the masked-box Laplace operator and conjugate gradients.

All kernels operate on flat C-order views of the stored box (interior plus a
one-cell halo).  Neighbor access is by precomputed axis strides; the halo
guarantees every interior cell has all 2d neighbors in bounds.  The matvec and
axpy loops are embarrassingly parallel (no reductions), so `prange` keeps
results bit-identical regardless of thread count; reductions (dot products)
are sequential on purpose.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def lap_apply(x, free, strides, out):
    """out = A x on free cells, 0 elsewhere.  A = 2d*I - sum of free neighbors."""
    n = x.size
    two_d = 2.0 * strides.size
    for i in prange(n):
        if free[i]:
            acc = two_d * x[i]
            for a in range(strides.size):
                s = strides[a]
                if free[i - s]:
                    acc -= x[i - s]
                if free[i + s]:
                    acc -= x[i + s]
            out[i] = acc
        else:
            out[i] = 0.0


@njit(cache=True, parallel=True)
def lap_rhs(vals, fixed, free, strides, out):
    """Right-hand side from fixed-neighbor values: b_i = sum of fixed nbr values."""
    n = vals.size
    for i in prange(n):
        if free[i]:
            acc = 0.0
            for a in range(strides.size):
                s = strides[a]
                if fixed[i - s]:
                    acc += vals[i - s]
                if fixed[i + s]:
                    acc += vals[i + s]
            out[i] = acc
        else:
            out[i] = 0.0


@njit(cache=True)
def dot(a, b):
    """Sequential dot product (deterministic reduction order)."""
    s = 0.0
    for i in range(a.size):
        s += a[i] * b[i]
    return s


@njit(cache=True, parallel=True)
def axpy(alpha, x, y):
    """y += alpha * x."""
    for i in prange(y.size):
        y[i] += alpha * x[i]


@njit(cache=True, parallel=True)
def xpay(x, beta, p):
    """p = x + beta * p."""
    for i in prange(p.size):
        p[i] = x[i] + beta * p[i]


@njit(cache=True)
def cg_masked(x, b, free, strides, tol, maxiter):
    """Preconditioned CG for the masked Laplacian; x holds the warm start.

    The diagonal of the operator is the constant 2d, so Jacobi preconditioning
    is a scalar rescaling; it is kept explicit so the residual norm matches
    the documented contract.  Returns (relative_residual, iterations,
    converged).  Entries of x outside the free mask are left untouched.
    """
    n = x.size
    d = strides.size
    inv_diag = 1.0 / (2.0 * d)

    r = np.zeros(n)
    ap = np.zeros(n)
    lap_apply(x, free, strides, ap)
    for i in range(n):
        if free[i]:
            r[i] = b[i] - ap[i]
    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0.0:
        for i in range(n):
            if free[i]:
                x[i] = 0.0
        return 0.0, 0, True

    z = r * inv_diag
    p = z.copy()
    rz = dot(r, z)
    res = np.sqrt(dot(r, r)) / bnorm
    if res <= tol:
        return res, 0, True

    it = 0
    while it < maxiter:
        lap_apply(p, free, strides, ap)
        pap = dot(p, ap)
        if pap <= 0.0:
            break
        alpha = rz / pap
        axpy(alpha, p, x)
        axpy(-alpha, ap, r)
        res = np.sqrt(dot(r, r)) / bnorm
        it += 1
        if res <= tol:
            return res, it, True
        for i in range(n):
            z[i] = r[i] * inv_diag
        rz_new = dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        xpay(z, beta, p)
    return res, it, False


@njit(cache=True)
def face_energy_sum(vals, count_face, stride, n):
    """Sum of squared forward differences over faces flagged in count_face."""
    s = 0.0
    for i in range(n - stride):
        if count_face[i]:
            dv = vals[i + stride] - vals[i]
            s += dv * dv
    return s


@njit(cache=True, parallel=True)
def cell_energy_density(vals, interior, strides, out):
    """Per-cell energy density: half of each incident face's squared difference.

    Summed against cell volume h^d this reproduces the face-based Dirichlet
    energy up to the shared-face split at mask edges.
    """
    n = vals.size
    for i in prange(n):
        if interior[i]:
            acc = 0.0
            for a in range(strides.size):
                s = strides[a]
                dm = vals[i] - vals[i - s]
                dp = vals[i + s] - vals[i]
                acc += 0.5 * (dm * dm + dp * dp)
            out[i] = acc
        else:
            out[i] = 0.0

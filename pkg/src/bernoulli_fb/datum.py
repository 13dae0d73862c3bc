"""Preprocessing of the linear contact datum: rank factorization A = [A1, 0] Q
and the diagonal weights that reduce the vector problem to identity datum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LinearDatum:
    """A k x d matrix with its rank factorization and Gram spectrum.

    `q` is d x d orthogonal with the first `rank` rows spanning the row space
    of `matrix` (the remaining rows span its kernel); `a1` is k x rank of full
    column rank with matrix = [a1, 0] q.  `gram_eigs` holds the positive
    eigenvalues of A^T A in decreasing order; their sum is the squared
    Frobenius norm.
    """

    matrix: np.ndarray
    rank: int
    q: np.ndarray
    a1: np.ndarray
    gram_eigs: np.ndarray
    frob_sq: float

    @property
    def nrows(self) -> int:
        return self.matrix.shape[0]

    @property
    def ncols(self) -> int:
        return self.matrix.shape[1]


def reduce(matrix, tol: float = DEFAULT_RANK_TOL) -> LinearDatum:
    """Factor the datum as [A1, 0] Q with Q orthogonal and A1 of full rank.

    Rank counts singular values above `tol` times the largest one; the zero
    matrix is rejected because the optimal constant is undefined for a
    trivial datum.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.ndim != 2:
        raise ValidationError("datum must be a 2-d matrix")
    u, sing, vt = np.linalg.svd(a, full_matrices=True)
    if sing.size == 0 or sing[0] <= 0.0:
        raise ValidationError("zero matrix rejected: no nontrivial contact datum")
    n = int(np.sum(sing > tol * sing[0]))
    if n == 0:
        raise ValidationError("zero matrix rejected: no nontrivial contact datum")
    a1 = u[:, :n] * sing[:n]
    q = vt  # rows: right singular vectors; first n span ker(A)^perp
    gram_eigs = sing[:n] ** 2
    return LinearDatum(matrix=a, rank=n, q=q, a1=a1,
                       gram_eigs=gram_eigs, frob_sq=float(np.sum(a * a)))


def diagonal_form(datum: LinearDatum) -> np.ndarray:
    """Diagonal weights of the reduced problem with identity contact datum.

    These are the positive eigenvalues of A^T A counted with multiplicity;
    the reduced problem minimizes sum_j b_j * |grad w_j|^2 with w_j pinned to
    the j-th coordinate on the contact set.
    """
    return datum.gram_eigs.copy()

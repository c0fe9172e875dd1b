"""Small sparse/dense linear algebra helpers shared across modules."""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from daeimor.errors import SingularShift

# relative pivot threshold applied to the equilibrated matrix
PIVOT_TOL = 1e-14
RANK_TOL = 1e-10


def as_matrix(M):
    """Return ``M`` as CSR (if sparse) or a 2-D float ndarray."""
    if sp.issparse(M):
        return sp.csr_matrix(M, dtype=float)
    M = np.asarray(M, dtype=float)
    return M.reshape(1, -1) if M.ndim == 1 else M


def dense(M) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def numerical_rank(M, tol=RANK_TOL) -> int:
    s = la.svdvals(dense(M)) if min(M.shape) else np.zeros(0)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def _equilibrate(M, sweeps=3):
    """Ruiz scaling: returns (row_scale, col_scale) so diag(r) M diag(c) has unit max entries."""
    M = sp.csr_matrix(abs(M))
    n, k = M.shape
    r = np.ones(n)
    c = np.ones(k)
    for _ in range(sweeps):
        S = sp.diags(r) @ M @ sp.diags(c)
        rmax = S.max(axis=1).toarray().ravel()
        cmax = S.max(axis=0).toarray().ravel()
        rmax[rmax == 0] = 1.0
        cmax[cmax == 0] = 1.0
        r /= np.sqrt(rmax)
        c /= np.sqrt(cmax)
    return r, c


class SparseSolver:
    """LU factorization of a square sparse matrix with equilibration.

    Raises :class:`SingularShift` when the factorization fails or a pivot is
    negligible relative to the largest pivot of the scaled matrix.
    """

    def __init__(self, M, what="shifted matrix", pivot_tol=PIVOT_TOL):
        M = sp.csc_matrix(M)
        self.shape = M.shape
        self.r, self.c = _equilibrate(M)
        Ms = sp.csc_matrix(sp.diags(self.r) @ M @ sp.diags(self.c))
        try:
            self.lu = spla.splu(Ms)
        except RuntimeError as exc:
            raise SingularShift(f"{what} is singular: {exc}") from None
        d = np.abs(self.lu.U.diagonal())
        if d.size and (not np.all(np.isfinite(d)) or d.min() <= pivot_tol * d.max()):
            raise SingularShift(f"{what} is numerically singular "
                                f"(pivot ratio {d.min() / d.max():.2e})")

    def solve(self, b):
        b = np.asarray(b)
        rs = self.r if b.ndim == 1 else self.r[:, None]
        cs = self.c if b.ndim == 1 else self.c[:, None]
        return cs * self.lu.solve(np.ascontiguousarray(rs * b))

    def solve_transposed(self, b):
        b = np.asarray(b)
        rs = self.r if b.ndim == 1 else self.r[:, None]
        cs = self.c if b.ndim == 1 else self.c[:, None]
        return rs * self.lu.solve(np.ascontiguousarray(cs * b), trans="T")


def orth_columns(M, tol=RANK_TOL) -> np.ndarray:
    """Orthonormal basis for range(M) by SVD, dropping directions below ``tol`` (relative)."""
    M = dense(M)
    if M.shape[1] == 0:
        return M.copy()
    U, s, _ = la.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, s > tol * s[0]]

"""Descriptor-system types, index-2 structure checks and spectral projectors.

An index-2 Stokes-type system is

    E11 x1' = A11 x1 + A21^T x2 + B1 u
          0 = A21 x1            + B2 u
          y = C1 x1 + C2 x2 + D u

with E11 nonsingular and A21 of full row rank.  All operations here are pure
functions of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from daeimor.errors import (DimensionMismatch, PolynomialPartError, RankDeficientConstraint,
                            SingularMass, SingularSchur, SingularShift)
from daeimor.linalg import RANK_TOL, SparseSolver, as_matrix, dense

# threshold for the degree-one coefficient C2 S^{-1} B2 relative to the data scale
POLY_TOL = 1e-10
# above this size validation skips dense SVD-based condition estimates
DENSE_LIMIT = 3000


def _column(M):
    if not sp.issparse(M) and np.ndim(M) == 1:
        return np.asarray(M, dtype=float).reshape(-1, 1)
    return as_matrix(M)


def _row(M):
    if not sp.issparse(M) and np.ndim(M) == 1:
        return np.asarray(M, dtype=float).reshape(1, -1)
    return as_matrix(M)


def saddle_block(F, A21):
    if A21.shape[0] == 0:
        return sp.csc_matrix(F)
    A21 = sp.csr_matrix(A21)
    return sp.bmat([[F, A21.T], [A21, None]], format="csc")


@dataclass(frozen=True, eq=False)
class Index2System:
    """Structured index-2 descriptor system.

    Matrices may be dense arrays or scipy sparse matrices. ``B2``, ``C2`` and
    ``D`` default to zero blocks.
    """

    E11: object
    A11: object
    A21: object
    B1: object
    C1: object
    B2: object = None
    C2: object = None
    D: object = None

    def __post_init__(self):
        E11 = as_matrix(self.E11)
        n1 = E11.shape[0]
        A21 = np.zeros((0, n1)) if self.A21 is None or np.size(self.A21) == 0 \
            else as_matrix(self.A21)
        B1 = _column(self.B1)
        C1 = _row(self.C1)
        n2 = A21.shape[0]
        m = B1.shape[1]
        p = C1.shape[0]
        B2 = np.zeros((n2, m)) if self.B2 is None or n2 == 0 else _column(self.B2)
        C2 = np.zeros((p, n2)) if self.C2 is None or n2 == 0 else _row(self.C2)
        D = np.zeros((p, m)) if self.D is None else np.asarray(self.D, dtype=float).reshape(p, m)
        object.__setattr__(self, "E11", E11)
        object.__setattr__(self, "A11", as_matrix(self.A11))
        object.__setattr__(self, "A21", A21)
        object.__setattr__(self, "B1", dense(B1))
        object.__setattr__(self, "C1", dense(C1))
        object.__setattr__(self, "B2", dense(B2))
        object.__setattr__(self, "C2", dense(C2))
        object.__setattr__(self, "D", D)
        expected = {
            "E11": (n1, n1), "A11": (n1, n1), "A21": (n2, n1), "B1": (n1, m),
            "B2": (n2, m), "C1": (p, n1), "C2": (p, n2), "D": (p, m),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"{name} has shape {getattr(self, name).shape}, "
                                        f"expected {shape}")

    @property
    def n1(self) -> int:
        return self.E11.shape[0]

    @property
    def n2(self) -> int:
        return self.A21.shape[0]

    @property
    def m(self) -> int:
        return self.B1.shape[1]

    @property
    def p(self) -> int:
        return self.C1.shape[0]

    def saddle_matrix(self, s, transpose=False):
        """Sparse ``[[s E11 - A11, A21^T], [A21, 0]]`` (or its block-transposed variant)."""
        F = s * sp.csr_matrix(self.E11) - sp.csr_matrix(self.A11)
        return saddle_block(F.T if transpose else F, self.A21)

    @cached_property
    def mass_saddle(self) -> SparseSolver:
        """Factorization of ``[[E11, A21^T], [A21, 0]]``; exposes S^{-1}-type products."""
        try:
            return SparseSolver(saddle_block(sp.csr_matrix(self.E11), self.A21), "mass saddle matrix")
        except SingularShift as exc:
            raise SingularSchur(str(exc)) from None

    @cached_property
    def projected_io(self) -> "ProjectedIO":
        return _projected_io(self)


@dataclass(frozen=True, eq=False)
class DescriptorSystem:
    """General descriptor system ``E x' = A x + B u, y = C x + D u``."""

    E: object
    A: object
    B: object
    C: object
    D: object = None

    def __post_init__(self):
        E = as_matrix(self.E)
        n = E.shape[0]
        B = _column(self.B)
        C = _row(self.C)
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else \
            np.asarray(self.D, dtype=float).reshape(C.shape[0], B.shape[1])
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", as_matrix(self.A))
        object.__setattr__(self, "B", dense(B))
        object.__setattr__(self, "C", dense(C))
        object.__setattr__(self, "D", D)
        for name, shape in {"E": (n, n), "A": (n, n), "B": (n, B.shape[1]),
                            "C": (C.shape[0], n)}.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"{name} has shape {getattr(self, name).shape}, "
                                        f"expected {shape}")

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def is_regular(self, probe=0.7071 + 0.3183j) -> bool:
        """Probe-based regularity check: ``probe E - A`` must be nonsingular."""
        try:
            SparseSolver(probe * sp.csc_matrix(self.E) - sp.csc_matrix(self.A))
        except SingularShift:
            return False
        return True


@dataclass(frozen=True)
class SpectralProjectors:
    Pl: np.ndarray
    Pr: np.ndarray
    Vinf: np.ndarray
    Winf: np.ndarray


@dataclass(frozen=True)
class ValidationReport:
    n1: int
    n2: int
    m: int
    p: int
    constraint_rank: int
    schur: np.ndarray | None
    mass_condition: float | None
    constraint_condition: float | None
    schur_condition: float | None


class ProjectedIO(NamedTuple):
    """Input/output data of the hidden ODE on ker(A21).

    ``B1`` and ``C1`` absorb the B2 and C2 couplings, ``D`` is the constant
    polynomial part of the transfer function.
    """

    B1: np.ndarray
    C1: np.ndarray
    D: np.ndarray
    F: np.ndarray  # x1 = x0 + F u splits off the u-driven constraint component


def validate_index2(sys: Index2System) -> ValidationReport:
    """Check the index-2 structure of ``sys``.

    Raises :class:`SingularMass`, :class:`RankDeficientConstraint` or
    :class:`SingularSchur`. Dimension errors are raised on construction.
    """
    n1, n2 = sys.n1, sys.n2
    try:
        mass = SparseSolver(sys.E11, "E11")
    except SingularShift as exc:
        raise SingularMass(str(exc)) from None

    small = n1 <= DENSE_LIMIT
    mass_cond = float(np.linalg.cond(dense(sys.E11))) if small else None
    if mass_cond is not None and not mass_cond < 1e15:
        raise SingularMass(f"E11 condition number {mass_cond:.3e}")

    rank, a_cond, S, s_cond = n2, None, None, None
    if n2:
        if small:
            sv = la.svdvals(dense(sys.A21))
            rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv[0] > 0 else 0
            a_cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        if rank < n2:
            raise RankDeficientConstraint(f"A21 has numerical rank {rank} < {n2}")
        if small:
            S = dense(sys.A21) @ mass.solve(dense(sys.A21).T)
            ss = la.svdvals(S)
            if ss[0] == 0 or ss[-1] <= RANK_TOL * ss[0]:
                raise SingularSchur("Schur complement A21 E11^{-1} A21^T is singular")
            s_cond = float(ss[0] / ss[-1])
        else:
            sys.mass_saddle  # factorization failure raises SingularSchur
    return ValidationReport(n1, n2, sys.m, sys.p, rank, S, mass_cond, a_cond, s_cond)


def embed_index2(sys: Index2System) -> DescriptorSystem:
    """Assemble the full pencil ``E = diag(E11, 0)``, ``A = [[A11, A21^T], [A21, 0]]``."""
    n2 = sys.n2
    if n2 == 0:
        return DescriptorSystem(sys.E11, sys.A11, sys.B1, sys.C1, sys.D)
    E11 = sp.csr_matrix(sys.E11)
    A21 = sp.csr_matrix(sys.A21)
    E = sp.bmat([[E11, None], [None, sp.csr_matrix((n2, n2))]], format="csr")
    A = sp.bmat([[sp.csr_matrix(sys.A11), A21.T], [A21, None]], format="csr")
    B = np.vstack([sys.B1, sys.B2])
    C = np.hstack([sys.C1, sys.C2])
    return DescriptorSystem(E, A, B, C, sys.D.copy())


def leray_projectors(sys: Index2System):
    """Dense velocity-block projectors ``(Pi_r, Pi_l)``.

    ``Pi_r = I - E11^{-1} A21^T S^{-1} A21`` projects onto ker(A21);
    ``Pi_l = I - A21^T S^{-1} A21 E11^{-1}`` satisfies ``Pi_l E11 = E11 Pi_r``.
    """
    n1 = sys.n1
    if sys.n2 == 0:
        return np.eye(n1), np.eye(n1)
    E = dense(sys.E11)
    G = dense(sys.A21)
    EinvGt = la.solve(E, G.T)
    S = G @ EinvGt
    try:
        lu = la.lu_factor(S, check_finite=True)
    except la.LinAlgError:
        raise SingularSchur("Schur complement is singular") from None
    if np.min(np.abs(np.diag(lu[0]))) <= RANK_TOL * np.max(np.abs(np.diag(lu[0]))):
        raise SingularSchur("Schur complement is singular")
    SinvG = la.lu_solve(lu, G)
    Pr = np.eye(n1) - EinvGt @ SinvG
    Pl = np.eye(n1) - G.T @ la.lu_solve(lu, la.solve(E.T, G.T).T)
    return Pr, Pl


def projectors_index2(sys: Index2System) -> SpectralProjectors:
    """Spectral projectors of the embedded pencil onto the finite deflating subspaces.

    Dense construction intended for small systems used as an oracle.

    The right finite subspace is ``{(x1, -S^{-1} A21 E11^{-1} A11 x1) : A21 x1 = 0}``;
    the left one is ``{(E11 x1, 0) : A21 x1 = 0}``.  ``Vinf`` and ``Winf`` are
    orthonormal bases of ``ker(Pr)`` and ``ker(Pl^T)``.
    """
    n1, n2 = sys.n1, sys.n2
    if n2 == 0:
        return SpectralProjectors(np.eye(n1), np.eye(n1), np.zeros((n1, 0)), np.zeros((n1, 0)))
    Pir, Pil = leray_projectors(sys)
    E = dense(sys.E11)
    A = dense(sys.A11)
    G = dense(sys.A21)
    S = G @ la.solve(E, G.T)
    # x2 = -S^{-1} A21 E11^{-1} A11 x1 on the finite subspace
    M = -la.solve(S, G @ la.solve(E, A))
    Z = np.zeros
    Pr = np.block([[Pir, Z((n1, n2))], [M @ Pir, Z((n2, n2))]])
    # left: decompose y = (f, 0) + w_inf with w_inf = (A21^T b + A11 E11^{-1} A21^T S^{-1} c, c)
    T = A @ la.solve(E, G.T) @ np.linalg.inv(S)
    Pl = np.block([[Pil, -Pil @ T], [Z((n2, n1)), Z((n2, n2))]])
    n = n1 + n2
    Vinf = la.null_space(Pr, rcond=RANK_TOL)
    Winf = la.null_space(Pl.T, rcond=RANK_TOL)
    if Vinf.shape[1] != 2 * n2 or Winf.shape[1] != 2 * n2:
        raise SingularSchur(f"infinite deflating subspaces have dimensions "
                            f"{Vinf.shape[1]}, {Winf.shape[1]}; expected {2 * n2} of {n}")
    return SpectralProjectors(Pl, Pr, Vinf, Winf)


def _projected_io(sys: Index2System) -> ProjectedIO:
    n1, n2 = sys.n1, sys.n2
    if n2 == 0:
        return ProjectedIO(sys.B1, sys.C1, sys.D, np.zeros((n1, sys.m)))
    K = sys.mass_saddle
    Z = np.zeros
    # [[E11, A21^T], [A21, 0]] [F; Y] = [0; -B2]  =>  F = -E11^{-1} A21^T S^{-1} B2, Y = S^{-1} B2
    sol = K.solve(np.vstack([Z((n1, sys.m)), -sys.B2]))
    F, Y = sol[:n1], sol[n1:]
    # transposed saddle [[E11^T, A21^T], [A21, 0]] [X^T; .] = [0; C2^T]  =>  X = C2 S^{-1} A21 E11^{-1}
    Xt = K.solve_transposed(np.vstack([Z((n1, sys.p)), sys.C2.T]))[:n1]
    degree_one = sys.C2 @ Y
    scale = max(1.0, np.linalg.norm(sys.C2) * np.linalg.norm(sys.B2))
    if np.linalg.norm(degree_one) > POLY_TOL * scale:
        raise PolynomialPartError(
            "transfer function has a polynomial part of degree 1 "
            f"(|C2 S^-1 B2| = {np.linalg.norm(degree_one):.3e}); only constant parts are supported")
    C1 = sys.C1 - (sys.A11.T @ Xt).T
    B1 = sys.B1 + sys.A11 @ F
    D = sys.D - Xt.T @ sys.B1 + C1 @ F
    return ProjectedIO(np.asarray(B1), np.asarray(C1), np.asarray(D), F)


def polynomial_part(sys: Index2System) -> np.ndarray:
    """Constant polynomial part of ``G(s)``.

    With ``B2 = 0`` this is ``D - C2 S^{-1} A21 E11^{-1} B1``. Raises
    :class:`PolynomialPartError` if the part has degree one.
    """
    return sys.projected_io.D.copy()


@dataclass(frozen=True, eq=False)
class InterpolationData:
    """Interpolation points with right (m-vector) and left (p-vector) tangent directions."""

    points: np.ndarray
    right_dirs: np.ndarray
    left_dirs: np.ndarray
    conjugate_closed: bool = False

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex))
        r = pts.size
        b = np.asarray(self.right_dirs, dtype=complex).reshape(r, -1)
        c = np.asarray(self.left_dirs, dtype=complex).reshape(r, -1)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "right_dirs", b)
        object.__setattr__(self, "left_dirs", c)
        if self.conjugate_closed and conjugate_partners(self) is None:
            raise ValueError("interpolation data flagged conjugate-closed but pairs are incomplete")

    def __len__(self):
        return self.points.size


def conjugate_partners(data: InterpolationData, tol=1e-14):
    """Map each index to its conjugate partner, or ``None`` if the data are not closed."""
    pts, b, c = data.points, data.right_dirs, data.left_dirs
    partner = {}
    for i, s in enumerate(pts):
        if i in partner:
            continue
        if s.imag == 0 and np.all(b[i].imag == 0) and np.all(c[i].imag == 0):
            partner[i] = i
            continue
        for j in range(len(pts)):
            if j != i and j not in partner and abs(pts[j] - np.conj(s)) <= tol * max(1, abs(s)) \
                    and np.allclose(b[j], np.conj(b[i]), rtol=0, atol=tol) \
                    and np.allclose(c[j], np.conj(c[i]), rtol=0, atol=tol):
                partner[i], partner[j] = j, i
                break
        else:
            return None
    return partner


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Reduced descriptor system and the bases that produced it."""

    Er: np.ndarray
    Ar: np.ndarray
    Br: np.ndarray
    Cr: np.ndarray
    Dr: np.ndarray
    V: np.ndarray
    W: np.ndarray
    mode: str = "petrov_galerkin"

    @property
    def r(self) -> int:
        return self.Er.shape[0]

    @property
    def m(self) -> int:
        return self.Br.shape[1]

    @property
    def p(self) -> int:
        return self.Cr.shape[0]

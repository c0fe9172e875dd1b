"""Interpolatory reduction of index-2 systems.

The production path never forms spectral projectors: every basis vector is the
velocity block of one sparse saddle-point solve. The projector path on the
embedded pencil is kept as a dense oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from daeimor.errors import BasisMismatch, EmptyBasis, SingularShift
from daeimor.linalg import SparseSolver
from daeimor.systems import (DescriptorSystem, Index2System, InterpolationData, ReducedModel,
                             SpectralProjectors, conjugate_partners)
from daeimor.transfer import _dense_solve, bilinear_derivative, eval_transfer

MODES = ("petrov_galerkin", "galerkin")
SVD_TOL = 1e-10


def _saddle_solver(sys: Index2System, sigma) -> SparseSolver:
    return SparseSolver(sys.saddle_matrix(complex(sigma)), f"saddle matrix at sigma={sigma}")


def saddle_solve_right(sys: Index2System, sigma, b, solver=None) -> np.ndarray:
    """Velocity block ``v`` of ``[[sigma E11 - A11, A21^T], [A21, 0]] [v; z] = [B1 b; 0]``.

    ``B1`` is the input matrix of the hidden ODE, which equals ``sys.B1``
    whenever ``B2 = 0``.
    """
    solver = solver or _saddle_solver(sys, sigma)
    rhs = np.zeros(sys.n1 + sys.n2, dtype=complex)
    rhs[:sys.n1] = sys.projected_io.B1 @ np.asarray(b, dtype=complex).reshape(-1)
    return solver.solve(rhs)[:sys.n1]


def saddle_solve_left(sys: Index2System, sigma, c, solver=None) -> np.ndarray:
    """Velocity block ``w`` of the transposed saddle system with right-hand side ``[C1^T c; 0]``.

    ``C1`` here is the output matrix of the hidden ODE,
    ``C1 - C2 S^{-1} A21 E11^{-1} A11``, which reduces to ``sys.C1`` when ``C2 = 0``.
    The block-transposed saddle matrix is the transpose of the right one, so a
    shared factorization can be passed in.
    """
    solver = solver or _saddle_solver(sys, sigma)
    rhs = np.zeros(sys.n1 + sys.n2, dtype=complex)
    rhs[:sys.n1] = sys.projected_io.C1.T @ np.asarray(c, dtype=complex).reshape(-1)
    return solver.solve_transposed(rhs)[:sys.n1]


def compress(columns, tol=SVD_TOL) -> np.ndarray:
    """Real orthonormal basis of the span of ``columns``.

    Columns are scaled to unit norm first so the relative SVD threshold does
    not depend on how each solution happens to be scaled.
    """
    cols = [c for c in columns if np.linalg.norm(c) > 0]
    if not cols:
        raise EmptyBasis("no nonzero basis vectors")
    M = np.column_stack([c / np.linalg.norm(c) for c in cols])
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    keep = s > tol * s[0]
    if not np.any(keep):
        raise EmptyBasis("basis compressed to zero columns")
    U = U[:, keep]
    # deterministic sign: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(U), axis=0)
    return U * np.sign(U[idx, np.arange(U.shape[1])])


def _realify(vec):
    out = [vec.real.copy()]
    if np.linalg.norm(vec.imag) > 0:
        out.append(vec.imag.copy())
    return out


def onto_kernel(sys: Index2System, M, transpose=False) -> np.ndarray:
    """Project the columns of ``M`` onto ker(A21) with the mass-weighted projector.

    Weak singular directions of a compressed basis are differences of nearly
    parallel solutions and carry rounding errors of relative size ``eps / s``,
    which pushes them off the constraint manifold; this puts them back.
    """
    if sys.n2 == 0:
        return M
    rhs = np.vstack([np.zeros_like(M), sys.A21 @ M])
    solve = sys.mass_saddle.solve_transposed if transpose else sys.mass_saddle.solve
    return M - solve(rhs)[:sys.n1]


def _unique_indices(data: InterpolationData):
    """Indices to solve for; the second member of each conjugate pair is skipped."""
    partner = conjugate_partners(data) if data.conjugate_closed else None
    if partner is None:
        return list(range(len(data)))
    return [i for i in range(len(data)) if partner[i] >= i]


def build_bases(sys: Index2System, data: InterpolationData, mode="petrov_galerkin",
                tol=SVD_TOL):
    """Real bases ``(V, W)`` spanning the interpolatory saddle solutions.

    In ``galerkin`` mode ``W = V`` and the left directions are ignored.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    vs, ws = [], []
    for i in _unique_indices(data):
        sigma = data.points[i]
        solver = _saddle_solver(sys, sigma)
        vs += _realify(saddle_solve_right(sys, sigma, data.right_dirs[i], solver))
        if mode == "petrov_galerkin":
            ws += _realify(saddle_solve_left(sys, sigma, data.left_dirs[i], solver))
    V = compress(onto_kernel(sys, compress(vs, tol)).T, tol)
    if mode == "galerkin":
        return V, V
    W = compress(onto_kernel(sys, compress(ws, tol), transpose=True).T, tol)
    if V.shape[1] < W.shape[1]:
        V = _pad(V, W, tol)
    elif W.shape[1] < V.shape[1]:
        W = _pad(W, V, tol)
    return V, W


def _pad(small, large, tol):
    """Extend ``small`` with directions of ``large`` it does not yet contain.

    Interpolation only requires each solution vector to lie in its own basis,
    so enlarging the smaller basis keeps every condition intact.
    """
    need = large.shape[1] - small.shape[1]
    rest = large - small @ (small.T @ large)
    U, s, _ = np.linalg.svd(rest, full_matrices=False)
    if s.size < need or s[need - 1] <= tol * max(s[0], 1e-300):
        raise BasisMismatch(f"cannot extend a basis of {small.shape[1]} columns "
                            f"to {large.shape[1]}")
    extra = U[:, :need]
    extra = extra - small @ (small.T @ extra)
    Q, _ = np.linalg.qr(extra)
    idx = np.argmax(np.abs(Q), axis=0)
    Q = Q * np.sign(Q[idx, np.arange(need)])
    return np.hstack([small, Q])


def _check_reduced_pencil(Er, Ar, points):
    for sigma in np.unique(points):
        _dense_solve(sigma * Er - Ar, np.eye(Er.shape[0], dtype=complex))


def project(sys: Index2System, V, W, mode="petrov_galerkin") -> ReducedModel:
    """Petrov-Galerkin projection of the hidden ODE with the constant feed-through."""
    pio = sys.projected_io
    Er = W.T @ (sys.E11 @ V)
    Ar = W.T @ (sys.A11 @ V)
    return ReducedModel(np.asarray(Er), np.asarray(Ar), W.T @ pio.B1, pio.C1 @ V, pio.D.copy(),
                        V, W, mode)


def reduce_index2(sys: Index2System, data: InterpolationData, mode="petrov_galerkin",
                  tol=SVD_TOL) -> ReducedModel:
    """Interpolatory reduced model of an index-2 system without spectral projectors."""
    V, W = build_bases(sys, data, mode, tol)
    rom = project(sys, V, W, mode)
    try:
        _check_reduced_pencil(rom.Er, rom.Ar, data.points)
    except SingularShift:
        raise SingularShift("reduced pencil sigma*Er - Ar is singular at an "
                            "interpolation point") from None
    return rom


def reduce_via_projectors(sys: DescriptorSystem, projs: SpectralProjectors,
                          data: InterpolationData, tol=SVD_TOL) -> ReducedModel:
    """Oracle reduction using explicit spectral projectors of the full pencil."""
    E = sp.csc_matrix(sys.E)
    A = sp.csc_matrix(sys.A)
    PlB = projs.Pl @ sys.B
    PrtCt = projs.Pr.T @ sys.C.T
    vs, ws = [], []
    for i in _unique_indices(data):
        sigma = complex(data.points[i])
        solver = SparseSolver(sigma * E - A, f"sigma E - A at sigma={sigma}")
        vs += _realify(solver.solve(PlB @ data.right_dirs[i]))
        ws += _realify(solver.solve_transposed(PrtCt @ data.left_dirs[i]))
    Vf, Wf = compress(vs, tol), compress(ws, tol)
    if Vf.shape[1] != Wf.shape[1]:
        raise BasisMismatch(f"Vf has {Vf.shape[1]} columns but Wf has {Wf.shape[1]}")
    V = np.hstack([Vf, projs.Vinf])
    W = np.hstack([Wf, projs.Winf])
    Er = W.T @ (E @ V)
    Ar = W.T @ (A @ V)
    rom = ReducedModel(np.asarray(Er), np.asarray(Ar), W.T @ sys.B, sys.C @ V, sys.D.copy(),
                       V, W, "petrov_galerkin")
    _check_reduced_pencil(rom.Er, rom.Ar, data.points)
    return rom


@dataclass
class PointResidual:
    sigma: complex
    left: float
    right: float
    hermite: float | None

    def to_dict(self):
        return {"sigma": [float(self.sigma.real), float(self.sigma.imag)],
                "left": float(self.left), "right": float(self.right),
                "hermite": None if self.hermite is None else float(self.hermite)}


@dataclass
class InterpolationReport:
    """Relative tangential interpolation residuals per point.

    In galerkin mode (``W = V``) only the right-tangential (Lagrange) condition
    is guaranteed; the Hermite residual is not computed.
    """

    mode: str
    points: list = field(default_factory=list)

    @property
    def hermite_expected(self) -> bool:
        return self.mode == "petrov_galerkin"

    @property
    def max_left(self) -> float:
        return max((p.left for p in self.points), default=0.0)

    @property
    def max_right(self) -> float:
        return max((p.right for p in self.points), default=0.0)

    @property
    def max_hermite(self) -> float:
        return max((p.hermite for p in self.points if p.hermite is not None), default=0.0)

    @property
    def max_guaranteed(self) -> float:
        """Largest residual among the conditions the mode guarantees."""
        if self.hermite_expected:
            return max(self.max_left, self.max_right, self.max_hermite)
        return self.max_right

    def to_dict(self):
        return {"hermite_expected": self.hermite_expected,
                "lagrange_only": not self.hermite_expected,
                "max_hermite": self.max_hermite, "max_left": self.max_left,
                "max_right": self.max_right, "mode": self.mode,
                "points": [p.to_dict() for p in self.points]}


def _rel(a, b):
    scale = np.linalg.norm(a)
    return float(np.linalg.norm(a - b) / (scale if scale > 0 else 1.0))


def verify_interpolation(sys: Index2System, rom: ReducedModel,
                         data: InterpolationData) -> InterpolationReport:
    """Compare full and reduced transfer functions at every interpolation point."""
    report = InterpolationReport(rom.mode)
    for sigma, b, c in zip(data.points, data.right_dirs, data.left_dirs):
        G = eval_transfer(sys, sigma)
        Gr = eval_transfer(rom, sigma)
        hermite = None
        if report.hermite_expected:
            d = bilinear_derivative(sys, sigma, b, c)
            dr = bilinear_derivative(rom, sigma, b, c)
            hermite = abs(d - dr) / (abs(d) if abs(d) > 0 else 1.0)
        report.points.append(PointResidual(complex(sigma), _rel(c @ G, c @ Gr),
                                           _rel(G @ b, Gr @ b), hermite))
    return report

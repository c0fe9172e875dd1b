"""Reduced-order LQR design, gain lift-back and closed-loop simulation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from daeimor.errors import (ConfigError, DimensionMismatch, GeometryError,
                            InconsistentInitialState, RiccatiError)
from daeimor.linalg import SparseSolver
from daeimor.systems import Index2System, ReducedModel, saddle_block
from daeimor.testbed import GridGeometry

# eigenvalues of the Hamiltonian closer than this (relative) to the imaginary axis
# mean no stabilizing solution exists
HAMILTONIAN_GAP = 1e-9


@dataclass(frozen=True, eq=False)
class LqrProblem:
    """Minimize the integral of ``|Cr x|^2 + u^T R u`` subject to the reduced model."""

    rom: ReducedModel
    R: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        m = self.rom.m
        if R.shape == (1, 1) and m > 1:
            R = R[0, 0] * np.eye(m)
        if R.shape != (m, m):
            raise DimensionMismatch(f"R has shape {R.shape}, expected {(m, m)}")
        if not np.allclose(R, R.T, rtol=1e-12, atol=0):
            raise ConfigError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ConfigError("R must be positive definite")
        object.__setattr__(self, "R", R)


@dataclass(frozen=True, eq=False)
class LqrResult:
    P: np.ndarray
    K_reduced: np.ndarray
    K_full: np.ndarray
    residual_norm: float
    closed_loop_abscissa: float


def care(A, B, Q, R):
    """Stabilizing solution of ``A^T X + X A - X B R^{-1} B^T X + Q = 0``.

    Ordered real Schur form of the Hamiltonian matrix, followed by one
    Newton (Kleinman) refinement step.
    """
    n = A.shape[0]
    G = B @ la.solve(R, B.T, assume_a="pos")
    H = np.block([[A, -G], [-Q, -A.T]])
    lam = la.eigvals(H)
    scale = max(1.0, np.abs(lam).max())
    if np.min(np.abs(lam.real)) <= HAMILTONIAN_GAP * scale:
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis; "
                           f"closest |Re| = {np.min(np.abs(lam.real)):.2e}, "
                           "no stabilizing solution")
    T, U, sdim = la.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise RiccatiError(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U11, U21 = U[:n, :n], U[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise RiccatiError("stable invariant subspace is not a graph; "
                           "(A, B) is not stabilizable or (A, Q) not detectable")
    X = la.solve(U11.T, U21.T).T
    X = (X + X.T) / 2
    # one Newton step: (A - G X)^T X' + X' (A - G X) = -(Q + X G X)
    Ac = A - G @ X
    X1 = la.solve_continuous_lyapunov(Ac.T, -(Q + X @ G @ X))
    X1 = (X1 + X1.T) / 2
    if np.all(np.isfinite(X1)) and _care_residual(A, G, Q, X1) <= _care_residual(A, G, Q, X):
        X = X1
    return X


def _care_residual(A, G, Q, X):
    return la.norm(A.T @ X + X @ A - X @ G @ X + Q)


def solve_lqr(prob: LqrProblem) -> LqrResult:
    """Solve the generalized reduced Riccati equation and form the gains.

    ``Ar^T P Er + Er^T P Ar - Er^T P Br R^{-1} Br^T P Er + Cr^T Cr = 0`` is
    solved through the standard form ``X = Er^T P Er`` with ``Er^{-1} Ar``,
    ``Er^{-1} Br``; then ``K = R^{-1} Br^T P Er`` and ``K_full = K V^T``.
    """
    rom, R = prob.rom, prob.R
    Er, Ar, Br, Cr = rom.Er, rom.Ar, rom.Br, rom.Cr
    lu = la.lu_factor(Er)
    if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * np.max(np.abs(np.diag(lu[0]))):
        raise RiccatiError("reduced mass matrix Er is singular")
    As = la.lu_solve(lu, Ar)
    Bs = la.lu_solve(lu, Br)
    Q = Cr.T @ Cr
    X = care(As, Bs, Q, R)
    P = la.lu_solve(lu, la.lu_solve(lu, X, trans=1).T, trans=1).T
    P = (P + P.T) / 2
    K = la.solve(R, Br.T @ P @ Er, assume_a="pos")
    res = Ar.T @ P @ Er + Er.T @ P @ Ar - Er.T @ P @ Br @ la.solve(R, Br.T @ P @ Er) + Q
    abscissa = float(np.max(la.eigvals(Ar - Br @ K, Er).real))
    if not abscissa < 0:
        raise RiccatiError(f"reduced closed loop is not stable (abscissa {abscissa:.3e})")
    result = LqrResult(P, K, None, float(la.norm(res)), abscissa)
    return replace(result, K_full=lift_gain(result, rom))


def lift_gain(result: LqrResult, rom: ReducedModel) -> np.ndarray:
    """Full-coordinate gain ``K = K_reduced V^T``."""
    if result.K_reduced.shape[1] != rom.V.shape[1]:
        raise DimensionMismatch("gain and basis dimensions differ")
    return result.K_reduced @ rom.V.T


def functional_gains(K_full, geometry: GridGeometry, mass=None):
    """Gain fields ``h`` with ``u = -sum_j h_j v_j |cell_j|`` reproducing ``u = -K x1``.

    Returns ``(h_u, h_v)`` as arrays on the u-face grid ``(ny, nx+1)`` and the
    v-face grid ``(ny+1, nx)``, NaN where there is no unknown; a leading axis
    indexes the input when ``m > 1``. ``mass`` is the diagonal of the lumped
    mass matrix (defaults to the cell area).
    """
    K = np.atleast_2d(np.asarray(K_full, dtype=float))
    n1 = geometry.n1
    if K.shape[1] != n1:
        raise GeometryError(f"gain has {K.shape[1]} columns, geometry has {n1} velocity unknowns")
    w = np.full(n1, geometry.hx * geometry.hy) if mass is None else np.asarray(mass, float)
    H = K / w
    uI, vI = geometry.u_index, geometry.v_index
    hu = np.full((K.shape[0],) + uI.shape, np.nan)
    hv = np.full((K.shape[0],) + vI.shape, np.nan)
    hu[:, uI >= 0] = H[:, uI[uI >= 0]]
    hv[:, vI >= 0] = H[:, vI[vI >= 0]]
    if K.shape[0] == 1:
        return hu[0], hv[0]
    return hu, hv


def consistent_initial_state(sys: Index2System, x) -> np.ndarray:
    """Project ``x`` onto ker(A21) with ``I - E11^{-1} A21^T S^{-1} A21``."""
    x = np.asarray(x, dtype=float)
    if sys.n2 == 0:
        return x.copy()
    sol = sys.mass_saddle.solve(np.concatenate([np.zeros(sys.n1), sys.A21 @ x]))
    return x - sol[:sys.n1]


@dataclass
class Trajectory:
    t: np.ndarray
    x1: np.ndarray  # (steps+1, n1)
    u: np.ndarray  # (steps+1, m)
    y: np.ndarray  # (steps+1, p)
    constraint_residual: np.ndarray

    @property
    def state_norm(self) -> np.ndarray:
        return np.linalg.norm(self.x1, axis=1)


def simulate_closed_loop(sys: Index2System, K_full, x0, dt, T, consistency_tol=1e-9) -> Trajectory:
    """Implicit Euler for ``E11 x1' = (A11 - B1 K) x1 + A21^T x2``, ``A21 x1 = 0``.

    Each step solves one saddle system; its factorization is reused. The
    output is ``y = C1 x1 + C2 x2 + D u`` with ``u = -K x1``.
    """
    if dt <= 0 or T <= 0:
        raise ConfigError("dt and T must be positive")
    if sys.n2 and np.any(sys.B2):
        raise ConfigError("closed-loop simulation requires B2 = 0")
    K = np.atleast_2d(np.asarray(K_full, dtype=float))
    if K.shape != (sys.m, sys.n1):
        raise DimensionMismatch(f"gain has shape {K.shape}, expected {(sys.m, sys.n1)}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    A21 = sys.A21
    scale = max(np.linalg.norm(x), np.finfo(float).tiny)
    if sys.n2 and np.linalg.norm(A21 @ x) > consistency_tol * scale:
        raise InconsistentInitialState(
            f"|A21 x0| / |x0| = {np.linalg.norm(A21 @ x) / scale:.2e}; "
            "use consistent_initial_state()")
    steps = int(round(T / dt))
    n1, n2 = sys.n1, sys.n2
    E11 = sp.csr_matrix(sys.E11)
    # open-loop step matrix [[E11 - dt A11, A21^T], [A21, 0]]; the feedback enters as the
    # rank-m update [dt B1; 0] [K, 0] handled by Sherman-Morrison-Woodbury
    step = sp.csr_matrix(sys.E11) - dt * sp.csr_matrix(sys.A11)
    solver = SparseSolver(saddle_block(step, sys.A21), "implicit Euler step matrix")
    U = np.zeros((n1 + n2, sys.m))
    U[:n1] = dt * sys.B1
    Z = solver.solve(U)
    cap = np.eye(sys.m) + K @ Z[:n1]
    xs = np.empty((steps + 1, n1))
    x2s = np.zeros((steps + 1, n2))
    xs[0] = x
    if n2:
        # algebraic variable at t=0 from the hidden constraint A21 E11^{-1} (Acl x + A21^T x2) = 0
        acl_x = sys.A11 @ x - sys.B1 @ (K @ x)
        x2s[0] = -sys.mass_saddle.solve(np.concatenate([acl_x, np.zeros(n2)]))[n1:]
    rhs = np.zeros(n1 + n2)
    for k in range(steps):
        rhs[:n1] = E11 @ xs[k]
        y = solver.solve(rhs)
        sol = y - Z @ np.linalg.solve(cap, K @ y[:n1])
        xs[k + 1] = sol[:n1]
        x2s[k + 1] = -sol[n1:] / dt
    us = -xs @ K.T
    ys = xs @ sys.C1.T + x2s @ sys.C2.T + us @ sys.D.T
    norms = np.linalg.norm(xs, axis=1)
    cres = np.linalg.norm(sp.csr_matrix(sys.A21) @ xs.T, axis=0) / np.where(norms > 0, norms, 1.0) \
        if n2 else np.zeros(steps + 1)
    return Trajectory(dt * np.arange(steps + 1), xs, us, ys, cres)

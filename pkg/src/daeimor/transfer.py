"""Transfer-function evaluation, sigma sweeps and finite pole computation."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from daeimor.errors import DaeError, SingularShift
from daeimor.linalg import RANK_TOL, SparseSolver, dense
from daeimor.systems import DescriptorSystem, Index2System, ReducedModel, embed_index2

log = logging.getLogger(__name__)

# |lambda| above 1/EPS_INF counts as an infinite eigenvalue
EPS_INF = 1e-8


@dataclass
class FrequencyResponse:
    omegas: np.ndarray
    values: np.ndarray  # (count, p, m) complex
    norms: np.ndarray
    failed: list = field(default_factory=list)


@dataclass
class PoleReport:
    finite_poles: np.ndarray
    unstable_count: int
    infinite_count: int = 0

    def to_dict(self):
        return {
            "finite_poles": [[float(z.real), float(z.imag)] for z in self.finite_poles],
            "infinite_count": int(self.infinite_count),
            "unstable_count": int(self.unstable_count),
            "unstable_poles": [[float(z.real), float(z.imag)]
                               for z in self.finite_poles if z.real > 0],
        }


def _dense_solve(M, rhs):
    if M.shape[0] == 0:
        return np.zeros((0,) + rhs.shape[1:], dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("error", la.LinAlgWarning)
        try:
            return la.solve(M, rhs)
        except (la.LinAlgError, la.LinAlgWarning):
            raise SingularShift("reduced pencil is singular at the requested point") from None


def eval_transfer(sys, s) -> np.ndarray:
    """``G(s) = C (sE - A)^{-1} B + D`` as a complex p x m matrix.

    For an :class:`Index2System` one saddle solve per input column is used:
    ``[[sE11 - A11, A21^T], [A21, 0]] [x1; z] = [B1; -B2]`` with ``x2 = -z``.
    """
    s = complex(s)
    if isinstance(sys, ReducedModel):
        return sys.Cr @ _dense_solve(s * sys.Er - sys.Ar, sys.Br.astype(complex)) + sys.Dr
    if isinstance(sys, Index2System):
        solver = SparseSolver(sys.saddle_matrix(s), f"saddle matrix at s={s}")
        sol = solver.solve(np.vstack([sys.B1, -sys.B2]).astype(complex))
        x1, z = sol[:sys.n1], sol[sys.n1:]
        return sys.C1 @ x1 - sys.C2 @ z + sys.D
    if isinstance(sys, DescriptorSystem):
        solver = SparseSolver(s * sp.csc_matrix(sys.E) - sp.csc_matrix(sys.A), f"sE - A at s={s}")
        return sys.C @ solver.solve(sys.B.astype(complex)) + sys.D
    raise TypeError(f"cannot evaluate transfer function of {type(sys).__name__}")


def eval_transfer_derivative(sys, s) -> np.ndarray:
    """``G'(s) = -C (sE - A)^{-1} E (sE - A)^{-1} B``."""
    s = complex(s)
    if isinstance(sys, ReducedModel):
        X = _dense_solve(s * sys.Er - sys.Ar, sys.Br.astype(complex))
        return -sys.Cr @ _dense_solve(s * sys.Er - sys.Ar, sys.Er @ X)
    if isinstance(sys, Index2System):
        sys = embed_index2(sys)
    solver = SparseSolver(s * sp.csc_matrix(sys.E) - sp.csc_matrix(sys.A), f"sE - A at s={s}")
    X = solver.solve(sys.B.astype(complex))
    return -sys.C @ solver.solve(sys.E @ X)


def bilinear_derivative(sys, s, b, c) -> complex:
    """``c^T G'(s) b`` from one right and one left solve."""
    s = complex(s)
    b = np.asarray(b, dtype=complex)
    c = np.asarray(c, dtype=complex)
    if isinstance(sys, ReducedModel):
        M = s * sys.Er - sys.Ar
        x = _dense_solve(M, sys.Br @ b)
        y = _dense_solve(M.T, sys.Cr.T @ c)
        return complex(-y @ (sys.Er @ x))
    if isinstance(sys, Index2System):
        sys = embed_index2(sys)
    solver = SparseSolver(s * sp.csc_matrix(sys.E) - sp.csc_matrix(sys.A), f"sE - A at s={s}")
    x = solver.solve(sys.B @ b)
    y = solver.solve_transposed(sys.C.T @ c)
    return complex(-y @ (sys.E @ x))


def sigma_sweep(sys, omega_min, omega_max, count, spacing="log") -> FrequencyResponse:
    """Largest singular value of ``G(i omega)`` on a frequency grid.

    Points where ``i omega`` is a pole are recorded in ``failed`` with NaN
    values; the sweep continues past them.
    """
    if not 0 < omega_min < omega_max:
        raise ValueError("need 0 < omega_min < omega_max")
    if spacing == "log":
        omegas = np.logspace(np.log10(omega_min), np.log10(omega_max), count)
    elif spacing == "linear":
        omegas = np.linspace(omega_min, omega_max, count)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    p, m = sys.p, sys.m
    values = np.full((count, p, m), np.nan, dtype=complex)
    norms = np.full(count, np.nan)
    failed = []
    for k, w in enumerate(omegas):
        try:
            G = eval_transfer(sys, 1j * w)
        except SingularShift:
            log.warning("omega=%g is a pole; skipped", w)
            failed.append(k)
            continue
        values[k] = G
        norms[k] = la.norm(G, 2) if G.size else 0.0
    return FrequencyResponse(omegas, values, norms, failed)


def _sorted(z):
    z = np.asarray(z, dtype=complex)
    return z[np.lexsort((z.imag, -z.real))]


def finite_poles(sys) -> PoleReport:
    """Finite generalized eigenvalues of ``(A, E)``.

    Index-2 systems are restricted to ker(A21), where the pencil
    ``(Q^T A11 Q, Q^T E11 Q)`` carries exactly the finite spectrum. Other
    systems go through QZ with eigenvalues of modulus above ``1/EPS_INF``
    reported as infinite.
    """
    if isinstance(sys, Index2System):
        A11 = dense(sys.A11)
        E11 = dense(sys.E11)
        if sys.n2:
            Q = la.null_space(dense(sys.A21), rcond=RANK_TOL)
            A11, E11 = Q.T @ A11 @ Q, Q.T @ E11 @ Q
        lam = la.eigvals(A11, E11) if A11.size else np.zeros(0, complex)
        lam = _sorted(lam)
        return PoleReport(lam, int(np.sum(lam.real > 0)), sys.n1 + sys.n2 - lam.size)
    if isinstance(sys, ReducedModel):
        A, E = sys.Ar, sys.Er
    elif isinstance(sys, DescriptorSystem):
        A, E = dense(sys.A), dense(sys.E)
    else:
        raise TypeError(f"cannot compute poles of {type(sys).__name__}")
    if A.size == 0:
        return PoleReport(np.zeros(0, complex), 0, 0)
    try:
        alpha, beta = la.eigvals(A, E, homogeneous_eigvals=True)
    except la.LinAlgError as exc:
        raise DaeError(f"eigensolver failed: {exc}") from None
    finite = np.abs(beta) * (1 / EPS_INF) > np.abs(alpha)
    lam = _sorted(alpha[finite] / beta[finite])
    return PoleReport(lam, int(np.sum(lam.real > 0)), int(np.sum(~finite)))

import numpy as np
import pytest
import scipy.linalg as la

from daeimor.errors import (ConfigError, DimensionMismatch, GeometryError,
                            InconsistentInitialState, RiccatiError)
from daeimor.linalg import dense
from daeimor.lqr import (LqrProblem, care, consistent_initial_state, functional_gains, lift_gain,
                         simulate_closed_loop, solve_lqr)
from daeimor.reduction import reduce_index2
from daeimor.systems import InterpolationData, ReducedModel
from daeimor.testbed import channel_geometry, generate_oseen, generate_planted, generate_random
from daeimor.transfer import finite_poles

PLANT = [complex(5.2480e-2, 7.6720e-1), complex(5.2480e-2, -7.6720e-1)]


def scalar_rom(a, c=1.0, e=1.0):
    one = np.ones((1, 1))
    return ReducedModel(e * one, a * one, one, c * one, 0 * one, one, one)


def riccati_residual(rom, P, R):
    Er, Ar, Br, Cr = rom.Er, rom.Ar, rom.Br, rom.Cr
    return (Ar.T @ P @ Er + Er.T @ P @ Ar
            - Er.T @ P @ Br @ np.linalg.solve(R, Br.T @ P @ Er) + Cr.T @ Cr)


def test_scalar_riccati_closed_form():
    res = solve_lqr(LqrProblem(scalar_rom(1.0), 1.0))
    assert res.P[0, 0] == pytest.approx(1 + np.sqrt(2), abs=1e-12)
    assert res.K_reduced[0, 0] == pytest.approx(1 + np.sqrt(2), abs=1e-12)
    assert res.closed_loop_abscissa == pytest.approx(-np.sqrt(2), abs=1e-12)


def test_care_matches_scipy():
    rng = np.random.default_rng(0)
    for n, m in ((4, 1), (10, 2), (25, 3)):
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((2, n))
        R = np.eye(m) * 0.5
        X = care(A, B, C.T @ C, R)
        ref = la.solve_continuous_are(A, B, C.T @ C, R)
        assert np.linalg.norm(X - ref) <= 1e-8 * np.linalg.norm(ref)


def test_generalized_riccati_matches_scipy():
    rng = np.random.default_rng(1)
    r = 8
    Er = np.eye(r) + 0.2 * rng.standard_normal((r, r))
    Ar = rng.standard_normal((r, r))
    rom = ReducedModel(Er, Ar, rng.standard_normal((r, 1)), rng.standard_normal((2, r)),
                       np.zeros((2, 1)), np.eye(r), np.eye(r))
    res = solve_lqr(LqrProblem(rom, 10.0))
    ref = la.solve_continuous_are(Ar, rom.Br, rom.Cr.T @ rom.Cr, np.array([[10.0]]), e=Er)
    assert np.linalg.norm(res.P - ref) <= 1e-8 * np.linalg.norm(ref)
    np.testing.assert_allclose(res.P, res.P.T, atol=1e-10)
    bound = 1e-8 * (np.linalg.norm(Ar.T @ res.P @ Er) + np.linalg.norm(rom.Cr.T @ rom.Cr))
    assert np.linalg.norm(riccati_residual(rom, res.P, np.array([[10.0]]))) <= bound
    assert res.residual_norm <= bound
    assert np.all(la.eigvals(Ar - rom.Br @ res.K_reduced, Er).real < 0)


def test_zero_output_weight_needs_no_control():
    res = solve_lqr(LqrProblem(scalar_rom(-2.0, c=0.0), 1.0))
    assert res.P[0, 0] == pytest.approx(0.0, abs=1e-14)
    assert res.K_reduced[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_unstabilizable_problem_is_reported():
    rom = ReducedModel(np.eye(2), np.diag([1.0, -1.0]), np.array([[0.0], [1.0]]),
                       np.eye(2), np.zeros((2, 1)), np.eye(2), np.eye(2))
    with pytest.raises(RiccatiError) as exc:
        solve_lqr(LqrProblem(rom, 1.0))
    assert exc.value.code == "riccati-failure"


def test_imaginary_axis_hamiltonian_is_reported():
    # undamped oscillator, no output weight: Hamiltonian eigenvalues on the axis
    rom = ReducedModel(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([[0.0], [1.0]]),
                       np.zeros((1, 2)), np.zeros((1, 1)), np.eye(2), np.eye(2))
    with pytest.raises(RiccatiError, match="imaginary axis"):
        solve_lqr(LqrProblem(rom, 1.0))


@pytest.mark.parametrize("R", [-1.0, [[1.0, 2.0], [0.0, 1.0]]])
def test_bad_weight_is_rejected(R):
    rom = ReducedModel(np.eye(2), -np.eye(2), np.ones((2, 2)), np.ones((1, 2)), np.zeros((1, 2)),
                       np.eye(2), np.eye(2))
    with pytest.raises(ConfigError):
        LqrProblem(rom, R)


def test_weight_shape_is_checked():
    with pytest.raises(DimensionMismatch):
        LqrProblem(scalar_rom(1.0), np.eye(2))


def test_lift_preserves_norm_and_restriction():
    rng = np.random.default_rng(2)
    V, _ = np.linalg.qr(rng.standard_normal((12, 4)))
    rom = ReducedModel(np.eye(4), -np.eye(4), np.ones((4, 1)), np.ones((1, 4)), np.zeros((1, 1)),
                       V, V)
    res = solve_lqr(LqrProblem(rom, 1.0))
    K = lift_gain(res, rom)
    np.testing.assert_allclose(res.K_full, K)
    assert np.linalg.norm(K, 2) == pytest.approx(np.linalg.norm(res.K_reduced, 2), rel=1e-12)
    np.testing.assert_allclose(K @ V, res.K_reduced, atol=1e-14)
    orth = la.null_space(V.T)
    assert np.abs(K @ orth).max() <= 1e-14


def test_planted_reduction_stabilizes_full_model():
    sys = generate_planted(120, 30, PLANT, seed=1)
    w = np.concatenate([np.logspace(-2, 2, 8), [0.5, 0.77, 1.0]])
    pts = np.concatenate([1j * w, -1j * w])
    e = np.zeros((pts.size, 2))
    e[:, 0] = 1
    data = InterpolationData(pts, np.ones((pts.size, 1)), e, conjugate_closed=True)
    rom = reduce_index2(sys, data, "galerkin")
    res = solve_lqr(LqrProblem(rom, 10.0))
    assert res.closed_loop_abscissa < 0
    closed = generate_closed_loop(sys, res.K_full)
    assert max(closed.real) < 0


def generate_closed_loop(sys, K):
    from daeimor.systems import Index2System
    return finite_poles(Index2System(sys.E11, dense(sys.A11) - sys.B1 @ K, sys.A21, sys.B1,
                                     sys.C1)).finite_poles


def test_functional_gain_of_zero_and_point_gain():
    geom = channel_geometry(8, 6, (-2, 2, -1.5, 1.5), (-0.5, 0.5, -0.5, 0.5))
    hu, hv = functional_gains(np.zeros(geom.n1), geom)
    assert np.nanmax(np.abs(hu)) == 0 and np.nanmax(np.abs(hv)) == 0
    K = np.zeros(geom.n1)
    K[3] = 1.0
    hu, hv = functional_gains(K, geom, mass=np.ones(geom.n1))
    assert np.nansum(hu) == 1.0 and np.nansum(np.abs(hv)) == 0.0
    j, i = np.argwhere(geom.u_index == 3)[0]
    assert hu[j, i] == 1.0
    with pytest.raises(GeometryError):
        functional_gains(np.zeros(geom.n1 + 1), geom)


def test_functional_gain_mirror_symmetry():
    geom = channel_geometry(16, 8, (-2.0, 6.0, -2.0, 2.0), (-0.5, 0.5, -0.5, 0.5))
    sys = generate_oseen(geom, 10.0, "parabolic")
    w = np.logspace(-1, 1, 4)
    pts = np.concatenate([1j * w, -1j * w])
    e = np.zeros((pts.size, sys.p))
    e[:, 0] = 1
    data = InterpolationData(pts, np.ones((pts.size, 1)), e, conjugate_closed=True)
    rom = reduce_index2(sys, data, "galerkin")
    res = solve_lqr(LqrProblem(rom, 10.0))
    hu, hv = functional_gains(res.K_full, geom)
    scale = np.nanmax(np.abs(hu))
    assert scale > 0
    # rotation input is odd under y -> -y, so h_u is odd and h_v even about the centerline
    np.testing.assert_allclose(hu, -hu[::-1], atol=1e-8 * scale)
    np.testing.assert_allclose(hv, hv[::-1], atol=1e-8 * scale)


def test_consistent_projection():
    sys = generate_random(30, 8, seed=3)
    x = consistent_initial_state(sys, np.arange(30.0))
    assert np.linalg.norm(sys.A21 @ x) <= 1e-12 * np.linalg.norm(x)
    np.testing.assert_allclose(consistent_initial_state(sys, x), x, atol=1e-12)


def test_inconsistent_start_is_rejected():
    sys = generate_random(20, 5, seed=4)
    with pytest.raises(InconsistentInitialState):
        simulate_closed_loop(sys, np.zeros((1, 20)), np.ones(20), 0.1, 1.0)


def test_stokes_free_decay_is_monotone_in_energy():
    geom = channel_geometry(12, 8, (-3.0, 3.0, -2.0, 2.0), (-0.5, 0.5, -0.5, 0.5))
    sys = generate_oseen(geom, 1.0, "zero")
    x0 = consistent_initial_state(sys, np.random.default_rng(0).standard_normal(sys.n1))
    traj = simulate_closed_loop(sys, np.zeros((1, sys.n1)), x0, 0.02, 1.0)
    E = dense(sys.E11)
    energy = np.einsum("ki,ij,kj->k", traj.x1, E, traj.x1)
    assert np.all(np.diff(energy) < 0)
    assert traj.constraint_residual.max() <= 1e-9


def test_zero_base_flow_spectrum_is_real_negative():
    geom = channel_geometry(10, 6, (-2.5, 2.5, -1.5, 1.5), (-0.5, 0.5, -0.5, 0.5))
    sys = generate_oseen(geom, 2.0, "zero")
    A = dense(sys.A11)
    np.testing.assert_allclose(A, A.T, atol=1e-14)
    lam = finite_poles(sys).finite_poles
    assert np.abs(lam.imag).max() <= 1e-10 and lam.real.max() < 0


def test_planted_open_and_closed_loop_trajectories():
    sys = generate_planted(60, 15, PLANT, seed=3)
    w = np.concatenate([np.logspace(-2, 2, 6), [0.5, 0.77, 1.0]])
    pts = np.concatenate([1j * w, -1j * w])
    e = np.zeros((pts.size, 2))
    e[:, 0] = 1
    data = InterpolationData(pts, np.ones((pts.size, 1)), e, conjugate_closed=True)
    res = solve_lqr(LqrProblem(reduce_index2(sys, data, "galerkin"), 10.0))
    x0 = consistent_initial_state(sys, np.random.default_rng(5).standard_normal(60))
    open_loop = simulate_closed_loop(sys, np.zeros((1, 60)), x0, 0.05, 100.0)
    closed = simulate_closed_loop(sys, res.K_full, x0, 0.05, 250.0)
    assert open_loop.state_norm[-1] > open_loop.state_norm[0]
    assert closed.state_norm[-1] <= 1e-3 * closed.state_norm[0]
    assert closed.constraint_residual.max() <= 1e-9
    np.testing.assert_allclose(closed.u, -closed.x1 @ res.K_full.T)


def test_simulation_rejects_input_in_constraint():
    sys = generate_random(20, 5, seed=5, b2=True)
    with pytest.raises(ConfigError):
        simulate_closed_loop(sys, np.zeros((1, 20)), np.zeros(20), 0.1, 1.0)

import numpy as np
import pytest

from daeimor.errors import ConfigError, GeometryError
from daeimor.linalg import dense
from daeimor.systems import validate_index2
from daeimor.testbed import (DEFAULT_PATCHES, GridGeometry, channel_geometry, generate_oseen,
                             generate_output_patches, generate_planted, generate_random)
from daeimor.transfer import finite_poles

PLANT = [complex(5.2480e-2, 7.6720e-1), complex(5.2480e-2, -7.6720e-1)]


def open_box(nx=8, ny=8):
    return GridGeometry(nx, ny, (0.0, 1.0, 0.0, 1.0), np.zeros((ny, nx), bool))


def test_open_box_unknown_counts():
    g = open_box()
    # interior faces: (nx-1) ny + nx (ny-1); pressures nx ny minus the pinned one
    assert g.n1 == 7 * 8 + 8 * 7 == 112
    assert g.n2 == 63
    sys = generate_oseen(g, 1.0, "zero", patches=[(0.0, 1.0, 0.0, 1.0)])
    assert (sys.n1, sys.n2) == (112, 63)
    assert not np.any(sys.B1)


def test_index_maps_are_bijections():
    g = channel_geometry()
    ids = np.concatenate([g.u_index[g.u_index >= 0], g.v_index[g.v_index >= 0]])
    np.testing.assert_array_equal(np.sort(ids), np.arange(g.n1))
    pids = g.p_index[g.p_index >= 0]
    np.testing.assert_array_equal(np.sort(pids), np.arange(g.n2))
    assert np.all(g.p_index[g.solid] < 0)


def test_default_channel_sizes_and_structure():
    sys = generate_oseen(channel_geometry(), 10.0)
    assert (sys.n1, sys.n2, sys.m, sys.p) == (528, 283, 1, 12)
    E = dense(sys.E11)
    np.testing.assert_array_equal(E, np.diag(np.diag(E)))
    assert np.all(np.diag(E) > 0)
    assert not np.any(sys.B2)
    assert validate_index2(sys).constraint_rank == sys.n2


def test_rotation_input_is_odd_about_centerline():
    g = channel_geometry()
    sys = generate_oseen(g, 10.0)
    b = sys.B1[:, 0]
    assert np.any(b)
    u = np.where(g.u_index >= 0, b[np.maximum(g.u_index, 0)], 0.0)
    v = np.where(g.v_index >= 0, b[np.maximum(g.v_index, 0)], 0.0)
    np.testing.assert_allclose(u, -u[::-1], atol=1e-15)
    np.testing.assert_allclose(v, v[::-1], atol=1e-15)


def test_vanishing_viscosity_is_rejected():
    with pytest.raises(ConfigError):
        generate_oseen(open_box(), 1e10, "zero")
    with pytest.raises(ConfigError):
        generate_oseen(open_box(), -1.0)


def test_obstacle_on_boundary_is_rejected():
    with pytest.raises(GeometryError):
        channel_geometry(8, 4, (0, 8, 0, 4), (0.0, 2.0, 1.0, 3.0))


def test_patch_average_of_constant_field():
    g = open_box(6, 5)
    C = generate_output_patches(g, [(0.0, 1.0, 0.0, 1.0)])
    x = np.zeros(g.n1)
    x[:g.n_u] = 1.0
    np.testing.assert_allclose(C @ x, [1.0, 0.0], atol=1e-15)


def test_six_patch_layout_gives_twelve_outputs():
    C = generate_output_patches(channel_geometry(), DEFAULT_PATCHES)
    assert C.shape[0] == 12
    support = [set(np.flatnonzero(row)) for row in C]
    for i in range(12):
        for j in range(i + 1, 12):
            assert not support[i] & support[j]


def test_empty_patch_is_rejected():
    with pytest.raises(GeometryError):
        generate_output_patches(channel_geometry(), [(0.01, 0.02, 0.01, 0.02)])
    with pytest.raises(GeometryError):
        generate_output_patches(channel_geometry(), [(5.0, 7.0, 0.0, 1.0)])


def test_plant_single_real_pole():
    sys = generate_planted(2, 1, [-1.0], p=1)
    np.testing.assert_allclose(finite_poles(sys).finite_poles, [-1.0], atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_plant_unstable_pair(seed):
    sys = generate_planted(80, 20, PLANT, seed=seed)
    rep = finite_poles(sys)
    assert rep.unstable_count == 2
    for z in PLANT:
        assert np.min(np.abs(rep.finite_poles - z)) <= 1e-10 * abs(z)


def test_plant_stable_set():
    sys = generate_planted(30, 6, [-0.5 + 1j, -0.5 - 1j, -2.0])
    assert finite_poles(sys).unstable_count == 0


def test_plant_infeasible():
    with pytest.raises(ConfigError):
        generate_planted(4, 3, PLANT)
    with pytest.raises(ConfigError):
        generate_planted(10, 2, [1j])


def test_random_systems_are_stable_and_valid():
    for seed in range(3):
        sys = generate_random(40, 10, seed=seed)
        validate_index2(sys)
        assert finite_poles(sys).unstable_count == 0
    with pytest.raises(ConfigError):
        generate_random(5, 5)


def test_generators_are_deterministic():
    a, b = generate_planted(30, 8, PLANT, seed=4), generate_planted(30, 8, PLANT, seed=4)
    np.testing.assert_array_equal(dense(a.A11), dense(b.A11))
    c = generate_planted(30, 8, PLANT, seed=5)
    assert not np.array_equal(dense(a.A11), dense(c.A11))

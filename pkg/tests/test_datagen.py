import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kkl_observer.datagen import HorizonTooShort, box, generate_s1, generate_s2, sample_box
from kkl_observer.nn import MlpParams, init_params
from kkl_observer.observer import build_observer
from kkl_observer.systems import make_system


@pytest.fixture(scope="module")
def duffing_s1():
    sys = make_system("duffing")
    obs = build_observer(2, 1)
    return sys, obs, generate_s1(sys, obs, 100, 100, 50.0, 0.1, 1e-4, box(1, 2), box(5e-4, 5), seed=0, k_star_fraction=0.1)


def test_sample_box_moments():
    pts = sample_box(100_000, *box(1.0, 2), seed=0)
    assert np.all(np.abs(pts.mean(axis=0)) < 0.02)
    assert pts.min() >= -1 and pts.max() <= 1


def test_degenerate_box():
    with pytest.raises(ValueError):
        sample_box(5, np.zeros(2), np.zeros(2), seed=0)


def test_counts(duffing_s1):
    _, obs, s1 = duffing_s1
    assert s1.tau == 500 and s1.k_star == 50
    assert s1.n_data == 100 * 451 == 45_100
    assert s1.n_pde == 100 * 500
    assert s1.z_data.shape == (45_100, obs.n_z)


def test_retained_samples_have_forgotten_z0(duffing_s1):
    _, obs, s1 = duffing_s1
    t = s1.time_index * s1.dt
    decayed = np.linalg.norm(np.exp(obs.eigenvalues[None, :] * t[:, None]) * s1.z0[s1.traj_index], axis=1)
    assert decayed.max() <= 1e-4


def test_pairs_are_index_aligned(duffing_s1):
    sys, obs, s1 = duffing_s1
    from kkl_observer.ode import integrate

    j, k = 17, 300
    row = j * 451 + (k - 50)
    assert s1.traj_index[row] == j and s1.time_index[row] == k
    traj = integrate(sys.dynamics, s1.x0[j], 50.0, 0.1)
    np.testing.assert_allclose(s1.x_data[row], traj.states[k], rtol=1e-12)


def test_truncation_from_formula_without_fraction():
    sys = make_system("duffing")
    obs = build_observer(2, 1)
    s1 = generate_s1(sys, obs, 4, 0, 50.0, 0.1, 1e-4, box(1, 2), box(1.0, 5), seed=1)
    assert s1.k_star * 0.1 >= s1.t_star_max
    assert s1.n_pde == 0


def test_horizon_too_short():
    sys = make_system("duffing")
    obs = build_observer(2, 1)
    with pytest.raises(HorizonTooShort):
        generate_s1(sys, obs, 2, 1, 5.0, 0.1, 1e-4, box(1, 2), box(1.0, 5), seed=0)


def test_determinism():
    sys = make_system("vanderpol")
    obs = build_observer(2, 1)
    a = generate_s1(sys, obs, 3, 2, 10.0, 0.1, 1e-4, box(1, 2), box(5e-4, 5), seed=4, k_star_fraction=0.1)
    b = generate_s1(sys, obs, 3, 2, 10.0, 0.1, 1e-4, box(1, 2), box(5e-4, 5), seed=4, k_star_fraction=0.1)
    np.testing.assert_array_equal(a.z_data, b.z_data)
    np.testing.assert_array_equal(a.x_pde, b.x_pde)


def test_s2_linear_inverse_pairs():
    sys = make_system("duffing")
    M = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, 0.0], [1.0, 1.0], [0.0, -1.0]])
    theta = MlpParams((2, 5), [M], [np.zeros(5)])
    s2 = generate_s2(theta, sys, 500, box(1, 2), seed=0)
    np.testing.assert_allclose(s2.z, s2.x @ M.T)
    x_back = np.linalg.lstsq(M, s2.z.T, rcond=None)[0].T
    np.testing.assert_allclose(x_back, s2.x, atol=1e-12)


def test_s2_coverage():
    sys = make_system("duffing")
    theta = init_params([2, 4, 5], seed=0)
    s2 = generate_s2(theta, sys, 10_000, box(1, 2), mode="iid_points", seed=3)
    cells = np.floor((s2.x + 1) / 0.2).clip(0, 9).astype(int)
    assert len({tuple(c) for c in cells}) >= 95


def test_s2_trajectory_mode_and_errors():
    sys = make_system("duffing")
    theta = init_params([2, 4, 5], seed=0)
    s2 = generate_s2(theta, sys, 1000, box(1, 2), mode="trajectories", seed=3)
    assert len(s2) == 1000
    assert len(generate_s2(theta, sys, 0, box(1, 2))) == 0
    with pytest.raises(ValueError):
        generate_s2(theta, sys, 10, box(1, 2), mode="grid")


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 4), st.integers(0, 1000))
def test_count_formula(p, q, seed):
    sys = make_system("duffing")
    obs = build_observer(2, 1)
    s1 = generate_s1(sys, obs, p, q, 10.0, 0.1, 1e-4, box(1, 2), box(5e-4, 5), seed=seed, k_star_fraction=0.1)
    assert s1.n_data == p * (s1.tau - s1.k_star + 1)
    assert s1.n_pde == q * s1.tau

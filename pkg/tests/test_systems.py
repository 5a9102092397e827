import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kkl_observer.ode import integrate
from kkl_observer.systems import (
    SYSTEM_NAMES,
    NoiseSpec,
    UnknownSystem,
    eval_dynamics,
    eval_output,
    eval_output_jacobian,
    make_system,
    measurement_noise,
    noisy_output,
    noisy_output_sequence,
    perturbed_dynamics,
)


def test_duffing_field():
    np.testing.assert_allclose(eval_dynamics(make_system("duffing"), [1.0, 1.0]), [1.0, -1.0])


def test_vanderpol_field():
    np.testing.assert_allclose(eval_dynamics(make_system("vanderpol"), [0.0, 1.0]), [1.0, 3.0])


def test_lorenz_origin_is_equilibrium():
    np.testing.assert_array_equal(eval_dynamics(make_system("lorenz"), np.zeros(3)), np.zeros(3))


def test_rossler_and_lorenz_by_hand():
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(eval_dynamics(make_system("rossler"), x), [-5.0, 1.4, 0.2 + 3.0 * (1.0 - 5.7)])
    np.testing.assert_allclose(eval_dynamics(make_system("lorenz"), x), [28.0, 1.0 * (10 - 3) - 2, 2 - 8.0])


def test_outputs():
    assert eval_output(make_system("duffing"), [3.0, -7.0])[0] == 3.0
    assert eval_output(make_system("lorenz"), [1.0, 2.0, 3.0])[0] == 2.0
    assert eval_output(make_system("rossler"), [0.0, -1.0, 5.0])[0] == -1.0


def test_output_jacobians():
    np.testing.assert_array_equal(eval_output_jacobian(make_system("duffing"), [5.0, 2.0]), [[1.0, 0.0]])
    np.testing.assert_array_equal(eval_output_jacobian(make_system("lorenz"), [5.0, 2.0, 1.0]), [[0.0, 1.0, 0.0]])
    for name in SYSTEM_NAMES:
        sys = make_system(name)
        J = eval_output_jacobian(sys, np.ones(sys.n_x))
        assert np.linalg.norm(J, 2) == pytest.approx(1.0)


@pytest.mark.parametrize("name", SYSTEM_NAMES)
def test_jacobian_matches_finite_differences(name):
    sys = make_system(name)
    x = np.random.default_rng(0).uniform(-1, 1, sys.n_x)
    h = 1e-6
    fd = np.column_stack(
        [(eval_output(sys, x + h * e) - eval_output(sys, x - h * e)) / (2 * h) for e in np.eye(sys.n_x)]
    )
    np.testing.assert_allclose(eval_output_jacobian(sys, x), fd, atol=1e-8)


def test_errors():
    with pytest.raises(UnknownSystem):
        make_system("pendulum")
    with pytest.raises(ValueError):
        eval_dynamics(make_system("duffing"), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        NoiseSpec((-1.0,), ())


@pytest.mark.parametrize("name", SYSTEM_NAMES)
def test_forward_completeness_proxy(name):
    sys = make_system(name)
    for x0 in np.random.default_rng(1).uniform(-1, 1, (5, sys.n_x)):
        traj = integrate(sys.dynamics, x0, 50.0, 0.1, substeps=sys.substeps)
        assert np.max(np.abs(traj.states)) < 100


def test_zero_noise_field_is_nominal():
    sys = make_system("rossler")
    field = perturbed_dynamics(sys, NoiseSpec.make(sys, 0.0, 0.0, seed=4))
    x = np.array([0.3, -0.2, 0.1])
    field.set_step(3)
    np.testing.assert_array_equal(field(x), eval_dynamics(sys, x))
    np.testing.assert_array_equal(noisy_output(sys, x, NoiseSpec(), 7), eval_output(sys, x))


def test_process_noise_statistics():
    sys = make_system("duffing")
    field = perturbed_dynamics(sys, NoiseSpec.make(sys, 0.3, 0.0, seed=11))
    draws = []
    for k in range(50_000):
        field.set_step(k)
        draws.append(field.w)
    draws = np.array(draws).ravel()
    assert abs(draws.std() / 0.3 - 1) < 0.02


def test_measurement_noise_statistics():
    sys = make_system("duffing")
    noise = NoiseSpec.make(sys, 0.0, 0.1, seed=5)
    v = np.array([measurement_noise(sys, noise, k)[0] for k in range(100_000)])
    assert abs(v.std() / 0.1 - 1) < 0.02


def test_noise_is_reproducible_and_step_indexed():
    sys = make_system("lorenz")
    noise = NoiseSpec.make(sys, 0.0, 2.0, seed=9)
    states = np.zeros((20, 3))
    a = noisy_output_sequence(sys, states, noise)
    b = noisy_output_sequence(sys, states, noise)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[7], noisy_output(sys, states[7], noise, 7))
    other = noisy_output_sequence(sys, states, NoiseSpec.make(sys, 0.0, 2.0, seed=10))
    assert not np.array_equal(a, other)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SYSTEM_NAMES), st.integers(0, 2**31 - 1))
def test_fields_finite_on_box(name, seed):
    sys = make_system(name)
    x = np.random.default_rng(seed).uniform(-3, 3, (16, sys.n_x))
    assert np.all(np.isfinite(sys.dynamics(x)))
    # batched rows agree with single evaluations
    np.testing.assert_allclose(sys.dynamics(x)[4], eval_dynamics(sys, x[4]))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kkl_observer.nn import (
    MlpParams,
    backward,
    flatten_grads,
    forward,
    forward_tangent,
    init_params,
    input_jacobian,
    lipschitz_upper_bound,
    loss_gradient,
    spectral_norm,
)


def hand_net():
    # 1 -> 2 -> 1
    return MlpParams((1, 2, 1), [np.array([[0.5], [-1.5]]), np.array([[2.0, 0.25]])], [np.array([0.1, 0.2]), np.array([-0.3])])


def test_hand_evaluation():
    x = 0.7
    expected = 2.0 * math.tanh(0.5 * x + 0.1) + 0.25 * math.tanh(-1.5 * x + 0.2) - 0.3
    assert forward(hand_net(), [x])[0] == pytest.approx(expected, abs=1e-12)


def test_single_and_batch_agree():
    p = init_params([3, 8, 2], seed=1)
    x = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_allclose(forward(p, x)[2], forward(p, x[2]), rtol=1e-15)


def test_dimension_error():
    with pytest.raises(ValueError):
        forward(init_params([3, 4, 2], 0), np.ones(2))
    with pytest.raises(ValueError):
        init_params([3], 0)


def fd_jacobian(p, x, h=1e-5):
    return np.column_stack([(forward(p, x + h * e) - forward(p, x - h * e)) / (2 * h) for e in np.eye(len(x))])


def test_input_jacobian_matches_fd():
    p = init_params([2, 16, 16, 5], seed=4)
    x = np.array([0.3, -0.8])
    assert np.max(np.abs(input_jacobian(p, x) - fd_jacobian(p, x))) < 1e-6


def test_tangent_is_jacobian_times_direction():
    p = init_params([3, 10, 4], seed=2)
    rng = np.random.default_rng(1)
    x, v = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    _, tan, _ = forward_tangent(p, x, v)
    J = input_jacobian(p, x)
    np.testing.assert_allclose(tan, np.einsum("nij,nj->ni", J, v), atol=1e-13)


def test_primal_only_pass():
    p = init_params([3, 10, 4], seed=2)
    out, tan, _ = forward_tangent(p, np.ones((2, 3)), None)
    assert tan is None
    np.testing.assert_allclose(out, forward(p, np.ones((2, 3))))


def test_linear_layer_gradient_closed_form():
    rng = np.random.default_rng(5)
    X, Y = rng.normal(size=(20, 3)), rng.normal(size=(20, 2))
    p = MlpParams((3, 2), [rng.normal(size=(2, 3))], [rng.normal(size=2)])
    out, _, cache = forward_tangent(p, X, None)
    gW, gb = backward(p, cache, 2.0 * (out - Y) / 20)
    R = X @ p.weights[0].T + p.biases[0] - Y
    np.testing.assert_allclose(gW, 2.0 / 20 * R.T @ X, atol=1e-10)
    np.testing.assert_allclose(gb, 2.0 / 20 * R.sum(axis=0), atol=1e-10)


def mixed_loss(target_out, target_tan, lam):
    def loss(out, tan):
        r = tan - lam * out - target_tan
        d = out - target_out
        n = len(out)
        value = (np.sum(d * d) + np.sum(r * r)) / n
        g_tan = 2 * r / n
        return value, 2 * d / n - lam * g_tan, g_tan

    return loss


def check_full_gradient(p, seed, h=1e-6):
    rng = np.random.default_rng(seed)
    n_in, n_out = p.n_in, p.n_out
    x, v = rng.normal(size=(7, n_in)), rng.normal(size=(7, n_in))
    loss = mixed_loss(rng.normal(size=(7, n_out)), rng.normal(size=(7, n_out)), rng.uniform(-2, -0.5, n_out))
    _, grad = loss_gradient(p, x, v, loss)
    theta = p.flat()
    fd = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        fp, _ = loss_gradient(p.with_flat(theta + e), x, v, loss)
        fm, _ = loss_gradient(p.with_flat(theta - e), x, v, loss)
        fd[i] = (fp - fm) / (2 * h)
    return np.max(np.abs(grad - fd)) / max(1.0, np.max(np.abs(fd)))


def test_full_loss_gradient_matches_fd():
    assert check_full_gradient(init_params([2, 6, 5, 5], seed=7), seed=8) < 1e-4


def test_gradient_with_saturated_units():
    p = init_params([2, 6, 5], seed=3)
    p.weights[0] *= 40.0  # drive tanh deep into saturation
    assert check_full_gradient(p, seed=9, h=1e-8) < 1e-4


def test_loss_gradient_rejects_nonfinite():
    p = init_params([2, 3, 1], seed=0)
    with pytest.raises(FloatingPointError):
        loss_gradient(p, np.ones((1, 2)), None, lambda out, tan: (np.nan, out, None))


def test_glorot_variance():
    p = init_params([350, 350, 1], seed=0)
    W = p.weights[0]
    limit = math.sqrt(6 / 700)
    assert abs(W.var() / (limit**2 / 3) - 1) < 0.1
    assert not np.any(p.biases[0])


def test_flat_roundtrip_and_checksum():
    p = init_params([3, 7, 2], seed=5)
    q = MlpParams.from_dict(p.to_dict())
    np.testing.assert_array_equal(p.flat(), q.flat())
    assert p.checksum() == q.checksum()
    assert p.with_flat(p.flat() + 1e-12).checksum() != p.checksum()


def test_spectral_norm_matches_svd():
    W = np.random.default_rng(2).normal(size=(40, 30))
    assert spectral_norm(W) == pytest.approx(np.linalg.norm(W, 2), rel=1e-6)
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_lipschitz_bound_dominates_difference_quotients():
    p = init_params([5, 32, 32, 2], seed=6)
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(10_000, 5)), rng.normal(size=(10_000, 5)) * 0.1
    q = np.linalg.norm(forward(p, a) - forward(p, a + b), axis=1) / np.linalg.norm(b, axis=1)
    assert lipschitz_upper_bound(p) >= q.max()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(2, 12))
def test_jacobian_property(seed, depth, width):
    p = init_params([3] + [width] * depth + [4], seed=seed)
    x = np.random.default_rng(seed).uniform(-1, 1, 3)
    np.testing.assert_allclose(input_jacobian(p, x), fd_jacobian(p, x), atol=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_backward_is_linear_in_upstream(seed):
    p = init_params([2, 5, 3], seed=seed)
    rng = np.random.default_rng(seed)
    x, v = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    _, _, cache = forward_tangent(p, x, v)
    g1, t1, g2, t2 = (rng.normal(size=(4, 3)) for _ in range(4))
    a = flatten_grads(backward(p, cache, g1, t1)) + flatten_grads(backward(p, cache, g2, t2))
    b = flatten_grads(backward(p, cache, g1 + g2, t1 + t2))
    np.testing.assert_allclose(a, b, atol=1e-12)

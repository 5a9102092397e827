import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from kkl_observer.observer import (
    ObserverMatrices,
    build_observer,
    controllability_rank,
    exp_envelope,
    expm_norm,
    input_gain_bound,
    observer_dimension,
    truncation_index,
    truncation_time,
)


def test_dimensions():
    assert observer_dimension(2, 1) == 5
    assert observer_dimension(3, 1) == 7


def test_eigenvalues_three_states():
    obs = build_observer(3, 1)
    np.testing.assert_allclose(obs.eigenvalues, [-2, -1.75, -1.5, -1.25, -1, -0.75, -0.5])
    assert obs.lambda_min == -0.5
    assert obs.cond_V == 1.0


def test_b_is_ones():
    obs = build_observer(2, 1)
    np.testing.assert_array_equal(obs.B, np.ones((5, 1)))
    assert obs.norm_B == pytest.approx(math.sqrt(5))
    assert controllability_rank(obs) == 5


def test_invalid_observer():
    with pytest.raises(ValueError):
        build_observer(2, 1, -2.0, 0.5)
    with pytest.raises(ValueError):
        ObserverMatrices(np.array([-1.0, -1.0]), np.ones((2, 1)))


def test_truncation_time_example():
    assert truncation_time(1e-4, 1.0, 1.0, -1.0) == pytest.approx(9.21034, abs=1e-5)
    assert truncation_time(1e-4, 1e-5, 1.0, -1.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-5.0, -0.05))
def test_truncation_time_doubling(z0, lam):
    t1 = truncation_time(1e-8, z0, 1.0, lam)
    t2 = truncation_time(1e-8, 2 * z0, 1.0, lam)
    assert t2 - t1 == pytest.approx(math.log(2) / abs(lam), rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e-1), st.floats(1e-3, 10.0), st.floats(-3.0, -0.1))
def test_truncation_guarantee(eps, z0, lam):
    t = truncation_time(eps, z0, 1.0, lam)
    assert z0 * math.exp(lam * t) <= eps * (1 + 1e-9) or t == 0.0


def test_truncation_index_examples():
    assert truncation_index(9.21, 0.1) == 93
    assert truncation_index(0.3, 0.1) == 3
    assert truncation_index(0.0, 0.1) == 0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 100.0), st.sampled_from([0.1, 0.05, 0.01, 0.2]))
def test_truncation_index_is_smallest(t_star, dt):
    k = truncation_index(t_star, dt)
    assert k * dt >= t_star - 1e-12
    assert k == 0 or (k - 1) * dt < t_star


def test_exp_norm_oracle():
    obs = ObserverMatrices(np.array([-1.0, -2.0]), np.ones((2, 1)))
    assert expm_norm(obs, 1.0) == pytest.approx(math.exp(-1.0))
    assert np.linalg.norm(expm(obs.A), 2) == pytest.approx(math.exp(-1.0))
    assert exp_envelope(obs, 1.0) == pytest.approx(math.exp(-1.0))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 20.0))
def test_envelope_dominates(t):
    obs = build_observer(2, 1)
    assert expm_norm(obs, t) <= exp_envelope(obs, t) + 1e-15
    assert input_gain_bound(obs, t) >= 0

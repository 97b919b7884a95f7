import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rebmbo import kernels
from rebmbo.errors import NumericalError, ParameterError


def random_params(rng, dim):
    return kernels.KernelParams(
        amplitude=float(rng.uniform(0.5, 2.0)),
        rbf_lengthscales=tuple(rng.uniform(0.1, 1.0, size=dim)),
        matern_lengthscale=float(rng.uniform(0.1, 1.0)),
        w_rbf=float(rng.uniform(0.1, 1.0)),
        w_matern=float(rng.uniform(0.1, 1.0)),
    )


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 5), n=st.integers(2, 30))
def test_gram_is_symmetric_psd(seed, dim, n):
    rng = np.random.default_rng(seed)
    params = random_params(rng, dim)
    X = rng.uniform(size=(n, dim))
    K = kernels.gram(X, params)
    assert np.array_equal(K, K.T)
    assert np.min(np.linalg.eigvalsh(K)) >= -1e-8 * params.prior_variance


def test_matrix_agrees_with_scalar():
    rng = np.random.default_rng(1)
    params = random_params(rng, 3)
    X = rng.uniform(size=(6, 3))
    Y = rng.uniform(size=(4, 3))
    K = kernels.cross_covariance(X, Y, params)
    for i in range(6):
        for j in range(4):
            assert K[i, j] == pytest.approx(kernels.mixture(X[i], Y[j], params), rel=1e-12, abs=1e-14)


def test_diagonal_is_prior_variance():
    params = kernels.KernelParams(2.0, (0.3, 0.4), 0.5, 0.25, 0.5)
    X = np.random.default_rng(0).uniform(size=(5, 2))
    assert np.all(np.diag(kernels.gram(X, params)) == 1.5)
    assert kernels.mixture(X[0], X[0], params) == pytest.approx(1.5)


def test_known_values():
    x, x2 = np.zeros(2), np.array([0.3, 0.4])
    assert kernels.rbf(x, x2, [0.5, 0.5]) == pytest.approx(math.exp(-0.5), rel=1e-12)
    s = math.sqrt(5.0) * 0.5 / 0.25
    assert kernels.matern52(x, x2, 0.25) == pytest.approx((1 + s + s * s / 3) * math.exp(-s), rel=1e-12)
    assert kernels.matern52(x, x, 0.25) == 1.0
    assert kernels.rbf(x, x, [1.0, 1.0]) == 1.0


def test_single_kind_weights():
    rbf_only = kernels.KernelParams.default(2, "rbf")
    matern_only = kernels.KernelParams.default(2, "matern")
    x, x2 = np.zeros(2), np.full(2, 0.1)
    assert kernels.mixture(x, x2, rbf_only) == pytest.approx(kernels.rbf(x, x2, [0.2, 0.2]))
    assert kernels.mixture(x, x2, matern_only) == pytest.approx(kernels.matern52(x, x2, 0.2))


def test_stationarity():
    rng = np.random.default_rng(2)
    params = random_params(rng, 3)
    x, x2, shift = rng.uniform(size=(3, 3))
    assert kernels.mixture(x, x2, params) == pytest.approx(kernels.mixture(x + shift, x2 + shift, params), rel=1e-10)


def test_log_vector_round_trip():
    params = kernels.KernelParams(1.3, (0.2, 0.7), 0.4, 0.6, 0.9)
    back = params.from_log_vector(params.to_log_vector())
    assert back.amplitude == pytest.approx(params.amplitude)
    assert back.rbf_lengthscales == pytest.approx(params.rbf_lengthscales)
    assert back.w_matern == pytest.approx(params.w_matern)

    rbf_only = kernels.KernelParams.default(2, "rbf")
    assert rbf_only.to_log_vector().shape == (5,)
    assert rbf_only.from_log_vector(rbf_only.to_log_vector()).w_matern == 0.0


def test_parameter_errors():
    with pytest.raises(ParameterError):
        kernels.KernelParams(0.0, (1.0,), 1.0, 0.5, 0.5)
    with pytest.raises(ParameterError):
        kernels.KernelParams(1.0, (1.0, -1.0), 1.0, 0.5, 0.5)
    with pytest.raises(ParameterError):
        kernels.KernelParams(1.0, (1.0,), 0.0, 0.5, 0.5)
    with pytest.raises(ParameterError):
        kernels.KernelParams(1.0, (1.0,), 1.0, 0.0, 0.0)
    with pytest.raises(ParameterError):
        kernels.KernelParams.default(2, "periodic")
    with pytest.raises(ParameterError):
        kernels.rbf(np.zeros(2), np.zeros(3), [1.0, 1.0])
    with pytest.raises(ParameterError):
        kernels.matern52(np.zeros(2), np.zeros(2), -0.1)


def test_cholesky_without_jitter_escalation():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    L, jitter = kernels.cholesky_with_jitter(A)
    assert jitter == kernels.DEFAULT_JITTER
    np.testing.assert_allclose(L @ L.T, A + jitter * np.eye(2), rtol=1e-12)


def test_cholesky_jitter_escalates():
    A = np.diag([1.0, -5e-6])
    L, jitter = kernels.cholesky_with_jitter(A)
    assert jitter == pytest.approx(1e-5)
    assert np.all(np.isfinite(L))


def test_cholesky_gives_up_with_diagnostics():
    with pytest.raises(NumericalError) as info:
        kernels.cholesky_with_jitter(np.diag([1.0, -1.0]))
    assert info.value.diagnostics["n"] == 2
    assert "condition_number" in info.value.diagnostics


@pytest.mark.parametrize("kind", ["mixture", "rbf", "matern"])
def test_covariance_decreases_with_distance(kind):
    rng = np.random.default_rng(3)
    params = kernels.KernelParams.default(3, kind)
    x = rng.uniform(size=3)
    for _ in range(10):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        values = [kernels.mixture(x, x + r * direction, params) for r in np.linspace(0.0, 1.0, 50)]
        assert np.all(np.diff(values) <= 0.0)
        assert values[-1] < values[0]

from unittest import mock

import numpy as np
import pytest
from scipy.stats import norm

from rebmbo import kernels, net
from rebmbo.errors import InputError, ParameterError, UnsupportedVariantError
from rebmbo.gp import (
    Dataset,
    bayesian_linear_head,
    fit_deep,
    fit_exact,
    fit_sparse,
    initial_params,
    log_marginal_likelihood,
    optimize_hyperparams,
    posterior_cdf,
    posterior_cov,
    predict,
    predict_deep,
    predict_many,
    predict_sparse,
    prob_duel,
    probability_of_improvement,
    select_inducing_points,
    standardize,
)
from rebmbo.gp.models import to_unit


BOX = np.array([[-2.0, 3.0], [0.0, 4.0]])


def smooth(X):
    U = to_unit(X, BOX)
    return np.sin(3.0 * U[:, 0]) + np.cos(2.0 * U[:, 1]) + 0.5 * U[:, 0] * U[:, 1]


def make_dataset(n, seed=0, box=BOX, target=smooth):
    rng = np.random.default_rng(seed)
    X = rng.uniform(box[:, 0], box[:, 1], size=(n, box.shape[0]))
    return Dataset(X, target(X), box)


def params_2d():
    return kernels.KernelParams(1.0, (0.3, 0.4), 0.35, 0.6, 0.4)


def test_exact_matches_direct_solve():
    """Posterior moments agree with a dense linear-algebra oracle."""
    data = make_dataset(15)
    params = params_2d()
    noise = 1e-2
    model = fit_exact(data, params, noise=noise)

    X_test = make_dataset(7, seed=1).X
    U, U_test = to_unit(data.X, BOX), to_unit(X_test, BOX)
    y_s, y_mean, y_std = standardize(data.y)
    K = kernels.cross_covariance(U, U, params) + (noise + model.jitter) * np.eye(data.n)
    Ks = kernels.cross_covariance(U_test, U, params)
    mean = y_mean + y_std * Ks @ np.linalg.solve(K, y_s)
    var = y_std ** 2 * (params.prior_variance - np.sum(Ks * np.linalg.solve(K, Ks.T).T, axis=1))

    got_mean, got_var = predict_many(model, X_test)
    np.testing.assert_allclose(got_mean, mean, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(got_var, var, rtol=1e-6, atol=1e-10)


def test_exact_interpolates_with_small_noise():
    data = make_dataset(12)
    model = fit_exact(data, params_2d(), noise=1e-6)
    mean, var = predict_many(model, data.X)
    np.testing.assert_allclose(mean, data.y, atol=1e-2 * np.std(data.y))
    assert np.all(var < 1e-2 * model.prior_variance())
    assert np.all(var >= 0.0)


def test_variance_never_exceeds_prior():
    data = make_dataset(20)
    model = fit_exact(data, params_2d(), noise=1e-4)
    _, var = predict_many(model, make_dataset(50, seed=4).X)
    assert np.all(var <= model.prior_variance() * (1 + 1e-10))


def test_empty_dataset_returns_prior():
    model = fit_exact(Dataset.empty(BOX), params_2d())
    mean, var = predict(model, [0.0, 1.0])
    assert mean == 0.0
    assert var == pytest.approx(params_2d().prior_variance)


def test_predict_rejects_wrong_dimension():
    model = fit_exact(make_dataset(5), params_2d())
    with pytest.raises(InputError):
        predict(model, [0.0, 1.0, 2.0])
    with pytest.raises(InputError):
        fit_exact(make_dataset(5), kernels.KernelParams.default(3))


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(np.zeros((3, 2)), np.zeros(2), BOX)
    with pytest.raises(InputError):
        Dataset(np.zeros((1, 2)), [np.inf], BOX)
    grown = Dataset.empty(BOX).append([0.0, 1.0], 2.0)
    assert grown.n == 1 and grown.y[0] == 2.0


def test_sparse_with_all_inputs_as_inducing_is_exact():
    """With Z = X the inducing-point posterior equals the exact one at every test point."""
    data = make_dataset(20, seed=2)
    params = kernels.KernelParams(1.0, (0.3, 0.3), 0.3, 0.5, 0.5)
    exact = fit_exact(data, params, noise=1e-3, jitter=1e-12)
    sparse = fit_sparse(data, data.n, params, noise=1e-3, inducing=data.X, jitter=1e-12)

    X_test = make_dataset(100, seed=3).X
    mean_e, var_e = predict_many(exact, X_test)
    mean_s, var_s = predict_many(sparse, X_test)
    np.testing.assert_allclose(mean_s, mean_e, rtol=0, atol=1e-5)
    np.testing.assert_allclose(var_s, var_e, rtol=0, atol=1e-5)


def test_sparse_with_fewer_inducing_points():
    data = make_dataset(60, seed=5)
    model = fit_sparse(data, 20, params_2d(), noise=1e-3, seed=0)
    assert model.sparse.m == 20
    X_test = make_dataset(30, seed=6).X
    mean, var = predict_many(model, X_test)
    assert np.all(np.isfinite(mean)) and np.all(var >= 0.0)
    rmse = np.sqrt(np.mean((mean - smooth(X_test)) ** 2))
    assert rmse < 0.3 * np.std(data.y)
    m1, v1 = predict_sparse(model, X_test[0])
    assert m1 == pytest.approx(mean[0]) and v1 == pytest.approx(var[0])


def test_inducing_selection_is_deterministic():
    U = np.random.default_rng(0).uniform(size=(40, 2))
    np.testing.assert_array_equal(select_inducing_points(U, 8, seed=3), select_inducing_points(U, 8, seed=3))
    np.testing.assert_array_equal(select_inducing_points(U, 40), U)


def test_sparse_rejects_bad_inducing_count():
    data = make_dataset(10)
    with pytest.raises(ParameterError):
        fit_sparse(data, 11, params_2d())
    with pytest.raises(ParameterError):
        fit_sparse(data, 0, params_2d())


def identity_features(dim):
    return net.MlpParams([net.Layer(np.eye(dim), np.zeros(dim), "identity")])


def test_deep_with_identity_features_is_ridge_regression():
    """With a frozen identity feature map the head reduces to Bayesian ridge regression."""
    data = make_dataset(25)
    beta, prior_precision = 50.0, 2.0
    model = fit_deep(
        data,
        feature_dim=2,
        params=params_2d(),
        beta=beta,
        epochs=1,
        learning_rate=0.0,
        prior_precision=prior_precision,
        feature_net=identity_features(2),
    )
    U = to_unit(data.X, BOX)
    y_s, y_mean, y_std = standardize(data.y)
    A = U.T @ U + (prior_precision / beta) * np.eye(2)
    weights = np.linalg.solve(A, U.T @ y_s)
    np.testing.assert_allclose(model.deep.weights_mean, weights, rtol=1e-8)

    x = np.array([0.5, 2.0])
    u = to_unit(x, BOX)
    cov = np.linalg.inv(beta * U.T @ U + prior_precision * np.eye(2))
    mean, var = predict_deep(model, x)
    assert mean == pytest.approx(y_mean + y_std * u @ weights, rel=1e-8)
    assert var == pytest.approx(y_std ** 2 * (u @ cov @ u + 1.0 / beta), rel=1e-8)
    assert model.noise == pytest.approx(1.0 / beta)


def test_deep_training_lowers_the_loss():
    data = make_dataset(30)
    model = fit_deep(data, feature_dim=6, params=params_2d(), epochs=150, learning_rate=1e-2, seed=1)
    history = model.deep.loss_history
    assert len(history) == 150
    assert history[-1] < history[0]
    mean, var = predict_many(model, data.X)
    assert np.all(np.isfinite(mean)) and np.all(var > 0.0)


def test_deep_parameter_errors():
    data = make_dataset(5)
    with pytest.raises(ParameterError):
        fit_deep(data, feature_dim=4, params=params_2d(), epochs=0)
    with pytest.raises(ParameterError):
        fit_deep(data, feature_dim=0, params=params_2d())
    with pytest.raises(InputError):
        fit_deep(data, feature_dim=3, params=params_2d(), feature_net=identity_features(2))
    with pytest.raises(InputError):
        predict_deep(fit_exact(data, params_2d()), [0.0, 1.0])


def test_linear_head_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    Phi = rng.normal(size=(9, 3))
    y = rng.normal(size=9)
    _, _, _, grad = bayesian_linear_head(Phi, y, beta=4.0, prior_precision=1.5)
    h = 1e-6
    for i, j in [(0, 0), (3, 1), (8, 2), (5, 0)]:
        up, down = Phi.copy(), Phi.copy()
        up[i, j] += h
        down[i, j] -= h
        numeric = (
            bayesian_linear_head(up, y, 4.0, 1.5)[2] - bayesian_linear_head(down, y, 4.0, 1.5)[2]
        ) / (2 * h)
        assert grad[i, j] == pytest.approx(numeric, rel=1e-4, abs=1e-6)


def test_hyperparams_never_decrease_likelihood():
    data = make_dataset(20)
    init = initial_params(2)
    result = optimize_hyperparams(data, init, noise=1e-4, budget=80, seed=0)
    assert not result.fallback
    assert result.log_likelihood >= log_marginal_likelihood(data, init, 1e-4) - 1e-9
    assert result.log_likelihood == pytest.approx(log_marginal_likelihood(data, result.params, 1e-4))


def test_hyperparam_budget_of_one_returns_init():
    data = make_dataset(10)
    init = initial_params(2)
    result = optimize_hyperparams(data, init, budget=1)
    assert result.params == init
    with pytest.raises(ParameterError):
        optimize_hyperparams(data, init, budget=0)


@pytest.mark.parametrize("budget, n_starts", [(2, 4), (25, 4), (60, 3)])
def test_hyperparam_search_stays_within_budget(budget, n_starts):
    data = make_dataset(12)
    counted = mock.Mock(side_effect=log_marginal_likelihood)
    with mock.patch("rebmbo.gp.hyperparams.log_marginal_likelihood", counted):
        result = optimize_hyperparams(data, initial_params(2), noise=1e-4, budget=budget, n_starts=n_starts)
    assert counted.call_count <= budget
    assert result.evaluations == counted.call_count


def test_hyperparams_recover_lengthscale():
    """Data drawn from a GP with lengthscale 0.2 pulls a start at 1.0 towards 0.2."""
    box = np.array([[0.0, 1.0]])
    rng = np.random.default_rng(11)
    X = np.sort(rng.uniform(size=(40, 1)), axis=0)
    truth = kernels.KernelParams.default(1, "rbf")
    K = kernels.gram(X, truth) + 1e-8 * np.eye(40)
    y = np.linalg.cholesky(K) @ rng.normal(size=40)
    data = Dataset(X, y, box)

    init = kernels.KernelParams(1.0, (1.0,), 1.0, 1.0, 0.0)
    result = optimize_hyperparams(data, init, noise=1e-4, budget=800, seed=0)
    assert result.params.w_matern == 0.0
    assert 0.1 <= result.params.rbf_lengthscales[0] <= 0.4


def test_posterior_cdf_matches_normal():
    data = make_dataset(10)
    model = fit_exact(data, params_2d(), noise=1e-3)
    x = np.array([1.0, 1.0])
    mean, var = predict(model, x)
    z = mean + 0.3
    assert posterior_cdf(model, x, z) == pytest.approx(norm.cdf(0.3 / np.sqrt(var)))
    assert probability_of_improvement(model, x, z) == pytest.approx(1.0 - norm.cdf(0.3 / np.sqrt(var)))


def test_posterior_cdf_with_zero_variance_is_a_step():
    model = fit_exact(make_dataset(5), params_2d())
    with mock.patch("rebmbo.gp.stats.predict", return_value=(1.5, 0.0)):
        assert posterior_cdf(model, [0.0, 1.0], 1.5) == 1.0
        assert posterior_cdf(model, [0.0, 1.0], 1.6) == 1.0
        assert posterior_cdf(model, [0.0, 1.0], 1.4) == 0.0
        assert probability_of_improvement(model, [0.0, 1.0], 1.4) == 1.0


def test_prob_duel():
    data = make_dataset(12)
    model = fit_exact(data, params_2d(), noise=1e-3)
    x, x2 = np.array([0.0, 1.0]), np.array([2.0, 3.0])
    forward, backward = prob_duel(model, x, x2), prob_duel(model, x2, x)
    assert not forward.degenerate
    assert forward.probability + backward.probability == pytest.approx(1.0)

    same = prob_duel(model, x, x)
    assert same.degenerate and same.probability == 0.5

    with pytest.raises(UnsupportedVariantError):
        prob_duel(fit_sparse(data, 5, params_2d()), x, x2)


def test_exact_oracle_over_random_datasets():
    rng = np.random.default_rng(21)
    for _ in range(50):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(1, 21))
        box = np.column_stack([np.zeros(d), np.ones(d)])
        X = rng.uniform(size=(n, d))
        data = Dataset(X, rng.normal(size=n), box)
        params = kernels.KernelParams(
            1.0, tuple(rng.uniform(0.3, 1.0, size=d)), float(rng.uniform(0.3, 1.0)), 0.5, 0.5
        )
        model = fit_exact(data, params, noise=1e-2)
        X_test = rng.uniform(size=(3, d))
        y_s, y_mean, y_std = standardize(data.y)
        K = kernels.cross_covariance(X, X, params) + (1e-2 + model.jitter) * np.eye(n)
        Ks = kernels.cross_covariance(X_test, X, params)
        K_inv = np.linalg.inv(K)
        mean = y_mean + y_std * Ks @ K_inv @ y_s
        var = y_std ** 2 * (params.prior_variance - np.einsum("ij,jk,ik->i", Ks, K_inv, Ks))
        got_mean, got_var = predict_many(model, X_test)
        np.testing.assert_allclose(got_mean, mean, atol=1e-8)
        np.testing.assert_allclose(got_var, var, atol=1e-8)


def test_single_inducing_point_loses_information():
    data = make_dataset(15, seed=8)
    exact = fit_exact(data, params_2d(), noise=1e-3)
    sparse = fit_sparse(data, 1, params_2d(), noise=1e-3, seed=0)
    X_test = make_dataset(20, seed=9).X
    _, var_e = predict_many(exact, X_test)
    _, var_s = predict_many(sparse, X_test)
    assert np.all(var_s >= 0.0)
    assert np.mean(var_s) > np.mean(var_e)


def test_prob_duel_matches_monte_carlo():
    data = make_dataset(10, seed=12)
    model = fit_exact(data, params_2d(), noise=1e-3)
    x, x2 = np.array([0.2, 1.5]), np.array([1.5, 2.5])
    mean = np.array([predict(model, x)[0], predict(model, x2)[0]])
    cov = np.array(
        [
            [predict(model, x)[1], posterior_cov(model, x, x2)],
            [posterior_cov(model, x, x2), predict(model, x2)[1]],
        ]
    )
    draws = np.random.default_rng(0).multivariate_normal(mean, cov, size=1_000_000)
    estimate = np.mean(draws[:, 0] > draws[:, 1])
    assert prob_duel(model, x, x2).probability == pytest.approx(estimate, abs=0.002)

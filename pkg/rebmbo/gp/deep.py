"""
Deep-feature GP: a small MLP maps unit-box inputs to features phi(x), and a
Bayesian linear regression head on those features gives GP-like statistics

    mu(x) = m^T phi(x)
    sigma^2(x) = phi(x)^T K^-1 phi(x) + 1 / beta,   K = beta Phi^T Phi + a I

The feature network is trained by gradient ascent on the head's log evidence.
"""
import logging
import math
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from rebmbo import net
from rebmbo.errors import InputError, NumericalError, ParameterError
from rebmbo.gp.exact import predict
from rebmbo.gp.models import Dataset, DeepFeatureState, GpModel, standardize, to_unit
from rebmbo.kernels import KernelParams, cholesky_with_jitter


logger = logging.getLogger(__name__)

DEFAULT_BETA = 100.0
DEFAULT_PRIOR_PRECISION = 1.0
DEFAULT_HIDDEN = 32
DEFAULT_LEARNING_RATE = 1e-3


def bayesian_linear_head(Phi: np.ndarray, y: np.ndarray, beta: float, prior_precision: float):
    """
    Closed-form posterior of the linear weights on fixed features.

    :param Phi: n x D feature matrix
    :param y: n standardized targets
    :return: (weights mean m, lower Cholesky factor of K, log evidence, d(log evidence)/dPhi)
    """
    n, D = Phi.shape
    K = beta * Phi.T @ Phi + prior_precision * np.eye(D)
    L, _ = cholesky_with_jitter(K)
    m = beta * cho_solve((L, True), Phi.T @ y)
    resid = y - Phi @ m
    log_evidence = (
        0.5 * D * math.log(prior_precision)
        + 0.5 * n * math.log(beta)
        - 0.5 * beta * float(resid @ resid)
        - 0.5 * prior_precision * float(m @ m)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    K_inv = cho_solve((L, True), np.eye(D))
    # m is the stationary point of the evidence, so only the explicit dependence on Phi remains.
    grad_phi = beta * np.outer(resid, m) - beta * Phi @ K_inv
    return m, L, log_evidence, grad_phi


def _default_feature_net(dim: int, feature_dim: int, hidden: int, seed) -> net.MlpParams:
    return net.init_params([dim, hidden, feature_dim], activation="tanh", seed=seed, output_activation="tanh")


def fit_deep(
    dataset: Dataset,
    feature_dim: int,
    params: KernelParams,
    beta: float = DEFAULT_BETA,
    epochs: int = 100,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    prior_precision: float = DEFAULT_PRIOR_PRECISION,
    hidden: int = DEFAULT_HIDDEN,
    seed=0,
    feature_net: Optional[net.MlpParams] = None,
) -> GpModel:
    """
    Trains the feature network with full-batch Adam on the negative mean log evidence.

    :param feature_dim: width D of the learned feature space
    :param params: kernel parameters kept on the model for reporting
    :param beta: observation precision of the head (on the standardized scale)
    :param feature_net: optional starting network (e.g. an identity map); copied, never mutated
    """
    if feature_dim < 1:
        raise ParameterError(f"Feature dimension must be >= 1, got {feature_dim}.")
    if epochs < 1:
        raise ParameterError(f"fit_deep needs at least one epoch, got {epochs}.")
    if not beta > 0 or not prior_precision > 0:
        raise ParameterError("beta and prior_precision must be positive.")
    X_unit = dataset.to_unit(dataset.X)
    y_s, y_mean, y_std = standardize(dataset.y)

    features = feature_net.copy() if feature_net is not None else _default_feature_net(
        dataset.dim, feature_dim, hidden, seed
    )
    if features.input_dim != dataset.dim or features.output_dim != feature_dim:
        raise InputError(
            f"Feature network maps {features.input_dim} -> {features.output_dim}, "
            f"expected {dataset.dim} -> {feature_dim}."
        )

    history = []
    if dataset.n > 0:
        optimizer = net.init_optimizer(features, learning_rate)
        for epoch in range(epochs):
            Phi, cache = net.forward(features, X_unit)
            _, _, log_evidence, grad_phi = bayesian_linear_head(Phi, y_s, beta, prior_precision)
            loss = -log_evidence / dataset.n
            if not math.isfinite(loss):
                raise NumericalError(
                    "Deep-feature training produced a non-finite loss.",
                    diagnostics={"epoch": epoch, "history": history[-5:]},
                )
            history.append(loss)
            grads, _ = net.backward(features, cache, -grad_phi / dataset.n)
            net.adam_step(optimizer, features, grads)
        logger.debug("Deep-feature fit: loss %.4f -> %.4f over %d epochs.", history[0], history[-1], epochs)
        Phi, _ = net.forward(features, X_unit)
        m, L, _, _ = bayesian_linear_head(Phi, y_s, beta, prior_precision)
    else:
        m = np.zeros(feature_dim)
        L = math.sqrt(prior_precision) * np.eye(feature_dim)

    state = DeepFeatureState(
        feature_net=features,
        weights_mean=m,
        precision_chol=L,
        beta=float(beta),
        prior_precision=float(prior_precision),
        loss_history=tuple(history),
    )
    return GpModel(
        variant="deep",
        params=params,
        noise=1.0 / beta,
        box=dataset.box,
        X_unit=X_unit,
        y_standardized=y_s,
        y_mean=y_mean,
        y_std=y_std,
        deep=state,
    )


def deep_moments(model: GpModel, X: np.ndarray):
    """Standardized-scale predictive moments for the rows of ``X`` (original units)."""
    state = model.deep
    Phi, _ = net.forward(state.feature_net, to_unit(X, model.box))
    mean = Phi @ state.weights_mean
    v = solve_triangular(state.precision_chol, Phi.T, lower=True)
    var = np.sum(v * v, axis=0) + 1.0 / state.beta
    return mean, var


def predict_deep(model: GpModel, x):
    """Posterior (mean, variance) of a deep-feature model at one point."""
    if model.variant != "deep":
        raise InputError(f"predict_deep needs a deep model, got {model.variant!r}.")
    return predict(model, x)

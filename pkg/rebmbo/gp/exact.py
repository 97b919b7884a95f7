"""
Exact GP regression (the classic variant) and the variant-dispatching predictors.
"""
import logging
import math
from typing import Tuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from rebmbo import kernels
from rebmbo.errors import InputError, UnsupportedVariantError
from rebmbo.gp.models import Dataset, GpModel, standardize, to_unit
from rebmbo.kernels import KernelParams


logger = logging.getLogger(__name__)

DEFAULT_NOISE = 1e-6

LOG_2PI = math.log(2.0 * math.pi)


def _factorize(X_unit: np.ndarray, params: KernelParams, noise: float, jitter: float):
    K = kernels.gram(X_unit, params)
    K[np.diag_indices_from(K)] += noise
    return kernels.cholesky_with_jitter(K, jitter=jitter)


def fit_exact(
    dataset: Dataset, params: KernelParams, noise: float = DEFAULT_NOISE, jitter: float = kernels.DEFAULT_JITTER
) -> GpModel:
    """
    Conditions an exact GP on ``dataset``.

    :param dataset: observations in original units
    :param params: kernel hyperparameters expressed in unit-box coordinates
    :param noise: observation noise variance on the standardized scale
    :param jitter: initial diagonal jitter, escalated on factorization failure
    """
    if params.dim != dataset.dim:
        raise InputError(f"Kernel has {params.dim} lengthscales but the data has dimension {dataset.dim}.")
    X_unit = dataset.to_unit(dataset.X)
    y_s, y_mean, y_std = standardize(dataset.y)
    if dataset.n == 0:
        return GpModel("exact", params, noise, dataset.box, X_unit, y_s, y_mean, y_std)
    L, used = _factorize(X_unit, params, noise, jitter)
    alpha = cho_solve((L, True), y_s)
    return GpModel(
        variant="exact",
        params=params,
        noise=noise,
        box=dataset.box,
        X_unit=X_unit,
        y_standardized=y_s,
        y_mean=y_mean,
        y_std=y_std,
        factor=L,
        alpha=alpha,
        jitter=used,
    )


def _exact_moments(model: GpModel, X: np.ndarray):
    Xu = to_unit(X, model.box)
    prior = np.full(Xu.shape[0], model.params.prior_variance)
    if model.n == 0:
        return np.zeros(Xu.shape[0]), prior
    Ks = kernels.cross_covariance(Xu, model.X_unit, model.params)
    mean = Ks @ model.alpha
    v = solve_triangular(model.factor, Ks.T, lower=True)
    var = prior - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def predict_many(model: GpModel, X) -> Tuple[np.ndarray, np.ndarray]:
    """
    Posterior mean and variance at each row of ``X``, in original units.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise InputError(f"Expected points of dimension {model.dim}, got {X.shape[1]}.")
    if model.variant == "exact":
        mean_s, var_s = _exact_moments(model, X)
    elif model.variant == "sparse":
        from rebmbo.gp.sparse import sparse_moments

        mean_s, var_s = sparse_moments(model, X)
    elif model.variant == "deep":
        from rebmbo.gp.deep import deep_moments

        mean_s, var_s = deep_moments(model, X)
    else:
        raise UnsupportedVariantError(f"Unknown surrogate variant {model.variant!r}.")
    return model.y_mean + model.y_std * mean_s, model.y_std ** 2 * var_s


def predict(model: GpModel, x) -> Tuple[float, float]:
    """Posterior (mean, variance) at a single point."""
    mean, var = predict_many(model, np.asarray(x, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(
    dataset: Dataset, params: KernelParams, noise: float = DEFAULT_NOISE, jitter: float = kernels.DEFAULT_JITTER
) -> float:
    """
    Log evidence of the standardized targets under the exact GP.
    """
    X_unit = dataset.to_unit(dataset.X)
    y_s, _, _ = standardize(dataset.y)
    L, _ = _factorize(X_unit, params, noise, jitter)
    alpha = cho_solve((L, True), y_s)
    n = dataset.n
    return float(-0.5 * y_s @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


def posterior_cov(model: GpModel, x, x2) -> float:
    """Posterior covariance between f(x) and f(x2), original units (exact variant only)."""
    if model.variant != "exact":
        raise UnsupportedVariantError("Posterior covariance is only available for the exact GP.")
    pair = to_unit(np.vstack([np.asarray(x, dtype=float), np.asarray(x2, dtype=float)]), model.box)
    prior = kernels.mixture(pair[0], pair[1], model.params)
    if model.n == 0:
        return model.y_std ** 2 * prior
    Ks = kernels.cross_covariance(pair, model.X_unit, model.params)
    v = solve_triangular(model.factor, Ks.T, lower=True)
    return float(model.y_std ** 2 * (prior - v[:, 0] @ v[:, 1]))

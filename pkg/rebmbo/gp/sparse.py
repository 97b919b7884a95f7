"""
Sparse GP with m inducing points and the closed-form optimal Gaussian q(u).

The predictive mean is k(x*, Z) K_zz^-1 mu_u and the variance is
k** - k(x*, Z) K_zz^-1 k(Z, x*) + k(x*, Z) K_zz^-1 Sigma_u K_zz^-1 k(Z, x*),
evaluated through triangular solves against the stored factors.
"""
import logging
from typing import Optional

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import cholesky, solve_triangular

from rebmbo import kernels
from rebmbo.errors import InputError, ParameterError
from rebmbo.gp.exact import DEFAULT_NOISE, predict
from rebmbo.gp.models import Dataset, GpModel, SparseState, standardize, to_unit
from rebmbo.kernels import KernelParams


logger = logging.getLogger(__name__)

DEFAULT_INDUCING = 32


def default_inducing_count(n: int) -> int:
    return min(DEFAULT_INDUCING, n)


def select_inducing_points(X_unit: np.ndarray, m: int, seed: int = 0) -> np.ndarray:
    """
    Deterministic k-means centers of the (unit-box) inputs. With ``m == n`` the
    inputs themselves are returned.
    """
    n = X_unit.shape[0]
    if m >= n:
        return X_unit.copy()
    centers, _ = kmeans2(X_unit, m, minit="++", seed=np.random.default_rng(seed))
    return centers


def fit_sparse(
    dataset: Dataset,
    m: int,
    params: KernelParams,
    noise: float = DEFAULT_NOISE,
    seed: int = 0,
    inducing: Optional[np.ndarray] = None,
    jitter: float = kernels.DEFAULT_JITTER,
) -> GpModel:
    """
    Fits the sparse variant.

    :param m: number of inducing points, 1 <= m <= n
    :param seed: seed of the k-means initialization
    :param inducing: optional explicit inducing points in original units (overrides k-means)
    """
    n = dataset.n
    if m < 1 or m > max(n, 1):
        raise ParameterError(f"Number of inducing points must satisfy 1 <= m <= n (m={m}, n={n}).")
    X_unit = dataset.to_unit(dataset.X)
    y_s, y_mean, y_std = standardize(dataset.y)
    if n == 0:
        return GpModel("sparse", params, noise, dataset.box, X_unit, y_s, y_mean, y_std)

    Z = to_unit(inducing, dataset.box) if inducing is not None else select_inducing_points(X_unit, m, seed)
    K_zz = kernels.gram(Z, params)
    L, used = kernels.cholesky_with_jitter(K_zz, jitter=jitter)
    K_zx = kernels.cross_covariance(Z, X_unit, params)
    sigma = np.sqrt(noise)

    A = solve_triangular(L, K_zx, lower=True) / sigma
    B = np.eye(Z.shape[0]) + A @ A.T
    L_B = cholesky(B, lower=True)
    c = solve_triangular(L_B, A @ y_s, lower=True) / sigma

    # mu_u = L L_B^-T c and Sigma_u = (L L_B^-T)(L L_B^-T)^T
    W = L @ solve_triangular(L_B, np.eye(Z.shape[0]), lower=True).T
    mu_u = W @ c
    sigma_u = W @ W.T

    state = SparseState(Z=Z, chol_zz=L, chol_b=L_B, c=c, mu_u=mu_u, sigma_u=sigma_u)
    return GpModel(
        variant="sparse",
        params=params,
        noise=noise,
        box=dataset.box,
        X_unit=X_unit,
        y_standardized=y_s,
        y_mean=y_mean,
        y_std=y_std,
        jitter=used,
        sparse=state,
    )


def sparse_moments(model: GpModel, X: np.ndarray):
    """Standardized-scale predictive moments for the rows of ``X`` (original units)."""
    Xu = to_unit(X, model.box)
    prior = np.full(Xu.shape[0], model.params.prior_variance)
    if model.sparse is None:
        return np.zeros(Xu.shape[0]), prior
    state = model.sparse
    K_zs = kernels.cross_covariance(state.Z, Xu, model.params)
    tmp1 = solve_triangular(state.chol_zz, K_zs, lower=True)
    tmp2 = solve_triangular(state.chol_b, tmp1, lower=True)
    mean = tmp2.T @ state.c
    var = prior - np.sum(tmp1 * tmp1, axis=0) + np.sum(tmp2 * tmp2, axis=0)
    return mean, np.maximum(var, 0.0)


def predict_sparse(model: GpModel, x):
    """Posterior (mean, variance) of a sparse model at one point."""
    if model.variant != "sparse":
        raise InputError(f"predict_sparse needs a sparse model, got {model.variant!r}.")
    return predict(model, x)

"""
Covariance functions: RBF with per-dimension lengthscales, isotropic Matern-5/2,
and the convex-style mixture sigma_f^2 * (w_rbf * k_rbf + w_matern * k_matern).
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.linalg import cholesky, LinAlgError
from scipy.spatial.distance import cdist

from rebmbo.errors import NumericalError, ParameterError


logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)

DEFAULT_JITTER = 1e-8
MAX_JITTER = 1e-4

KERNEL_KINDS = ("mixture", "rbf", "matern")


@dataclass(frozen=True)
class KernelParams:
    """
    Hyperparameters of the mixture kernel.

    ``rbf_lengthscales`` holds one lengthscale per input dimension, so that
    Lambda = diag(rbf_lengthscales ** 2) in the quadratic form.
    """

    amplitude: float
    rbf_lengthscales: Tuple[float, ...]
    matern_lengthscale: float
    w_rbf: float
    w_matern: float

    def __post_init__(self):
        object.__setattr__(self, "rbf_lengthscales", tuple(float(v) for v in self.rbf_lengthscales))
        if not self.amplitude > 0:
            raise ParameterError(f"amplitude must be > 0, got {self.amplitude}.")
        if len(self.rbf_lengthscales) == 0 or min(self.rbf_lengthscales) <= 0:
            raise ParameterError("RBF lengthscales must be a non-empty vector of positive reals.")
        if not self.matern_lengthscale > 0:
            raise ParameterError(f"Matern lengthscale must be > 0, got {self.matern_lengthscale}.")
        if self.w_rbf < 0 or self.w_matern < 0 or self.w_rbf + self.w_matern <= 0:
            raise ParameterError(
                f"Mixture weights must be nonnegative with a positive sum, got ({self.w_rbf}, {self.w_matern})."
            )

    @property
    def dim(self) -> int:
        return len(self.rbf_lengthscales)

    @property
    def prior_variance(self) -> float:
        """k(x, x) for any x."""
        return self.amplitude * (self.w_rbf + self.w_matern)

    @classmethod
    def default(cls, dim: int, kind: str = "mixture") -> "KernelParams":
        """Unit amplitude, lengthscale 0.2 in unit-box coordinates, weights per ``kind``."""
        if kind not in KERNEL_KINDS:
            raise ParameterError(f"Unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}.")
        w_rbf = 0.0 if kind == "matern" else 0.5 if kind == "mixture" else 1.0
        return cls(
            amplitude=1.0,
            rbf_lengthscales=(0.2,) * dim,
            matern_lengthscale=0.2,
            w_rbf=w_rbf,
            w_matern=1.0 - w_rbf,
        )

    def active_mask(self) -> Tuple[bool, bool]:
        """Which mixture weights take part in hyperparameter search."""
        return self.w_rbf > 0, self.w_matern > 0

    def to_log_vector(self) -> np.ndarray:
        """Log-parameters of the free entries: amplitude, lengthscales, active weights."""
        use_rbf, use_matern = self.active_mask()
        values = [self.amplitude, *self.rbf_lengthscales, self.matern_lengthscale]
        if use_rbf:
            values.append(self.w_rbf)
        if use_matern:
            values.append(self.w_matern)
        return np.log(np.asarray(values, dtype=float))

    def from_log_vector(self, theta: np.ndarray) -> "KernelParams":
        """Inverse of :meth:`to_log_vector`, keeping the same active weights."""
        use_rbf, use_matern = self.active_mask()
        values = np.exp(np.asarray(theta, dtype=float))
        d = self.dim
        pos = d + 2
        w_rbf = values[pos] if use_rbf else 0.0
        pos += int(use_rbf)
        w_matern = values[pos] if use_matern else 0.0
        return KernelParams(
            amplitude=float(values[0]),
            rbf_lengthscales=tuple(values[1 : d + 1]),
            matern_lengthscale=float(values[d + 1]),
            w_rbf=float(w_rbf),
            w_matern=float(w_matern),
        )

    def describe(self) -> Dict:
        return {
            "amplitude": float(self.amplitude),
            "rbf_lengthscales": [float(v) for v in self.rbf_lengthscales],
            "matern_lengthscale": float(self.matern_lengthscale),
            "w_rbf": float(self.w_rbf),
            "w_matern": float(self.w_matern),
        }


def _check_pair(x, x2):
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ParameterError(f"Point dimensions do not match: {x.shape} vs {x2.shape}.")
    return x, x2


def rbf(x, x2, lengthscales) -> float:
    lengthscales = np.asarray(lengthscales, dtype=float)
    if np.any(lengthscales <= 0):
        raise ParameterError("RBF lengthscales must be positive.")
    x, x2 = _check_pair(x, x2)
    diff = (x - x2) / lengthscales
    return float(np.exp(-0.5 * np.dot(diff, diff)))


def matern52(x, x2, lengthscale: float) -> float:
    if lengthscale <= 0:
        raise ParameterError(f"Matern lengthscale must be positive, got {lengthscale}.")
    x, x2 = _check_pair(x, x2)
    s = SQRT5 * float(np.linalg.norm(x - x2)) / lengthscale
    return (1.0 + s + s * s / 3.0) * math.exp(-s)


def mixture(x, x2, params: KernelParams) -> float:
    value = 0.0
    if params.w_rbf > 0:
        value += params.w_rbf * rbf(x, x2, params.rbf_lengthscales)
    if params.w_matern > 0:
        value += params.w_matern * matern52(x, x2, params.matern_lengthscale)
    return params.amplitude * value


def cross_covariance(X: np.ndarray, Y: np.ndarray, params: KernelParams) -> np.ndarray:
    """Matrix of mixture(X[i], Y[j])."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    K = np.zeros((X.shape[0], Y.shape[0]))
    if params.w_rbf > 0:
        ls = np.asarray(params.rbf_lengthscales)
        K += params.w_rbf * np.exp(-0.5 * cdist(X / ls, Y / ls, "sqeuclidean"))
    if params.w_matern > 0:
        s = SQRT5 * cdist(X, Y, "euclidean") / params.matern_lengthscale
        K += params.w_matern * (1.0 + s + s * s / 3.0) * np.exp(-s)
    return params.amplitude * K


def gram(X: np.ndarray, params: KernelParams) -> np.ndarray:
    """Symmetric Gram matrix; the lower triangle mirrors the upper one exactly."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = cross_covariance(X, X, params)
    upper = np.triu(K)
    K = upper + np.triu(K, 1).T
    np.fill_diagonal(K, params.prior_variance)
    return K


def cholesky_with_jitter(A: np.ndarray, jitter: float = DEFAULT_JITTER, max_jitter: float = MAX_JITTER):
    """
    Lower Cholesky factor of ``A + jitter * I``, escalating jitter by 10x on failure.

    :return: (L, jitter actually used)
    """
    n = A.shape[0]
    current = jitter
    while current <= max_jitter * (1 + 1e-12):
        try:
            L = cholesky(A + current * np.eye(n), lower=True, check_finite=True)
            if current > jitter:
                logger.warning("Cholesky needed jitter %.1e (requested %.1e).", current, jitter)
            return L, current
        except (LinAlgError, ValueError):
            current *= 10.0
    try:
        condition = float(np.linalg.cond(A))
    except np.linalg.LinAlgError:
        condition = float("inf")
    raise NumericalError(
        f"Cholesky failed with jitter up to {max_jitter:.1e}.",
        diagnostics={"n": n, "max_jitter": max_jitter, "condition_number": condition},
    )

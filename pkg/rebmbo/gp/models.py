"""
Data containers shared by the three surrogate variants.

All fitted models keep inputs mapped to the unit box and targets standardized;
public prediction functions convert back to original units.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from rebmbo.errors import InputError
from rebmbo.kernels import KernelParams


VARIANTS = ("exact", "sparse", "deep")


@dataclass(frozen=True)
class Dataset:
    """
    Ordered observations D_t = {(x_i, y_i)} plus the domain box.

    :param X: n x d array of inputs in original units
    :param y: n targets
    :param box: d x 2 array of (lower, upper)
    """

    X: np.ndarray
    y: np.ndarray
    box: np.ndarray

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float).reshape(-1, 2)
        X = np.asarray(self.X, dtype=float).reshape(-1, box.shape[0])
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise InputError(f"Got {X.shape[0]} inputs but {y.shape[0]} targets.")
        if not np.all(np.isfinite(y)):
            raise InputError("Targets must be finite.")
        if np.any(box[:, 0] >= box[:, 1]):
            raise InputError("Box lower bounds must be strictly below upper bounds.")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "box", box)

    @classmethod
    def empty(cls, box) -> "Dataset":
        box = np.asarray(box, dtype=float).reshape(-1, 2)
        return cls(np.zeros((0, box.shape[0])), np.zeros(0), box)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    def append(self, x, y: float) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return Dataset(np.vstack([self.X, x]), np.append(self.y, float(y)), self.box)

    def to_unit(self, X) -> np.ndarray:
        return to_unit(X, self.box)

    def from_unit(self, U) -> np.ndarray:
        return from_unit(U, self.box)


def to_unit(X, box) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    return (np.asarray(X, dtype=float) - box[:, 0]) / (box[:, 1] - box[:, 0])


def from_unit(U, box) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    return box[:, 0] + np.asarray(U, dtype=float) * (box[:, 1] - box[:, 0])


def standardize(y: np.ndarray):
    """
    Returns (standardized y, mean, std). An empty or constant target vector keeps
    a unit scale so that de-standardization stays well defined.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return y.copy(), 0.0, 1.0
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 1e-12:
        std = 1.0
    return (y - mean) / std, mean, std


@dataclass(frozen=True)
class SparseState:
    """
    Inducing-point summary of the data.

    ``mu_u`` / ``sigma_u`` are the closed-form optimal variational moments of the
    inducing outputs; ``chol_zz`` and ``chol_b`` are the factors used for stable
    prediction (B = I + sigma^-2 L^-1 K_zx K_xz L^-T).
    """

    Z: np.ndarray
    chol_zz: np.ndarray
    chol_b: np.ndarray
    c: np.ndarray
    mu_u: np.ndarray
    sigma_u: np.ndarray

    @property
    def m(self) -> int:
        return self.Z.shape[0]


@dataclass(frozen=True)
class DeepFeatureState:
    """
    Learned feature map plus Bayesian linear regression head.

    ``weights_mean`` is m in mu = m^T phi(x); ``precision_chol`` factors the
    latent-space matrix K = beta * Phi^T Phi + prior_precision * I.
    """

    feature_net: object
    weights_mean: np.ndarray
    precision_chol: np.ndarray
    beta: float
    prior_precision: float
    loss_history: tuple = ()

    @property
    def feature_dim(self) -> int:
        return self.weights_mean.shape[0]


@dataclass(frozen=True)
class GpModel:
    """
    A fitted surrogate. For the exact variant, ``factor`` is the lower Cholesky
    factor of K + (noise + jitter) I over the unit-box inputs and ``alpha`` solves
    against the standardized targets.
    """

    variant: str
    params: KernelParams
    noise: float
    box: np.ndarray
    X_unit: np.ndarray
    y_standardized: np.ndarray
    y_mean: float
    y_std: float
    factor: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    jitter: float = 0.0
    sparse: Optional[SparseState] = None
    deep: Optional[DeepFeatureState] = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X_unit.shape[0]

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    def with_meta(self, **kwargs) -> "GpModel":
        return replace(self, meta={**self.meta, **kwargs})

    def prior_variance(self) -> float:
        """Prior variance of f in original units."""
        return self.y_std ** 2 * self.params.prior_variance

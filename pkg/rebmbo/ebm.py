"""
Energy-based model over the search box.

E(x) is an MLP applied to box-normalized inputs, so p(x) is proportional to
exp(-E(x)). Negative samples come from short-run Langevin chains started
uniformly in the box and run in unit-box coordinates:

    u <- u - step_size * grad_u E(u) + sqrt(2 * step_size * temperature) * eps

With ``mcmc`` off the negatives are plain uniform draws from the box.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from rebmbo import net
from rebmbo.errors import InputError, ParameterError
from rebmbo.gp.models import from_unit, to_unit


logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class EbmConfig:
    """Network, optimizer and sampler settings of the energy model."""

    enabled: bool = True
    hidden: int = 128
    blocks: int = 1
    latent: Optional[int] = None
    activation: str = "leaky_relu"
    learning_rate: float = 1e-4
    mcmc: bool = True
    langevin_steps: int = 20
    step_size: float = 0.01
    temperature: float = 0.1
    clamp: bool = True
    epochs: int = 30
    batch_size: int = 64

    def __post_init__(self):
        if self.langevin_steps < 1:
            raise ParameterError(f"langevin_steps must be >= 1, got {self.langevin_steps}.")
        if not self.step_size > 0:
            raise ParameterError(f"step_size must be > 0, got {self.step_size}.")
        if self.temperature < 0:
            raise ParameterError(f"temperature must be >= 0, got {self.temperature}.")
        if self.hidden < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("hidden and batch_size must be >= 1 and epochs >= 0.")


class StepDiagnostics(NamedTuple):
    mean_positive: float
    mean_negative: float
    grad_norm: float
    applied: bool


@dataclass
class EnergyModel:
    net: net.MlpParams
    optimizer: net.OptimizerState
    box: np.ndarray
    config: EbmConfig
    steps_trained: int = 0
    reinitialized: int = 0
    history: List[StepDiagnostics] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    def width(self) -> np.ndarray:
        return self.box[:, 1] - self.box[:, 0]


def init_energy_model(box, config: EbmConfig = EbmConfig(), seed=0) -> EnergyModel:
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    params = net.init_residual_params(
        input_dim=box.shape[0],
        hidden_dim=config.hidden,
        output_dim=1,
        blocks=config.blocks,
        latent_dim=config.latent,
        activation=config.activation,
        seed=seed,
    )
    return EnergyModel(params, net.init_optimizer(params, config.learning_rate), box, config)


def _check_points(model: EnergyModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise InputError(f"Expected points of dimension {model.dim}, got {X.shape[1]}.")
    if not np.all(np.isfinite(X)):
        raise InputError("Energy inputs must be finite.")
    return X


def energy_many(model: EnergyModel, X) -> np.ndarray:
    out, _ = net.forward(model.net, to_unit(_check_points(model, X), model.box))
    return out[:, 0]


def energy(model: EnergyModel, x) -> float:
    return float(energy_many(model, np.asarray(x, dtype=float).reshape(1, -1))[0])


def _unit_grad(model: EnergyModel, U: np.ndarray) -> np.ndarray:
    _, cache = net.forward(model.net, U)
    _, grad_u = net.backward(model.net, cache, np.ones((U.shape[0], 1)))
    return grad_u


def energy_input_grad(model: EnergyModel, x) -> np.ndarray:
    """Gradient of E with respect to x in original units."""
    X = _check_points(model, np.asarray(x, dtype=float).reshape(1, -1))
    return _unit_grad(model, to_unit(X, model.box))[0] / model.width()


def langevin_sample(
    model: EnergyModel,
    n_samples: int,
    rng: np.random.Generator,
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    init: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Short-run Langevin samples in original units.

    :param grad_fn: gradient of the energy in unit-box coordinates, batch in / batch out;
                    defaults to the network's input gradient
    :param init: starting points in original units (uniform in the box when omitted)
    """
    cfg = model.config
    d = model.dim
    grad_fn = grad_fn or (lambda U: _unit_grad(model, U))
    if init is None:
        U = rng.uniform(0.0, 1.0, size=(n_samples, d))
    else:
        U = to_unit(np.asarray(init, dtype=float).reshape(n_samples, d), model.box)
    noise_scale = np.sqrt(2.0 * cfg.step_size * cfg.temperature)
    for _ in range(cfg.langevin_steps):
        U = U - cfg.step_size * grad_fn(U)
        if noise_scale > 0:
            U = U + noise_scale * rng.standard_normal(U.shape)
        if cfg.clamp:
            U = np.clip(U, 0.0, 1.0)
        norms = np.linalg.norm(U, axis=1)
        diverged = ~np.isfinite(norms) | (norms > DIVERGENCE_NORM)
        if diverged.any():
            count = int(diverged.sum())
            model.reinitialized += count
            logger.warning("Re-initializing %d divergent Langevin chains.", count)
            U[diverged] = rng.uniform(0.0, 1.0, size=(count, d))
    return from_unit(U, model.box)


def uniform_sample(model: EnergyModel, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from the box, the negatives used when ``mcmc`` is off."""
    return from_unit(rng.uniform(0.0, 1.0, size=(n_samples, model.dim)), model.box)


def train_step(model: EnergyModel, data_batch, rng: np.random.Generator, negatives=None) -> StepDiagnostics:
    """
    One maximum-likelihood step: lowers energy on ``data_batch`` and raises it on
    Langevin samples, on uniform box draws when ``config.mcmc`` is off, or on
    ``negatives`` when given.
    """
    positives = _check_points(model, data_batch)
    b = positives.shape[0]
    if b < 1:
        raise InputError("train_step needs at least one data point.")
    if negatives is None:
        negatives = langevin_sample(model, b, rng) if model.config.mcmc else uniform_sample(model, b, rng)
    negatives = _check_points(model, negatives)

    e_pos, cache_pos = net.forward(model.net, to_unit(positives, model.box))
    e_neg, cache_neg = net.forward(model.net, to_unit(negatives, model.box))
    grads_pos, _ = net.backward(model.net, cache_pos, np.full((b, 1), 1.0 / b))
    grads_neg, _ = net.backward(model.net, cache_neg, np.full((negatives.shape[0], 1), 1.0 / negatives.shape[0]))
    grads = net.add_grads(grads_pos, grads_neg, scale=-1.0)
    _, _, applied = net.adam_step(model.optimizer, model.net, grads)

    model.steps_trained += 1
    diagnostics = StepDiagnostics(
        mean_positive=float(np.mean(e_pos)),
        mean_negative=float(np.mean(e_neg)),
        grad_norm=net.global_norm(grads),
        applied=applied,
    )
    model.history.append(diagnostics)
    return diagnostics


def train_epochs(
    model: EnergyModel, inputs, epochs: int, batch_size: int, rng: np.random.Generator
) -> EnergyModel:
    """Shuffled mini-batch passes over the observed inputs."""
    X = _check_points(model, inputs)
    if X.shape[0] == 0:
        raise InputError("train_epochs needs a non-empty set of inputs.")
    for _ in range(epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], batch_size):
            train_step(model, X[order[start : start + batch_size]], rng)
    return model


def normalize_energies(values, reference=None) -> np.ndarray:
    """
    Min-max normalization into [0, 1]; a constant batch maps to 0.5.

    :param reference: optional batch whose range is used instead of ``values``'
    """
    values = np.asarray(values, dtype=float)
    ref = values if reference is None else np.asarray(reference, dtype=float)
    if values.size == 0 or ref.size == 0:
        raise InputError("Cannot normalize an empty batch of energies.")
    lo, hi = float(np.min(ref)), float(np.max(ref))
    if not hi > lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)

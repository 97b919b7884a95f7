"""
Dense multilayer perceptrons with hand-written reverse-mode gradients and an
Adam optimizer, shared by the energy model, the deep-kernel features and the
PPO actor/critic. Everything runs in float64.

Inputs may be a single vector of shape (fan_in,) or a batch of rows
(b, fan_in); parameter gradients are summed over the rows.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from rebmbo.errors import InputError, ParameterError


logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2

Grads = List[Tuple[np.ndarray, np.ndarray]]
SeedLike = Union[int, np.random.Generator, None]


def _leaky_relu(z):
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _leaky_relu_grad(z):
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


ACTIVATIONS = {
    "leaky_relu": (_leaky_relu, _leaky_relu_grad),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class Layer:
    """
    One affine layer followed by an activation.

    ``skip`` adds a residual connection: the output gets the activation that
    entered layer ``i + 1 - skip`` added to it (1 = this layer's own input,
    2 = the input of the previous layer, i.e. a two-layer residual block).
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    skip: int = 0

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpParams:
    layers: List[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [Layer(layer.weight.copy(), layer.bias.copy(), layer.activation, layer.skip) for layer in self.layers]
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias)) for layer in self.layers)


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _kaiming_layer(rng, fan_in, fan_out, activation, skip=0) -> Layer:
    weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
    return Layer(weight, np.zeros(fan_out), activation, skip)


def init_params(
    layer_sizes: Sequence[int], activation: str = "relu", seed: SeedLike = 0, output_activation: str = "identity"
) -> MlpParams:
    """
    Kaiming-normal initialization of a plain MLP.

    :param layer_sizes: widths from input to output, e.g. [4, 8, 1]
    :param activation: activation of the hidden layers
    :param output_activation: activation of the last layer
    """
    if len(layer_sizes) < 2:
        raise ParameterError("An MLP needs at least one layer (two sizes).")
    for name in (activation, output_activation):
        if name not in ACTIVATIONS:
            raise ParameterError(f"Unknown activation {name!r}.")
    rng = _rng(seed)
    layers = []
    n_layers = len(layer_sizes) - 1
    for i in range(n_layers):
        act = output_activation if i == n_layers - 1 else activation
        layers.append(_kaiming_layer(rng, layer_sizes[i], layer_sizes[i + 1], act))
    return MlpParams(layers)


def init_residual_params(
    input_dim: int,
    hidden_dim: int,
    output_dim: int,
    blocks: int = 1,
    latent_dim: Optional[int] = None,
    activation: str = "leaky_relu",
    seed: SeedLike = 0,
) -> MlpParams:
    """
    Input projection, ``blocks`` residual blocks h + W2 act(W1 h) with inner width
    ``latent_dim``, and a linear output head.
    """
    if blocks < 0:
        raise ParameterError("Number of residual blocks must be >= 0.")
    latent_dim = latent_dim or hidden_dim
    rng = _rng(seed)
    layers = [_kaiming_layer(rng, input_dim, hidden_dim, activation)]
    for _ in range(blocks):
        layers.append(_kaiming_layer(rng, hidden_dim, latent_dim, activation))
        layers.append(_kaiming_layer(rng, latent_dim, hidden_dim, activation, skip=2))
    layers.append(_kaiming_layer(rng, hidden_dim, output_dim, "identity"))
    return MlpParams(layers)


def forward(params: MlpParams, inputs):
    """
    :return: (output, cache); the cache holds activations and pre-activations for :func:`backward`
    """
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[1] != params.input_dim:
        raise InputError(f"Expected inputs of width {params.input_dim}, got {a.shape[1]}.")
    activations = [a]
    pre = []
    for i, layer in enumerate(params.layers):
        z = activations[-1] @ layer.weight.T + layer.bias
        h = ACTIVATIONS[layer.activation][0](z)
        if layer.skip:
            h = h + activations[i + 1 - layer.skip]
        pre.append(z)
        activations.append(h)
    out = activations[-1]
    return (out[0] if single else out), {"activations": activations, "pre": pre, "single": single}


def backward(params: MlpParams, cache, grad_output):
    """
    Reverse-mode gradients of sum(output * grad_output).

    :return: (list of (dW, db) per layer, gradient with respect to the input)
    """
    activations, pre = cache["activations"], cache["pre"]
    if len(pre) != len(params.layers):
        raise InputError("Cache does not belong to these parameters.")
    g_out = np.atleast_2d(np.asarray(grad_output, dtype=float))
    if g_out.shape != activations[-1].shape:
        raise InputError(f"grad_output has shape {g_out.shape}, expected {activations[-1].shape}.")

    grads_a = [np.zeros_like(a) for a in activations]
    grads_a[-1] = g_out
    param_grads: Grads = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        g_h = grads_a[i + 1]
        if layer.skip:
            grads_a[i + 1 - layer.skip] = grads_a[i + 1 - layer.skip] + g_h
        dz = g_h * ACTIVATIONS[layer.activation][1](pre[i])
        param_grads[i] = (dz.T @ activations[i], dz.sum(axis=0))
        grads_a[i] = grads_a[i] + dz @ layer.weight
    input_grad = grads_a[0][0] if cache["single"] else grads_a[0]
    return param_grads, input_grad


def zeros_like(params: MlpParams) -> Grads:
    return [(np.zeros_like(layer.weight), np.zeros_like(layer.bias)) for layer in params.layers]


def add_grads(a: Grads, b: Grads, scale: float = 1.0) -> Grads:
    return [(dw_a + scale * dw_b, db_a + scale * db_b) for (dw_a, db_a), (dw_b, db_b) in zip(a, b)]


def scale_grads(grads: Grads, scale: float) -> Grads:
    return [(dw * scale, db * scale) for dw, db in grads]


def global_norm(grads: Grads) -> float:
    return float(np.sqrt(sum(np.sum(dw * dw) + np.sum(db * db) for dw, db in grads)))


def grads_finite(grads: Grads) -> bool:
    return all(np.all(np.isfinite(dw)) and np.all(np.isfinite(db)) for dw, db in grads)


def clip_global_norm(grads: Grads, max_norm: float):
    """
    Rescales all gradients together when their global L2 norm exceeds ``max_norm``.

    :return: (clipped gradients, norm before clipping)
    """
    if max_norm <= 0:
        raise ParameterError(f"max_norm must be positive, got {max_norm}.")
    norm = global_norm(grads)
    if norm > max_norm:
        return scale_grads(grads, max_norm / norm), norm
    return grads, norm


@dataclass
class OptimizerState:
    """Adam moments mirroring the parameter shapes."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: Grads = field(default_factory=list)
    second: Grads = field(default_factory=list)
    skipped: int = 0


def init_optimizer(params: MlpParams, learning_rate: float, beta1=0.9, beta2=0.999, eps=1e-8) -> OptimizerState:
    if learning_rate < 0:
        raise ParameterError(f"Learning rate must be >= 0, got {learning_rate}.")
    return OptimizerState(learning_rate, beta1, beta2, eps, 0, zeros_like(params), zeros_like(params))


def adam_step(state: OptimizerState, params: MlpParams, grads: Grads):
    """
    One bias-corrected Adam update applied in place.

    :return: (params, state, applied); ``applied`` is False when the gradients were
             non-finite and the update was skipped
    """
    if not grads_finite(grads):
        state.skipped += 1
        logger.warning("Skipping optimizer step %d: non-finite gradient.", state.step + 1)
        return params, state, False
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for i, (layer, (dw, db)) in enumerate(zip(params.layers, grads)):
        m_w, m_b = state.first[i]
        v_w, v_b = state.second[i]
        m_w, m_b = b1 * m_w + (1 - b1) * dw, b1 * m_b + (1 - b1) * db
        v_w, v_b = b2 * v_w + (1 - b2) * dw * dw, b2 * v_b + (1 - b2) * db * db
        state.first[i] = (m_w, m_b)
        state.second[i] = (v_w, v_b)
        layer.weight -= state.learning_rate * (m_w / correction1) / (np.sqrt(v_w / correction2) + state.eps)
        layer.bias -= state.learning_rate * (m_b / correction1) / (np.sqrt(v_b / correction2) + state.eps)
    return params, state, True
